#!/usr/bin/env python3
"""Populate a clipsplat weight cache with the released CLIP and VGG-19 weights.

Writes <cache>/manifest.json mapping each artifact to its file and SHA-256, the layout the
encoders look up via CLIPSPLAT_CACHE or --cache-dir.

    python3 tools/fetch_weights.py ~/.cache/clipsplat
"""

import argparse
import hashlib
import json
import pathlib

import torch
from huggingface_hub import hf_hub_download
from safetensors.torch import load_file, save_file

CLIP_REPOS = {
    "clip-vit-b-32": "openai/clip-vit-base-patch32",
    "clip-vit-l-14": "openai/clip-vit-large-patch14",
}
VGG_URL = "https://download.pytorch.org/models/vgg19-dcbb9e9d.pth"


def sha256(path: pathlib.Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch_clip(repo: str, out: pathlib.Path) -> None:
    src = hf_hub_download(repo, "model.safetensors")
    tensors = {k: v.float().contiguous() for k, v in load_file(src).items() if not k.endswith("position_ids")}
    save_file(tensors, str(out))


def fetch_vgg(out: pathlib.Path) -> None:
    state = torch.hub.load_state_dict_from_url(VGG_URL, map_location="cpu", progress=True)
    save_file({k: v.float().contiguous() for k, v in state.items() if k.startswith("features.")}, str(out))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("cache", type=pathlib.Path)
    parser.add_argument("--force", action="store_true", help="re-download files already present")
    args = parser.parse_args()
    args.cache.mkdir(parents=True, exist_ok=True)

    manifest_path = args.cache / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    jobs = {name: (lambda o, r=repo: fetch_clip(r, o)) for name, repo in CLIP_REPOS.items()}
    jobs["vgg19"] = fetch_vgg
    for name, fetch in jobs.items():
        out = args.cache / f"{name}.safetensors"
        if args.force or not out.exists():
            print(f"fetching {name}")
            fetch(out)
        manifest[name] = {"file": out.name, "sha256": sha256(out)}
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {manifest_path}")


if __name__ == "__main__":
    main()
