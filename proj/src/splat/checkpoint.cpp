#include "clipsplat/splat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <json.hpp>

#include "clipsplat/errors.hpp"

namespace clipsplat::splat {

namespace {

using nlohmann::json;

constexpr std::size_t kMagicSize = sizeof(kCheckpointMagic);
constexpr std::uint32_t kMaxHeaderBytes = 1u << 24;

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + 4);
}

std::uint32_t read_u32(const std::uint8_t* p) {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return to_little(v);
}

void append_floats(std::vector<std::uint8_t>& out, const std::vector<float>& values) {
    const std::size_t offset = out.size();
    out.resize(offset + values.size() * 4);
    for (std::size_t k = 0; k < values.size(); ++k) {
        const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(values[k]));
        std::memcpy(out.data() + offset + 4 * k, &bits, 4);
    }
}

Stage stage_from_string(const std::string& s, const std::string& origin) {
    if (s == "reconstructed") return Stage::Reconstructed;
    if (s == "stylized") return Stage::Stylized;
    throw FormatError(fmt::format("{}: unknown stage tag '{}'", origin, s));
}

}  // namespace

std::string_view to_string(Stage s) {
    return s == Stage::Reconstructed ? "reconstructed" : "stylized";
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    validate(ckpt.model);
    const auto& m = ckpt.model;

    json header;
    header["version"] = Checkpoint::kFormatVersion;
    header["modality"] = std::string(to_string(m.modality));
    header["stage"] = std::string(to_string(ckpt.stage));
    header["sh_degree"] = m.sh_degree;
    header["count"] = m.size();
    if (m.modality == Modality::Image2D) header["flat_epsilon"] = kFlatEpsilon;
    header["provenance"] = {{"config_hash", ckpt.provenance.config_hash},
                            {"seed", ckpt.provenance.seed},
                            {"steps", ckpt.provenance.steps}};
    if (ckpt.hints) {
        header["render"] = {{"width", ckpt.hints->width},
                            {"height", ckpt.hints->height},
                            {"frames", ckpt.hints->frames},
                            {"background", ckpt.hints->background}};
    }
    json arrays = json::array();
    for (auto g : m.groups()) {
        arrays.push_back({{"name", std::string(to_string(g))},
                          {"shape", {m.size(), group_width(g, m.modality, m.sh_degree)}},
                          {"dtype", "float32"}});
    }
    header["arrays"] = arrays;

    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + kMagicSize);
    append_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (auto g : m.groups()) append_floats(out, m.group(g));
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < kMagicSize + 4 || std::memcmp(bytes.data(), kCheckpointMagic, kMagicSize) != 0) {
        throw FormatError(fmt::format("{}: not a checkpoint (bad magic bytes)", origin));
    }
    const std::uint32_t header_len = read_u32(bytes.data() + kMagicSize);
    if (header_len > kMaxHeaderBytes || kMagicSize + 4 + std::size_t(header_len) > bytes.size()) {
        throw FormatError(fmt::format("{}: truncated checkpoint header", origin));
    }
    const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + kMagicSize + 4);
    json header;
    try {
        header = json::parse(header_begin, header_begin + header_len);
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("{}: malformed checkpoint header: {}", origin, e.what()));
    }

    Checkpoint ckpt;
    try {
        const int version = header.at("version").get<int>();
        if (version != Checkpoint::kFormatVersion) {
            throw FormatError(fmt::format("{}: unsupported checkpoint version {} (expected {})", origin,
                                          version, Checkpoint::kFormatVersion));
        }
        const auto modality = modality_from_string(header.at("modality").get<std::string>());
        const int degree = header.at("sh_degree").get<int>();
        const auto count = header.at("count").get<std::size_t>();
        ckpt.stage = stage_from_string(header.at("stage").get<std::string>(), origin);
        const auto& prov = header.at("provenance");
        ckpt.provenance.config_hash = prov.at("config_hash").get<std::string>();
        ckpt.provenance.seed = prov.at("seed").get<std::uint64_t>();
        ckpt.provenance.steps = prov.at("steps").get<std::uint64_t>();
        if (header.contains("render")) {
            const auto& r = header["render"];
            RenderHints hints;
            hints.width = r.at("width").get<int>();
            hints.height = r.at("height").get<int>();
            hints.frames = r.at("frames").get<int>();
            hints.background = r.at("background").get<std::array<float, 3>>();
            ckpt.hints = hints;
        }

        ckpt.model = GaussianSet::zeros(modality, count, degree);
        std::size_t offset = kMagicSize + 4 + header_len;
        const auto& table = header.at("arrays");
        const auto groups = ckpt.model.groups();
        if (table.size() != groups.size()) {
            throw FormatError(fmt::format("{}: header lists {} arrays, {} expected for {}", origin,
                                          table.size(), groups.size(), to_string(modality)));
        }
        for (std::size_t a = 0; a < groups.size(); ++a) {
            const auto& entry = table[a];
            const auto g = param_group_from_string(entry.at("name").get<std::string>());
            if (g != groups[a] || entry.at("dtype").get<std::string>() != "float32") {
                throw FormatError(fmt::format("{}: unexpected array entry {}", origin, entry.dump()));
            }
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            const std::size_t width = group_width(g, modality, degree);
            if (shape.size() != 2 || shape[0] != count || shape[1] != width) {
                throw FormatError(fmt::format("{}: array '{}' has shape {}", origin, to_string(g),
                                              entry.at("shape").dump()));
            }
            auto& dst = ckpt.model.group(g);
            const std::size_t nbytes = dst.size() * 4;
            if (offset + nbytes > bytes.size()) {
                throw FormatError(fmt::format("{}: truncated checkpoint (array '{}')", origin, to_string(g)));
            }
            for (std::size_t k = 0; k < dst.size(); ++k) {
                dst[k] = std::bit_cast<float>(read_u32(bytes.data() + offset + 4 * k));
            }
            offset += nbytes;
        }
        if (offset != bytes.size()) {
            throw FormatError(fmt::format("{}: {} trailing bytes after the last array", origin,
                                          bytes.size() - offset));
        }
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("{}: invalid checkpoint header: {}", origin, e.what()));
    }

    try {
        validate(ckpt.model);
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", origin, e.what()));
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(ckpt);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidParameterError(fmt::format("cannot write checkpoint '{}'", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidParameterError(fmt::format("failed writing checkpoint '{}'", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidParameterError(fmt::format("cannot read checkpoint '{}'", path.string()));
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, path.string());
}

}  // namespace clipsplat::splat
