#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace clipsplat::guidance {

using TensorMap = std::map<std::string, torch::Tensor>;

/// Reads every tensor of a .safetensors file, converted to float32.
/// Supports F32, F64, F16 and BF16 payloads. Throws FormatError on malformed files.
TensorMap load_safetensors(const std::filesystem::path& path);

/// Writes float32 tensors (used for tests and weight conversion).
void save_safetensors(const TensorMap& tensors, const std::filesystem::path& path);

/// Lower-case hex SHA-256 of a file.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace clipsplat::guidance
