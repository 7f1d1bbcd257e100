#include "clipsplat/guidance/safetensors.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "clipsplat/errors.hpp"

namespace clipsplat::guidance {

namespace {

/// Read-only memory map released on scope exit.
class MappedFile {
public:
    explicit MappedFile(const std::filesystem::path& path) {
        fd_ = ::open(path.c_str(), O_RDONLY);
        if (fd_ < 0) throw WeightsUnavailableError(fmt::format("cannot open '{}'", path.string()));
        struct stat st {};
        if (::fstat(fd_, &st) != 0) {
            ::close(fd_);
            throw WeightsUnavailableError(fmt::format("cannot stat '{}'", path.string()));
        }
        size_ = static_cast<std::size_t>(st.st_size);
        if (size_ > 0) {
            data_ = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd_, 0);
            if (data_ == MAP_FAILED) {
                ::close(fd_);
                throw WeightsUnavailableError(fmt::format("cannot map '{}'", path.string()));
            }
        }
    }
    ~MappedFile() {
        if (data_ && data_ != MAP_FAILED) ::munmap(data_, size_);
        if (fd_ >= 0) ::close(fd_);
    }
    MappedFile(const MappedFile&) = delete;
    MappedFile& operator=(const MappedFile&) = delete;

    const std::uint8_t* data() const { return static_cast<const std::uint8_t*>(data_); }
    std::size_t size() const { return size_; }

private:
    int fd_ = -1;
    void* data_ = nullptr;
    std::size_t size_ = 0;
};

torch::ScalarType dtype_of(const std::string& name, const std::string& origin) {
    if (name == "F32") return torch::kFloat32;
    if (name == "F64") return torch::kFloat64;
    if (name == "F16") return torch::kFloat16;
    if (name == "BF16") return torch::kBFloat16;
    throw FormatError(fmt::format("{}: unsupported tensor dtype {}", origin, name));
}

}  // namespace

TensorMap load_safetensors(const std::filesystem::path& path) {
    const std::string origin = path.string();
    MappedFile file(path);
    if (file.size() < 8) throw FormatError(fmt::format("{}: too small for a safetensors file", origin));
    std::uint64_t header_len = 0;
    for (int b = 0; b < 8; ++b) header_len |= std::uint64_t(file.data()[b]) << (8 * b);
    if (header_len > file.size() - 8) throw FormatError(fmt::format("{}: truncated safetensors header", origin));

    nlohmann::json header;
    try {
        const char* begin = reinterpret_cast<const char*>(file.data() + 8);
        header = nlohmann::json::parse(begin, begin + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("{}: malformed safetensors header: {}", origin, e.what()));
    }

    const std::uint8_t* payload = file.data() + 8 + header_len;
    const std::size_t payload_size = file.size() - 8 - header_len;
    TensorMap out;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__metadata__") continue;
        try {
            const auto dtype = dtype_of(entry.at("dtype").get<std::string>(), origin);
            const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            const auto offsets = entry.at("data_offsets").get<std::vector<std::size_t>>();
            std::int64_t numel = 1;
            for (auto d : shape) numel *= d;
            const std::size_t nbytes = std::size_t(numel) * torch::elementSize(dtype);
            if (offsets.size() != 2 || offsets[1] > payload_size || offsets[1] - offsets[0] != nbytes) {
                throw FormatError(fmt::format("{}: tensor '{}' has inconsistent offsets", origin, name));
            }
            auto raw = torch::empty(shape, torch::TensorOptions().dtype(dtype));
            std::memcpy(raw.data_ptr(), payload + offsets[0], nbytes);
            out.emplace(name, raw.to(torch::kFloat32));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(fmt::format("{}: tensor '{}' entry is malformed: {}", origin, name, e.what()));
        }
    }
    return out;
}

void save_safetensors(const TensorMap& tensors, const std::filesystem::path& path) {
    nlohmann::json header = nlohmann::json::object();
    std::size_t offset = 0;
    std::vector<torch::Tensor> ordered;
    for (const auto& [name, t] : tensors) {
        auto c = t.detach().to(torch::kFloat32).contiguous();
        const std::size_t nbytes = std::size_t(c.numel()) * 4;
        header[name] = {{"dtype", "F32"}, {"shape", c.sizes().vec()}, {"data_offsets", {offset, offset + nbytes}}};
        offset += nbytes;
        ordered.push_back(c);
    }
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidParameterError(fmt::format("cannot write '{}'", path.string()));
    std::uint64_t len = text.size();
    for (int b = 0; b < 8; ++b) out.put(char((len >> (8 * b)) & 0xff));
    out.write(text.data(), std::streamsize(text.size()));
    for (const auto& t : ordered) out.write(static_cast<const char*>(t.data_ptr()), std::streamsize(t.numel() * 4));
}

std::string sha256_file(const std::filesystem::path& path) {
    MappedFile file(path);
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), file.data(), file.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw Error(ErrorCategory::Internal, fmt::format("SHA-256 of '{}' failed", path.string()));
    }
    std::string hex;
    for (unsigned int k = 0; k < len; ++k) hex += fmt::format("{:02x}", digest[k]);
    return hex;
}

}  // namespace clipsplat::guidance
