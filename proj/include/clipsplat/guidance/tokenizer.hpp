#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace clipsplat::guidance {

/// Byte-level BPE tokenizer of the CLIP text encoders.
///
/// Text is whitespace-normalized and lowercased, split into words, numbers and punctuation
/// runs, then each piece is byte-encoded and merged by rank. Non-ASCII code points are
/// treated as letters.
class Tokenizer {
public:
    static constexpr int kContextLength = 77;

    /// Reads the gzip-compressed merges list.
    explicit Tokenizer(const std::filesystem::path& bpe_path);

    /// Tokenizer backed by the bundled vocabulary file.
    static const Tokenizer& bundled();

    std::vector<std::int64_t> encode(const std::string& text) const;

    /// start token + encode(text) + end token, truncated and zero-padded to kContextLength.
    std::vector<std::int64_t> tokenize(const std::string& text) const;

    std::int64_t start_token() const { return sot_; }
    std::int64_t end_token() const { return eot_; }
    std::size_t vocab_size() const { return encoder_.size(); }

private:
    std::string bpe(const std::string& token) const;

    std::unordered_map<std::string, std::int64_t> encoder_;
    std::map<std::pair<std::string, std::string>, int> ranks_;
    std::array<std::string, 256> byte_encoder_;
    std::int64_t sot_ = 0;
    std::int64_t eot_ = 0;
    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<std::string, std::string> cache_;
};

/// Directory holding bundled assets; overridable with CLIPSPLAT_ASSETS.
std::filesystem::path asset_dir();

}  // namespace clipsplat::guidance
