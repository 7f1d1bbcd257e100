#include "clipsplat/guidance/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <cstdlib>
#include <sstream>

#include <fmt/format.h>
#include <zlib.h>

#include "clipsplat/errors.hpp"

namespace clipsplat::guidance {

namespace {

constexpr int kMergeCount = 49152 - 256 - 2;
const std::string kStart = "<start_of_text>";
const std::string kEnd = "<end_of_text>";

std::string read_gzip(const std::filesystem::path& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw WeightsUnavailableError(fmt::format("cannot open tokenizer vocabulary '{}'", path.string()));
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, std::size_t(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw FormatError(fmt::format("corrupt tokenizer vocabulary '{}'", path.string()));
    return out;
}

std::string utf8(std::uint32_t cp) {
    std::string s;
    if (cp < 0x80) {
        s += char(cp);
    } else if (cp < 0x800) {
        s += char(0xC0 | (cp >> 6));
        s += char(0x80 | (cp & 0x3F));
    } else {
        s += char(0xE0 | (cp >> 12));
        s += char(0x80 | ((cp >> 6) & 0x3F));
        s += char(0x80 | (cp & 0x3F));
    }
    return s;
}

/// Printable bytes map to themselves, the rest to code points from 256 upward.
std::vector<std::pair<int, std::uint32_t>> byte_to_unicode() {
    std::vector<int> bs;
    for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) bs.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) bs.push_back(b);
    std::vector<std::uint32_t> cs(bs.begin(), bs.end());
    int n = 0;
    for (int b = 0; b < 256; ++b) {
        if (std::find(bs.begin(), bs.end(), b) == bs.end()) {
            bs.push_back(b);
            cs.push_back(256 + n++);
        }
    }
    std::vector<std::pair<int, std::uint32_t>> out;
    for (std::size_t k = 0; k < bs.size(); ++k) out.emplace_back(bs[k], cs[k]);
    return out;
}

std::string clean(const std::string& text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += char(std::tolower(c));
    }
    return out;
}

/// Length of the UTF-8 sequence starting at `c`.
std::size_t seq_len(unsigned char c) {
    if (c < 0x80) return 1;
    if ((c >> 5) == 0x6) return 2;
    if ((c >> 4) == 0xE) return 3;
    if ((c >> 3) == 0x1E) return 4;
    return 1;
}

bool is_letter(unsigned char c) { return std::isalpha(c) || c >= 0x80; }
bool is_digit(unsigned char c) { return std::isdigit(c); }
bool is_space(unsigned char c) { return std::isspace(c); }

std::vector<std::string> pretokenize(const std::string& text) {
    static const char* contractions[] = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
    std::vector<std::string> pieces;
    std::size_t i = 0;
    while (i < text.size()) {
        const unsigned char c = text[i];
        if (text.compare(i, kStart.size(), kStart) == 0) {
            pieces.push_back(kStart);
            i += kStart.size();
            continue;
        }
        if (text.compare(i, kEnd.size(), kEnd) == 0) {
            pieces.push_back(kEnd);
            i += kEnd.size();
            continue;
        }
        if (c == '\'') {
            bool matched = false;
            for (const char* k : contractions) {
                const std::string s(k);
                if (text.compare(i, s.size(), s) == 0) {
                    pieces.push_back(s);
                    i += s.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        if (is_space(c)) {
            ++i;
        } else if (is_letter(c)) {
            std::size_t j = i;
            while (j < text.size() && is_letter(text[j])) j += seq_len(text[j]);
            pieces.push_back(text.substr(i, j - i));
            i = j;
        } else if (is_digit(c)) {
            pieces.push_back(text.substr(i, 1));
            ++i;
        } else {
            std::size_t j = i;
            while (j < text.size() && !is_space(text[j]) && !is_letter(text[j]) && !is_digit(text[j])) ++j;
            pieces.push_back(text.substr(i, j - i));
            i = j;
        }
    }
    return pieces;
}

/// Splits a byte-encoded word into its UTF-8 characters.
std::vector<std::string> characters(const std::string& s) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < s.size();) {
        const std::size_t n = seq_len(s[i]);
        out.push_back(s.substr(i, n));
        i += n;
    }
    return out;
}

}  // namespace

std::filesystem::path asset_dir() {
    if (const char* env = std::getenv("CLIPSPLAT_ASSETS"); env && *env) return env;
    return CLIPSPLAT_DEFAULT_ASSET_DIR;
}

Tokenizer::Tokenizer(const std::filesystem::path& bpe_path) {
    const std::string text = read_gzip(bpe_path);
    std::vector<std::pair<std::string, std::string>> merges;
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);  // version header
    while (static_cast<int>(merges.size()) < kMergeCount && std::getline(lines, line)) {
        const auto sp = line.find(' ');
        if (sp == std::string::npos) throw FormatError(fmt::format("malformed merge line '{}' in '{}'", line, bpe_path.string()));
        merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    if (static_cast<int>(merges.size()) != kMergeCount) {
        throw FormatError(fmt::format("'{}' holds {} merges, expected {}", bpe_path.string(), merges.size(), kMergeCount));
    }

    std::vector<std::string> vocab;
    for (const auto& [byte, cp] : byte_to_unicode()) {
        byte_encoder_[byte] = utf8(cp);
        vocab.push_back(utf8(cp));
    }
    const std::size_t base = vocab.size();
    for (std::size_t k = 0; k < base; ++k) vocab.push_back(vocab[k] + "</w>");
    for (int r = 0; r < kMergeCount; ++r) {
        vocab.push_back(merges[r].first + merges[r].second);
        ranks_.emplace(merges[r], r);
    }
    vocab.push_back(kStart);
    vocab.push_back(kEnd);
    for (std::size_t id = 0; id < vocab.size(); ++id) encoder_.emplace(vocab[id], std::int64_t(id));
    sot_ = encoder_.at(kStart);
    eot_ = encoder_.at(kEnd);
    cache_[kStart] = kStart;
    cache_[kEnd] = kEnd;
}

const Tokenizer& Tokenizer::bundled() {
    static const Tokenizer instance(asset_dir() / "bpe_simple_vocab_16e6.txt.gz");
    return instance;
}

std::string Tokenizer::bpe(const std::string& token) const {
    {
        std::lock_guard lock(cache_mutex_);
        if (auto it = cache_.find(token); it != cache_.end()) return it->second;
    }
    std::vector<std::string> word = characters(token);
    word.back() += "</w>";

    while (word.size() > 1) {
        int best = INT_MAX;
        std::size_t best_at = 0;
        for (std::size_t k = 0; k + 1 < word.size(); ++k) {
            auto it = ranks_.find({word[k], word[k + 1]});
            if (it != ranks_.end() && it->second < best) {
                best = it->second;
                best_at = k;
            }
        }
        if (best == INT_MAX) break;
        const std::string first = word[best_at];
        const std::string second = word[best_at + 1];
        std::vector<std::string> merged;
        for (std::size_t k = 0; k < word.size();) {
            if (k + 1 < word.size() && word[k] == first && word[k + 1] == second) {
                merged.push_back(first + second);
                k += 2;
            } else {
                merged.push_back(word[k]);
                ++k;
            }
        }
        word = std::move(merged);
    }
    std::string joined;
    for (std::size_t k = 0; k < word.size(); ++k) {
        if (k) joined += ' ';
        joined += word[k];
    }
    std::lock_guard lock(cache_mutex_);
    cache_.emplace(token, joined);
    return joined;
}

std::vector<std::int64_t> Tokenizer::encode(const std::string& text) const {
    std::vector<std::int64_t> ids;
    for (const auto& piece : pretokenize(clean(text))) {
        std::string encoded;
        if (piece == kStart || piece == kEnd) {
            encoded = piece;
        } else {
            for (unsigned char b : piece) encoded += byte_encoder_[b];
        }
        std::istringstream parts(bpe(encoded));
        std::string part;
        while (parts >> part) ids.push_back(encoder_.at(part));
    }
    return ids;
}

std::vector<std::int64_t> Tokenizer::tokenize(const std::string& text) const {
    std::vector<std::int64_t> ids = {sot_};
    const auto body = encode(text);
    ids.insert(ids.end(), body.begin(), body.end());
    ids.push_back(eot_);
    if (ids.size() > std::size_t(kContextLength)) {
        ids.resize(kContextLength);
        ids.back() = eot_;
    }
    ids.resize(kContextLength, 0);
    return ids;
}

}  // namespace clipsplat::guidance
