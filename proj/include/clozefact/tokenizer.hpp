#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clozefact/error.hpp"

namespace clozefact {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kMaskId = 4;
inline constexpr TokenId kNumReserved = 5;

inline constexpr std::string_view kMaskToken = "[MASK]";

constexpr bool is_reserved(TokenId id) noexcept { return id >= 0 && id < kNumReserved; }

// Lowercases ASCII and splits on whitespace. ASCII punctuation characters
// become single-character tokens; bytes >= 0x80 are kept inside words.
inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    };
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (u >= 0x80 || std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (std::isspace(u)) {
            flush();
        } else {
            flush();
            out.emplace_back(1, ch);
        }
    }
    flush();
    return out;
}

inline std::string normalize_text(std::string_view text) {
    std::string out;
    for (const auto& w : split_words(text)) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += w;
    }
    return out;
}

class Vocabulary {
public:
    Vocabulary() {
        tokens_ = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", std::string(kMaskToken)};
    }

    // Tokens after the reserved block, ids assigned densely from 5.
    explicit Vocabulary(std::span<const std::string> words) : Vocabulary() {
        for (const auto& w : words) {
            if (w.empty()) {
                throw DataError("vocabulary: empty token");
            }
            const auto id = static_cast<TokenId>(tokens_.size());
            if (!index_.emplace(w, id).second) {
                throw DataError("vocabulary: duplicate token '" + w + "'");
            }
            tokens_.push_back(w);
        }
    }

    std::size_t size() const noexcept { return tokens_.size(); }

    std::optional<TokenId> find(std::string_view token) const {
        auto it = index_.find(std::string(token));
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    TokenId id_or_unk(std::string_view token) const { return find(token).value_or(kUnkId); }

    const std::string& token(TokenId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
            throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(tokens_.size()));
        }
        return tokens_[static_cast<std::size_t>(id)];
    }

    // Non-reserved tokens in id order.
    std::span<const std::string> words() const noexcept {
        return std::span<const std::string>(tokens_).subspan(kNumReserved);
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

// Ranks tokens by descending frequency, then lexicographically. Tokens in
// `always_include` are added after the ranked ones if missing, regardless of
// frequency; they count against max_size.
inline Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size,
                              std::size_t min_freq,
                              std::span<const std::string> always_include = {}) {
    if (max_size <= static_cast<std::size_t>(kNumReserved)) {
        throw std::invalid_argument("build_vocab: max_size must exceed the 5 reserved tokens");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& t : texts) {
        for (auto& w : split_words(t)) {
            ++counts[w];
        }
    }
    if (counts.empty()) {
        throw DataError("build_vocab: empty corpus");
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    std::vector<std::string> forced;
    for (const auto& t : always_include) {
        for (auto& w : split_words(t)) {
            if (std::find(forced.begin(), forced.end(), w) == forced.end()) {
                forced.push_back(std::move(w));
            }
        }
    }
    const std::size_t room = max_size - kNumReserved;
    if (forced.size() > room) {
        throw std::invalid_argument("build_vocab: required tokens exceed max_size");
    }

    auto is_forced = [&](const std::string& w) {
        return std::find(forced.begin(), forced.end(), w) != forced.end();
    };
    std::size_t free_slots = room - forced.size();
    std::vector<std::string> words;
    for (auto& [w, c] : ranked) {
        if (is_forced(w)) {
            words.push_back(w);
        } else if (c >= min_freq && free_slots > 0) {
            words.push_back(w);
            --free_slots;
        }
    }
    for (const auto& f : forced) {
        if (std::find(words.begin(), words.end(), f) == words.end()) {
            words.push_back(f);
        }
    }
    return Vocabulary(words);
}

// One token per line; line n holds id n + 5.
inline void save_vocab(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write vocabulary file '" + path + "'");
    }
    for (const auto& w : vocab.words()) {
        out << w << '\n';
    }
}

inline Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open vocabulary file '" + path + "'");
    }
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        words.push_back(line);
    }
    return Vocabulary(words);
}

struct TokenSequence {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> attention_mask;
    std::optional<std::size_t> mask_position;

    std::size_t length() const noexcept { return ids.size(); }
    std::size_t real_length() const noexcept {
        return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
    }
    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Lays out [CLS] content... [SEP] [PAD]... from already-mapped content ids.
inline TokenSequence pack_sequence(std::span<const TokenId> content, std::size_t max_len) {
    if (max_len < 3) {
        throw std::invalid_argument("sequence max_len must be at least 3");
    }
    const std::size_t keep = std::min(content.size(), max_len - 2);
    TokenSequence seq;
    seq.ids.assign(max_len, kPadId);
    seq.attention_mask.assign(max_len, 0);
    seq.ids[0] = kClsId;
    for (std::size_t i = 0; i < keep; ++i) {
        seq.ids[i + 1] = content[i];
    }
    seq.ids[keep + 1] = kSepId;
    std::fill_n(seq.attention_mask.begin(), keep + 2, std::uint8_t{1});
    for (std::size_t i = 0; i < keep; ++i) {
        if (content[i] == kMaskId) {
            seq.mask_position = i + 1;
        }
    }
    return seq;
}

inline std::vector<TokenId> map_words(const Vocabulary& vocab, std::string_view text) {
    std::vector<TokenId> ids;
    for (const auto& w : split_words(text)) {
        ids.push_back(vocab.id_or_unk(w));
    }
    return ids;
}

inline TokenSequence encode(const Vocabulary& vocab, std::string_view text, std::size_t max_len) {
    const auto ids = map_words(vocab, text);
    return pack_sequence(ids, max_len);
}

inline std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids) {
    std::string out;
    for (TokenId id : ids) {
        const auto& tok = vocab.token(id);
        if (is_reserved(id)) {
            continue;
        }
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += tok;
    }
    return out;
}

} // namespace clozefact
