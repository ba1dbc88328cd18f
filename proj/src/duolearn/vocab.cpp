// SPDX-License-Identifier: Apache-2.0
#include "duolearn/vocab.h"

#include <algorithm>
#include <set>

#include "duolearn/errors.h"

namespace duolearn {

std::string to_string(VocabScheme s) {
    return s == VocabScheme::byte_level ? "byte" : "char";
}

VocabScheme vocab_scheme_from_string(const std::string& s) {
    if (s == "byte") return VocabScheme::byte_level;
    if (s == "char") return VocabScheme::char_level;
    throw config_error("unknown vocab scheme '" + s + "' (want byte|char)");
}

namespace {

// Decodes one UTF-8 code point starting at `i`; advances `i`.
uint32_t decode_utf8(std::string_view s, size_t& i) {
    const auto byte = [&](size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char b0 = byte(i);
    size_t len;
    uint32_t cp;
    if (b0 < 0x80) {
        len = 1;
        cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        throw data_error("invalid UTF-8 lead byte in char-scheme corpus");
    }
    if (i + len > s.size()) throw data_error("truncated UTF-8 sequence in char-scheme corpus");
    for (size_t k = 1; k < len; ++k) {
        if ((byte(i + k) & 0xC0) != 0x80)
            throw data_error("invalid UTF-8 continuation byte in char-scheme corpus");
        cp = (cp << 6) | (byte(i + k) & 0x3F);
    }
    i += len;
    return cp;
}

void encode_utf8(uint32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

}  // namespace

Vocab Vocab::byte_vocab() {
    Vocab v;
    v.scheme_ = VocabScheme::byte_level;
    return v;
}

Vocab Vocab::char_vocab(std::vector<uint32_t> codepoints) {
    std::sort(codepoints.begin(), codepoints.end());
    codepoints.erase(std::unique(codepoints.begin(), codepoints.end()), codepoints.end());
    Vocab v;
    v.scheme_ = VocabScheme::char_level;
    v.codepoints_ = std::move(codepoints);
    return v;
}

Vocab Vocab::build(const std::vector<std::string>& texts, VocabScheme scheme) {
    if (texts.empty()) throw data_error("cannot build vocabulary from an empty corpus");
    if (scheme == VocabScheme::byte_level) return byte_vocab();
    std::set<uint32_t> cps;
    for (const std::string& t : texts) {
        size_t i = 0;
        while (i < t.size()) cps.insert(decode_utf8(t, i));
    }
    return char_vocab(std::vector<uint32_t>(cps.begin(), cps.end()));
}

int64_t Vocab::text_token_count() const {
    return scheme_ == VocabScheme::byte_level ? 256
                                              : static_cast<int64_t>(codepoints_.size());
}

int64_t Vocab::size() const { return text_token_count() + 2; }

std::vector<int32_t> Vocab::encode(std::string_view bytes) const {
    std::vector<int32_t> out;
    if (scheme_ == VocabScheme::byte_level) {
        out.reserve(bytes.size());
        for (char c : bytes) out.push_back(static_cast<int32_t>(static_cast<unsigned char>(c)));
        return out;
    }
    size_t i = 0;
    while (i < bytes.size()) {
        const uint32_t cp = decode_utf8(bytes, i);
        const auto it = std::lower_bound(codepoints_.begin(), codepoints_.end(), cp);
        if (it == codepoints_.end() || *it != cp)
            throw data_error("code point not in vocabulary: U+" + std::to_string(cp));
        out.push_back(static_cast<int32_t>(it - codepoints_.begin()));
    }
    return out;
}

std::string Vocab::decode(const std::vector<int32_t>& ids) const {
    std::string out;
    for (int32_t id : ids) {
        if (id >= text_token_count() || id < 0)
            throw data_error("cannot decode special or out-of-range token id " +
                             std::to_string(id));
        if (scheme_ == VocabScheme::byte_level)
            out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        else
            encode_utf8(codepoints_[static_cast<size_t>(id)], out);
    }
    return out;
}

}  // namespace duolearn
