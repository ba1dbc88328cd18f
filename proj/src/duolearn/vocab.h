// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace duolearn {

enum class VocabScheme { byte_level, char_level };

std::string to_string(VocabScheme s);
VocabScheme vocab_scheme_from_string(const std::string& s);

// Token id space: text tokens first, then pad and bos. Byte scheme maps every
// byte value to its own id (size 258); char scheme assigns one id per distinct
// Unicode code point observed in the corpus. Encoding then decoding
// reproduces the input bytes exactly.
class Vocab {
  public:
    static Vocab build(const std::vector<std::string>& texts, VocabScheme scheme);
    static Vocab byte_vocab();
    static Vocab char_vocab(std::vector<uint32_t> codepoints);

    VocabScheme scheme() const { return scheme_; }
    int64_t size() const;                       // text tokens + 2 specials
    int64_t text_token_count() const;
    int32_t pad_id() const { return static_cast<int32_t>(text_token_count()); }
    int32_t bos_id() const { return static_cast<int32_t>(text_token_count()) + 1; }

    std::vector<int32_t> encode(std::string_view bytes) const;
    std::string decode(const std::vector<int32_t>& ids) const;

    const std::vector<uint32_t>& codepoints() const { return codepoints_; }

  private:
    VocabScheme scheme_ = VocabScheme::byte_level;
    std::vector<uint32_t> codepoints_;  // char scheme only, sorted ascending
};

}  // namespace duolearn
