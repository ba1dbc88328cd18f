// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace duolearn {

// Synthetic desk corpus: short templated sentences over fixed word banks with
// Zipf-biased draws, plus a long unique code suffix per document. The shared
// grammar is learnable from held-out data while the codes are only learnable
// by memorizing the document, which is what the membership experiments need.
struct TextGenConfig {
    int64_t n_docs = 6000;
    uint64_t seed = 2024;
    double code_prob = 1.0;  // fraction of docs carrying a unique code suffix
    int64_t code_len = 18;
};

std::vector<std::string> generate_corpus(const TextGenConfig& cfg);

}  // namespace duolearn
