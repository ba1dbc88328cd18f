// SPDX-License-Identifier: Apache-2.0
//
// The four per-sample MIA signal functions. Orientation convention: larger
// value means more-likely member, for every signal.
#pragma once

#include <cstdint>
#include <string>

#include "duolearn/corpus.h"
#include "duolearn/model.h"

namespace duolearn {

// Mean token CE of one document, windowed at L and token-weight averaged.
double doc_mean_ce(const CausalLM& model, const TokenizedDoc& doc, int64_t seq_len);

// f_loss = -L_CE(theta; x)
double signal_loss(const CausalLM& model, const TokenizedDoc& doc, int64_t seq_len);

// f_ref = L_CE(theta_ref; x) - L_CE(theta; x)
double signal_ref(const CausalLM& model, const CausalLM& attack_ref, const TokenizedDoc& doc,
                  int64_t seq_len);

// f_mink = mean of the ceil(k_frac*N) smallest token log-probs.
double signal_mink(const CausalLM& model, const TokenizedDoc& doc, double k_frac,
                   int64_t seq_len);

// Byte length of the RFC-1950 zlib stream at the fixed compression level.
int64_t zlib_size(const std::string& bytes, int level = 6);

// f_zlib = -L_CE(theta; x) / zlib(x)
double signal_zlib(const CausalLM& model, const TokenizedDoc& doc, int64_t seq_len,
                   int zlib_level = 6);

// Raw zlib stream, exposed so tests can validate the container byte-for-byte.
std::string zlib_compress(const std::string& bytes, int level = 6);

}  // namespace duolearn
