// SPDX-License-Identifier: Apache-2.0
//
// Reference-calibrated token scoring and the hard/memorized/neutral
// partition. Scores follow the training-time orientation: s = logp_ref -
// logp_train, so large positive = hard (model struggles) and large negative =
// memorized (strong membership signal). Selection is recomputed from the
// current model every optimization step.
#pragma once

#include <cstdint>
#include <vector>

#include "duolearn/corpus.h"
#include "duolearn/tensor.h"

namespace duolearn {

struct SelectionConfig {
    double k_hard = 0.6;  // fraction of valid batch tokens, (0, 1]
    double k_mem = 0.2;   // fraction in [0, 1)
    double tau = 0.0;     // memorized candidates need score <= tau
    double alpha = 0.8;   // unlearning weight, >= 0

    void validate() const;
};

enum class CellLabel : uint8_t { invalid = 0, neutral = 1, hard = 2, memorized = 3 };

struct SelectionMask {
    int64_t rows = 0, cols = 0;
    std::vector<CellLabel> labels;  // rows*cols
    int64_t n_hard = 0;
    int64_t n_mem = 0;

    CellLabel at(int64_t b, int64_t i) const { return labels[static_cast<size_t>(b * cols + i)]; }
};

// s = logp_ref - logp_train at valid cells; NaN sentinel elsewhere. Both
// inputs are [B x L] target-cell log-probs over the identical batch.
Tensor score_tokens(const Tensor& logp_train, const Tensor& logp_ref, const Batch& batch);

// hard = the ceil(k_hard*V) highest-score valid cells (V = valid count);
// memorized = up to ceil(k_mem*V) lowest-score valid cells with s <= tau,
// never overlapping hard. Ties break by (score, row, position) so the
// partition is deterministic across runs and platforms.
SelectionMask select_tokens(const Tensor& scores, const SelectionConfig& cfg, const Batch& batch);

// +1/n_hard on hard cells, -alpha/n_mem on memorized cells, 0 elsewhere.
// Feeding the result to ce_loss yields L_CE(T_h) - alpha * L_CE(T_m) in one
// backward pass.
Tensor selection_weights(const SelectionMask& mask, double alpha);

}  // namespace duolearn
