// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "duolearn/corpus.h"
#include "duolearn/tensor.h"

namespace duolearn {

// Deterministic goldfish masking: a fixed pseudo-random fraction of target
// cells is excluded from the loss. The mask decision hashes (key, doc_id,
// absolute position, preceding context tokens), so it is identical across
// epochs and runs; with k = round(1/mask_rate) a cell is masked when the hash
// is divisible by k.
struct GoldfishConfig {
    double mask_rate = 0.25;  // [0, 1)
    uint64_t key = 0;
    int64_t context_width = 4;

    void validate() const;
};

// Weight 0 at masked valid cells, uniform 1/n_kept at kept valid cells.
Tensor goldfish_weights(const Batch& batch, const GoldfishConfig& cfg);

// Exposed for tests: the raw mask decision for one target cell.
bool goldfish_masks_cell(const Batch& batch, int64_t row, int64_t pos,
                         const GoldfishConfig& cfg);

}  // namespace duolearn
