// SPDX-License-Identifier: Apache-2.0
#include "duolearn/goldfish.h"

#include <cmath>

#include "duolearn/errors.h"
#include "duolearn/rng.h"

namespace duolearn {

void GoldfishConfig::validate() const {
    if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw config_error("mask_rate must be in [0, 1)");
    if (context_width < 0) throw config_error("context_width must be >= 0");
}

bool goldfish_masks_cell(const Batch& batch, int64_t row, int64_t pos,
                         const GoldfishConfig& cfg) {
    if (cfg.mask_rate == 0.0) return false;
    const uint64_t k = static_cast<uint64_t>(std::llround(1.0 / cfg.mask_rate));
    if (k <= 1) return true;

    const int64_t abs_pos = batch.offsets[static_cast<size_t>(row)] + pos;
    uint64_t h = fnv1a64(&cfg.key, sizeof(cfg.key));
    const int64_t doc = batch.doc_ids[static_cast<size_t>(row)];
    h = fnv1a64(&doc, sizeof(doc), h);
    h = fnv1a64(&abs_pos, sizeof(abs_pos), h);
    const int64_t ctx_lo = std::max<int64_t>(0, pos - cfg.context_width);
    for (int64_t j = ctx_lo; j < pos; ++j) {
        const int32_t t = batch.token_at(row, j);
        h = fnv1a64(&t, sizeof(t), h);
    }
    return h % k == 0;
}

Tensor goldfish_weights(const Batch& batch, const GoldfishConfig& cfg) {
    cfg.validate();
    Tensor w = Tensor::zeros({batch.batch_size, batch.seq_len});
    int64_t kept = 0;
    for (int64_t b = 0; b < batch.batch_size; ++b) {
        for (int64_t i = 0; i < batch.seq_len; ++i) {
            if (!batch.valid_at(b, i)) continue;
            if (goldfish_masks_cell(batch, b, i, cfg)) continue;
            w.at(b, i) = 1.0;
            kept += 1;
        }
    }
    if (kept == 0) return w;  // fully masked batch contributes nothing
    const double u = 1.0 / static_cast<double>(kept);
    for (int64_t i = 0; i < w.numel(); ++i) w[i] *= u;
    return w;
}

}  // namespace duolearn
