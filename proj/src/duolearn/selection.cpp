// SPDX-License-Identifier: Apache-2.0
#include "duolearn/selection.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "duolearn/errors.h"

namespace duolearn {

void SelectionConfig::validate() const {
    if (!(k_hard > 0.0 && k_hard <= 1.0)) throw config_error("k_hard must be in (0, 1]");
    if (!(k_mem >= 0.0 && k_mem < 1.0)) throw config_error("k_mem must be in [0, 1)");
    if (k_hard + k_mem > 1.0 + 1e-12) throw config_error("k_hard + k_mem must be <= 1");
    if (!(alpha >= 0.0)) throw config_error("alpha must be >= 0");
    if (!std::isfinite(alpha)) throw config_error("alpha must be finite");
}

Tensor score_tokens(const Tensor& logp_train, const Tensor& logp_ref, const Batch& batch) {
    if (!logp_train.same_shape(logp_ref) || logp_train.rows() != batch.batch_size ||
        logp_train.cols() != batch.seq_len)
        throw std::invalid_argument("score_tokens: shape mismatch");
    Tensor s = Tensor::full({batch.batch_size, batch.seq_len},
                            std::numeric_limits<double>::quiet_NaN());
    for (int64_t b = 0; b < batch.batch_size; ++b)
        for (int64_t i = 0; i < batch.seq_len; ++i)
            if (batch.valid_at(b, i)) s.at(b, i) = logp_ref.at(b, i) - logp_train.at(b, i);
    return s;
}

SelectionMask select_tokens(const Tensor& scores, const SelectionConfig& cfg,
                            const Batch& batch) {
    cfg.validate();
    if (scores.rows() != batch.batch_size || scores.cols() != batch.seq_len)
        throw std::invalid_argument("select_tokens: score shape mismatch");

    struct Cell {
        double s;
        int64_t b, i;
    };
    std::vector<Cell> cells;
    for (int64_t b = 0; b < batch.batch_size; ++b) {
        for (int64_t i = 0; i < batch.seq_len; ++i) {
            if (!batch.valid_at(b, i)) continue;
            const double s = scores.at(b, i);
            if (!std::isfinite(s))
                throw std::invalid_argument("select_tokens: non-finite score at a valid cell");
            cells.push_back({s, b, i});
        }
    }
    const int64_t v = static_cast<int64_t>(cells.size());

    SelectionMask mask;
    mask.rows = batch.batch_size;
    mask.cols = batch.seq_len;
    mask.labels.assign(static_cast<size_t>(mask.rows * mask.cols), CellLabel::invalid);
    for (const Cell& c : cells)
        mask.labels[static_cast<size_t>(c.b * mask.cols + c.i)] = CellLabel::neutral;
    if (v == 0) return mask;

    const int64_t n_hard = std::min<int64_t>(
        static_cast<int64_t>(std::ceil(cfg.k_hard * static_cast<double>(v))), v);
    if (n_hard == 0)
        throw config_error("k_hard selects zero hard tokens on a nonempty batch");
    const int64_t mem_cap =
        static_cast<int64_t>(std::ceil(cfg.k_mem * static_cast<double>(v)));

    // Descending by score; ties resolved by (row, position) ascending.
    std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        if (a.s != b.s) return a.s > b.s;
        if (a.b != b.b) return a.b < b.b;
        return a.i < b.i;
    });
    for (int64_t k = 0; k < n_hard; ++k) {
        const Cell& c = cells[static_cast<size_t>(k)];
        mask.labels[static_cast<size_t>(c.b * mask.cols + c.i)] = CellLabel::hard;
    }
    mask.n_hard = n_hard;

    // Memorized: lowest scores first among the non-hard remainder, filtered at
    // tau. The remainder is already sorted descending, so walk it backwards;
    // among equal scores the earlier (row, position) wins, matching a stable
    // ascending sort.
    std::vector<const Cell*> tail;
    for (int64_t k = v - 1; k >= n_hard; --k) {
        const Cell& c = cells[static_cast<size_t>(k)];
        if (c.s > cfg.tau) break;  // sorted: everything further up is larger
        tail.push_back(&c);
    }
    // Restore (score asc, row asc, pos asc) among ties.
    std::sort(tail.begin(), tail.end(), [](const Cell* a, const Cell* b) {
        if (a->s != b->s) return a->s < b->s;
        if (a->b != b->b) return a->b < b->b;
        return a->i < b->i;
    });
    for (const Cell* c : tail) {
        if (mask.n_mem >= mem_cap) break;
        mask.labels[static_cast<size_t>(c->b * mask.cols + c->i)] = CellLabel::memorized;
        mask.n_mem += 1;
    }
    return mask;
}

Tensor selection_weights(const SelectionMask& mask, double alpha) {
    Tensor w = Tensor::zeros({mask.rows, mask.cols});
    const double wh = mask.n_hard > 0 ? 1.0 / static_cast<double>(mask.n_hard) : 0.0;
    const double wm = mask.n_mem > 0 ? alpha / static_cast<double>(mask.n_mem) : 0.0;
    for (int64_t b = 0; b < mask.rows; ++b) {
        for (int64_t i = 0; i < mask.cols; ++i) {
            const CellLabel l = mask.at(b, i);
            if (l == CellLabel::hard)
                w.at(b, i) = wh;
            else if (l == CellLabel::memorized)
                w.at(b, i) = -wm;
        }
    }
    return w;
}

}  // namespace duolearn
