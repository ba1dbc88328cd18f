// SPDX-License-Identifier: Apache-2.0
#include "duolearn/dpsgd.h"

#include <algorithm>
#include <cmath>

#include "duolearn/errors.h"
#include "duolearn/kernels.h"

namespace duolearn {

void DPConfig::validate() const {
    if (!(clip_norm > 0.0)) throw config_error("dp clip_norm must be > 0");
    if (!(noise_multiplier >= 0.0)) throw config_error("dp noise_multiplier must be >= 0");
    if (microbatch < 1) throw config_error("dp microbatch must be >= 1");
}

std::vector<Tensor> dp_sanitize(const std::vector<std::vector<Tensor>>& per_sample,
                                const DPConfig& cfg, Rng& rng,
                                std::vector<double>* clipped_norms) {
    cfg.validate();
    if (per_sample.empty()) throw data_error("dp_sanitize: no per-sample gradients");
    const size_t n_params = per_sample.front().size();

    std::vector<Tensor> out;
    out.reserve(n_params);
    for (const Tensor& t : per_sample.front()) out.push_back(Tensor::zeros(t.shape()));
    if (clipped_norms) clipped_norms->clear();

    for (const auto& grads : per_sample) {
        if (grads.size() != n_params)
            throw data_error("dp_sanitize: inconsistent per-sample gradient sets");
        double sq = 0.0;
        for (const Tensor& g : grads) {
            if (!g.all_finite()) throw numeric_error("dp_sanitize: non-finite gradient input");
            sq += kernels::sum_sq(g.data(), g.numel());
        }
        const double norm = std::sqrt(sq);
        const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
        for (size_t p = 0; p < n_params; ++p)
            kernels::axpy(scale, grads[p].data(), out[p].data(), out[p].numel());
        if (clipped_norms) clipped_norms->push_back(norm * scale);
    }

    const double batch = static_cast<double>(per_sample.size());
    const double noise_std = cfg.noise_multiplier * cfg.clip_norm;
    for (Tensor& t : out) {
        if (noise_std > 0.0)
            for (int64_t i = 0; i < t.numel(); ++i) t[i] += noise_std * rng.next_gaussian();
        kernels::scale_inplace(t.data(), 1.0 / batch, t.numel());
    }
    return out;
}

DpAccumulator::DpAccumulator(const DPConfig& cfg, const std::vector<Param>& shape_like)
    : cfg_(cfg) {
    cfg_.validate();
    sum_.reserve(shape_like.size());
    for (const Param& p : shape_like) sum_.push_back(Tensor::zeros(p.value.shape()));
}

void DpAccumulator::add_sample(const std::vector<Param>& params) {
    double sq = 0.0;
    for (const Param& p : params) {
        if (!p.grad.all_finite())
            throw numeric_error("dp accumulator: non-finite gradient in '" + p.name + "'");
        sq += kernels::sum_sq(p.grad.data(), p.grad.numel());
    }
    const double norm = std::sqrt(sq);
    const double scale = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
    for (size_t i = 0; i < params.size(); ++i)
        kernels::axpy(scale, params[i].grad.data(), sum_[i].data(), sum_[i].numel());
    norms_.push_back(norm * scale);
    count_ += 1;
}

std::vector<Tensor> DpAccumulator::finalize(Rng& rng) {
    if (count_ == 0) throw data_error("dp accumulator: no samples added");
    const double noise_std = cfg_.noise_multiplier * cfg_.clip_norm;
    for (Tensor& t : sum_) {
        if (noise_std > 0.0)
            for (int64_t i = 0; i < t.numel(); ++i) t[i] += noise_std * rng.next_gaussian();
        kernels::scale_inplace(t.data(), 1.0 / static_cast<double>(count_), t.numel());
    }
    return std::move(sum_);
}

}  // namespace duolearn
