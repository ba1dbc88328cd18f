// SPDX-License-Identifier: Apache-2.0
#include "duolearn/adamw.h"

#include <cmath>

#include "duolearn/errors.h"

namespace duolearn {

void AdamW::step(std::vector<Param>& params) {
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Param& p : params) {
            m_.push_back(Tensor::zeros(p.value.shape()));
            v_.push_back(Tensor::zeros(p.value.shape()));
        }
    }
    t_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Param& p = params[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t j = 0; j < p.value.numel(); ++j) {
            const double g = p.grad[j];
            if (!std::isfinite(g))
                throw numeric_error("non-finite gradient in parameter '" + p.name + "'");
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                     cfg_.weight_decay * p.value[j]);
        }
    }
}

}  // namespace duolearn
