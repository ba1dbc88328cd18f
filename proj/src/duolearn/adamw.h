// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "duolearn/param.h"

namespace duolearn {

struct AdamWConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled-weight-decay Adam. Moment buffers are keyed by parameter order,
// fixed on the first step.
class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void step(std::vector<Param>& params);
    int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

    const Tensor& first_moment(size_t i) const { return m_[i]; }
    const Tensor& second_moment(size_t i) const { return v_[i]; }

  private:
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace duolearn
