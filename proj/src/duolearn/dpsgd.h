// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "duolearn/param.h"
#include "duolearn/rng.h"
#include "duolearn/tensor.h"

namespace duolearn {

// Empirical DPSGD sanitizer: per-sample global-norm clipping to C plus
// Gaussian noise of std sigma*C, averaged over the batch. The clip norm and
// noise multiplier are exposed directly; formal (epsilon, delta) accounting
// is out of scope.
struct DPConfig {
    double clip_norm = 1.0;         // C > 0
    double noise_multiplier = 1.0;  // sigma >= 0, noise std = sigma*C
    int64_t microbatch = 1;

    void validate() const;
};

// per_sample[s][p] is sample s's gradient for parameter p. Every per-sample
// gradient is rescaled by min(1, C/||g||_2) over the global norm across all
// parameters; the output is (sum clipped + N(0, sigma^2 C^2 I)) / n_samples.
// When `clipped_norms` is given it receives each sample's post-clip norm.
std::vector<Tensor> dp_sanitize(const std::vector<std::vector<Tensor>>& per_sample,
                                const DPConfig& cfg, Rng& rng,
                                std::vector<double>* clipped_norms = nullptr);

// Streaming form of dp_sanitize for the training loop: samples are clipped
// into a running sum as they arrive, so per-sample gradients never need to be
// held together. finalize() computes exactly what dp_sanitize would.
class DpAccumulator {
  public:
    DpAccumulator(const DPConfig& cfg, const std::vector<Param>& shape_like);

    void add_sample(const std::vector<Param>& params);  // reads .grad
    std::vector<Tensor> finalize(Rng& rng);
    const std::vector<double>& clipped_norms() const { return norms_; }

  private:
    DPConfig cfg_;
    std::vector<Tensor> sum_;
    std::vector<double> norms_;
    int64_t count_ = 0;
};

}  // namespace duolearn
