// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "duolearn/param.h"

namespace duolearn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    int64_t coords_checked = 0;
    std::string worst_param;
    int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool passed(double tolerance) const { return max_rel_err < tolerance; }
};

// Compares reverse-mode gradients against central finite differences on a
// random subset of at least `min_coords` coordinates (all coordinates when the
// models are smaller than that). `loss(true)` must run forward+backward and
// leave gradients in params; `loss(false)` is forward-only. Relative error is
// |ad - fd| / max(|ad| + |fd|, 1e-8).
GradCheckReport grad_check(const std::function<double(bool)>& loss, std::vector<Param>& params,
                           double h, int64_t min_coords, uint64_t seed);

}  // namespace duolearn
