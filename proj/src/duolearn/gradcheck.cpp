// SPDX-License-Identifier: Apache-2.0
#include "duolearn/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "duolearn/rng.h"

namespace duolearn {

GradCheckReport grad_check(const std::function<double(bool)>& loss, std::vector<Param>& params,
                           double h, int64_t min_coords, uint64_t seed) {
    int64_t total = 0;
    for (const Param& p : params) total += p.value.numel();

    // Pick the coordinate subset first so the analytic pass runs once.
    std::vector<std::pair<size_t, int64_t>> coords;
    if (total <= min_coords) {
        for (size_t pi = 0; pi < params.size(); ++pi)
            for (int64_t j = 0; j < params[pi].value.numel(); ++j) coords.emplace_back(pi, j);
    } else {
        Rng rng(seed);
        coords.reserve(static_cast<size_t>(min_coords));
        for (int64_t c = 0; c < min_coords; ++c) {
            int64_t flat = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(total)));
            for (size_t pi = 0; pi < params.size(); ++pi) {
                if (flat < params[pi].value.numel()) {
                    coords.emplace_back(pi, flat);
                    break;
                }
                flat -= params[pi].value.numel();
            }
        }
    }

    loss(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const Param& p : params) analytic.push_back(p.grad);

    GradCheckReport rep;
    for (const auto& [pi, j] : coords) {
        Param& p = params[pi];
        const double saved = p.value[j];
        p.value[j] = saved + h;
        const double lp = loss(false);
        p.value[j] = saved - h;
        const double lm = loss(false);
        p.value[j] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double ad = analytic[pi][j];
        const double rel = std::abs(ad - fd) / std::max(std::abs(ad) + std::abs(fd), 1e-8);
        rep.coords_checked += 1;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_param = p.name;
            rep.worst_index = j;
            rep.worst_analytic = ad;
            rep.worst_numeric = fd;
        }
    }
    return rep;
}

}  // namespace duolearn
