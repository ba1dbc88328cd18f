// SPDX-License-Identifier: Apache-2.0
#include "duolearn/metrics.h"

#include <algorithm>
#include <cstdint>

#include "duolearn/errors.h"

namespace duolearn {

double roc_auc(const std::vector<double>& member_signals,
               const std::vector<double>& nonmember_signals) {
    if (member_signals.empty() || nonmember_signals.empty())
        throw data_error("roc_auc: both signal lists must be nonempty");
    struct Tagged {
        double v;
        bool member;
    };
    std::vector<Tagged> all;
    all.reserve(member_signals.size() + nonmember_signals.size());
    for (double v : member_signals) all.push_back({v, true});
    for (double v : nonmember_signals) all.push_back({v, false});
    std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.v < b.v; });

    // Mid-ranks are multiples of 1/2, so the rank sum is exact in doubles.
    double member_rank_sum = 0.0;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].v == all[i].v) ++j;
        const double mid_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k)
            if (all[k].member) member_rank_sum += mid_rank;
        i = j;
    }
    const double nm = static_cast<double>(member_signals.size());
    const double nn = static_cast<double>(nonmember_signals.size());
    return (member_rank_sum - nm * (nm + 1.0) / 2.0) / (nm * nn);
}

double tpr_at_fpr(const std::vector<double>& member_signals,
                  const std::vector<double>& nonmember_signals, double fpr_target) {
    if (member_signals.empty() || nonmember_signals.empty())
        throw data_error("tpr_at_fpr: both signal lists must be nonempty");
    if (!(fpr_target > 0.0 && fpr_target < 1.0))
        throw config_error("tpr_at_fpr: fpr_target must be in (0, 1)");

    std::vector<double> m = member_signals;
    std::vector<double> n = nonmember_signals;
    std::sort(m.begin(), m.end());
    std::sort(n.begin(), n.end());

    const auto count_ge = [](const std::vector<double>& sorted, double t) {
        return static_cast<int64_t>(sorted.end() -
                                    std::lower_bound(sorted.begin(), sorted.end(), t));
    };

    std::vector<double> thresholds = m;
    thresholds.insert(thresholds.end(), n.begin(), n.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    double best = 0.0;  // a threshold above every observation gives TPR 0, FPR 0
    for (double t : thresholds) {
        const double fpr =
            static_cast<double>(count_ge(n, t)) / static_cast<double>(n.size());
        if (fpr > fpr_target) continue;
        const double tpr =
            static_cast<double>(count_ge(m, t)) / static_cast<double>(m.size());
        best = std::max(best, tpr);
    }
    return best;
}

}  // namespace duolearn
