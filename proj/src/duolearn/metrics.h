// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace duolearn {

// Mann-Whitney AUC via mid-ranks: P(member > non-member) + 0.5 P(tie).
double roc_auc(const std::vector<double>& member_signals,
               const std::vector<double>& nonmember_signals);

// Maximum TPR over thresholds (classify member iff signal >= t) whose
// empirical FPR is <= fpr_target. Conservative: no interpolation.
double tpr_at_fpr(const std::vector<double>& member_signals,
                  const std::vector<double>& nonmember_signals, double fpr_target);

}  // namespace duolearn
