// SPDX-License-Identifier: Apache-2.0
//
// Token-dynamics instrumentation emitted as data files: per-token signal
// histograms, signal-rank trajectories across checkpoints, selection-category
// timelines, learning/unlearning gradient cosine, and prevalence-stratified
// signal distributions. Everything here is read-only over checkpoints and
// logs.
//
// Sign convention: these diagnostics report the raw loss-difference
// orientation (logp_train - logp_ref), where negative = memorized. The
// selection module scores with the opposite sign (logp_ref - logp_train);
// one is exactly the negation of the other, and the emitted file headers
// record the mapping.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "duolearn/corpus.h"
#include "duolearn/model.h"
#include "duolearn/selection.h"
#include "duolearn/trainer.h"

namespace duolearn {

struct HistogramData {
    std::vector<double> edges;    // bins+1, strictly increasing
    std::vector<int64_t> counts;  // bins, conserve the population size
    std::string tag;
};

// Per-token calibrated signals (logp_train - logp_ref) at every valid
// position of the doc.
std::vector<double> token_signals(const CausalLM& model, const CausalLM& ref,
                                  const TokenizedDoc& doc, int64_t seq_len);

// Histogram over [-5, 3] by default; out-of-range values land in the edge
// bins so counts always sum to the token population.
HistogramData token_signal_histogram(const CausalLM& model, const CausalLM& ref,
                                     const TokenizedDoc& doc, int64_t bins, int64_t seq_len,
                                     double lo = -5.0, double hi = 3.0,
                                     const std::string& tag = "");

struct TokenTrace {
    int64_t doc_id = 0;
    int64_t position = 0;                // absolute position within the doc
    std::vector<double> signal_by_ckpt;  // one entry per checkpoint
    std::vector<int64_t> rank_by_ckpt;   // 1..N within the doc, 1 = most memorized
};

// Signal and within-doc rank trajectories over an ordered checkpoint list.
std::vector<TokenTrace> token_rank_dynamics(const std::vector<const CausalLM*>& checkpoints,
                                            const CausalLM& ref, const TokenizedDoc& doc,
                                            int64_t seq_len);

// Mean absolute rank change between two checkpoint indices.
double rank_churn(const std::vector<TokenTrace>& traces, size_t from, size_t to);

struct SelectionDynamics {
    struct Timeline {
        int64_t doc_id = 0;
        int64_t position = 0;
        std::vector<std::pair<int64_t, CellLabel>> by_epoch;
    };
    std::vector<Timeline> timelines;
    // transitions[a][b]: count of consecutive-epoch moves from label a to b,
    // indexed by CellLabel (invalid slots stay zero).
    int64_t transitions[4][4] = {};

    int64_t count(CellLabel from, CellLabel to) const {
        return transitions[static_cast<size_t>(from)][static_cast<size_t>(to)];
    }
};

SelectionDynamics selection_dynamics(const std::vector<SelectionLogRow>& log);

struct GradCosineReport {
    std::optional<double> cosine;  // absent when the memorized set is empty
    double alpha = 0.0;            // reported alongside, never applied
};

// Cosine between the gradients of L_CE(T_h) and L_CE(T_m) for one batch.
GradCosineReport grad_cosine(CausalLM& model, const Batch& batch, const SelectionMask& mask,
                             double alpha);

// Signals split at the median corpus frequency of each position's token id
// (ties go low). Returns {low_prevalence, high_prevalence}.
std::pair<HistogramData, HistogramData> frequency_stratified_signals(
    const CausalLM& model, const CausalLM& ref, const std::vector<TokenizedDoc>& docs,
    const std::map<int32_t, int64_t>& freq_table, int64_t seq_len, int64_t bins = 50,
    double lo = -5.0, double hi = 3.0);

// TSV emitters with self-describing headers.
void write_histograms(const std::vector<HistogramData>& hists, const std::string& path);
void write_rank_traces(const std::vector<TokenTrace>& traces, const std::string& path);
void write_selection_dynamics(const SelectionDynamics& dyn, const std::string& path);

}  // namespace duolearn
