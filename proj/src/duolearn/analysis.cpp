// SPDX-License-Identifier: Apache-2.0
#include "duolearn/analysis.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "duolearn/errors.h"
#include "duolearn/kernels.h"

namespace duolearn {

namespace {

// Valid positions of one doc in document order, with their signals.
struct PositionSignal {
    int64_t position;
    double signal;
};

std::vector<PositionSignal> doc_signals(const CausalLM& model, const CausalLM& ref,
                                        const TokenizedDoc& doc, int64_t seq_len) {
    if (model.config().vocab_size != ref.config().vocab_size)
        throw data_error("analysis: model and reference vocab sizes differ");
    const int32_t pad = static_cast<int32_t>(model.config().vocab_size - 2);
    std::vector<PositionSignal> out;
    for (const Batch& b : make_batches({doc}, seq_len, 32, 0, 0, pad)) {
        const Tensor lp_m = model.token_logprobs(b);
        const Tensor lp_r = ref.token_logprobs(b);
        for (int64_t r = 0; r < b.batch_size; ++r)
            for (int64_t i = 0; i < b.seq_len; ++i)
                if (b.valid_at(r, i))
                    out.push_back({b.offsets[static_cast<size_t>(r)] + i,
                                   lp_m.at(r, i) - lp_r.at(r, i)});
    }
    std::sort(out.begin(), out.end(),
              [](const PositionSignal& a, const PositionSignal& b) {
                  return a.position < b.position;
              });
    return out;
}

HistogramData histogram_of(const std::vector<double>& values, int64_t bins, double lo,
                           double hi, const std::string& tag) {
    if (bins < 1 || !(hi > lo)) throw config_error("histogram: bad bin spec");
    HistogramData h;
    h.tag = tag;
    h.edges.resize(static_cast<size_t>(bins) + 1);
    for (int64_t i = 0; i <= bins; ++i)
        h.edges[static_cast<size_t>(i)] =
            lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.counts.assign(static_cast<size_t>(bins), 0);
    for (double v : values) {
        int64_t idx = static_cast<int64_t>(
            std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
        idx = std::clamp<int64_t>(idx, 0, bins - 1);  // out-of-range -> edge bins
        h.counts[static_cast<size_t>(idx)] += 1;
    }
    return h;
}

}  // namespace

std::vector<double> token_signals(const CausalLM& model, const CausalLM& ref,
                                  const TokenizedDoc& doc, int64_t seq_len) {
    std::vector<double> out;
    for (const PositionSignal& ps : doc_signals(model, ref, doc, seq_len))
        out.push_back(ps.signal);
    return out;
}

HistogramData token_signal_histogram(const CausalLM& model, const CausalLM& ref,
                                     const TokenizedDoc& doc, int64_t bins, int64_t seq_len,
                                     double lo, double hi, const std::string& tag) {
    return histogram_of(token_signals(model, ref, doc, seq_len), bins, lo, hi, tag);
}

std::vector<TokenTrace> token_rank_dynamics(const std::vector<const CausalLM*>& checkpoints,
                                            const CausalLM& ref, const TokenizedDoc& doc,
                                            int64_t seq_len) {
    if (checkpoints.size() < 2)
        throw data_error("token_rank_dynamics needs at least 2 checkpoints");

    std::vector<TokenTrace> traces;
    for (size_t c = 0; c < checkpoints.size(); ++c) {
        const auto sig = doc_signals(*checkpoints[c], ref, doc, seq_len);
        if (traces.empty()) {
            traces.resize(sig.size());
            for (size_t i = 0; i < sig.size(); ++i) {
                traces[i].doc_id = doc.doc_id;
                traces[i].position = sig[i].position;
            }
        }
        // Rank 1 = most negative signal (most memorized); ties by position.
        std::vector<size_t> order(sig.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (sig[a].signal != sig[b].signal) return sig[a].signal < sig[b].signal;
            return sig[a].position < sig[b].position;
        });
        for (size_t r = 0; r < order.size(); ++r) {
            traces[order[r]].signal_by_ckpt.push_back(sig[order[r]].signal);
            traces[order[r]].rank_by_ckpt.push_back(static_cast<int64_t>(r) + 1);
        }
    }
    return traces;
}

double rank_churn(const std::vector<TokenTrace>& traces, size_t from, size_t to) {
    if (traces.empty()) return 0.0;
    double acc = 0.0;
    for (const TokenTrace& t : traces)
        acc += std::abs(static_cast<double>(t.rank_by_ckpt[to] - t.rank_by_ckpt[from]));
    return acc / static_cast<double>(traces.size());
}

SelectionDynamics selection_dynamics(const std::vector<SelectionLogRow>& log) {
    if (log.empty()) throw data_error("selection_dynamics: the selection log is empty");
    // One category per (doc, pos, epoch); a window appears once per epoch.
    std::map<std::pair<int64_t, int64_t>, std::vector<std::pair<int64_t, CellLabel>>> series;
    for (const SelectionLogRow& r : log)
        series[{r.doc_id, r.pos}].emplace_back(r.epoch, r.label);

    SelectionDynamics dyn;
    for (auto& [key, entries] : series) {
        std::sort(entries.begin(), entries.end());
        SelectionDynamics::Timeline tl;
        tl.doc_id = key.first;
        tl.position = key.second;
        tl.by_epoch = entries;
        for (size_t i = 1; i < entries.size(); ++i)
            dyn.transitions[static_cast<size_t>(entries[i - 1].second)]
                           [static_cast<size_t>(entries[i].second)] += 1;
        dyn.timelines.push_back(std::move(tl));
    }
    return dyn;
}

GradCosineReport grad_cosine(CausalLM& model, const Batch& batch, const SelectionMask& mask,
                             double alpha) {
    GradCosineReport rep;
    rep.alpha = alpha;
    if (mask.n_mem == 0 || mask.n_hard == 0) return rep;  // undefined, not zero

    const auto weights_for = [&](CellLabel which, int64_t count) {
        Tensor w = Tensor::zeros({mask.rows, mask.cols});
        const double u = 1.0 / static_cast<double>(count);
        for (int64_t b = 0; b < mask.rows; ++b)
            for (int64_t i = 0; i < mask.cols; ++i)
                if (mask.at(b, i) == which) w.at(b, i) = u;
        return w;
    };

    Graph g;
    const int logp = model.forward_logprob_node(g, batch);
    const int hard_node =
        model.ce_loss_from_logprobs(g, logp, batch, weights_for(CellLabel::hard, mask.n_hard));
    const int mem_node = model.ce_loss_from_logprobs(
        g, logp, batch, weights_for(CellLabel::memorized, mask.n_mem));

    g.backward(hard_node);
    std::vector<Tensor> g_hard;
    double sq_hard = 0.0;
    for (const Param& p : model.params()) {
        g_hard.push_back(p.grad);
        sq_hard += kernels::sum_sq(p.grad.data(), p.grad.numel());
    }
    g.backward(mem_node);
    double sq_mem = 0.0, d = 0.0;
    for (size_t i = 0; i < model.params().size(); ++i) {
        const Tensor& gm = model.params()[i].grad;
        sq_mem += kernels::sum_sq(gm.data(), gm.numel());
        d += kernels::dot(gm.data(), g_hard[i].data(), gm.numel());
    }
    if (sq_hard > 0.0 && sq_mem > 0.0) rep.cosine = d / (std::sqrt(sq_hard) * std::sqrt(sq_mem));
    return rep;
}

std::pair<HistogramData, HistogramData> frequency_stratified_signals(
    const CausalLM& model, const CausalLM& ref, const std::vector<TokenizedDoc>& docs,
    const std::map<int32_t, int64_t>& freq_table, int64_t seq_len, int64_t bins, double lo,
    double hi) {
    std::vector<double> freqs;       // one per evaluated position
    std::vector<double> signals;
    std::vector<int64_t> tok_freqs;
    for (const TokenizedDoc& doc : docs) {
        const auto sigs = doc_signals(model, ref, doc, seq_len);
        for (const PositionSignal& ps : sigs) {
            const int32_t tok = doc.tokens[static_cast<size_t>(ps.position)];
            const auto it = freq_table.find(tok);
            const int64_t f = it == freq_table.end() ? 0 : it->second;
            signals.push_back(ps.signal);
            tok_freqs.push_back(f);
            freqs.push_back(static_cast<double>(f));
        }
    }
    if (signals.empty()) throw data_error("frequency_stratified_signals: no tokens evaluated");
    std::vector<double> sorted = freqs;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];

    std::vector<double> low, high;
    for (size_t i = 0; i < signals.size(); ++i)
        (static_cast<double>(tok_freqs[i]) <= median ? low : high).push_back(signals[i]);
    HistogramData hl = histogram_of(low, bins, lo, hi, "low_prevalence");
    HistogramData hh = histogram_of(high, bins, lo, hi, "high_prevalence");
    return {hl, hh};
}

void write_histograms(const std::vector<HistogramData>& hists, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write histogram file: " + path);
    out << "# per-token MIA signal histograms; signal = logp_train - logp_ref "
           "(negative = memorized; selection scores use the opposite sign)\n";
    out << "# columns: tag bin_lo bin_hi count\n";
    char buf[256];
    for (const HistogramData& h : hists)
        for (size_t i = 0; i < h.counts.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s\t%.17g\t%.17g\t%lld\n", h.tag.c_str(),
                          h.edges[i], h.edges[i + 1], static_cast<long long>(h.counts[i]));
            out << buf;
        }
}

void write_rank_traces(const std::vector<TokenTrace>& traces, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write rank trace file: " + path);
    out << "# per-token signal rank trajectories; rank 1 = most memorized at that checkpoint\n";
    out << "# columns: doc_id position ckpt_index rank signal\n";
    char buf[256];
    for (const TokenTrace& t : traces)
        for (size_t c = 0; c < t.rank_by_ckpt.size(); ++c) {
            std::snprintf(buf, sizeof(buf), "%lld\t%lld\t%zu\t%lld\t%.17g\n",
                          static_cast<long long>(t.doc_id), static_cast<long long>(t.position),
                          c, static_cast<long long>(t.rank_by_ckpt[c]), t.signal_by_ckpt[c]);
            out << buf;
        }
}

namespace {

const char* label_name(CellLabel l) {
    switch (l) {
        case CellLabel::invalid: return "invalid";
        case CellLabel::neutral: return "neutral";
        case CellLabel::hard: return "learn";
        case CellLabel::memorized: return "unlearn";
    }
    return "?";
}

}  // namespace

void write_selection_dynamics(const SelectionDynamics& dyn, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write selection dynamics file: " + path);
    out << "# selection-category timelines; labels: learn (hard), unlearn (memorized), "
           "neutral\n";
    out << "# transition counts between consecutive epochs:\n";
    const CellLabel labels[3] = {CellLabel::neutral, CellLabel::hard, CellLabel::memorized};
    for (CellLabel a : labels)
        for (CellLabel b : labels)
            out << "# transition " << label_name(a) << "->" << label_name(b) << " = "
                << dyn.count(a, b) << "\n";
    out << "# columns: doc_id position epoch label\n";
    for (const auto& tl : dyn.timelines)
        for (const auto& [epoch, label] : tl.by_epoch)
            out << tl.doc_id << "\t" << tl.position << "\t" << epoch << "\t"
                << label_name(label) << "\n";
}

}  // namespace duolearn
