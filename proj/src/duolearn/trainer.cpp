// SPDX-License-Identifier: Apache-2.0
#include "duolearn/trainer.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "duolearn/checkpoint.h"
#include "duolearn/errors.h"
#include "duolearn/kernels.h"

namespace duolearn {

std::string to_string(Method m) {
    switch (m) {
        case Method::ft: return "ft";
        case Method::goldfish: return "goldfish";
        case Method::dpsgd: return "dpsgd";
        case Method::duolearn: return "duolearn";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "ft") return Method::ft;
    if (s == "goldfish") return Method::goldfish;
    if (s == "dpsgd") return Method::dpsgd;
    if (s == "duolearn") return Method::duolearn;
    throw config_error("unknown method '" + s + "' (want ft|goldfish|dpsgd|duolearn)");
}

void TrainConfig::validate() const {
    model.validate();
    if (epochs < 1) throw config_error("epochs must be >= 1");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (seq_len < 2) throw config_error("seq_len must be >= 2");
    if (seq_len > model.max_seq)
        throw config_error("seq_len exceeds the model's max_seq");
    if (eval_every_epochs < 1) throw config_error("eval_every_epochs must be >= 1");
    if (method == Method::duolearn) {
        selection.validate();
        if (score_mode == ScoreMode::reference && reference_checkpoint.empty())
            throw config_error("duolearn requires a reference checkpoint");
    }
    if (method == Method::goldfish) goldfish.validate();
    if (method == Method::dpsgd) dp.validate();
}

double weighted_ce_step(CausalLM& model, const Batch& batch, const Tensor& weights,
                        AdamW& opt) {
    Graph g;
    const int loss_node = model.ce_loss(g, batch, weights);
    const double loss = g.scalar_value(loss_node);
    g.backward(loss_node);
    opt.step(model.params());
    return loss;
}

namespace {

double flat_dot(const std::vector<Param>& params, const std::vector<Tensor>& other) {
    double s = 0.0;
    for (size_t i = 0; i < params.size(); ++i)
        s += kernels::dot(params[i].grad.data(), other[i].data(), other[i].numel());
    return s;
}

std::vector<Tensor> copy_grads(const std::vector<Param>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Param& p : params) out.push_back(p.grad);
    return out;
}

double grad_norm(const std::vector<Param>& params) {
    double sq = 0.0;
    for (const Param& p : params) sq += kernels::sum_sq(p.grad.data(), p.grad.numel());
    return std::sqrt(sq);
}

Tensor scores_from_train_loss(const Tensor& lp_train, const Batch& batch) {
    Tensor s = Tensor::full({batch.batch_size, batch.seq_len},
                            std::numeric_limits<double>::quiet_NaN());
    for (int64_t b = 0; b < batch.batch_size; ++b)
        for (int64_t i = 0; i < batch.seq_len; ++i)
            if (batch.valid_at(b, i)) s.at(b, i) = -lp_train.at(b, i);
    return s;
}

Tensor class_weights(const SelectionMask& mask, CellLabel which, int64_t count) {
    Tensor w = Tensor::zeros({mask.rows, mask.cols});
    if (count <= 0) return w;
    const double u = 1.0 / static_cast<double>(count);
    for (int64_t b = 0; b < mask.rows; ++b)
        for (int64_t i = 0; i < mask.cols; ++i)
            if (mask.at(b, i) == which) w.at(b, i) = u;
    return w;
}

}  // namespace

StepStats duolearn_step(CausalLM& model, const CausalLM* ref, const Batch& batch,
                        const SelectionConfig& sel, ScoreMode mode, bool want_cosine,
                        AdamW& opt, SelectionMask* mask_out,
                        const Tensor* lp_ref_precomputed) {
    if (mode == ScoreMode::reference && ref == nullptr && lp_ref_precomputed == nullptr)
        throw config_error("duolearn_step: reference model required");

    Graph g;
    const int logp_node = model.forward_logprob_node(g, batch);
    const Tensor lp_train = CausalLM::logprobs_from_node(g, logp_node, batch);

    Tensor scores;
    if (mode == ScoreMode::reference) {
        // Reference forward pass is gradient-free: the tape below never sees it.
        const Tensor lp_ref =
            lp_ref_precomputed ? *lp_ref_precomputed : ref->token_logprobs(batch);
        scores = score_tokens(lp_train, lp_ref, batch);
    } else {
        scores = scores_from_train_loss(lp_train, batch);
    }
    const SelectionMask mask = select_tokens(scores, sel, batch);
    const Tensor weights = selection_weights(mask, sel.alpha);
    const int loss_node = model.ce_loss_from_logprobs(g, logp_node, batch, weights);

    StepStats stats;
    stats.loss = g.scalar_value(loss_node);
    stats.n_hard = mask.n_hard;
    stats.n_mem = mask.n_mem;
    double sum = 0.0;
    int64_t n = 0;
    for (int64_t b = 0; b < batch.batch_size; ++b)
        for (int64_t i = 0; i < batch.seq_len; ++i)
            if (batch.valid_at(b, i)) {
                sum += scores.at(b, i);
                n += 1;
            }
    stats.mean_score = n > 0 ? sum / static_cast<double>(n) : 0.0;

    if (want_cosine && mask.n_hard > 0 && mask.n_mem > 0) {
        const int hard_node = model.ce_loss_from_logprobs(
            g, logp_node, batch, class_weights(mask, CellLabel::hard, mask.n_hard));
        const int mem_node = model.ce_loss_from_logprobs(
            g, logp_node, batch, class_weights(mask, CellLabel::memorized, mask.n_mem));
        g.backward(hard_node);
        const std::vector<Tensor> g_hard = copy_grads(model.params());
        const double n_hard_norm = grad_norm(model.params());
        g.backward(mem_node);
        const double n_mem_norm = grad_norm(model.params());
        const double d = flat_dot(model.params(), g_hard);
        if (n_hard_norm > 0.0 && n_mem_norm > 0.0)
            stats.grad_cosine = d / (n_hard_norm * n_mem_norm);
    }

    g.backward(loss_node);
    opt.step(model.params());
    if (mask_out) *mask_out = mask;
    return stats;
}

namespace {

Batch row_view(const Batch& b, int64_t r) {
    Batch out;
    out.batch_size = 1;
    out.seq_len = b.seq_len;
    const auto base = static_cast<size_t>(r * b.seq_len);
    out.tokens.assign(b.tokens.begin() + base, b.tokens.begin() + base + b.seq_len);
    out.valid.assign(b.valid.begin() + base, b.valid.begin() + base + b.seq_len);
    out.doc_ids = {b.doc_ids[static_cast<size_t>(r)]};
    out.offsets = {b.offsets[static_cast<size_t>(r)]};
    return out;
}

// Per-window reference log-probs are constant across a run (the reference is
// frozen and windows are content-stable), so they are computed once on first
// sight and replayed for every later epoch.
class RefLogprobCache {
  public:
    explicit RefLogprobCache(const CausalLM& ref) : ref_(ref) {}

    Tensor get(const Batch& batch) {
        const int64_t B = batch.batch_size, L = batch.seq_len;
        Tensor out = Tensor::full({B, L}, std::numeric_limits<double>::quiet_NaN());
        std::vector<int64_t> missing;
        for (int64_t r = 0; r < B; ++r) {
            const auto it = rows_.find(key(batch, r));
            if (it == rows_.end()) {
                missing.push_back(r);
            } else {
                for (int64_t i = 0; i < L; ++i)
                    out.at(r, i) = it->second[static_cast<size_t>(i)];
            }
        }
        if (!missing.empty()) {
            Batch sub;
            sub.batch_size = static_cast<int64_t>(missing.size());
            sub.seq_len = L;
            for (int64_t r : missing) {
                const auto base = static_cast<size_t>(r * L);
                sub.tokens.insert(sub.tokens.end(), batch.tokens.begin() + base,
                                  batch.tokens.begin() + base + L);
                sub.valid.insert(sub.valid.end(), batch.valid.begin() + base,
                                 batch.valid.begin() + base + L);
                sub.doc_ids.push_back(batch.doc_ids[static_cast<size_t>(r)]);
                sub.offsets.push_back(batch.offsets[static_cast<size_t>(r)]);
            }
            const Tensor lp = ref_.token_logprobs(sub);
            for (size_t m = 0; m < missing.size(); ++m) {
                const int64_t r = missing[m];
                std::vector<double> row(static_cast<size_t>(L));
                for (int64_t i = 0; i < L; ++i) {
                    row[static_cast<size_t>(i)] = lp.at(static_cast<int64_t>(m), i);
                    out.at(r, i) = row[static_cast<size_t>(i)];
                }
                rows_.emplace(key(batch, r), std::move(row));
            }
        }
        return out;
    }

  private:
    static std::pair<int64_t, int64_t> key(const Batch& b, int64_t r) {
        return {b.doc_ids[static_cast<size_t>(r)], b.offsets[static_cast<size_t>(r)]};
    }
    const CausalLM& ref_;
    std::map<std::pair<int64_t, int64_t>, std::vector<double>> rows_;
};

}  // namespace

double dpsgd_step(CausalLM& model, const Batch& batch, const DPConfig& dp, Rng& noise_rng,
                  AdamW& opt) {
    // Per-sample mean-CE gradients, clipped as they stream through the
    // accumulator; losses recombine token-weighted into the batch mean CE.
    DpAccumulator acc(dp, model.params());
    double loss_weighted = 0.0;
    int64_t total_valid = 0;
    for (int64_t r = 0; r < batch.batch_size; ++r) {
        const Batch row = row_view(batch, r);
        const int64_t v = row.valid_count();
        if (v == 0) continue;
        Graph g;
        const int loss_node = model.ce_loss(g, row, CausalLM::uniform_weights(row));
        loss_weighted += g.scalar_value(loss_node) * static_cast<double>(v);
        total_valid += v;
        g.backward(loss_node);
        acc.add_sample(model.params());
    }
    if (total_valid == 0) return 0.0;
    const std::vector<Tensor> grad = acc.finalize(noise_rng);
    for (size_t i = 0; i < model.params().size(); ++i) model.params()[i].grad = grad[i];
    opt.step(model.params());
    return loss_weighted / static_cast<double>(total_valid);
}

namespace {

void check_no_contamination(const std::vector<TokenizedDoc>& aux,
                            const std::vector<TokenizedDoc>& members,
                            const std::string& aux_name) {
    std::set<int64_t> member_ids;
    for (const TokenizedDoc& d : members) member_ids.insert(d.doc_id);
    for (const TokenizedDoc& d : aux)
        if (member_ids.count(d.doc_id))
            throw data_error("contamination: " + aux_name + " shares doc_id " +
                             std::to_string(d.doc_id) + " with target_train");
}

RunArtifacts train_on_split(const TrainConfig& cfg, const std::vector<TokenizedDoc>& members,
                            const DatasetSplits& splits, const TrainHooks& hooks,
                            const CausalLM* init_model = nullptr) {
    cfg.validate();
    if (members.empty()) throw data_error("training split is empty");

    auto model = std::make_unique<CausalLM>(cfg.model);
    if (init_model) {
        if (init_model->config() != cfg.model)
            throw config_error("initial model config does not match the train config");
        *model = *init_model;
    } else if (!cfg.init_checkpoint.empty()) {
        load_checkpoint_into(*model, cfg.init_checkpoint);
    }

    std::unique_ptr<CausalLM> ref;
    uint64_t ref_hash = 0;
    if (cfg.method == Method::duolearn && cfg.score_mode == ScoreMode::reference) {
        ref = std::make_unique<CausalLM>(load_checkpoint(cfg.reference_checkpoint));
        if (ref->config().vocab_size != cfg.model.vocab_size)
            throw data_error("reference checkpoint vocab size " +
                             std::to_string(ref->config().vocab_size) +
                             " does not match model vocab " +
                             std::to_string(cfg.model.vocab_size));
        ref_hash = ref->param_hash();
    }

    std::unordered_set<int64_t> tracked_docs;
    if (cfg.log_selection) {
        for (const TokenizedDoc& d : members) {
            if (static_cast<int64_t>(tracked_docs.size()) >= cfg.selection_log_docs) break;
            tracked_docs.insert(d.doc_id);
        }
    }

    const int32_t pad = static_cast<int32_t>(cfg.model.vocab_size - 2);
    AdamW opt(cfg.optim);
    Rng noise_rng = Rng::stream(cfg.seed, 0x6e6f697365ull);  // dpsgd noise stream
    std::unique_ptr<RefLogprobCache> ref_cache;
    if (ref) ref_cache = std::make_unique<RefLogprobCache>(*ref);

    RunArtifacts art;
    art.state.seed = cfg.seed;
    art.best_val_ce = std::numeric_limits<double>::infinity();

    std::vector<TokenizedDoc> train_sample(
        members.begin(),
        members.begin() + std::min<size_t>(members.size(),
                                           static_cast<size_t>(cfg.eval_train_docs)));

    const auto run_eval = [&](int64_t step) {
        const double val_ce = mean_ce_over_split(*model, splits.validation, cfg.seq_len,
                                                 cfg.batch_size);
        EvalRecord val{step, "validation", val_ce, std::exp(val_ce)};
        art.state.evals.push_back(val);
        if (hooks.on_eval) hooks.on_eval(val);
        const double tr_ce =
            mean_ce_over_split(*model, train_sample, cfg.seq_len, cfg.batch_size);
        EvalRecord tr{step, "train_sample", tr_ce, std::exp(tr_ce)};
        art.state.evals.push_back(tr);
        if (hooks.on_eval) hooks.on_eval(tr);
        if (val_ce < art.best_val_ce) {
            art.best_val_ce = val_ce;
            art.best_step = step;
            art.best_model = std::make_unique<CausalLM>(*model);
        }
    };

    const auto run_step = [&](StepRecord& rec, const Batch& batch, int64_t epoch) {
        switch (cfg.method) {
            case Method::ft:
                rec.loss =
                    weighted_ce_step(*model, batch, CausalLM::uniform_weights(batch), opt);
                break;
            case Method::goldfish:
                rec.loss =
                    weighted_ce_step(*model, batch, goldfish_weights(batch, cfg.goldfish), opt);
                break;
            case Method::dpsgd:
                rec.loss = dpsgd_step(*model, batch, cfg.dp, noise_rng, opt);
                break;
            case Method::duolearn: {
                // Selection is recomputed from the current model every step.
                SelectionMask mask;
                const bool want_mask = cfg.log_selection && !tracked_docs.empty();
                Tensor lp_ref;
                if (ref_cache) lp_ref = ref_cache->get(batch);
                StepStats st = duolearn_step(*model, ref.get(), batch, cfg.selection,
                                             cfg.score_mode, cfg.log_grad_cosine, opt,
                                             want_mask ? &mask : nullptr,
                                             ref_cache ? &lp_ref : nullptr);
                rec.loss = st.loss;
                rec.n_hard = st.n_hard;
                rec.n_mem = st.n_mem;
                rec.mean_score = st.mean_score;
                rec.grad_cosine = st.grad_cosine;
                if (want_mask) {
                    for (int64_t r = 0; r < batch.batch_size; ++r) {
                        if (!tracked_docs.count(batch.doc_ids[static_cast<size_t>(r)]))
                            continue;
                        for (int64_t i = 0; i < batch.seq_len; ++i) {
                            if (!batch.valid_at(r, i)) continue;
                            SelectionLogRow row{epoch, art.state.step,
                                                batch.doc_ids[static_cast<size_t>(r)],
                                                batch.offsets[static_cast<size_t>(r)] + i,
                                                mask.at(r, i)};
                            art.state.selection_log.push_back(row);
                            if (hooks.on_selection) hooks.on_selection(row);
                        }
                    }
                }
                break;
            }
        }
    };

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches =
            make_batches(members, cfg.seq_len, cfg.batch_size, cfg.seed, epoch, pad);
        for (const Batch& batch : batches) {
            art.state.step += 1;
            StepRecord rec;
            rec.step = art.state.step;
            rec.epoch = epoch;
            try {
                run_step(rec, batch, epoch);
            } catch (const numeric_error& e) {
                throw numeric_error("at step " + std::to_string(rec.step) + ": " + e.what());
            }
            if (!std::isfinite(rec.loss))
                throw numeric_error("non-finite loss at step " + std::to_string(rec.step));
            art.state.steps.push_back(rec);
            if (hooks.on_step) hooks.on_step(rec);
        }
        if ((epoch + 1) % cfg.eval_every_epochs == 0 || epoch + 1 == cfg.epochs)
            run_eval(art.state.step);
        if (cfg.checkpoint_every_epochs > 0 && (epoch + 1) % cfg.checkpoint_every_epochs == 0 &&
            hooks.on_checkpoint)
            hooks.on_checkpoint(art.state.step, *model);
    }

    if (ref && ref->param_hash() != ref_hash)
        throw numeric_error("reference model changed during training");

    art.final_model = std::move(model);
    if (!art.best_model) art.best_model = std::make_unique<CausalLM>(*art.final_model);
    return art;
}

}  // namespace

RunArtifacts train(const TrainConfig& cfg, const DatasetSplits& splits,
                   const TrainHooks& hooks) {
    return train_on_split(cfg, splits.target_train, splits, hooks);
}

RunArtifacts train_reference(const TrainConfig& cfg, const DatasetSplits& splits,
                             const std::string& aux_role, const TrainHooks& hooks) {
    const std::vector<TokenizedDoc>* aux = nullptr;
    if (aux_role == "defender_aux")
        aux = &splits.defender_aux;
    else if (aux_role == "attacker_aux")
        aux = &splits.attacker_aux;
    else
        throw config_error("train_reference: aux_role must be defender_aux or attacker_aux");
    if (aux->empty()) throw data_error("auxiliary split '" + aux_role + "' is empty");
    check_no_contamination(*aux, splits.target_train, aux_role);

    TrainConfig ref_cfg = cfg;
    ref_cfg.method = Method::ft;  // reference modeling is standard CLM
    ref_cfg.reference_checkpoint.clear();
    return train_on_split(ref_cfg, *aux, splits, hooks);
}

std::pair<RunArtifacts, RunArtifacts> run_backdoor_recipe(const TrainConfig& warmup_cfg,
                                                          const TrainConfig& victim_cfg,
                                                          const DatasetSplits& splits,
                                                          const TrainHooks& warmup_hooks,
                                                          const TrainHooks& victim_hooks) {
    if (splits.attacker_aux.empty())
        throw data_error("backdoor recipe needs a nonempty attacker_aux split");
    if (warmup_cfg.model != victim_cfg.model)
        throw config_error("backdoor: warm-up and victim model configs must match");
    RunArtifacts warmup = train_reference(warmup_cfg, splits, "attacker_aux", warmup_hooks);
    RunArtifacts victim = train_on_split(victim_cfg, splits.target_train, splits, victim_hooks,
                                         warmup.best_model.get());
    return {std::move(warmup), std::move(victim)};
}

std::vector<EvalRecord> evaluate(const CausalLM& model, const DatasetSplits& splits,
                                 int64_t seq_len) {
    if (splits.validation.empty() || splits.non_member.empty())
        throw data_error("evaluate: validation and non_member splits must be nonempty");
    std::vector<EvalRecord> out;
    for (const char* role : {"validation", "non_member"}) {
        const auto& docs =
            std::string(role) == "validation" ? splits.validation : splits.non_member;
        const double ce = mean_ce_over_split(model, docs, seq_len);
        out.push_back({0, role, ce, std::exp(ce)});
    }
    return out;
}

}  // namespace duolearn
