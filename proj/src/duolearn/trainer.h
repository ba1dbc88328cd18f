// SPDX-License-Identifier: Apache-2.0
//
// Training loops for the four methods (ft, goldfish, dpsgd, duolearn),
// reference-model training, evaluation scheduling, and the privacy-backdoor
// warm-up recipe. All methods share identical batch order given identical
// seeds, and full runs are bit-reproducible from (config, corpus, seeds).
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "duolearn/adamw.h"
#include "duolearn/corpus.h"
#include "duolearn/dpsgd.h"
#include "duolearn/goldfish.h"
#include "duolearn/model.h"
#include "duolearn/selection.h"

namespace duolearn {

enum class Method { ft, goldfish, dpsgd, duolearn };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

// Ablation switch: score against a reference model (the method proper) or
// against the training model's own loss only.
enum class ScoreMode { reference, train_loss_only };

struct TrainConfig {
    Method method = Method::ft;
    ModelConfig model;
    AdamWConfig optim;
    int64_t epochs = 20;
    int64_t batch_size = 32;
    int64_t seq_len = 128;
    uint64_t seed = 1;
    std::string init_checkpoint;  // continue from here when set (backdoor recipe)

    // duolearn block
    SelectionConfig selection;
    ScoreMode score_mode = ScoreMode::reference;
    std::string reference_checkpoint;
    // goldfish block
    GoldfishConfig goldfish;
    // dpsgd block
    DPConfig dp;

    int64_t eval_every_epochs = 1;
    int64_t checkpoint_every_epochs = 0;  // 0: no periodic checkpoints
    int64_t eval_train_docs = 1024;       // member subsample for gap tracking
    bool log_grad_cosine = false;
    bool log_selection = false;
    int64_t selection_log_docs = 32;

    void validate() const;
};

struct StepRecord {
    int64_t step = 0;
    int64_t epoch = 0;
    double loss = 0.0;
    int64_t n_hard = 0;
    int64_t n_mem = 0;
    double mean_score = 0.0;
    std::optional<double> grad_cosine;
};

struct EvalRecord {
    int64_t step = 0;
    std::string split;
    double ce = 0.0;
    double ppl = 0.0;  // always exp(ce)
};

struct SelectionLogRow {
    int64_t epoch = 0;
    int64_t step = 0;
    int64_t doc_id = 0;
    int64_t pos = 0;  // absolute position within the document
    CellLabel label = CellLabel::neutral;
};

struct RunState {
    uint64_t seed = 0;
    int64_t step = 0;
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;
    std::vector<SelectionLogRow> selection_log;
};

struct RunArtifacts {
    std::unique_ptr<CausalLM> final_model;
    std::unique_ptr<CausalLM> best_model;
    int64_t best_step = 0;
    double best_val_ce = 0.0;
    RunState state;
};

// Streaming hooks; both optional. The record sinks fire as records are
// produced, the checkpoint sink fires on the periodic cadence.
struct TrainHooks {
    std::function<void(const StepRecord&)> on_step;
    std::function<void(const EvalRecord&)> on_eval;
    std::function<void(const SelectionLogRow&)> on_selection;
    std::function<void(int64_t step, const CausalLM&)> on_checkpoint;
};

struct StepStats {
    double loss = 0.0;
    int64_t n_hard = 0;
    int64_t n_mem = 0;
    double mean_score = 0.0;
    std::optional<double> grad_cosine;
};

// One weighted-CE optimizer update (ft and goldfish paths).
double weighted_ce_step(CausalLM& model, const Batch& batch, const Tensor& weights, AdamW& opt);

// One duolearn update: score against the frozen reference, select, and take a
// single backward pass over the dual-weighted CE. `ref` may be null only in
// train_loss_only mode; `mask_out` receives the step's selection when given.
// `lp_ref_precomputed` skips the reference forward when the caller already
// holds the batch's reference log-probs (they are constant for a frozen
// reference, so the training loop caches them per window).
StepStats duolearn_step(CausalLM& model, const CausalLM* ref, const Batch& batch,
                        const SelectionConfig& sel, ScoreMode mode, bool want_cosine,
                        AdamW& opt, SelectionMask* mask_out = nullptr,
                        const Tensor* lp_ref_precomputed = nullptr);

// One DPSGD update: per-sample gradients via microbatch-of-1 re-execution,
// clipped and noised per DPConfig. Returns the batch mean CE recombined from
// the per-sample losses.
double dpsgd_step(CausalLM& model, const Batch& batch, const DPConfig& dp, Rng& noise_rng,
                  AdamW& opt);

// Trains on `splits.target_train` with the configured method.
RunArtifacts train(const TrainConfig& cfg, const DatasetSplits& splits,
                   const TrainHooks& hooks = {});

// Standard CLM training of a reference model on an auxiliary role
// ("defender_aux" or "attacker_aux"); refuses contaminated aux data.
RunArtifacts train_reference(const TrainConfig& cfg, const DatasetSplits& splits,
                             const std::string& aux_role = "defender_aux",
                             const TrainHooks& hooks = {});

// Privacy-backdoor recipe: warm-up CLM training on attacker_aux, then the
// victim continues from the warm-up weights on target_train under
// `victim_cfg.method`. Returns (warm-up artifacts, victim artifacts); the
// warm-up checkpoint doubles as the attack reference.
std::pair<RunArtifacts, RunArtifacts> run_backdoor_recipe(const TrainConfig& warmup_cfg,
                                                          const TrainConfig& victim_cfg,
                                                          const DatasetSplits& splits,
                                                          const TrainHooks& warmup_hooks = {},
                                                          const TrainHooks& victim_hooks = {});

// CE and perplexity on the validation and non_member splits.
std::vector<EvalRecord> evaluate(const CausalLM& model, const DatasetSplits& splits,
                                 int64_t seq_len);

}  // namespace duolearn
