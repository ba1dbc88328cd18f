// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "duolearn/checkpoint.h"
#include "duolearn/errors.h"
#include "duolearn/rng.h"
#include "duolearn/trainer.h"

using namespace duolearn;

namespace {

ModelConfig tiny_model(uint64_t seed = 5) {
    ModelConfig c;
    c.layers = 2;
    c.heads = 2;
    c.width = 32;
    c.ffn_width = 64;
    c.max_seq = 20;
    c.init_seed = seed;
    return c;
}

// Small synthetic corpus with equal-length docs (keeps per-row valid counts
// identical, which the dpsgd parity check relies on).
DatasetSplits tiny_splits(size_t n_docs = 120, uint64_t seed = 77) {
    Rng rng(seed);
    std::vector<std::string> texts;
    for (size_t i = 0; i < n_docs; ++i) {
        std::string t;
        for (int j = 0; j < 18; ++j) t.push_back(static_cast<char>('a' + rng.next_below(20)));
        texts.push_back(std::move(t));
    }
    auto docs = tokenize_docs(texts, Vocab::byte_vocab());
    return split_corpus(docs, {0.5, 0.2, 0.15, 0.1, 0.05}, 7);
}

TrainConfig tiny_train(Method m) {
    TrainConfig cfg;
    cfg.method = m;
    cfg.model = tiny_model();
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seq_len = 20;
    cfg.seed = 13;
    cfg.eval_train_docs = 16;
    cfg.optim.lr = 1e-3;
    return cfg;
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("method parity: disabled mechanisms reproduce the ft first step") {
    const DatasetSplits splits = tiny_splits();
    const Batch batch =
        make_batches(splits.target_train, 20, 8, /*seed=*/13, /*epoch=*/0, 256).front();

    const auto first_step = [&](Method m, auto&& configure) {
        CausalLM model(tiny_model());
        AdamW opt({.lr = 1e-3});
        double loss = 0.0;
        if (m == Method::ft)
            loss = weighted_ce_step(model, batch, CausalLM::uniform_weights(batch), opt);
        else
            loss = configure(model, opt);
        return std::pair<double, uint64_t>(loss, model.param_hash());
    };

    const auto [ft_loss, ft_hash] = first_step(Method::ft, [](CausalLM&, AdamW&) { return 0.0; });

    // goldfish with rate 0 is bit-identical to ft.
    const auto [gf_loss, gf_hash] = first_step(Method::goldfish, [&](CausalLM& m, AdamW& o) {
        return weighted_ce_step(m, batch, goldfish_weights(batch, {.mask_rate = 0.0, .key = 1, .context_width = 4}), o);
    });
    CHECK(gf_loss == ft_loss);
    CHECK(gf_hash == ft_hash);

    // duolearn with k_hard=1, k_mem=0, alpha=0 is bit-identical to ft. The
    // reference only calibrates scores, which the degenerate selection ignores.
    const auto [duo_loss, duo_hash] = first_step(Method::duolearn, [&](CausalLM& m, AdamW& o) {
        CausalLM ref(tiny_model(99));
        const SelectionConfig sel{.k_hard = 1.0, .k_mem = 0.0, .tau = 0.0, .alpha = 0.0};
        return duolearn_step(m, &ref, batch, sel, ScoreMode::reference, false, o).loss;
    });
    CHECK(duo_loss == ft_loss);
    CHECK(duo_hash == ft_hash);

    // dpsgd with a huge clip norm and zero noise matches up to summation order.
    CausalLM dp_model(tiny_model());
    AdamW dp_opt({.lr = 1e-3});
    Rng noise(1);
    const double dp_loss =
        dpsgd_step(dp_model, batch, {.clip_norm = 1e12, .noise_multiplier = 0.0, .microbatch = 1},
                   noise, dp_opt);
    CHECK(std::abs(dp_loss - ft_loss) <= 1e-12);
    CausalLM ft_model(tiny_model());
    AdamW ft_opt({.lr = 1e-3});
    weighted_ce_step(ft_model, batch, CausalLM::uniform_weights(batch), ft_opt);
    for (size_t p = 0; p < ft_model.params().size(); ++p) {
        const Tensor& a = ft_model.params()[p].value;
        const Tensor& b = dp_model.params()[p].value;
        for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(std::abs(a[i] - b[i]) <= 1e-9);
    }
}

TEST_CASE("full runs are bit-reproducible given identical config and corpus") {
    const DatasetSplits splits = tiny_splits();
    TrainConfig cfg = tiny_train(Method::ft);
    RunArtifacts a = train(cfg, splits);
    RunArtifacts b = train(cfg, splits);
    CHECK(a.final_model->param_hash() == b.final_model->param_hash());
    CHECK(a.best_model->param_hash() == b.best_model->param_hash());
    REQUIRE(a.state.steps.size() == b.state.steps.size());
    for (size_t i = 0; i < a.state.steps.size(); ++i)
        CHECK(a.state.steps[i].loss == b.state.steps[i].loss);

    TrainConfig other = cfg;
    other.seed = 14;
    RunArtifacts c = train(other, splits);
    CHECK(c.final_model->param_hash() != a.final_model->param_hash());
}

TEST_CASE("duolearn_step: defaults select ceil(0.6 V) hard tokens and report stats") {
    const DatasetSplits splits = tiny_splits();
    const Batch batch = make_batches(splits.target_train, 20, 8, 13, 0, 256).front();
    CausalLM model(tiny_model(1));
    CausalLM ref(tiny_model(2));
    AdamW opt({});
    SelectionMask mask;
    const StepStats st =
        duolearn_step(model, &ref, batch, SelectionConfig{}, ScoreMode::reference, false, opt,
                      &mask);
    const int64_t v = batch.valid_count();
    CHECK(st.n_hard == static_cast<int64_t>(std::ceil(0.6 * static_cast<double>(v))));
    CHECK(st.n_mem <= static_cast<int64_t>(std::ceil(0.2 * static_cast<double>(v))));
    CHECK(std::isfinite(st.mean_score));
}

TEST_CASE("duolearn_step loss equals the dual loss recomputed post-hoc") {
    const DatasetSplits splits = tiny_splits();
    const Batch batch = make_batches(splits.target_train, 20, 8, 13, 0, 256).front();
    CausalLM model(tiny_model(1));
    const CausalLM snapshot = model;  // pre-step weights
    CausalLM ref(tiny_model(2));
    AdamW opt({});
    SelectionMask mask;
    const SelectionConfig sel{.k_hard = 0.6, .k_mem = 0.2, .tau = 0.5, .alpha = 0.8};
    const StepStats st =
        duolearn_step(model, &ref, batch, sel, ScoreMode::reference, false, opt, &mask);
    REQUIRE(mask.n_mem > 0);

    const auto uniform_over = [&](CellLabel which, int64_t count) {
        Tensor w = Tensor::zeros({batch.batch_size, batch.seq_len});
        for (int64_t b = 0; b < batch.batch_size; ++b)
            for (int64_t i = 0; i < batch.seq_len; ++i)
                if (mask.at(b, i) == which) w.at(b, i) = 1.0 / static_cast<double>(count);
        return w;
    };
    Graph g1, g2;
    const double ce_hard =
        g1.scalar_value(snapshot.ce_loss(g1, batch, uniform_over(CellLabel::hard, mask.n_hard)));
    const double ce_mem = g2.scalar_value(
        snapshot.ce_loss(g2, batch, uniform_over(CellLabel::memorized, mask.n_mem)));
    CHECK(std::abs(st.loss - (ce_hard - sel.alpha * ce_mem)) <= 1e-10);
}

TEST_CASE("duolearn_step with all scores above tau degenerates to learning-only") {
    const DatasetSplits splits = tiny_splits();
    const Batch batch = make_batches(splits.target_train, 20, 8, 13, 0, 256).front();
    CausalLM model(tiny_model(1));
    CausalLM ref(tiny_model(2));
    AdamW opt({});
    SelectionMask mask;
    const SelectionConfig sel{.k_hard = 0.6, .k_mem = 0.2, .tau = -1e9, .alpha = 0.8};
    duolearn_step(model, &ref, batch, sel, ScoreMode::reference, false, opt, &mask);
    CHECK(mask.n_mem == 0);
}

TEST_CASE("the reference model is never updated during duolearn training") {
    const DatasetSplits splits = tiny_splits();
    CausalLM ref(tiny_model(3));
    const std::string ref_path = tmp_path("duolearn_ref_frozen.dlc");
    save_checkpoint(ref, ref_path);
    const uint64_t before = ref.param_hash();

    TrainConfig cfg = tiny_train(Method::duolearn);
    cfg.reference_checkpoint = ref_path;
    RunArtifacts art = train(cfg, splits);
    CHECK(art.state.step > 0);
    CHECK(load_checkpoint(ref_path).param_hash() == before);
    std::remove(ref_path.c_str());
}

TEST_CASE("duolearn without a reference checkpoint is a config error") {
    TrainConfig cfg = tiny_train(Method::duolearn);
    cfg.reference_checkpoint.clear();
    CHECK_THROWS_AS(cfg.validate(), config_error);
    // train_loss_only mode needs no reference.
    cfg.score_mode = ScoreMode::train_loss_only;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("train_reference refuses contaminated auxiliary data") {
    DatasetSplits splits = tiny_splits();
    splits.defender_aux.push_back(splits.target_train.front());  // contamination
    TrainConfig cfg = tiny_train(Method::ft);
    CHECK_THROWS_AS(train_reference(cfg, splits, "defender_aux"), data_error);
}

TEST_CASE("train_reference refuses an empty aux split and learns on a real one") {
    DatasetSplits splits = tiny_splits(160);
    TrainConfig cfg = tiny_train(Method::ft);
    cfg.epochs = 4;
    {
        DatasetSplits empty_aux = splits;
        empty_aux.defender_aux.clear();
        CHECK_THROWS_AS(train_reference(cfg, empty_aux, "defender_aux"), data_error);
    }
    const CausalLM untrained(cfg.model);
    RunArtifacts art = train_reference(cfg, splits, "defender_aux");
    const double before = mean_ce_over_split(untrained, splits.defender_aux, cfg.seq_len);
    const double after = mean_ce_over_split(*art.best_model, splits.defender_aux, cfg.seq_len);
    CHECK(after < before);
}

TEST_CASE("evaluate reports PPL = exp(CE) and never mutates parameters") {
    const DatasetSplits splits = tiny_splits();
    CausalLM model(tiny_model(4));
    const uint64_t before = model.param_hash();
    const auto records = evaluate(model, splits, 20);
    REQUIRE(records.size() == 2);
    std::set<std::string> names;
    for (const EvalRecord& r : records) {
        names.insert(r.split);
        CHECK(std::abs(r.ppl - std::exp(r.ce)) <= 1e-12 * r.ppl);
    }
    CHECK(names == std::set<std::string>{"validation", "non_member"});
    CHECK(model.param_hash() == before);
}

TEST_CASE("best-model selection tracks the minimum validation CE") {
    const DatasetSplits splits = tiny_splits();
    TrainConfig cfg = tiny_train(Method::ft);
    cfg.epochs = 3;
    RunArtifacts art = train(cfg, splits);
    double min_val = std::numeric_limits<double>::infinity();
    for (const EvalRecord& e : art.state.evals)
        if (e.split == "validation") min_val = std::min(min_val, e.ce);
    CHECK(art.best_val_ce == min_val);
    const CausalLM untrained(cfg.model);
    CHECK(perplexity(*art.best_model, splits.validation, cfg.seq_len) <
          perplexity(untrained, splits.validation, cfg.seq_len));
}

TEST_CASE("training aborts with the step index on a non-finite loss") {
    const DatasetSplits splits = tiny_splits();
    TrainConfig cfg = tiny_train(Method::ft);
    // Poisoned starting weights surface as a NaN loss on the first step.
    CausalLM poisoned(cfg.model);
    poisoned.param("final_ln.gamma").value[0] = std::nan("");
    const std::string path = tmp_path("duolearn_poisoned.dlc");
    save_checkpoint(poisoned, path);
    cfg.init_checkpoint = path;
    try {
        train(cfg, splits);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("goldfish mask stays fixed across epochs within a run") {
    const DatasetSplits splits = tiny_splits();
    const GoldfishConfig gcfg{.mask_rate = 0.25, .key = 3, .context_width = 4};
    // The same window must mask identically in any epoch's batch order.
    const auto epoch0 = make_batches(splits.target_train, 20, 8, 13, 0, 256);
    const auto epoch1 = make_batches(splits.target_train, 20, 8, 13, 1, 256);
    std::map<std::pair<int64_t, int64_t>, bool> seen;
    for (const Batch& b : epoch0)
        for (int64_t r = 0; r < b.batch_size; ++r)
            for (int64_t i = 1; i < b.seq_len; ++i)
                if (b.valid_at(r, i))
                    seen[{b.doc_ids[static_cast<size_t>(r)],
                          b.offsets[static_cast<size_t>(r)] + i}] =
                        goldfish_masks_cell(b, r, i, gcfg);
    for (const Batch& b : epoch1)
        for (int64_t r = 0; r < b.batch_size; ++r)
            for (int64_t i = 1; i < b.seq_len; ++i)
                if (b.valid_at(r, i))
                    REQUIRE(seen.at({b.doc_ids[static_cast<size_t>(r)],
                                     b.offsets[static_cast<size_t>(r)] + i}) ==
                            goldfish_masks_cell(b, r, i, gcfg));
}

TEST_CASE("streaming dp accumulator matches dp_sanitize exactly") {
    const DatasetSplits splits = tiny_splits();
    const Batch batch = make_batches(splits.target_train, 20, 4, 13, 0, 256).front();
    CausalLM model(tiny_model(6));
    const DPConfig cfg{.clip_norm = 0.05, .noise_multiplier = 1.0, .microbatch = 1};

    std::vector<std::vector<Tensor>> per_sample;
    DpAccumulator acc(cfg, model.params());
    for (int64_t r = 0; r < batch.batch_size; ++r) {
        Batch row;
        row.batch_size = 1;
        row.seq_len = batch.seq_len;
        const auto base = static_cast<size_t>(r * batch.seq_len);
        row.tokens.assign(batch.tokens.begin() + base, batch.tokens.begin() + base + batch.seq_len);
        row.valid.assign(batch.valid.begin() + base, batch.valid.begin() + base + batch.seq_len);
        row.doc_ids = {batch.doc_ids[static_cast<size_t>(r)]};
        row.offsets = {batch.offsets[static_cast<size_t>(r)]};
        Graph g;
        const int loss = model.ce_loss(g, row, CausalLM::uniform_weights(row));
        g.backward(loss);
        std::vector<Tensor> grads;
        for (const Param& p : model.params()) grads.push_back(p.grad);
        per_sample.push_back(grads);
        acc.add_sample(model.params());
    }
    Rng r1(42), r2(42);
    std::vector<double> norms;
    const auto expect = dp_sanitize(per_sample, cfg, r1, &norms);
    const auto got = acc.finalize(r2);
    for (double n : norms) CHECK(n <= cfg.clip_norm + 1e-12);
    REQUIRE(expect.size() == got.size());
    for (size_t p = 0; p < expect.size(); ++p)
        for (int64_t i = 0; i < expect[p].numel(); ++i) REQUIRE(expect[p][i] == got[p][i]);
}

TEST_CASE("selection log has one entry per epoch per tracked position") {
    const DatasetSplits splits = tiny_splits();
    CausalLM ref(tiny_model(3));
    const std::string ref_path = tmp_path("duolearn_ref_log.dlc");
    save_checkpoint(ref, ref_path);
    TrainConfig cfg = tiny_train(Method::duolearn);
    cfg.reference_checkpoint = ref_path;
    cfg.log_selection = true;
    cfg.selection_log_docs = 4;
    cfg.epochs = 3;
    RunArtifacts art = train(cfg, splits);
    std::map<std::pair<int64_t, int64_t>, std::set<int64_t>> epochs_seen;
    for (const SelectionLogRow& r : art.state.selection_log)
        epochs_seen[{r.doc_id, r.pos}].insert(r.epoch);
    CHECK(!epochs_seen.empty());
    for (const auto& [key, epochs] : epochs_seen) CHECK(epochs.size() == 3);
    std::remove(ref_path.c_str());
}

TEST_CASE("backdoor recipe: warm-up model is chance-level before victim training") {
    DatasetSplits splits = tiny_splits(200);
    TrainConfig warmup = tiny_train(Method::ft);
    warmup.epochs = 3;
    TrainConfig victim = tiny_train(Method::ft);
    victim.epochs = 2;
    auto [warm, vict] = run_backdoor_recipe(warmup, victim, splits);
    CHECK(vict.state.step > 0);

    // The warm-up model never saw members: its loss signal cannot separate
    // target_train from non_member beyond small-sample noise.
    std::vector<double> ms, ns;
    for (const TokenizedDoc& d : splits.target_train)
        ms.push_back(-mean_ce_over_split(*warm.best_model, {d}, 20));
    for (const TokenizedDoc& d : splits.non_member)
        ns.push_back(-mean_ce_over_split(*warm.best_model, {d}, 20));
    const double auc = [&] {
        double num = 0.0;
        for (double m : ms)
            for (double n : ns) num += m > n ? 1.0 : (m == n ? 0.5 : 0.0);
        return num / (static_cast<double>(ms.size()) * static_cast<double>(ns.size()));
    }();
    CHECK(auc > 0.35);
    CHECK(auc < 0.65);
}

TEST_CASE("backdoor recipe requires attacker_aux and matching model configs") {
    DatasetSplits splits = tiny_splits();
    TrainConfig warmup = tiny_train(Method::ft);
    TrainConfig victim = tiny_train(Method::ft);
    {
        DatasetSplits no_aux = splits;
        no_aux.attacker_aux.clear();
        CHECK_THROWS_AS(run_backdoor_recipe(warmup, victim, no_aux), data_error);
    }
    victim.model.width = 64;
    victim.model.heads = 2;
    CHECK_THROWS_AS(run_backdoor_recipe(warmup, victim, splits), config_error);
}
