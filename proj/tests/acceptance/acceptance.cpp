// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.
//
//   --phase fast   A1-A3, A7, A8: gradient/attack-math/selection oracles,
//                  determinism and DP mechanism properties (about a minute).
//   --phase desk   A4-A6, A9: the full desk-scale privacy/utility
//                  experiments. Training artifacts are cached under --cache,
//                  so a re-run only re-evaluates the criteria.
//
// The desk experiments train eleven models; with the default corpus this is
// hours of CPU time on a small machine, budgeted to fit each criterion's
// cap on 8 cores.
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "duolearn/analysis.h"
#include "duolearn/attack_suite.h"
#include "duolearn/checkpoint.h"
#include "duolearn/errors.h"
#include "duolearn/gradcheck.h"
#include "duolearn/metrics.h"
#include "duolearn/run_dir.h"
#include "duolearn/signals.h"
#include "duolearn/textgen.h"
#include "duolearn/trainer.h"
#include "support/inflate_ref.h"
#include "support/oracles.h"
#include "support/zlib_cases.h"

using namespace duolearn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void criterion(const std::string& id, bool pass, const std::string& detail,
               Clock::time_point started) {
    const double mins =
        std::chrono::duration<double>(Clock::now() - started).count() / 60.0;
    std::printf("%s %s  [%.1f min]  %s\n", id.c_str(), pass ? "PASS" : "FAIL", mins,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) g_failures += 1;
}

std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------
// A1: dual-purpose loss gradient vs central finite differences
// ---------------------------------------------------------------------------

void run_a1() {
    const auto t0 = Clock::now();
    ModelConfig mc;
    mc.vocab_size = 258;
    mc.layers = 2;
    mc.heads = 2;
    mc.width = 16;
    mc.ffn_width = 32;
    mc.max_seq = 16;
    mc.init_seed = 12;
    CausalLM model(mc);
    ModelConfig rc = mc;
    rc.init_seed = 21;
    const CausalLM ref(rc);

    Rng rng(5);
    std::vector<std::string> texts;
    for (int i = 0; i < 6; ++i) {
        std::string t;
        for (int j = 0; j < 14; ++j) t.push_back(static_cast<char>('a' + rng.next_below(26)));
        texts.push_back(t);
    }
    const auto docs = tokenize_docs(texts, Vocab::byte_vocab());
    const Batch batch = make_batches(docs, 16, 6, 0, 0, 256).front();

    // Selection fixed at the evaluation point; the dual loss differentiates
    // the weighted CE given those sets, exactly what a training step does.
    const Tensor lp_train = model.token_logprobs(batch);
    const Tensor lp_ref = ref.token_logprobs(batch);
    const SelectionConfig sel{.k_hard = 0.6, .k_mem = 0.2, .tau = 0.5, .alpha = 0.8};
    const SelectionMask mask =
        select_tokens(score_tokens(lp_train, lp_ref, batch), sel, batch);
    const Tensor weights = selection_weights(mask, sel.alpha);

    auto loss = [&](bool with_grad) {
        Graph g;
        const int node = model.ce_loss(g, batch, weights);
        if (with_grad) g.backward(node);
        return g.scalar_value(node);
    };
    const GradCheckReport rep = grad_check(loss, model.params(), 1e-5, 200, 99);
    const bool pass = rep.coords_checked >= 200 && rep.max_rel_err < 1e-4 &&
                      mask.n_hard > 0 && mask.n_mem > 0;
    criterion("A1", pass,
              fmt("dual-loss gradcheck: max_rel_err=%.3g over %lld coords (n_hard=%lld "
                  "n_mem=%lld)",
                  rep.max_rel_err, static_cast<long long>(rep.coords_checked),
                  static_cast<long long>(mask.n_hard), static_cast<long long>(mask.n_mem)),
              t0);
}

// ---------------------------------------------------------------------------
// A2: attack-math oracles
// ---------------------------------------------------------------------------

void run_a2() {
    const auto t0 = Clock::now();
    bool pass = true;
    std::string detail;

    // roc_auc vs the O(n^2) pairwise oracle, ties included.
    Rng rng(7);
    int auc_fail = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const size_t nm = 1 + rng.next_below(50);
        const size_t nn = 1 + rng.next_below(50);
        std::vector<double> m(nm), n(nn);
        const bool coarse = trial % 2 == 0;
        for (auto& x : m)
            x = coarse ? static_cast<double>(rng.next_below(10)) : rng.next_gaussian();
        for (auto& x : n)
            x = coarse ? static_cast<double>(rng.next_below(10)) : rng.next_gaussian();
        if (roc_auc(m, n) != oracles::pairwise_auc(m, n)) auc_fail += 1;
    }
    pass &= auc_fail == 0;
    detail += fmt("auc_oracle_mismatches=%d/500", auc_fail);

    // Model-based identities.
    ModelConfig mc;
    mc.layers = 2;
    mc.heads = 2;
    mc.width = 32;
    mc.ffn_width = 64;
    mc.max_seq = 24;
    mc.init_seed = 3;
    const CausalLM model(mc);
    Rng drng(17);
    std::vector<std::string> texts;
    for (int i = 0; i < 8; ++i) {
        std::string t;
        for (int j = 0; j < 20; ++j) t.push_back(static_cast<char>('a' + drng.next_below(26)));
        texts.push_back(t);
    }
    const auto docs = tokenize_docs(texts, Vocab::byte_vocab());
    double mink_err = 0.0, zlib_err = 0.0;
    for (const auto& d : docs) {
        mink_err = std::max(mink_err,
                            std::abs(signal_mink(model, d, 1.0, 24) - signal_loss(model, d, 24)));
        zlib_err = std::max(
            zlib_err, std::abs(signal_zlib(model, d, 24) -
                               signal_loss(model, d, 24) /
                                   static_cast<double>(zlib_size(d.source_bytes, 6))));
    }
    pass &= mink_err < 1e-9 && zlib_err < 1e-12;
    detail += fmt(" mink_k1_err=%.2g zlib_identity_err=%.2g", mink_err, zlib_err);

    // Reference-compressor pinning, byte-for-byte, plus the independent
    // hand-written inflate as a second route.
    const auto cases = testsupport::zlib_cases();
    int zlib_fail = 0;
    for (size_t i = 0; i < cases.size(); ++i) {
        const std::string stream = zlib_compress(cases[i], 6);
        if (static_cast<int64_t>(stream.size()) != testsupport::zlib_frozen_sizes()[i] ||
            fnv1a64(stream.data(), stream.size()) != testsupport::zlib_frozen_hashes()[i] ||
            testsupport::inflate_zlib(stream) != cases[i])
            zlib_fail += 1;
    }
    pass &= zlib_fail == 0;
    detail += fmt(" zlib_case_failures=%d/50", zlib_fail);
    criterion("A2", pass, detail, t0);
}

// ---------------------------------------------------------------------------
// A3: selection invariant suite on 10^4 random score matrices
// ---------------------------------------------------------------------------

void run_a3() {
    const auto t0 = Clock::now();
    Rng rng(31);
    int fails = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int64_t rows = 2 + static_cast<int64_t>(rng.next_below(4));
        const int64_t cols = 8 + static_cast<int64_t>(rng.next_below(24));
        Batch b;
        b.batch_size = rows;
        b.seq_len = cols;
        b.tokens.assign(static_cast<size_t>(rows * cols), 0);
        b.valid.assign(static_cast<size_t>(rows * cols), 0);
        b.doc_ids.assign(static_cast<size_t>(rows), 0);
        b.offsets.assign(static_cast<size_t>(rows), 0);
        Tensor scores = Tensor::full({rows, cols}, std::numeric_limits<double>::quiet_NaN());
        const bool tie_free = trial % 2 == 0;
        std::vector<oracles::ScoredCell> cells;
        for (int64_t r = 0; r < rows; ++r) {
            const int64_t len = 2 + static_cast<int64_t>(
                                        rng.next_below(static_cast<uint64_t>(cols - 1)));
            for (int64_t i = 1; i < len; ++i) {
                b.valid[static_cast<size_t>(r * cols + i)] = 1;
                const double s =
                    tie_free ? rng.next_gaussian()
                             : (static_cast<double>(rng.next_below(13)) - 6.0) / 2.0;
                scores.at(r, i) = s;
                cells.push_back({s, r, i});
            }
        }
        const int64_t v = static_cast<int64_t>(cells.size());
        if (v == 0) continue;
        SelectionConfig cfg;
        cfg.k_hard = 0.05 + 0.01 * static_cast<double>(rng.next_below(80));
        cfg.k_mem = (1.0 - cfg.k_hard) * 0.01 * static_cast<double>(rng.next_below(95));
        cfg.tau = (static_cast<double>(rng.next_below(9)) - 4.0) / 2.0;
        cfg.alpha = 0.8;
        const SelectionMask mask = select_tokens(scores, cfg, b);

        // Disjointness + counts + tau filter.
        int64_t hard = 0, mem = 0;
        bool ok = true;
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t i = 0; i < cols; ++i) {
                const CellLabel l = mask.at(r, i);
                if (l == CellLabel::hard) hard += 1;
                if (l == CellLabel::memorized) {
                    mem += 1;
                    ok &= scores.at(r, i) <= cfg.tau;
                }
            }
        ok &= hard == mask.n_hard && mem == mask.n_mem;
        ok &= mask.n_hard ==
              std::min<int64_t>(
                  static_cast<int64_t>(std::ceil(cfg.k_hard * static_cast<double>(v))), v);
        ok &= mask.n_mem <=
              static_cast<int64_t>(std::ceil(cfg.k_mem * static_cast<double>(v)));

        // Full-sort oracle agreement (set membership) for tie-free draws.
        if (tie_free) {
            const auto expect = oracles::sort_partition(cells, cfg.k_hard, cfg.k_mem, cfg.tau);
            for (const auto& [r, i] : expect.hard) ok &= mask.at(r, i) == CellLabel::hard;
            for (const auto& [r, i] : expect.memorized)
                ok &= mask.at(r, i) == CellLabel::memorized;
            ok &= static_cast<int64_t>(expect.hard.size()) == mask.n_hard;
            ok &= static_cast<int64_t>(expect.memorized.size()) == mask.n_mem;
        }

        // tau monotonicity.
        SelectionConfig higher = cfg;
        higher.tau = cfg.tau + 0.75;
        ok &= select_tokens(scores, higher, b).n_mem >= mask.n_mem;

        // Hard-set invariance under constant shifts.
        Tensor shifted = scores;
        for (int64_t i = 0; i < shifted.numel(); ++i)
            if (!std::isnan(shifted[i])) shifted[i] += 2.5;
        const SelectionMask m2 = select_tokens(shifted, cfg, b);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t i = 0; i < cols; ++i)
                ok &= (mask.at(r, i) == CellLabel::hard) == (m2.at(r, i) == CellLabel::hard);

        if (!ok) fails += 1;
    }
    criterion("A3", fails == 0, fmt("invariant failures=%d/10000 matrices", fails), t0);
}

// ---------------------------------------------------------------------------
// Desk lab: shared corpus, configs, cached runs and attacks
// ---------------------------------------------------------------------------

struct RunSummary {
    double best_val_ce = 0.0;
    double final_val_ce = 0.0;
    double final_train_ce = 0.0;
    double val_ce_at_75pct = 0.0;
    double train_ce_at_75pct = 0.0;
    std::string best_ckpt;
    std::string final_ckpt;
};

class DeskLab {
  public:
    DeskLab(std::string cache_dir) : cache_(std::move(cache_dir)) {
        fs::create_directories(cache_ + "/attacks");
        const TextGenConfig tg;  // 6000 docs, seed 2024
        const auto texts = generate_corpus(tg);
        corpus_hash_ = corpus_hash(texts);
        vocab_ = Vocab::byte_vocab();
        docs_ = tokenize_docs(texts, vocab_);
        splits_ = split_corpus(docs_, {0.5, 0.2, 0.15, 0.1, 0.05}, 7);

        // Disjoint pretraining slice: every experiment model fine-tunes from
        // this shared base, mirroring the pretrained-then-fine-tuned setting
        // the membership experiments assume.
        TextGenConfig ptg;
        ptg.n_docs = 12000;
        ptg.seed = 3030;
        const auto ptexts = generate_corpus(ptg);
        pretrain_docs_ = tokenize_docs(ptexts, vocab_);
        pretrain_splits_ = split_corpus(pretrain_docs_, {0.9, 0.0, 0.0, 0.0, 0.1}, 3);
    }

    TrainConfig base_config() const {
        TrainConfig cfg;
        cfg.model.vocab_size = 258;
        cfg.model.layers = 4;
        cfg.model.heads = 4;
        cfg.model.width = 128;
        cfg.model.ffn_width = 512;
        cfg.model.max_seq = 60;
        cfg.model.init_seed = 42;
        cfg.seq_len = 60;
        cfg.batch_size = 32;
        cfg.epochs = 20;
        cfg.seed = 11;
        cfg.optim.lr = 1.5e-3;
        cfg.optim.beta2 = 0.99;
        cfg.eval_train_docs = 512;
        return cfg;
    }

    // Trains (or reuses) the shared pretrained base and returns its path.
    std::string pretrained_base() {
        TrainConfig cfg = base_config();
        cfg.epochs = 3;
        cfg.seed = 97;
        const std::string dir = cache_ + "/base";
        const std::string stamp = dir + "/meta.json";
        const uint64_t fp = config_fingerprint(cfg, "pretrain");
        if (!fs::exists(stamp) || read_stamp(stamp) != fp) {
            fs::remove_all(dir);
            fs::create_directories(dir);
            RunLogger logger(dir + "/log");
            const auto started = Clock::now();
            RunArtifacts art = train(cfg, pretrain_splits_, logger.hooks());
            save_checkpoint(*art.best_model, dir + "/best.dlc",
                            {art.best_step, "ft", cfg.seed});
            write_stamp(stamp, fp);
            std::printf("  [lab] pretrained base (val_ce=%.3f, %.1f min)\n", art.best_val_ce,
                        std::chrono::duration<double>(Clock::now() - started).count() / 60.0);
            std::fflush(stdout);
        }
        return dir + "/best.dlc";
    }

    const DatasetSplits& splits() const { return splits_; }

    // Trains (or reuses) a run; summaries come from the streamed log.
    RunSummary run(const std::string& name, const TrainConfig& cfg,
                   const std::string& aux_role = "") {
        const std::string dir = cache_ + "/" + name;
        const std::string stamp = dir + "/meta.json";
        const uint64_t fp = config_fingerprint(cfg, aux_role);
        if (!fs::exists(stamp) || read_stamp(stamp) != fp) {
            fs::remove_all(dir);
            fs::create_directories(dir);
            RunLogger logger(dir + "/log");
            const auto started = Clock::now();
            RunArtifacts art = aux_role.empty()
                                   ? train(cfg, splits_, logger.hooks())
                                   : train_reference(cfg, splits_, aux_role, logger.hooks());
            save_checkpoint(*art.best_model, dir + "/best.dlc",
                            {art.best_step, to_string(cfg.method), cfg.seed});
            save_checkpoint(*art.final_model, dir + "/final.dlc",
                            {art.state.step, to_string(cfg.method), cfg.seed});
            write_stamp(stamp, fp);
            std::printf("  [lab] trained %-12s (%lld steps, %.1f min)\n", name.c_str(),
                        static_cast<long long>(art.state.step),
                        std::chrono::duration<double>(Clock::now() - started).count() / 60.0);
            std::fflush(stdout);
        }
        return summarize(dir);
    }

    // Runs (or reuses) an attack of `target_run` scored against `ref_run`.
    AttackResult attack(const std::string& name, const std::string& target_ckpt,
                        const std::string& ref_ckpt) {
        const std::string file = cache_ + "/attacks/" + name + ".json";
        if (fs::exists(file)) return read_attack_result(file);
        const CausalLM target = load_checkpoint(target_ckpt);
        const CausalLM ref = load_checkpoint(ref_ckpt);
        AttackConfig acfg;
        acfg.seq_len = 60;
        const auto started = Clock::now();
        const AttackResult res =
            run_attack_suite(target, ref, splits_.target_train, splits_.non_member, acfg);
        write_attack_result(res, file);
        std::printf("  [lab] attack %-18s auc_ref=%.3f (%.1f min)\n", name.c_str(),
                    res.auc.at("ref"),
                    std::chrono::duration<double>(Clock::now() - started).count() / 60.0);
        std::fflush(stdout);
        return res;
    }

    uint64_t corpus_hash_value() const { return corpus_hash_; }

  private:
    uint64_t config_fingerprint(const TrainConfig& cfg, const std::string& aux_role) const {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "%s|%lld|%lld|%lld|%llu|%.9g|%lld|%lld|%lld|%lld|%llu|%.9g|%.9g|%.9g|%.9g|"
                      "%d|%.9g|%llu|%lld|%.9g|%.9g|%s|%s|%llx",
                      to_string(cfg.method).c_str(), static_cast<long long>(cfg.epochs),
                      static_cast<long long>(cfg.batch_size),
                      static_cast<long long>(cfg.seq_len),
                      static_cast<unsigned long long>(cfg.seed), cfg.optim.lr,
                      static_cast<long long>(cfg.model.layers),
                      static_cast<long long>(cfg.model.heads),
                      static_cast<long long>(cfg.model.width),
                      static_cast<long long>(cfg.model.ffn_width),
                      static_cast<unsigned long long>(cfg.model.init_seed),
                      cfg.selection.k_hard, cfg.selection.k_mem, cfg.selection.tau,
                      cfg.selection.alpha, static_cast<int>(cfg.score_mode),
                      cfg.goldfish.mask_rate, static_cast<unsigned long long>(cfg.goldfish.key),
                      static_cast<long long>(cfg.dp.microbatch), cfg.dp.clip_norm,
                      cfg.dp.noise_multiplier, cfg.reference_checkpoint.c_str(),
                      aux_role.c_str(), static_cast<unsigned long long>(corpus_hash_));
        uint64_t h = fnv1a64(buf, std::strlen(buf));
        h = fnv1a64(cfg.init_checkpoint.data(), cfg.init_checkpoint.size(), h);
        return h;
    }

    static void write_stamp(const std::string& path, uint64_t fp) {
        std::ofstream f(path);
        f << fp << "\n";
    }
    static uint64_t read_stamp(const std::string& path) {
        std::ifstream f(path);
        uint64_t fp = 0;
        f >> fp;
        return fp;
    }

    RunSummary summarize(const std::string& dir) const {
        const RunState state = read_run_log(dir + "/log");
        RunSummary s;
        s.best_ckpt = dir + "/best.dlc";
        s.final_ckpt = dir + "/final.dlc";
        s.best_val_ce = std::numeric_limits<double>::infinity();
        std::vector<std::pair<int64_t, double>> val, train;
        for (const EvalRecord& e : state.evals) {
            if (e.split == "validation") {
                val.emplace_back(e.step, e.ce);
                s.best_val_ce = std::min(s.best_val_ce, e.ce);
            } else if (e.split == "train_sample") {
                train.emplace_back(e.step, e.ce);
            }
        }
        s.final_val_ce = val.back().second;
        s.final_train_ce = train.back().second;
        const size_t i75 = (val.size() * 3) / 4 == 0 ? 0 : (val.size() * 3) / 4 - 1;
        s.val_ce_at_75pct = val[i75].second;
        s.train_ce_at_75pct = train[i75].second;
        return s;
    }

    std::string cache_;
    uint64_t corpus_hash_ = 0;
    Vocab vocab_;
    std::vector<TokenizedDoc> docs_;
    DatasetSplits splits_;
    std::vector<TokenizedDoc> pretrain_docs_;
    DatasetSplits pretrain_splits_;
};

// ---------------------------------------------------------------------------
// A4-A6, A9: desk experiments
// ---------------------------------------------------------------------------

void run_desk_phase(const std::string& cache) {
    DeskLab lab(cache);
    const DatasetSplits& splits = lab.splits();
    std::printf("desk lab: members=%zu non_member=%zu defender_aux=%zu attacker_aux=%zu "
                "validation=%zu threads=%d\n",
                splits.target_train.size(), splits.non_member.size(),
                splits.defender_aux.size(), splits.attacker_aux.size(),
                splits.validation.size(), omp_get_max_threads());

    // Shared pretrained base; every model below fine-tunes from it.
    const std::string base = lab.pretrained_base();

    // References.
    TrainConfig ref_cfg = lab.base_config();
    ref_cfg.epochs = 6;
    ref_cfg.seed = 101;
    ref_cfg.init_checkpoint = base;
    const RunSummary ref = lab.run("ref", ref_cfg, "defender_aux");

    TrainConfig attref_cfg = lab.base_config();
    attref_cfg.epochs = 6;
    attref_cfg.seed = 103;
    attref_cfg.init_checkpoint = base;
    const RunSummary attref = lab.run("attref", attref_cfg, "attacker_aux");

    // Methods under test.
    TrainConfig ft_cfg = lab.base_config();
    ft_cfg.init_checkpoint = base;
    const RunSummary ft = lab.run("ft", ft_cfg);

    TrainConfig duo_cfg = lab.base_config();
    duo_cfg.method = Method::duolearn;
    duo_cfg.init_checkpoint = base;
    duo_cfg.reference_checkpoint = ref.best_ckpt;
    const RunSummary duo = lab.run("duolearn", duo_cfg);

    const auto t4 = Clock::now();
    const AttackResult ft_att = lab.attack("ft_vs_attref", ft.best_ckpt, attref.best_ckpt);
    const AttackResult duo_att =
        lab.attack("duolearn_vs_attref", duo.best_ckpt, attref.best_ckpt);

    const double ft_gap = ft.final_train_ce < ft.final_val_ce
                              ? ft.final_val_ce - ft.final_train_ce
                              : 0.0;
    const double duo_gap = std::abs(duo.final_val_ce - duo.final_train_ce);
    const double ft_ppl = std::exp(ft.best_val_ce);
    const double duo_ppl = std::exp(duo.best_val_ce);
    {
        const bool a = ft_att.auc.at("ref") >= 0.75 && ft_gap >= 1.0;
        const bool b = duo_att.auc.at("ref") <= 0.60 && duo_att.tpr.at("ref") <= 0.05 &&
                       duo_ppl <= 1.25 * ft_ppl;
        const bool c = duo_gap <= 0.5 * ft_gap;
        criterion("A4", a && b && c,
                  fmt("ft: auc_ref=%.3f gap=%.2f ppl=%.2f | duolearn: auc_ref=%.3f "
                      "tpr1=%.3f ppl=%.2f (ratio %.2f) gap=%.2f (ratio %.2f)",
                      ft_att.auc.at("ref"), ft_gap, ft_ppl, duo_att.auc.at("ref"),
                      duo_att.tpr.at("ref"), duo_ppl, duo_ppl / ft_ppl, duo_gap,
                      duo_gap / ft_gap),
                  t4);
    }

    // A5: goldfish and dpsgd baselines.
    const auto t5 = Clock::now();
    TrainConfig gf_cfg = lab.base_config();
    gf_cfg.method = Method::goldfish;
    gf_cfg.init_checkpoint = base;
    gf_cfg.goldfish.mask_rate = 0.25;
    gf_cfg.goldfish.key = 7;
    const RunSummary gf = lab.run("goldfish", gf_cfg);
    TrainConfig dp_cfg = lab.base_config();
    dp_cfg.method = Method::dpsgd;
    dp_cfg.init_checkpoint = base;
    dp_cfg.epochs = 10;
    dp_cfg.dp.clip_norm = 1.0;
    dp_cfg.dp.noise_multiplier = 1.0;
    const RunSummary dp = lab.run("dpsgd", dp_cfg);
    const AttackResult gf_att = lab.attack("goldfish_vs_attref", gf.best_ckpt, attref.best_ckpt);
    const AttackResult dp_att = lab.attack("dpsgd_vs_attref", dp.best_ckpt, attref.best_ckpt);
    {
        const double gf_ppl = std::exp(gf.best_val_ce);
        const double dp_ppl = std::exp(dp.best_val_ce);
        const bool gf_ok = std::abs(gf_att.auc.at("ref") - ft_att.auc.at("ref")) <= 0.05 &&
                           gf_ppl >= 0.95 * ft_ppl && gf_ppl <= 1.05 * ft_ppl;
        const bool dp_ok = dp_att.auc.at("ref") <= 0.65 && dp_ppl > duo_ppl;
        criterion("A5", gf_ok && dp_ok,
                  fmt("goldfish: auc_ref=%.3f (ft %.3f) ppl=%.2f (ratio %.3f) | dpsgd: "
                      "auc_ref=%.3f ppl=%.2f (duolearn %.2f)",
                      gf_att.auc.at("ref"), ft_att.auc.at("ref"), gf_ppl, gf_ppl / ft_ppl,
                      dp_att.auc.at("ref"), dp_ppl, duo_ppl),
                  t5);
    }

    // A6: ablations.
    const auto t6 = Clock::now();
    TrainConfig nul_cfg = duo_cfg;  // no unlearning: first loss term only
    nul_cfg.selection.alpha = 0.0;
    const RunSummary nul = lab.run("no_unlearn", nul_cfg);
    TrainConfig nrf_cfg = lab.base_config();
    nrf_cfg.method = Method::duolearn;
    nrf_cfg.init_checkpoint = base;
    nrf_cfg.score_mode = ScoreMode::train_loss_only;
    nrf_cfg.selection.tau = 1e30;  // no neutral filter: unlearn lowest-loss tokens
    const RunSummary nrf = lab.run("no_reference", nrf_cfg);
    const AttackResult nul_att =
        lab.attack("no_unlearn_vs_attref", nul.best_ckpt, attref.best_ckpt);
    {
        const bool nul_ok = nul_att.auc.at("ref") >= duo_att.auc.at("ref") - 0.02 &&
                            nul_att.auc.at("ref") <= ft_att.auc.at("ref");
        // Fig-4 phenomenon: training loss keeps falling while held-out
        // perplexity rises over the final quarter of training.
        const bool nrf_ok = nrf.final_val_ce > nrf.val_ce_at_75pct &&
                            nrf.final_train_ce < nrf.train_ce_at_75pct;
        criterion("A6", nul_ok && nrf_ok,
                  fmt("no-unlearning auc_ref=%.3f in [%.3f, %.3f] | no-reference val_ce "
                      "%.3f->%.3f train_ce %.3f->%.3f over final 25%%",
                      nul_att.auc.at("ref"), duo_att.auc.at("ref") - 0.02,
                      ft_att.auc.at("ref"), nrf.val_ce_at_75pct, nrf.final_val_ce,
                      nrf.train_ce_at_75pct, nrf.final_train_ce),
                  t6);
    }

    // A9: privacy backdoor.
    const auto t9 = Clock::now();
    TrainConfig wu_cfg = lab.base_config();
    wu_cfg.epochs = 10;
    wu_cfg.seed = 105;
    wu_cfg.init_checkpoint = base;
    const RunSummary warmup = lab.run("warmup", wu_cfg, "attacker_aux");

    TrainConfig vft_cfg = lab.base_config();
    vft_cfg.init_checkpoint = warmup.best_ckpt;
    const RunSummary vft = lab.run("victim_ft", vft_cfg);
    TrainConfig vduo_cfg = lab.base_config();
    vduo_cfg.method = Method::duolearn;
    vduo_cfg.reference_checkpoint = ref.best_ckpt;
    vduo_cfg.init_checkpoint = warmup.best_ckpt;
    const RunSummary vduo = lab.run("victim_duolearn", vduo_cfg);

    const AttackResult vft_wu = lab.attack("victim_ft_vs_warmup", vft.best_ckpt,
                                           warmup.best_ckpt);
    const AttackResult vft_ind =
        lab.attack("victim_ft_vs_attref", vft.best_ckpt, attref.best_ckpt);
    const AttackResult vduo_wu =
        lab.attack("victim_duolearn_vs_warmup", vduo.best_ckpt, warmup.best_ckpt);
    {
        const bool ok = vft_wu.auc.at("ref") >= vft_ind.auc.at("ref") &&
                        vduo_wu.auc.at("ref") <= 0.60;
        criterion("A9", ok,
                  fmt("warm-up-ref attack on ft victim: auc=%.3f vs independent %.3f | "
                      "duolearn victim under warm-up-ref: auc=%.3f",
                      vft_wu.auc.at("ref"), vft_ind.auc.at("ref"), vduo_wu.auc.at("ref")),
                  t9);
    }
}

// ---------------------------------------------------------------------------
// A7: determinism and persistence
// ---------------------------------------------------------------------------

uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64(data.data(), data.size());
}

void run_a7() {
    const auto t0 = Clock::now();
    // Complete pipeline on the desk corpus at a reduced epoch count, twice.
    const TextGenConfig tg{.n_docs = 800, .seed = 2024, .code_prob = 1.0, .code_len = 18};
    const auto texts = generate_corpus(tg);
    const auto docs = tokenize_docs(texts, Vocab::byte_vocab());
    const DatasetSplits splits = split_corpus(docs, {0.5, 0.2, 0.15, 0.1, 0.05}, 7);

    TrainConfig cfg;
    cfg.model.max_seq = 60;
    cfg.seq_len = 60;
    cfg.epochs = 2;
    cfg.seed = 11;
    cfg.eval_train_docs = 64;

    const std::string tmp = fs::temp_directory_path() / "duolearn_a7";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    std::vector<uint64_t> ckpt_hashes, log_hashes;
    for (int run_idx = 0; run_idx < 2; ++run_idx) {
        const std::string dir = tmp + "/run" + std::to_string(run_idx);
        fs::create_directories(dir);
        RunLogger logger(dir + "/log");
        RunArtifacts art = train(cfg, splits, logger.hooks());
        save_checkpoint(*art.final_model, dir + "/final.dlc",
                        {art.state.step, "ft", cfg.seed});
        ckpt_hashes.push_back(file_hash(dir + "/final.dlc"));
        log_hashes.push_back(file_hash(dir + "/log"));
    }
    const bool rerun_ok = ckpt_hashes[0] == ckpt_hashes[1] && log_hashes[0] == log_hashes[1];

    // Checkpoint round trip is bit-exact.
    const CausalLM reloaded = load_checkpoint(tmp + "/run0/final.dlc");
    const CausalLM original = load_checkpoint(tmp + "/run1/final.dlc");
    const bool roundtrip_ok = reloaded.param_hash() == original.param_hash();
    {
        const std::string again = tmp + "/again.dlc";
        save_checkpoint(reloaded, again);
        // Re-saving after a load reproduces the parameters bit-exactly.
        if (load_checkpoint(again).param_hash() != reloaded.param_hash()) {
            criterion("A7", false, "checkpoint round trip changed parameters", t0);
            fs::remove_all(tmp);
            return;
        }
    }

    // Goldfish mask identical across epochs and re-derivations.
    const GoldfishConfig gcfg{.mask_rate = 0.25, .key = 5, .context_width = 4};
    bool mask_ok = true;
    std::map<std::pair<int64_t, int64_t>, bool> decisions;
    for (int64_t epoch = 0; epoch < 3; ++epoch) {
        for (const Batch& b : make_batches(splits.target_train, 60, 32, 11, epoch, 256)) {
            for (int64_t r = 0; r < b.batch_size; ++r)
                for (int64_t i = 1; i < b.seq_len; ++i) {
                    if (!b.valid_at(r, i)) continue;
                    const auto key = std::make_pair(b.doc_ids[static_cast<size_t>(r)],
                                                    b.offsets[static_cast<size_t>(r)] + i);
                    const bool d = goldfish_masks_cell(b, r, i, gcfg);
                    const auto it = decisions.find(key);
                    if (it == decisions.end())
                        decisions.emplace(key, d);
                    else
                        mask_ok &= it->second == d;
                }
        }
    }
    fs::remove_all(tmp);
    criterion("A7", rerun_ok && roundtrip_ok && mask_ok,
              fmt("rerun bit-identical=%d ckpt_roundtrip=%d goldfish_mask_stable=%d", rerun_ok,
                  roundtrip_ok, mask_ok),
              t0);
}

// ---------------------------------------------------------------------------
// A8: DP mechanism properties
// ---------------------------------------------------------------------------

void run_a8() {
    const auto t0 = Clock::now();
    Rng grng(61);
    // Clipping: 10^3 random per-sample gradient sets, every post-clip norm <= C.
    const DPConfig cfg{.clip_norm = 1.0, .noise_multiplier = 0.0, .microbatch = 1};
    int clip_violations = 0;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::vector<Tensor>> per_sample;
        for (int s = 0; s < 100; ++s) {
            std::vector<Tensor> g;
            g.push_back(Tensor::zeros({37}));
            g.push_back(Tensor::zeros({11}));
            const double scale = trial % 2 ? 3.0 : 0.02;
            for (Tensor& t : g)
                for (int64_t i = 0; i < t.numel(); ++i) t[i] = grng.next_gaussian() * scale;
            per_sample.push_back(std::move(g));
        }
        std::vector<double> norms;
        Rng rng(100 + static_cast<uint64_t>(trial));
        dp_sanitize(per_sample, cfg, rng, &norms);
        for (double n : norms)
            if (n > cfg.clip_norm + 1e-12) clip_violations += 1;
    }

    // Noise: empirical std of the injected noise within 5% of sigma*C/batch.
    const DPConfig ncfg{.clip_norm = 1.0, .noise_multiplier = 1.0, .microbatch = 1};
    const int64_t batch = 4;
    std::vector<std::vector<Tensor>> zeros;
    for (int64_t s = 0; s < batch; ++s) {
        std::vector<Tensor> g;
        g.push_back(Tensor::zeros({16}));
        zeros.push_back(std::move(g));
    }
    Rng nrng(777);
    double sq = 0.0;
    int64_t count = 0;
    const int64_t trials = 10000;
    for (int64_t t = 0; t < trials / 16 + 1; ++t) {
        const auto out = dp_sanitize(zeros, ncfg, nrng);
        for (int64_t i = 0; i < out[0].numel(); ++i) {
            sq += out[0][i] * out[0][i];
            count += 1;
        }
    }
    const double std_hat = std::sqrt(sq / static_cast<double>(count));
    const double expect = ncfg.noise_multiplier * ncfg.clip_norm / static_cast<double>(batch);
    const bool noise_ok = std::abs(std_hat - expect) <= 0.05 * expect;

    criterion("A8", clip_violations == 0 && noise_ok,
              fmt("clip_violations=%d/1000 noise_std=%.4f (expect %.4f, %lld draws)",
                  clip_violations, std_hat, expect, static_cast<long long>(count)),
              t0);
}

}  // namespace

int main(int argc, char** argv) {
    std::string phase = "all";
    std::string cache = "acceptance_cache";
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--phase") == 0 && i + 1 < argc) phase = argv[++i];
        else if (std::strcmp(argv[i], "--cache") == 0 && i + 1 < argc) cache = argv[++i];
        else {
            std::fprintf(stderr, "usage: acceptance [--phase fast|desk|all] [--cache DIR]\n");
            return 2;
        }
    }
    try {
        if (phase == "fast" || phase == "all") {
            run_a1();
            run_a2();
            run_a3();
            run_a7();
            run_a8();
        }
        if (phase == "desk" || phase == "all") run_desk_phase(cache);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
        return 1;
    }
    if (g_failures > 0) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
