// SPDX-License-Identifier: Apache-2.0
//
// duolearn CLI: corpus preparation, training (four methods), reference
// training, the MIA attack suite, token-dynamics analysis, consolidated
// reports, the privacy-backdoor recipe, and hyperparameter sweeps.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
#include <omp.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "duolearn/analysis.h"
#include "duolearn/attack_suite.h"
#include "duolearn/checkpoint.h"
#include "duolearn/config_file.h"
#include "duolearn/errors.h"
#include "duolearn/kernels.h"
#include "duolearn/run_dir.h"
#include "duolearn/svg_chart.h"
#include "duolearn/textgen.h"

namespace fs = std::filesystem;
using namespace duolearn;

namespace {

void ensure_writable(const std::string& path, bool force) {
    if (fs::exists(path) && !force)
        throw data_error("refusing to overwrite existing output (use --force): " + path);
}

struct LoadedCorpus {
    std::vector<TokenizedDoc> docs;
    Vocab vocab;
    SplitManifest manifest;
    DatasetSplits splits;
    uint64_t hash = 0;
};

LoadedCorpus load_prepared(const std::string& corpus_path, const std::string& manifest_path) {
    LoadedCorpus lc;
    const auto texts = load_corpus_texts(corpus_path);
    lc.hash = corpus_hash(texts);
    lc.manifest = read_manifest(manifest_path);
    lc.vocab = vocab_from_manifest(lc.manifest);
    lc.docs = tokenize_docs(texts, lc.vocab);
    lc.splits = apply_manifest(lc.manifest, lc.docs, lc.hash);
    return lc;
}

const std::vector<TokenizedDoc>& role_docs(const DatasetSplits& splits, const std::string& role) {
    for (size_t r = 0; r < 5; ++r)
        if (role == DatasetSplits::role_names[r]) return splits.role(r);
    throw config_error("unknown split role '" + role + "'");
}

int cmd_prepare(const std::string& corpus_path, const std::string& out,
                std::vector<double> fractions, uint64_t seed, const std::string& scheme,
                bool force) {
    if (fractions.size() != 5)
        throw config_error("field fractions: want exactly 5 values (target_train non_member "
                           "defender_aux attacker_aux validation)");
    std::array<double, 5> fr{};
    std::copy(fractions.begin(), fractions.end(), fr.begin());
    ensure_writable(out, force);
    const auto texts = load_corpus_texts(corpus_path);
    const Vocab vocab = Vocab::build(texts, vocab_scheme_from_string(scheme));
    const auto docs = tokenize_docs(texts, vocab);
    const DatasetSplits splits = split_corpus(docs, fr, seed);
    write_manifest(make_manifest(splits, vocab, corpus_hash(texts), seed, fr), out);
    std::cout << "prepared " << docs.size() << " docs into splits";
    for (size_t r = 0; r < 5; ++r)
        std::cout << " " << DatasetSplits::role_names[r] << "=" << splits.role(r).size();
    std::cout << "\nmanifest: " << out << "\n";
    return 0;
}

void save_run_outputs(RunDir& dir, const RunArtifacts& art, const TrainConfig& cfg,
                      uint64_t seed) {
    CheckpointMeta meta{art.state.step, to_string(cfg.method), seed};
    save_checkpoint(*art.final_model, dir.checkpoint_path("final"), meta);
    CheckpointMeta best_meta{art.best_step, to_string(cfg.method), seed};
    save_checkpoint(*art.best_model, dir.checkpoint_path("best"), best_meta);
}

int run_training(const TrainFileConfig& file_cfg, const std::string& cfg_text,
                 const std::string& out_dir, bool force, const std::string& aux_role) {
    if (file_cfg.corpus.empty() || file_cfg.manifest.empty())
        throw config_error("config must set corpus and manifest paths");
    LoadedCorpus lc = load_prepared(file_cfg.corpus, file_cfg.manifest);

    TrainConfig cfg = file_cfg.train;
    cfg.model.vocab_size = lc.manifest.vocab_size;
    cfg.validate();

    RunDir dir = RunDir::create(out_dir, force);
    {
        std::ofstream snap(dir.config_path());
        snap << cfg_text;
    }
    dir.write_manifest({file_cfg.run_id, cfg_text, lc.hash, cfg.seed, kSoftwareVersion});

    RunLogger logger(dir.log_path());
    TrainHooks hooks = logger.hooks();
    hooks.on_checkpoint = [&](int64_t step, const CausalLM& m) {
        save_checkpoint(m, dir.checkpoint_path("step_" + std::to_string(step)),
                        {step, to_string(cfg.method), cfg.seed});
    };

    RunArtifacts art = aux_role.empty() ? train(cfg, lc.splits, hooks)
                                        : train_reference(cfg, lc.splits, aux_role, hooks);
    save_run_outputs(dir, art, cfg, cfg.seed);

    std::cout << "run " << file_cfg.run_id << " method=" << to_string(cfg.method)
              << " steps=" << art.state.step << " best_val_ce=" << art.best_val_ce
              << " best_step=" << art.best_step << "\n"
              << "checkpoints: " << dir.checkpoint_path("best") << ", "
              << dir.checkpoint_path("final") << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, std::string out_dir, bool force,
              const std::string& aux_role) {
    const ConfigFile cf = ConfigFile::parse_file(config_path);
    const TrainFileConfig file_cfg = train_config_from_file(cf);
    if (out_dir.empty()) out_dir = "runs/" + file_cfg.run_id;
    return run_training(file_cfg, cf.text(), out_dir, force, aux_role);
}

int cmd_attack(const std::string& target_path, const std::string& ref_path,
               const std::string& corpus_path, const std::string& manifest_path,
               const std::string& out, const std::string& signals_out, double mink_k,
               int zlib_level, double fpr, int64_t seq_len, const std::string& ref_role,
               bool force) {
    ensure_writable(out, force);
    LoadedCorpus lc = load_prepared(corpus_path, manifest_path);
    const CausalLM target = load_checkpoint(target_path);
    const CausalLM attack_ref = load_checkpoint(ref_path);

    AttackConfig cfg;
    cfg.mink_k = mink_k;
    cfg.zlib_level = zlib_level;
    cfg.fpr_target = fpr;
    cfg.seq_len = seq_len > 0 ? seq_len : target.config().max_seq;

    std::vector<int64_t> ref_train_ids;
    for (const TokenizedDoc& d : role_docs(lc.splits, ref_role))
        ref_train_ids.push_back(d.doc_id);

    const AttackResult result =
        run_attack_suite(target, attack_ref, lc.splits.target_train, lc.splits.non_member, cfg,
                         &ref_train_ids);
    write_attack_result(result, out);
    if (!signals_out.empty()) {
        ensure_writable(signals_out, force);
        write_signal_records(result, signals_out);
    }
    std::cout << "attack over " << result.n_members << "+" << result.n_nonmembers << " docs\n";
    for (const char* s : AttackResult::signal_names)
        std::cout << "  " << s << ": auc=" << result.auc.at(s) << " tpr@" << fpr << "="
                  << result.tpr.at(s) << "\n";
    std::cout << "result: " << out << "\n";
    return 0;
}

std::vector<std::string> sorted_step_checkpoints(const std::string& dir) {
    std::vector<std::pair<int64_t, std::string>> found;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("step_", 0) == 0 && e.path().extension() == ".dlc")
            found.emplace_back(std::stoll(name.substr(5)), e.path().string());
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> out;
    for (auto& [step, p] : found) out.push_back(p);
    return out;
}

int cmd_analyze(const std::string& run_path, const std::string& which,
                const std::string& reference_path, const std::string& corpus_path,
                const std::string& manifest_path, const std::string& target_path,
                std::vector<int64_t> doc_ids, const std::string& out_dir, bool svg, bool force) {
    fs::create_directories(out_dir);
    RunDir run = RunDir::open(run_path);

    if (which == "cosine" || which == "selection") {
        const RunState state = read_run_log(run.log_path());
        if (which == "cosine") {
            const std::string out = out_dir + "/fig5_cosine.tsv";
            ensure_writable(out, force);
            std::ofstream f(out);
            f << "# learning/unlearning gradient cosine per step\n# columns: step cosine\n";
            ChartSeries series{"grad_cosine", {}, {}};
            for (const StepRecord& r : state.steps)
                if (r.grad_cosine) {
                    f << r.step << "\t" << *r.grad_cosine << "\n";
                    series.x.push_back(static_cast<double>(r.step));
                    series.y.push_back(*r.grad_cosine);
                }
            if (series.x.empty())
                throw data_error("run log has no gradient-cosine records "
                                 "(train with [duolearn].log_grad_cosine = 1)");
            if (svg) write_line_chart_svg(out_dir + "/fig5_cosine.svg", "gradient cosine", {series});
            std::cout << "wrote " << out << "\n";
            return 0;
        }
        const std::string out = out_dir + "/fig6_selection.tsv";
        ensure_writable(out, force);
        if (state.selection_log.empty())
            throw data_error("run log has no selection records "
                             "(train with [duolearn].log_selection = 1)");
        write_selection_dynamics(selection_dynamics(state.selection_log), out);
        std::cout << "wrote " << out << "\n";
        return 0;
    }

    // The remaining analyses need corpus + models.
    LoadedCorpus lc = load_prepared(corpus_path, manifest_path);
    const CausalLM ref = load_checkpoint(reference_path);
    const std::string tgt =
        target_path.empty() ? run.checkpoint_path("best") : target_path;

    if (which == "hist") {
        const CausalLM target = load_checkpoint(tgt);
        if (doc_ids.empty()) {
            doc_ids.push_back(lc.splits.target_train.front().doc_id);
            doc_ids.push_back(lc.splits.non_member.front().doc_id);
        }
        std::vector<HistogramData> hists;
        std::set<int64_t> member_ids;
        for (const TokenizedDoc& d : lc.splits.target_train) member_ids.insert(d.doc_id);
        for (int64_t id : doc_ids) {
            const TokenizedDoc& doc = lc.docs.at(static_cast<size_t>(id));
            const std::string tag = (member_ids.count(id) ? "member_doc_" : "nonmember_doc_") +
                                    std::to_string(id);
            hists.push_back(token_signal_histogram(target, ref, doc, 50,
                                                   target.config().max_seq, -5.0, 3.0, tag));
        }
        const std::string out = out_dir + "/fig1_hist.tsv";
        ensure_writable(out, force);
        write_histograms(hists, out);
        if (svg && hists.size() >= 2)
            write_histogram_svg(out_dir + "/fig1_hist.svg", "per-token MIA signal", hists[0].edges,
                                {hists[0].counts, hists[1].counts},
                                {hists[0].tag, hists[1].tag});
        std::cout << "wrote " << out << "\n";
        return 0;
    }

    if (which == "ranks") {
        const auto paths = sorted_step_checkpoints(run.checkpoints_dir());
        if (paths.size() < 2)
            throw data_error("rank dynamics need >= 2 periodic checkpoints "
                             "(train with checkpoint_every >= 1)");
        std::vector<CausalLM> ckpts;
        ckpts.reserve(paths.size());
        for (const std::string& p : paths) ckpts.push_back(load_checkpoint(p));
        std::vector<const CausalLM*> views;
        for (const CausalLM& c : ckpts) views.push_back(&c);
        const int64_t id = doc_ids.empty() ? lc.splits.target_train.front().doc_id : doc_ids[0];
        const auto traces =
            token_rank_dynamics(views, ref, lc.docs.at(static_cast<size_t>(id)),
                                ckpts.front().config().max_seq);
        const std::string out = out_dir + "/fig1_ranks.tsv";
        ensure_writable(out, force);
        write_rank_traces(traces, out);
        if (svg) {
            std::vector<ChartSeries> series;
            for (size_t t = 0; t < traces.size() && t < 6; ++t) {
                ChartSeries s{"pos " + std::to_string(traces[t].position), {}, {}};
                for (size_t c = 0; c < traces[t].rank_by_ckpt.size(); ++c) {
                    s.x.push_back(static_cast<double>(c));
                    s.y.push_back(static_cast<double>(traces[t].rank_by_ckpt[c]));
                }
                series.push_back(std::move(s));
            }
            write_line_chart_svg(out_dir + "/fig1_ranks.svg", "token signal ranks", series);
        }
        std::cout << "wrote " << out << "\n";
        return 0;
    }

    if (which == "strata") {
        const CausalLM target = load_checkpoint(tgt);
        std::vector<TokenizedDoc> sample;
        if (doc_ids.empty()) {
            const size_t n = std::min<size_t>(500, lc.splits.target_train.size());
            sample.assign(lc.splits.target_train.begin(), lc.splits.target_train.begin() + n);
        } else {
            for (int64_t id : doc_ids) sample.push_back(lc.docs.at(static_cast<size_t>(id)));
        }
        const auto freq = token_frequencies(lc.splits.target_train);
        const auto [low, high] = frequency_stratified_signals(target, ref, sample, freq,
                                                              target.config().max_seq);
        const std::string out = out_dir + "/fig8_strata.tsv";
        ensure_writable(out, force);
        write_histograms({low, high}, out);
        if (svg)
            write_histogram_svg(out_dir + "/fig8_strata.svg", "prevalence-stratified signals",
                                low.edges, {low.counts, high.counts}, {low.tag, high.tag});
        std::cout << "wrote " << out << "\n";
        return 0;
    }

    throw config_error("unknown analysis '" + which +
                       "' (want hist|ranks|cosine|selection|strata)");
}

struct RunSummary {
    std::string run_id;
    std::string method;
    double best_val_ppl = 0.0;
    AttackResult attack;
};

RunSummary summarize_run(const std::string& run_path) {
    RunDir run = RunDir::open(run_path);
    std::vector<std::string> missing;
    if (!fs::exists(run.manifest_path())) missing.push_back(run.manifest_path());
    if (!fs::exists(run.log_path())) missing.push_back(run.log_path());
    const std::string attack_path = run.report_dir() + "/attack.json";
    if (!fs::exists(attack_path)) missing.push_back(attack_path);
    if (!missing.empty()) {
        std::string msg = "run " + run_path + " is missing artifacts:";
        for (const std::string& m : missing) msg += " " + m;
        throw data_error(msg);
    }
    RunSummary s;
    const ExperimentManifest m = run.read_manifest();
    s.run_id = m.run_id;
    s.method = ConfigFile::parse_string(m.config_snapshot).get_string("", "method");
    const RunState state = read_run_log(run.log_path());
    double best = std::numeric_limits<double>::infinity();
    for (const EvalRecord& e : state.evals)
        if (e.split == "validation" && e.ce < best) best = e.ce;
    s.best_val_ppl = std::exp(best);
    s.attack = read_attack_result(attack_path);
    return s;
}

int cmd_report(const std::vector<std::string>& run_paths, const std::string& out, bool force) {
    std::vector<RunSummary> rows;
    for (const std::string& p : run_paths) rows.push_back(summarize_run(p));
    if (!out.empty()) ensure_writable(out, force);
    std::ostringstream table;
    table << "run\tmethod\tppl\tauc_loss\tauc_ref\tauc_mink\tauc_zlib"
          << "\ttpr1_loss\ttpr1_ref\ttpr1_mink\ttpr1_zlib\n";
    char buf[512];
    for (const RunSummary& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%s\t%s\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\n",
                      r.run_id.c_str(), r.method.c_str(), r.best_val_ppl,
                      r.attack.auc.at("loss"), r.attack.auc.at("ref"), r.attack.auc.at("mink"),
                      r.attack.auc.at("zlib"), r.attack.tpr.at("loss"), r.attack.tpr.at("ref"),
                      r.attack.tpr.at("mink"), r.attack.tpr.at("zlib"));
        table << buf;
    }
    std::cout << table.str();
    if (!out.empty()) {
        std::ofstream f(out);
        f << table.str();
        std::cout << "report: " << out << "\n";
    }
    return 0;
}

int cmd_backdoor(const std::string& config_path, int64_t warmup_epochs, std::string out_dir,
                 bool force) {
    const ConfigFile cf = ConfigFile::parse_file(config_path);
    const TrainFileConfig file_cfg = train_config_from_file(cf);
    if (out_dir.empty()) out_dir = "runs/" + file_cfg.run_id;
    LoadedCorpus lc = load_prepared(file_cfg.corpus, file_cfg.manifest);

    TrainConfig victim_cfg = file_cfg.train;
    victim_cfg.model.vocab_size = lc.manifest.vocab_size;
    victim_cfg.validate();
    TrainConfig warmup_cfg = victim_cfg;
    warmup_cfg.method = Method::ft;
    warmup_cfg.epochs = warmup_epochs;
    warmup_cfg.reference_checkpoint.clear();

    RunDir warm_dir = RunDir::create(out_dir + "/warmup", force);
    RunDir victim_dir = RunDir::create(out_dir + "/victim", force);
    warm_dir.write_manifest({file_cfg.run_id + "-warmup", cf.text(), lc.hash, warmup_cfg.seed});
    victim_dir.write_manifest({file_cfg.run_id + "-victim", cf.text(), lc.hash, victim_cfg.seed});
    RunLogger warm_log(warm_dir.log_path()), victim_log(victim_dir.log_path());

    auto [warmup, victim] =
        run_backdoor_recipe(warmup_cfg, victim_cfg, lc.splits, warm_log.hooks(),
                            victim_log.hooks());
    save_run_outputs(warm_dir, warmup, warmup_cfg, warmup_cfg.seed);
    save_run_outputs(victim_dir, victim, victim_cfg, victim_cfg.seed);
    std::cout << "warm-up reference checkpoint: " << warm_dir.checkpoint_path("best") << "\n"
              << "victim (" << to_string(victim_cfg.method)
              << ") checkpoint: " << victim_dir.checkpoint_path("best") << "\n";
    return 0;
}

void patch_config(TrainConfig& cfg, const std::string& param, double value) {
    if (param == "duolearn.alpha") cfg.selection.alpha = value;
    else if (param == "duolearn.k_hard") cfg.selection.k_hard = value;
    else if (param == "duolearn.k_mem") cfg.selection.k_mem = value;
    else if (param == "duolearn.tau") cfg.selection.tau = value;
    else if (param == "goldfish.mask_rate") cfg.goldfish.mask_rate = value;
    else if (param == "dpsgd.noise_multiplier") cfg.dp.noise_multiplier = value;
    else if (param == "dpsgd.clip_norm") cfg.dp.clip_norm = value;
    else if (param == "lr") cfg.optim.lr = value;
    else throw config_error("sweep: unsupported parameter '" + param + "'");
}

int cmd_sweep(const std::string& config_path, const std::string& param,
              std::vector<double> values, const std::string& attack_ref_path,
              const std::string& out_dir, bool force) {
    if (values.empty()) throw config_error("sweep: need at least one value");
    const ConfigFile cf = ConfigFile::parse_file(config_path);
    const TrainFileConfig file_cfg = train_config_from_file(cf);
    LoadedCorpus lc = load_prepared(file_cfg.corpus, file_cfg.manifest);
    const CausalLM attack_ref = load_checkpoint(attack_ref_path);

    fs::create_directories(out_dir);
    const std::string table_path = out_dir + "/sweep.tsv";
    ensure_writable(table_path, force);
    std::ofstream table(table_path);
    table << "# sweep of " << param << "\n";
    table << "value\tppl\tauc_loss\tauc_ref\tauc_mink\tauc_zlib\n";

    for (double v : values) {
        TrainConfig cfg = file_cfg.train;
        cfg.model.vocab_size = lc.manifest.vocab_size;
        patch_config(cfg, param, v);
        cfg.validate();
        RunArtifacts art = train(cfg, lc.splits);
        const double val_ppl = std::exp(art.best_val_ce);
        AttackConfig acfg;
        acfg.seq_len = cfg.seq_len;
        const AttackResult res = run_attack_suite(*art.best_model, attack_ref,
                                                  lc.splits.target_train,
                                                  lc.splits.non_member, acfg);
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%.6g\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\n", v, val_ppl,
                      res.auc.at("loss"), res.auc.at("ref"), res.auc.at("mink"),
                      res.auc.at("zlib"));
        table << buf;
        table.flush();
        std::cout << param << "=" << v << " ppl=" << val_ppl << " auc_ref=" << res.auc.at("ref")
                  << "\n";
    }
    std::cout << "sweep table: " << table_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"duolearn: a training-time defense laboratory against membership inference"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "OpenMP thread count (default: OMP_NUM_THREADS)");
    bool serial = false;
    app.add_flag("--serial", serial, "use the serial reference kernels");

    // prepare
    auto* prepare = app.add_subcommand("prepare", "tokenize a corpus and write a split manifest");
    std::string corpus, out, scheme = "byte";
    std::vector<double> fractions = {0.5, 0.2, 0.15, 0.1, 0.05};
    uint64_t seed = 7;
    bool force = false;
    prepare->add_option("--corpus", corpus, "corpus file (one doc per line) or directory of .txt")
        ->required();
    prepare->add_option("--out", out, "manifest output path")->required();
    prepare->add_option("--fractions", fractions,
                        "five fractions: target_train non_member defender_aux attacker_aux "
                        "validation");
    prepare->add_option("--seed", seed, "split seed");
    prepare->add_option("--scheme", scheme, "tokenizer scheme: byte|char");
    prepare->add_flag("--force", force, "overwrite existing outputs");

    // train / train-ref
    std::string train_config, train_out, aux_role = "defender_aux";
    auto* train_cmd = app.add_subcommand("train", "train a target model per a config file");
    train_cmd->add_option("--config", train_config, "train config file")->required();
    train_cmd->add_option("--out", train_out, "run directory (default runs/<run_id>)");
    train_cmd->add_flag("--force", force, "overwrite an existing run directory");
    auto* train_ref = app.add_subcommand("train-ref", "train a reference model on an aux split");
    train_ref->add_option("--config", train_config, "train config file")->required();
    train_ref->add_option("--out", train_out, "run directory (default runs/<run_id>)");
    train_ref->add_option("--role", aux_role, "aux split: defender_aux|attacker_aux");
    train_ref->add_flag("--force", force, "overwrite an existing run directory");

    // attack
    auto* attack = app.add_subcommand("attack", "run the four-signal MIA suite");
    std::string target_ckpt, ref_ckpt, manifest_path, signals_out, ref_role = "attacker_aux";
    double mink_k = 0.2, fpr = 0.01;
    int zlib_level = 6;
    int64_t seq_len = 0;
    attack->add_option("--target", target_ckpt, "target checkpoint")->required();
    attack->add_option("--attack-ref", ref_ckpt, "attack reference checkpoint")->required();
    attack->add_option("--corpus", corpus, "corpus path")->required();
    attack->add_option("--manifest", manifest_path, "split manifest")->required();
    attack->add_option("--out", out, "attack result JSON path")->required();
    attack->add_option("--signals-out", signals_out, "optional per-doc signal TSV");
    attack->add_option("--mink-k", mink_k, "min-k fraction");
    attack->add_option("--zlib-level", zlib_level, "zlib compression level");
    attack->add_option("--fpr", fpr, "TPR is reported at this FPR");
    attack->add_option("--seq-len", seq_len, "scoring window (default: model max_seq)");
    attack->add_option("--attack-ref-role", ref_role,
                       "split the attack reference was trained on (contamination check)");
    attack->add_flag("--force", force, "overwrite existing outputs");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "emit token-dynamics data files");
    std::string which, run_path, reference_path, analyze_target;
    std::vector<int64_t> doc_ids;
    bool svg = false;
    analyze->add_option("--run", run_path, "run directory")->required();
    analyze->add_option("--which", which, "hist|ranks|cosine|selection|strata")->required();
    analyze->add_option("--reference", reference_path, "defender reference checkpoint");
    analyze->add_option("--corpus", corpus, "corpus path");
    analyze->add_option("--manifest", manifest_path, "split manifest");
    analyze->add_option("--target", analyze_target, "target checkpoint (default: run best)");
    analyze->add_option("--docs", doc_ids, "doc ids to analyze");
    analyze->add_option("--out", out, "output directory")->required();
    analyze->add_flag("--svg", svg, "also render svg charts");
    analyze->add_flag("--force", force, "overwrite existing outputs");

    // report
    auto* report = app.add_subcommand("report", "consolidated per-run table");
    std::vector<std::string> run_paths;
    report->add_option("--runs", run_paths, "run directories")->required();
    report->add_option("--out", out, "write the table here as TSV");
    report->add_flag("--force", force, "overwrite existing outputs");

    // backdoor
    auto* backdoor = app.add_subcommand("backdoor", "warm-up + continual fine-tuning recipe");
    int64_t warmup_epochs = 10;
    backdoor->add_option("--config", train_config, "victim train config")->required();
    backdoor->add_option("--warmup-epochs", warmup_epochs, "warm-up CLM epochs");
    backdoor->add_option("--out", train_out, "output directory (default runs/<run_id>)");
    backdoor->add_flag("--force", force, "overwrite existing outputs");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "train+attack over a parameter grid");
    std::string sweep_param;
    std::vector<double> sweep_values;
    sweep->add_option("--config", train_config, "base train config")->required();
    sweep->add_option("--param", sweep_param, "e.g. duolearn.alpha")->required();
    sweep->add_option("--values", sweep_values, "parameter values")->required();
    sweep->add_option("--attack-ref", ref_ckpt, "attack reference checkpoint")->required();
    sweep->add_option("--out", out, "output directory")->required();
    sweep->add_flag("--force", force, "overwrite existing outputs");

    try {
        app.parse(argc, argv);
        if (threads > 0) omp_set_num_threads(threads);
        kernels::use_parallel(!serial);

        if (app.got_subcommand(prepare))
            return cmd_prepare(corpus, out, fractions, seed, scheme, force);
        if (app.got_subcommand(train_cmd)) return cmd_train(train_config, train_out, force, "");
        if (app.got_subcommand(train_ref))
            return cmd_train(train_config, train_out, force, aux_role);
        if (app.got_subcommand(attack))
            return cmd_attack(target_ckpt, ref_ckpt, corpus, manifest_path, out, signals_out,
                              mink_k, zlib_level, fpr, seq_len, ref_role, force);
        if (app.got_subcommand(analyze))
            return cmd_analyze(run_path, which, reference_path, corpus, manifest_path,
                               analyze_target, doc_ids, out, svg, force);
        if (app.got_subcommand(report)) return cmd_report(run_paths, out, force);
        if (app.got_subcommand(backdoor))
            return cmd_backdoor(train_config, warmup_epochs, train_out, force);
        if (app.got_subcommand(sweep))
            return cmd_sweep(train_config, sweep_param, sweep_values, ref_ckpt, out, force);
        return 2;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
