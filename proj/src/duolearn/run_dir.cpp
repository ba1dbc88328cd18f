// SPDX-License-Identifier: Apache-2.0
#include "duolearn/run_dir.h"

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>

#include <json.hpp>

#include "duolearn/errors.h"

namespace duolearn {

namespace fs = std::filesystem;
using nlohmann::json;

RunDir RunDir::create(const std::string& path, bool force) {
    if (fs::exists(path) && !fs::is_empty(path)) {
        if (!force)
            throw data_error("run directory already exists (use --force to overwrite): " + path);
        fs::remove_all(path);
    }
    fs::create_directories(path);
    fs::create_directories(path + "/checkpoints");
    fs::create_directories(path + "/report");
    RunDir dir(path, true);
    const int fd = ::open(dir.lock_path().c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw data_error("run directory is locked by another process: " + path);
    ::close(fd);
    return dir;
}

RunDir RunDir::open(const std::string& path) {
    if (!fs::is_directory(path)) throw data_error("not a run directory: " + path);
    return RunDir(path, false);
}

RunDir::~RunDir() {
    if (locked_) ::unlink(lock_path().c_str());
}

RunDir::RunDir(RunDir&& o) noexcept : path_(std::move(o.path_)), locked_(o.locked_) {
    o.locked_ = false;
}

void RunDir::write_manifest(const ExperimentManifest& m) const {
    json j;
    j["run_id"] = m.run_id;
    j["config_snapshot"] = m.config_snapshot;
    j["corpus_hash"] = m.corpus_hash;
    j["seed"] = m.seed;
    j["software_version"] = m.software_version;
    std::ofstream out(manifest_path());
    if (!out) throw data_error("cannot write run manifest: " + manifest_path());
    out << j.dump(2) << "\n";
}

ExperimentManifest RunDir::read_manifest() const {
    std::ifstream in(manifest_path());
    if (!in) throw data_error("missing run manifest: " + manifest_path());
    json j;
    in >> j;
    ExperimentManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_snapshot = j.at("config_snapshot").get<std::string>();
    m.corpus_hash = j.at("corpus_hash").get<uint64_t>();
    m.seed = j.at("seed").get<uint64_t>();
    m.software_version = j.at("software_version").get<std::string>();
    return m;
}

RunLogger::RunLogger(const std::string& path) : out_(path) {
    if (!out_) throw data_error("cannot open run log for writing: " + path);
}

namespace {

const char* label_code(CellLabel l) {
    switch (l) {
        case CellLabel::invalid: return "invalid";
        case CellLabel::neutral: return "neutral";
        case CellLabel::hard: return "hard";
        case CellLabel::memorized: return "memorized";
    }
    return "?";
}

CellLabel label_from_code(const std::string& s) {
    if (s == "invalid") return CellLabel::invalid;
    if (s == "neutral") return CellLabel::neutral;
    if (s == "hard") return CellLabel::hard;
    if (s == "memorized") return CellLabel::memorized;
    throw data_error("run log: unknown selection label '" + s + "'");
}

}  // namespace

void RunLogger::log_step(const StepRecord& r) {
    json j{{"kind", "step"},     {"step", r.step},     {"epoch", r.epoch},
           {"loss", r.loss},     {"n_hard", r.n_hard}, {"n_mem", r.n_mem},
           {"mean_score", r.mean_score}};
    if (r.grad_cosine) j["grad_cosine"] = *r.grad_cosine;
    out_ << j.dump() << "\n";
}

void RunLogger::log_eval(const EvalRecord& r) {
    json j{{"kind", "eval"}, {"step", r.step}, {"split", r.split}, {"ce", r.ce}, {"ppl", r.ppl}};
    out_ << j.dump() << "\n";
    out_.flush();
}

void RunLogger::log_selection(const SelectionLogRow& r) {
    json j{{"kind", "selection"}, {"epoch", r.epoch},        {"step", r.step},
           {"doc_id", r.doc_id},  {"pos", r.pos},            {"label", label_code(r.label)}};
    out_ << j.dump() << "\n";
}

TrainHooks RunLogger::hooks() {
    TrainHooks h;
    h.on_step = [this](const StepRecord& r) { log_step(r); };
    h.on_eval = [this](const EvalRecord& r) { log_eval(r); };
    h.on_selection = [this](const SelectionLogRow& r) { log_selection(r); };
    return h;
}

RunState read_run_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open run log: " + path);
    RunState state;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "step") {
            StepRecord r;
            r.step = j.at("step").get<int64_t>();
            r.epoch = j.at("epoch").get<int64_t>();
            r.loss = j.at("loss").get<double>();
            r.n_hard = j.at("n_hard").get<int64_t>();
            r.n_mem = j.at("n_mem").get<int64_t>();
            r.mean_score = j.at("mean_score").get<double>();
            if (j.contains("grad_cosine")) r.grad_cosine = j.at("grad_cosine").get<double>();
            state.steps.push_back(r);
            state.step = r.step;
        } else if (kind == "eval") {
            EvalRecord r;
            r.step = j.at("step").get<int64_t>();
            r.split = j.at("split").get<std::string>();
            r.ce = j.at("ce").get<double>();
            r.ppl = j.at("ppl").get<double>();
            state.evals.push_back(r);
        } else if (kind == "selection") {
            SelectionLogRow r;
            r.epoch = j.at("epoch").get<int64_t>();
            r.step = j.at("step").get<int64_t>();
            r.doc_id = j.at("doc_id").get<int64_t>();
            r.pos = j.at("pos").get<int64_t>();
            r.label = label_from_code(j.at("label").get<std::string>());
            state.selection_log.push_back(r);
        } else {
            throw data_error("run log: unknown record kind '" + kind + "'");
        }
    }
    return state;
}

}  // namespace duolearn
