// SPDX-License-Identifier: Apache-2.0
//
// Run-directory layout runs/<run-id>/{config, checkpoints/, log, report/},
// the experiment manifest, a process lock against concurrent mutation, and
// the line-delimited run log.
#pragma once

#include <fstream>
#include <optional>
#include <string>

#include "duolearn/trainer.h"

namespace duolearn {

inline constexpr const char* kSoftwareVersion = "duolearn 0.1.0";

struct ExperimentManifest {
    std::string run_id;
    std::string config_snapshot;  // full config file text
    uint64_t corpus_hash = 0;
    uint64_t seed = 0;
    std::string software_version = kSoftwareVersion;
};

class RunDir {
  public:
    // Creates the directory tree; refuses a non-empty existing directory
    // unless force is set. Holds an exclusive lock file until destruction.
    static RunDir create(const std::string& path, bool force);
    // Opens an existing run directory read-only (no lock).
    static RunDir open(const std::string& path);

    ~RunDir();
    RunDir(RunDir&&) noexcept;
    RunDir(const RunDir&) = delete;
    RunDir& operator=(const RunDir&) = delete;

    const std::string& path() const { return path_; }
    std::string config_path() const { return path_ + "/config"; }
    std::string log_path() const { return path_ + "/log"; }
    std::string manifest_path() const { return path_ + "/manifest.json"; }
    std::string checkpoints_dir() const { return path_ + "/checkpoints"; }
    std::string report_dir() const { return path_ + "/report"; }
    std::string checkpoint_path(const std::string& name) const {
        return checkpoints_dir() + "/" + name + ".dlc";
    }

    void write_manifest(const ExperimentManifest& m) const;
    ExperimentManifest read_manifest() const;

  private:
    explicit RunDir(std::string path, bool locked) : path_(std::move(path)), locked_(locked) {}
    std::string lock_path() const { return path_ + "/.lock"; }
    std::string path_;
    bool locked_ = false;
};

// Streams step/eval/selection records as one JSON object per line.
class RunLogger {
  public:
    explicit RunLogger(const std::string& path);
    TrainHooks hooks();
    void log_step(const StepRecord& r);
    void log_eval(const EvalRecord& r);
    void log_selection(const SelectionLogRow& r);

  private:
    std::ofstream out_;
};

// Reads a streamed log back into a RunState.
RunState read_run_log(const std::string& path);

}  // namespace duolearn
