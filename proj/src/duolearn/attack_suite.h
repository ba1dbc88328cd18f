// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "duolearn/corpus.h"
#include "duolearn/model.h"

namespace duolearn {

struct SignalRecord {
    int64_t doc_id = 0;
    bool is_member = false;
    // Keyed as {loss, ref, mink, zlib}; larger = more-likely member.
    std::map<std::string, double> signals;
};

struct AttackConfig {
    double mink_k = 0.2;
    int zlib_level = 6;
    double fpr_target = 0.01;
    int64_t seq_len = 128;
};

struct AttackResult {
    static constexpr std::array<const char*, 4> signal_names = {"loss", "ref", "mink", "zlib"};

    AttackConfig config;
    int64_t n_members = 0;
    int64_t n_nonmembers = 0;
    std::map<std::string, double> auc;
    std::map<std::string, double> tpr;
    std::vector<SignalRecord> records;
};

// Runs all four attacks over balanced member/non-member sets (each side is
// truncated to the smaller cardinality first). `attack_ref_train_ids`, when
// given, is the attack reference's training doc-id set; overlap with the
// member set is refused as contamination.
AttackResult run_attack_suite(const CausalLM& target, const CausalLM& attack_ref,
                              const std::vector<TokenizedDoc>& members,
                              const std::vector<TokenizedDoc>& non_members,
                              const AttackConfig& cfg,
                              const std::vector<int64_t>* attack_ref_train_ids = nullptr);

// Delimiter-separated signal table (doc_id, label, loss, ref, mink, zlib).
void write_signal_records(const AttackResult& result, const std::string& path);

// Structured report consumed by the report command.
void write_attack_result(const AttackResult& result, const std::string& path);
AttackResult read_attack_result(const std::string& path);

}  // namespace duolearn
