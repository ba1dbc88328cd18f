// SPDX-License-Identifier: Apache-2.0
#include "duolearn/attack_suite.h"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "duolearn/errors.h"
#include "duolearn/metrics.h"
#include "duolearn/signals.h"

namespace duolearn {

using nlohmann::json;

AttackResult run_attack_suite(const CausalLM& target, const CausalLM& attack_ref,
                              const std::vector<TokenizedDoc>& members,
                              const std::vector<TokenizedDoc>& non_members,
                              const AttackConfig& cfg,
                              const std::vector<int64_t>* attack_ref_train_ids) {
    if (members.empty() || non_members.empty())
        throw data_error("attack suite needs nonempty member and non-member sets");
    if (attack_ref_train_ids) {
        std::set<int64_t> member_ids;
        for (const TokenizedDoc& d : members) member_ids.insert(d.doc_id);
        for (int64_t id : *attack_ref_train_ids)
            if (member_ids.count(id))
                throw data_error(
                    "contamination: attack reference was trained on member doc_id " +
                    std::to_string(id));
    }

    // Balance member and non-member counts before evaluation.
    const size_t n = std::min(members.size(), non_members.size());
    AttackResult result;
    result.config = cfg;
    result.n_members = static_cast<int64_t>(n);
    result.n_nonmembers = static_cast<int64_t>(n);

    // Score all docs in batched forward passes; per-doc sums come from the
    // cells grouped by doc id. Matches the per-document signal functions up
    // to summation rounding.
    std::vector<TokenizedDoc> all_docs(members.begin(), members.begin() + n);
    all_docs.insert(all_docs.end(), non_members.begin(), non_members.begin() + n);

    struct DocStats {
        double nll = 0.0;
        int64_t count = 0;
        std::vector<double> logprobs;  // target model only, for min-k
    };
    std::map<int64_t, DocStats> stats;
    std::map<int64_t, double> ref_nll;
    const int32_t pad = static_cast<int32_t>(target.config().vocab_size - 2);
    const auto batches = make_batches(all_docs, cfg.seq_len, 32, 0, 0, pad);
    for (const Batch& b : batches) {
        const Tensor lp_t = target.token_logprobs(b);
        const Tensor lp_r = attack_ref.token_logprobs(b);
        for (int64_t r = 0; r < b.batch_size; ++r) {
            const int64_t doc = b.doc_ids[static_cast<size_t>(r)];
            DocStats& ds = stats[doc];
            for (int64_t i = 0; i < b.seq_len; ++i) {
                if (!b.valid_at(r, i)) continue;
                ds.nll -= lp_t.at(r, i);
                ref_nll[doc] -= lp_r.at(r, i);
                ds.count += 1;
                ds.logprobs.push_back(lp_t.at(r, i));
            }
        }
    }

    const auto score_doc = [&](const TokenizedDoc& d, bool is_member) {
        const DocStats& ds = stats.at(d.doc_id);
        SignalRecord rec;
        rec.doc_id = d.doc_id;
        rec.is_member = is_member;
        const double ce_target = ds.nll / static_cast<double>(ds.count);
        const double ce_ref = ref_nll.at(d.doc_id) / static_cast<double>(ds.count);
        rec.signals["loss"] = -ce_target;
        rec.signals["ref"] = ce_ref - ce_target;
        std::vector<double> lps = ds.logprobs;
        std::sort(lps.begin(), lps.end());
        const auto m = static_cast<size_t>(
            std::ceil(cfg.mink_k * static_cast<double>(lps.size())));
        double mink = 0.0;
        for (size_t i = 0; i < m; ++i) mink += lps[i];
        rec.signals["mink"] = mink / static_cast<double>(m);
        rec.signals["zlib"] =
            -ce_target / static_cast<double>(zlib_size(d.source_bytes, cfg.zlib_level));
        result.records.push_back(rec);
    };
    for (size_t i = 0; i < n; ++i) score_doc(members[i], true);
    for (size_t i = 0; i < n; ++i) score_doc(non_members[i], false);

    for (const char* name : AttackResult::signal_names) {
        std::vector<double> ms, ns;
        for (const SignalRecord& r : result.records)
            (r.is_member ? ms : ns).push_back(r.signals.at(name));
        result.auc[name] = roc_auc(ms, ns);
        result.tpr[name] = tpr_at_fpr(ms, ns, cfg.fpr_target);
    }
    return result;
}

void write_signal_records(const AttackResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write signal table: " + path);
    out << "doc_id\tlabel\tloss\tref\tmink\tzlib\n";
    char buf[512];
    for (const SignalRecord& r : result.records) {
        std::snprintf(buf, sizeof(buf), "%lld\t%s\t%.17g\t%.17g\t%.17g\t%.17g\n",
                      static_cast<long long>(r.doc_id), r.is_member ? "member" : "nonmember",
                      r.signals.at("loss"), r.signals.at("ref"), r.signals.at("mink"),
                      r.signals.at("zlib"));
        out << buf;
    }
}

void write_attack_result(const AttackResult& result, const std::string& path) {
    json j;
    j["config"] = {{"mink_k", result.config.mink_k},
                   {"zlib_level", result.config.zlib_level},
                   {"fpr_target", result.config.fpr_target},
                   {"seq_len", result.config.seq_len}};
    j["n_members"] = result.n_members;
    j["n_nonmembers"] = result.n_nonmembers;
    j["auc"] = result.auc;
    j["tpr"] = result.tpr;
    std::ofstream out(path);
    if (!out) throw data_error("cannot write attack result: " + path);
    out << j.dump(2) << "\n";
}

AttackResult read_attack_result(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open attack result: " + path);
    json j;
    in >> j;
    AttackResult r;
    r.config.mink_k = j.at("config").at("mink_k").get<double>();
    r.config.zlib_level = j.at("config").at("zlib_level").get<int>();
    r.config.fpr_target = j.at("config").at("fpr_target").get<double>();
    r.config.seq_len = j.at("config").at("seq_len").get<int64_t>();
    r.n_members = j.at("n_members").get<int64_t>();
    r.n_nonmembers = j.at("n_nonmembers").get<int64_t>();
    for (auto& [k, v] : j.at("auc").items()) r.auc[k] = v.get<double>();
    for (auto& [k, v] : j.at("tpr").items()) r.tpr[k] = v.get<double>();
    return r;
}

}  // namespace duolearn
