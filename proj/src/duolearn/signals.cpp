// SPDX-License-Identifier: Apache-2.0
#include "duolearn/signals.h"

#include <zlib.h>

#include <algorithm>
#include <cmath>

#include "duolearn/errors.h"

namespace duolearn {

double doc_mean_ce(const CausalLM& model, const TokenizedDoc& doc, int64_t seq_len) {
    if (doc.tokens.size() < 2)
        throw data_error("document " + std::to_string(doc.doc_id) +
                         " has fewer than 2 tokens; no signal defined");
    return mean_ce_over_split(model, {doc}, seq_len);
}

double signal_loss(const CausalLM& model, const TokenizedDoc& doc, int64_t seq_len) {
    return -doc_mean_ce(model, doc, seq_len);
}

double signal_ref(const CausalLM& model, const CausalLM& attack_ref, const TokenizedDoc& doc,
                  int64_t seq_len) {
    if (model.config().vocab_size != attack_ref.config().vocab_size)
        throw data_error("signal_ref: target and reference vocab sizes differ");
    return doc_mean_ce(attack_ref, doc, seq_len) - doc_mean_ce(model, doc, seq_len);
}

double signal_mink(const CausalLM& model, const TokenizedDoc& doc, double k_frac,
                   int64_t seq_len) {
    if (!(k_frac > 0.0 && k_frac <= 1.0)) throw config_error("min-k fraction must be in (0, 1]");
    if (doc.tokens.size() < 2)
        throw data_error("document " + std::to_string(doc.doc_id) +
                         " has fewer than 2 tokens; no signal defined");
    std::vector<double> lps;
    const int32_t pad = static_cast<int32_t>(model.config().vocab_size - 2);
    for (const Batch& b : make_batches({doc}, seq_len, 32, 0, 0, pad)) {
        const Tensor lp = model.token_logprobs(b);
        for (int64_t r = 0; r < b.batch_size; ++r)
            for (int64_t i = 0; i < b.seq_len; ++i)
                if (b.valid_at(r, i)) lps.push_back(lp.at(r, i));
    }
    const auto m = static_cast<size_t>(
        std::ceil(k_frac * static_cast<double>(lps.size())));
    std::sort(lps.begin(), lps.end());
    double sum = 0.0;
    for (size_t i = 0; i < m; ++i) sum += lps[i];
    return sum / static_cast<double>(m);
}

std::string zlib_compress(const std::string& bytes, int level) {
    uLongf bound = compressBound(static_cast<uLong>(bytes.size()));
    std::string out(bound, '\0');
    const int rc = compress2(reinterpret_cast<Bytef*>(out.data()), &bound,
                             reinterpret_cast<const Bytef*>(bytes.data()),
                             static_cast<uLong>(bytes.size()), level);
    if (rc != Z_OK) throw numeric_error("zlib compression failed (rc=" + std::to_string(rc) + ")");
    out.resize(bound);
    return out;
}

int64_t zlib_size(const std::string& bytes, int level) {
    return static_cast<int64_t>(zlib_compress(bytes, level).size());
}

double signal_zlib(const CausalLM& model, const TokenizedDoc& doc, int64_t seq_len,
                   int zlib_level) {
    if (doc.source_bytes.empty())
        throw data_error("document " + std::to_string(doc.doc_id) +
                         " has no source bytes; zlib signal undefined");
    return -doc_mean_ce(model, doc, seq_len) /
           static_cast<double>(zlib_size(doc.source_bytes, zlib_level));
}

}  // namespace duolearn
