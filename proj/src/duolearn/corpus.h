// SPDX-License-Identifier: Apache-2.0
//
// Documents, membership-role splits, deterministic batching, and token
// statistics. Everything here is a pure function of its arguments (seeds
// included); produced structures are immutable once built.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "duolearn/vocab.h"

namespace duolearn {

struct TokenizedDoc {
    int64_t doc_id = 0;
    std::vector<int32_t> tokens;
    std::string source_bytes;  // retained for the zlib signal
};

// Five pairwise-disjoint membership roles.
struct DatasetSplits {
    std::vector<TokenizedDoc> target_train;  // members
    std::vector<TokenizedDoc> non_member;
    std::vector<TokenizedDoc> defender_aux;
    std::vector<TokenizedDoc> attacker_aux;
    std::vector<TokenizedDoc> validation;

    static constexpr std::array<const char*, 5> role_names = {
        "target_train", "non_member", "defender_aux", "attacker_aux", "validation"};

    const std::vector<TokenizedDoc>& role(size_t i) const;
    std::vector<TokenizedDoc>& role(size_t i);
    void check_disjoint() const;  // throws data_error on doc_id overlap
};

// One training batch. Cell (b, i) is a prediction target iff valid[b*L+i] is
// set, meaning tokens[b*L+i] is predicted from the window prefix before it.
// Local position 0 of a window has no in-window predecessor and is never
// valid; pad cells are never valid.
struct Batch {
    int64_t batch_size = 0;  // B
    int64_t seq_len = 0;     // L
    std::vector<int32_t> tokens;
    std::vector<uint8_t> valid;
    std::vector<int64_t> doc_ids;  // per row
    std::vector<int64_t> offsets;  // window start within the document, per row

    int32_t token_at(int64_t b, int64_t i) const { return tokens[static_cast<size_t>(b * seq_len + i)]; }
    bool valid_at(int64_t b, int64_t i) const { return valid[static_cast<size_t>(b * seq_len + i)] != 0; }
    int64_t valid_count() const;
};

std::vector<TokenizedDoc> tokenize_docs(const std::vector<std::string>& texts,
                                        const Vocab& vocab);

// Deterministic role assignment. `fractions` must be non-negative and sum to
// one; any nonzero fraction must yield a nonempty split.
DatasetSplits split_corpus(const std::vector<TokenizedDoc>& docs,
                           const std::array<double, 5>& fractions, uint64_t seed);

// Chunks every document into non-overlapping windows of length L (final
// partial window kept if it has at least 2 tokens), shuffles windows as a
// pure function of (seed, epoch), and groups them into batches of B rows.
std::vector<Batch> make_batches(const std::vector<TokenizedDoc>& split, int64_t seq_len,
                                int64_t batch_size, uint64_t seed, int64_t epoch,
                                int32_t pad_id);

std::map<int32_t, int64_t> token_frequencies(const std::vector<TokenizedDoc>& split);

// Corpus files: one document per line, or a directory of .txt files (one
// document per file, ordered by filename). Empty documents are skipped.
std::vector<std::string> load_corpus_texts(const std::string& path);
uint64_t corpus_hash(const std::vector<std::string>& texts);

// Split manifest: the on-disk record of a prepared experiment (corpus hash,
// vocab, fractions, seed, and the doc-id list of every role).
struct SplitManifest {
    uint64_t corpus_hash = 0;
    VocabScheme scheme = VocabScheme::byte_level;
    int64_t vocab_size = 0;
    std::vector<uint32_t> char_codepoints;
    uint64_t seed = 0;
    std::array<double, 5> fractions{};
    std::array<std::vector<int64_t>, 5> role_ids;
};

SplitManifest make_manifest(const DatasetSplits& splits, const Vocab& vocab, uint64_t corpus_h,
                            uint64_t seed, const std::array<double, 5>& fractions);
void write_manifest(const SplitManifest& m, const std::string& path);
SplitManifest read_manifest(const std::string& path);

// Rebuilds splits from a manifest against a freshly loaded corpus; verifies
// the corpus hash and id ranges.
DatasetSplits apply_manifest(const SplitManifest& m, const std::vector<TokenizedDoc>& docs,
                             uint64_t corpus_h);
Vocab vocab_from_manifest(const SplitManifest& m);

}  // namespace duolearn
