// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "duolearn/corpus.h"
#include "duolearn/errors.h"
#include "duolearn/rng.h"

using namespace duolearn;

namespace {

std::vector<TokenizedDoc> docs_from(const std::vector<std::string>& texts,
                                    VocabScheme scheme = VocabScheme::byte_level) {
    return tokenize_docs(texts, Vocab::build(texts, scheme));
}

std::vector<std::string> synthetic_texts(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> texts;
    for (size_t i = 0; i < n; ++i) {
        std::string t;
        const size_t len = 5 + rng.next_below(40);
        for (size_t j = 0; j < len; ++j)
            t.push_back(static_cast<char>('a' + rng.next_below(26)));
        texts.push_back(std::move(t));
    }
    return texts;
}

}  // namespace

TEST_CASE("byte vocab has 256 text tokens plus two specials") {
    auto v = Vocab::build({"anything"}, VocabScheme::byte_level);
    CHECK(v.size() == 258);
    CHECK(v.pad_id() == 256);
    CHECK(v.bos_id() == 257);
}

TEST_CASE("char vocab counts distinct symbols") {
    auto v = Vocab::build({"abcabc"}, VocabScheme::char_level);
    CHECK(v.text_token_count() == 3);
    CHECK(v.size() == 5);
}

TEST_CASE("empty corpus is rejected") { CHECK_THROWS_AS(Vocab::build({}, VocabScheme::byte_level), data_error); }

TEST_CASE("tokenize-then-detokenize is the identity on random byte strings") {
    auto v = Vocab::byte_vocab();
    Rng rng(99);
    for (int c = 0; c < 1000; ++c) {
        std::string s;
        const size_t len = 1 + rng.next_below(64);
        for (size_t j = 0; j < len; ++j)
            s.push_back(static_cast<char>(rng.next_below(256)));
        CHECK(v.decode(v.encode(s)) == s);
    }
}

TEST_CASE("char vocab round-trips multi-byte text") {
    std::vector<std::string> texts = {"na\xc3\xafve \xe6\x97\xa5\xe6\x9c\xac"};
    auto v = Vocab::build(texts, VocabScheme::char_level);
    CHECK(v.decode(v.encode(texts[0])) == texts[0]);
}

TEST_CASE("split_corpus: sizes, disjointness, determinism") {
    auto docs = docs_from(synthetic_texts(100, 5));
    const std::array<double, 5> fr = {0.4, 0.2, 0.2, 0.1, 0.1};
    auto s1 = split_corpus(docs, fr, 7);
    CHECK(s1.target_train.size() == 40);
    CHECK(s1.non_member.size() == 20);
    CHECK(s1.defender_aux.size() == 20);
    CHECK(s1.attacker_aux.size() == 10);
    CHECK(s1.validation.size() == 10);

    // Independent recomputation of pairwise disjointness.
    std::set<int64_t> all;
    size_t total = 0;
    for (size_t r = 0; r < 5; ++r) {
        for (const auto& d : s1.role(r)) all.insert(d.doc_id);
        total += s1.role(r).size();
    }
    CHECK(all.size() == total);

    auto s2 = split_corpus(docs, fr, 7);
    for (size_t r = 0; r < 5; ++r) {
        REQUIRE(s1.role(r).size() == s2.role(r).size());
        for (size_t i = 0; i < s1.role(r).size(); ++i)
            CHECK(s1.role(r)[i].doc_id == s2.role(r)[i].doc_id);
    }

    auto s3 = split_corpus(docs, fr, 8);
    bool any_diff = false;
    for (size_t i = 0; i < s1.target_train.size() && !any_diff; ++i)
        any_diff = s1.target_train[i].doc_id != s3.target_train[i].doc_id;
    CHECK(any_diff);
}

TEST_CASE("split_corpus: zero fraction leaves that split empty, union unchanged") {
    auto docs = docs_from(synthetic_texts(100, 6));
    auto s = split_corpus(docs, {0.5, 0.2, 0.2, 0.0, 0.1}, 7);
    CHECK(s.attacker_aux.empty());
    size_t total = 0;
    for (size_t r = 0; r < 5; ++r) total += s.role(r).size();
    CHECK(total == 100);
}

TEST_CASE("split_corpus rejects malformed fractions and empty nonzero splits") {
    auto docs = docs_from(synthetic_texts(10, 7));
    CHECK_THROWS_AS(split_corpus(docs, {0.5, 0.2, 0.2, 0.1, 0.2}, 1), config_error);
    CHECK_THROWS_AS(split_corpus(docs, {0.5, 0.2, 0.2, -0.1, 0.2}, 1), config_error);
    // 0.01 of 10 docs rounds to zero -> refused.
    CHECK_THROWS_AS(split_corpus(docs, {0.99, 0.01, 0.0, 0.0, 0.0}, 1), data_error);
}

TEST_CASE("make_batches covers a 10-token doc with two windows at L=5") {
    std::vector<std::string> texts = {"abcdefghij"};
    auto docs = docs_from(texts);
    auto batches = make_batches(docs, 5, 1, 3, 0, 256);
    REQUIRE(batches.size() == 2);
    // Hand enumeration: window [0,5) yields targets at doc positions 1..4,
    // window [5,10) yields targets at 6..9; window-initial positions have no
    // in-window predecessor.
    std::set<int64_t> targets;
    for (const Batch& b : batches)
        for (int64_t i = 0; i < b.seq_len; ++i)
            if (b.valid_at(0, i)) targets.insert(b.offsets[0] + i);
    CHECK(targets == std::set<int64_t>{1, 2, 3, 4, 6, 7, 8, 9});
}

TEST_CASE("make_batches is a pure function of (seed, epoch)") {
    auto docs = docs_from(synthetic_texts(30, 8));
    auto a = make_batches(docs, 16, 4, 11, 2, 256);
    auto b = make_batches(docs, 16, 4, 11, 2, 256);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].tokens == b[i].tokens);
        CHECK(a[i].doc_ids == b[i].doc_ids);
    }
    auto c = make_batches(docs, 16, 4, 11, 3, 256);
    bool differs = false;
    for (size_t i = 0; i < std::min(a.size(), c.size()) && !differs; ++i)
        differs = a[i].doc_ids != c[i].doc_ids;
    CHECK(differs);
}

TEST_CASE("a one-token document contributes no prediction targets") {
    std::vector<std::string> texts = {"x", "hello"};
    auto docs = docs_from(texts);
    auto batches = make_batches(docs, 8, 4, 0, 0, 256);
    int64_t rows = 0;
    for (const Batch& b : batches) rows += b.batch_size;
    CHECK(rows == 1);  // only the 5-token doc yields a window
}

TEST_CASE("batch coverage equals per-window (token, predecessor) pairs") {
    auto docs = docs_from(synthetic_texts(40, 9));
    const int64_t L = 16;
    int64_t expect = 0;
    for (const auto& d : docs) {
        const int64_t t = static_cast<int64_t>(d.tokens.size());
        for (int64_t s = 0; s < t; s += L) {
            const int64_t len = std::min(L, t - s);
            if (len >= 2) expect += len - 1;
        }
    }
    int64_t got = 0;
    for (const Batch& b : make_batches(docs, L, 8, 1, 0, 256)) got += b.valid_count();
    CHECK(got == expect);
}

TEST_CASE("pad cells are never valid and valid cells index real tokens") {
    auto docs = docs_from(synthetic_texts(25, 10));
    for (const Batch& b : make_batches(docs, 32, 4, 2, 1, 256))
        for (int64_t r = 0; r < b.batch_size; ++r)
            for (int64_t i = 0; i < b.seq_len; ++i)
                if (b.valid_at(r, i)) CHECK(b.token_at(r, i) != 256);
}

TEST_CASE("token_frequencies counts and is additive over splits") {
    auto v = Vocab::build({"aaab"}, VocabScheme::char_level);
    auto docs = tokenize_docs({"aaab"}, v);
    auto f = token_frequencies(docs);
    CHECK(f.at(v.encode("a")[0]) == 3);
    CHECK(f.at(v.encode("b")[0]) == 1);
    CHECK(token_frequencies({}).empty());

    auto texts = synthetic_texts(20, 11);
    auto all = docs_from(texts);
    std::vector<TokenizedDoc> first(all.begin(), all.begin() + 10);
    std::vector<TokenizedDoc> second(all.begin() + 10, all.end());
    auto fa = token_frequencies(first);
    for (const auto& [tok, cnt] : token_frequencies(second)) fa[tok] += cnt;
    CHECK(fa == token_frequencies(all));

    int64_t total = 0;
    for (const auto& [tok, cnt] : token_frequencies(all)) total += cnt;
    int64_t expect = 0;
    for (const auto& d : all) expect += static_cast<int64_t>(d.tokens.size());
    CHECK(total == expect);
}

TEST_CASE("a directory of .txt files loads one document per file, by name") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "duolearn_corpus_dir";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream f(dir / name);
        f << text;
    };
    write("b_second.txt", "second doc\n");
    write("a_first.txt", "first doc");
    write("ignored.md", "not loaded");
    const auto texts = load_corpus_texts(dir.string());
    REQUIRE(texts.size() == 2);
    CHECK(texts[0] == "first doc");
    CHECK(texts[1] == "second doc");
    fs::remove_all(dir);
}

TEST_CASE("manifest round trip restores identical splits") {
    auto texts = synthetic_texts(60, 12);
    auto vocab = Vocab::build(texts, VocabScheme::byte_level);
    auto docs = tokenize_docs(texts, vocab);
    const std::array<double, 5> fr = {0.5, 0.2, 0.15, 0.1, 0.05};
    auto splits = split_corpus(docs, fr, 77);
    auto m = make_manifest(splits, vocab, corpus_hash(texts), 77, fr);

    const std::string path = std::filesystem::temp_directory_path() / "duolearn_manifest_test.txt";
    write_manifest(m, path);
    auto m2 = read_manifest(path);
    CHECK(m2.corpus_hash == m.corpus_hash);
    CHECK(m2.vocab_size == m.vocab_size);
    auto splits2 = apply_manifest(m2, docs, corpus_hash(texts));
    for (size_t r = 0; r < 5; ++r) {
        REQUIRE(splits2.role(r).size() == splits.role(r).size());
        for (size_t i = 0; i < splits.role(r).size(); ++i)
            CHECK(splits2.role(r)[i].doc_id == splits.role(r)[i].doc_id);
    }
    CHECK_THROWS_AS(apply_manifest(m2, docs, corpus_hash(texts) + 1), data_error);
    std::remove(path.c_str());
}
