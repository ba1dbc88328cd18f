// SPDX-License-Identifier: Apache-2.0
#include "duolearn/textgen.h"

#include <array>
#include <cmath>

#include "duolearn/rng.h"

namespace duolearn {

namespace {

// Every document is one templated sentence plus a long random code. The
// template is shared structure a model can generalize from held-out data; the
// code is irreducible entropy that can only be learned by memorizing the
// document, which gives the membership experiments a clean fingerprint and
// keeps held-out cross entropy bounded away from zero.
//
// Bank entries are capped so the longest document (18-char code) stays under
// 60 bytes and fits a single 60-token window.

const std::array<const char*, 24> kSubjects = {
    "mira",  "joren", "tella",  "ansel", "brix",  "cavan", "doria", "elio",
    "fenna", "garet", "hollis", "imre",  "lior",  "maren", "nils",  "odette",
    "pavel", "quinn", "rosal",  "soren", "tamsin", "ulric", "vesna", "willa"};

const std::array<const char*, 16> kVerbs = {
    "sold",  "moved", "traded", "bought", "stored", "packed", "sent",  "kept",
    "mended", "tied", "listed", "priced", "loaned", "found",  "split", "took"};

const std::array<const char*, 12> kQuantities = {"two", "three", "four",  "five",
                                                 "six", "seven", "eight", "nine",
                                                 "ten", "dozen", "forty", "sixty"};

const std::array<const char*, 16> kAdjectives = {
    "amber", "copper", "woven", "glazed", "carved", "salted", "dried",  "pale",
    "heavy", "plain",  "worn",  "fine",   "rough",  "dark",   "bright", "small"};

const std::array<const char*, 20> kObjects = {
    "kettles", "crates",  "lamps",   "ropes", "baskets", "candles", "bolts",
    "jars",    "planks",  "saddles", "barrels", "spools", "nets",    "tiles",
    "quilts",  "ledgers", "anchors", "bells",  "casks",   "combs"};

// Mild Zipf bias (1/sqrt(i+1)) keeps a head of common words and a tail of
// rare ones, which the prevalence-stratified analysis needs.
template <size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& bank) {
    double total = 0.0;
    for (size_t i = 0; i < N; ++i) total += 1.0 / std::sqrt(static_cast<double>(i + 1));
    double u = rng.next_unit() * total;
    for (size_t i = 0; i < N; ++i) {
        u -= 1.0 / std::sqrt(static_cast<double>(i + 1));
        if (u <= 0.0) return bank[i];
    }
    return bank[N - 1];
}

}  // namespace

std::vector<std::string> generate_corpus(const TextGenConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<std::string> docs;
    docs.reserve(static_cast<size_t>(cfg.n_docs));
    const char* code_alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
    for (int64_t i = 0; i < cfg.n_docs; ++i) {
        std::string d;
        d += pick(rng, kSubjects);
        d += " ";
        d += pick(rng, kVerbs);
        d += " ";
        d += pick(rng, kQuantities);
        d += " ";
        d += pick(rng, kAdjectives);
        d += " ";
        d += pick(rng, kObjects);
        if (rng.next_unit() < cfg.code_prob) {
            d += " code ";
            for (int64_t c = 0; c < cfg.code_len; ++c)
                d += code_alphabet[rng.next_below(36)];
        }
        d += ".";
        docs.push_back(std::move(d));
    }
    return docs;
}

}  // namespace duolearn
