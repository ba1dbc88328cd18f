// SPDX-License-Identifier: Apache-2.0
#include "duolearn/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "duolearn/errors.h"
#include "duolearn/rng.h"

namespace duolearn {

const std::vector<TokenizedDoc>& DatasetSplits::role(size_t i) const {
    switch (i) {
        case 0: return target_train;
        case 1: return non_member;
        case 2: return defender_aux;
        case 3: return attacker_aux;
        default: return validation;
    }
}

std::vector<TokenizedDoc>& DatasetSplits::role(size_t i) {
    return const_cast<std::vector<TokenizedDoc>&>(
        static_cast<const DatasetSplits*>(this)->role(i));
}

void DatasetSplits::check_disjoint() const {
    std::set<int64_t> seen;
    for (size_t r = 0; r < 5; ++r) {
        for (const TokenizedDoc& d : role(r)) {
            if (!seen.insert(d.doc_id).second)
                throw data_error("split roles are not disjoint: doc_id " +
                                 std::to_string(d.doc_id) + " appears twice");
        }
    }
}

int64_t Batch::valid_count() const {
    int64_t n = 0;
    for (uint8_t v : valid) n += v;
    return n;
}

std::vector<TokenizedDoc> tokenize_docs(const std::vector<std::string>& texts,
                                        const Vocab& vocab) {
    std::vector<TokenizedDoc> docs;
    docs.reserve(texts.size());
    for (size_t i = 0; i < texts.size(); ++i) {
        TokenizedDoc d;
        d.doc_id = static_cast<int64_t>(i);
        d.source_bytes = texts[i];
        d.tokens = vocab.encode(texts[i]);
        if (d.tokens.empty())
            throw data_error("document " + std::to_string(i) + " tokenizes to nothing");
        docs.push_back(std::move(d));
    }
    return docs;
}

DatasetSplits split_corpus(const std::vector<TokenizedDoc>& docs,
                           const std::array<double, 5>& fractions, uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw config_error("split fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw config_error("split fractions must sum to 1 (got " + std::to_string(total) + ")");

    const int64_t n = static_cast<int64_t>(docs.size());
    std::array<int64_t, 6> bounds{};
    double cum = 0.0;
    for (size_t r = 0; r < 5; ++r) {
        cum += fractions[r];
        bounds[r + 1] = std::llround(cum * static_cast<double>(n));
    }
    bounds[5] = n;
    for (size_t r = 0; r < 5; ++r) {
        if (fractions[r] > 0.0 && bounds[r + 1] - bounds[r] <= 0)
            throw data_error(std::string("split '") + DatasetSplits::role_names[r] +
                             "' would be empty with " + std::to_string(n) + " documents");
    }

    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);

    DatasetSplits out;
    for (size_t r = 0; r < 5; ++r) {
        auto& dst = out.role(r);
        for (int64_t k = bounds[r]; k < bounds[r + 1]; ++k)
            dst.push_back(docs[static_cast<size_t>(order[static_cast<size_t>(k)])]);
        std::sort(dst.begin(), dst.end(),
                  [](const TokenizedDoc& a, const TokenizedDoc& b) { return a.doc_id < b.doc_id; });
    }
    out.check_disjoint();
    return out;
}

std::vector<Batch> make_batches(const std::vector<TokenizedDoc>& split, int64_t seq_len,
                                int64_t batch_size, uint64_t seed, int64_t epoch,
                                int32_t pad_id) {
    if (seq_len < 2) throw config_error("seq_len must be >= 2");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (split.empty()) throw data_error("cannot batch an empty split");

    struct Window {
        const TokenizedDoc* doc;
        int64_t start;
        int64_t len;
    };
    std::vector<Window> windows;
    for (const TokenizedDoc& d : split) {
        const int64_t t = static_cast<int64_t>(d.tokens.size());
        for (int64_t start = 0; start < t; start += seq_len) {
            const int64_t len = std::min(seq_len, t - start);
            if (len >= 2) windows.push_back({&d, start, len});
        }
    }
    Rng rng = Rng::stream(seed, static_cast<uint64_t>(epoch));
    rng.shuffle(windows);

    std::vector<Batch> out;
    const int64_t n_windows = static_cast<int64_t>(windows.size());
    for (int64_t w0 = 0; w0 < n_windows; w0 += batch_size) {
        const int64_t rows = std::min(batch_size, n_windows - w0);
        Batch b;
        b.batch_size = rows;
        b.seq_len = seq_len;
        b.tokens.assign(static_cast<size_t>(rows * seq_len), pad_id);
        b.valid.assign(static_cast<size_t>(rows * seq_len), 0);
        b.doc_ids.resize(static_cast<size_t>(rows));
        b.offsets.resize(static_cast<size_t>(rows));
        for (int64_t r = 0; r < rows; ++r) {
            const Window& w = windows[static_cast<size_t>(w0 + r)];
            b.doc_ids[static_cast<size_t>(r)] = w.doc->doc_id;
            b.offsets[static_cast<size_t>(r)] = w.start;
            for (int64_t i = 0; i < w.len; ++i) {
                b.tokens[static_cast<size_t>(r * seq_len + i)] =
                    w.doc->tokens[static_cast<size_t>(w.start + i)];
                if (i >= 1) b.valid[static_cast<size_t>(r * seq_len + i)] = 1;
            }
        }
        out.push_back(std::move(b));
    }
    return out;
}

std::map<int32_t, int64_t> token_frequencies(const std::vector<TokenizedDoc>& split) {
    std::map<int32_t, int64_t> freq;
    for (const TokenizedDoc& d : split)
        for (int32_t t : d.tokens) freq[t] += 1;
    return freq;
}

std::vector<std::string> load_corpus_texts(const std::string& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw data_error("corpus path does not exist: " + path);
    std::vector<std::string> texts;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) {
            std::ifstream in(f, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            std::string s = ss.str();
            while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
            if (!s.empty()) texts.push_back(std::move(s));
        }
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw data_error("cannot open corpus file: " + path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) texts.push_back(line);
        }
    }
    if (texts.empty()) throw data_error("corpus is empty: " + path);
    return texts;
}

uint64_t corpus_hash(const std::vector<std::string>& texts) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const std::string& t : texts) {
        h = fnv1a64(t.data(), t.size(), h);
        const char sep = '\n';
        h = fnv1a64(&sep, 1, h);
    }
    return h;
}

SplitManifest make_manifest(const DatasetSplits& splits, const Vocab& vocab, uint64_t corpus_h,
                            uint64_t seed, const std::array<double, 5>& fractions) {
    SplitManifest m;
    m.corpus_hash = corpus_h;
    m.scheme = vocab.scheme();
    m.vocab_size = vocab.size();
    m.char_codepoints = vocab.codepoints();
    m.seed = seed;
    m.fractions = fractions;
    for (size_t r = 0; r < 5; ++r)
        for (const TokenizedDoc& d : splits.role(r)) m.role_ids[r].push_back(d.doc_id);
    return m;
}

void write_manifest(const SplitManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write manifest: " + path);
    out << "duolearn-manifest v1\n";
    out << "corpus_hash = " << m.corpus_hash << "\n";
    out << "scheme = " << to_string(m.scheme) << "\n";
    out << "vocab_size = " << m.vocab_size << "\n";
    if (m.scheme == VocabScheme::char_level) {
        out << "char_codepoints =";
        for (uint32_t cp : m.char_codepoints) out << " " << cp;
        out << "\n";
    }
    out << "seed = " << m.seed << "\n";
    out << "fractions =";
    char buf[64];
    for (double f : m.fractions) {
        std::snprintf(buf, sizeof(buf), " %.17g", f);
        out << buf;
    }
    out << "\n";
    for (size_t r = 0; r < 5; ++r) {
        out << "[" << DatasetSplits::role_names[r] << "]\n";
        for (int64_t id : m.role_ids[r]) out << id << "\n";
    }
}

SplitManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open manifest: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "duolearn-manifest v1")
        throw data_error("not a duolearn manifest: " + path);
    SplitManifest m;
    int role = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '[') {
            role = -1;
            for (size_t r = 0; r < 5; ++r)
                if (line == std::string("[") + DatasetSplits::role_names[r] + "]")
                    role = static_cast<int>(r);
            if (role < 0) throw data_error("manifest: unknown section " + line);
            continue;
        }
        if (role >= 0) {
            m.role_ids[static_cast<size_t>(role)].push_back(std::stoll(line));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw data_error("manifest: bad line '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        const auto trim = [](std::string& s) {
            while (!s.empty() && s.front() == ' ') s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
        };
        trim(key);
        trim(val);
        if (key == "corpus_hash") m.corpus_hash = std::stoull(val);
        else if (key == "scheme") m.scheme = vocab_scheme_from_string(val);
        else if (key == "vocab_size") m.vocab_size = std::stoll(val);
        else if (key == "seed") m.seed = std::stoull(val);
        else if (key == "char_codepoints") {
            std::istringstream ss(val);
            uint32_t cp;
            while (ss >> cp) m.char_codepoints.push_back(cp);
        } else if (key == "fractions") {
            std::istringstream ss(val);
            for (size_t r = 0; r < 5; ++r) ss >> m.fractions[r];
        } else {
            throw data_error("manifest: unknown key '" + key + "'");
        }
    }
    return m;
}

DatasetSplits apply_manifest(const SplitManifest& m, const std::vector<TokenizedDoc>& docs,
                             uint64_t corpus_h) {
    if (m.corpus_hash != corpus_h)
        throw data_error("manifest corpus hash does not match the loaded corpus");
    DatasetSplits out;
    for (size_t r = 0; r < 5; ++r) {
        for (int64_t id : m.role_ids[r]) {
            if (id < 0 || id >= static_cast<int64_t>(docs.size()))
                throw data_error("manifest doc_id out of range: " + std::to_string(id));
            out.role(r).push_back(docs[static_cast<size_t>(id)]);
        }
    }
    out.check_disjoint();
    return out;
}

Vocab vocab_from_manifest(const SplitManifest& m) {
    if (m.scheme == VocabScheme::byte_level) return Vocab::byte_vocab();
    return Vocab::char_vocab(m.char_codepoints);
}

}  // namespace duolearn
