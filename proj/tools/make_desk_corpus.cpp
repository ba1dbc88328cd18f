// SPDX-License-Identifier: Apache-2.0
//
// Writes the synthetic desk corpus (one document per line) used by the
// committed recipes and the acceptance experiments.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "duolearn/errors.h"
#include "duolearn/textgen.h"

int main(int argc, char** argv) {
    CLI::App app{"generate the synthetic desk corpus"};
    duolearn::TextGenConfig cfg;
    std::string out;
    app.add_option("--docs", cfg.n_docs, "number of documents");
    app.add_option("--seed", cfg.seed, "generator seed");
    app.add_option("--code-prob", cfg.code_prob, "fraction of docs with a unique code suffix");
    app.add_option("--out", out, "output path")->required();
    CLI11_PARSE(app, argc, argv);

    const auto docs = duolearn::generate_corpus(cfg);
    std::ofstream f(out);
    if (!f) {
        std::cerr << "cannot write " << out << "\n";
        return 3;
    }
    size_t max_len = 0;
    for (const std::string& d : docs) {
        f << d << "\n";
        max_len = std::max(max_len, d.size());
    }
    std::cout << "wrote " << docs.size() << " docs to " << out << " (longest " << max_len
              << " bytes)\n";
    return 0;
}
