// SPDX-License-Identifier: Apache-2.0
#include "duolearn/config_file.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "duolearn/errors.h"

namespace duolearn {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
    ConfigFile cfg;
    cfg.origin_ = origin;
    cfg.text_ = text;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        lineno += 1;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error(origin + ":" + std::to_string(lineno) + ": malformed section");
            section = trim(line.substr(1, line.size() - 2));
            cfg.values_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(origin + ":" + std::to_string(lineno) +
                               ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
        if (!cfg.values_[section].emplace(key, val).second)
            throw config_error(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                               key + "'");
    }
    return cfg;
}

std::string ConfigFile::field_name(const std::string& section, const std::string& key) const {
    return section.empty() ? key : "[" + section + "]." + key;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    const auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key) const {
    const auto s = values_.find(section);
    if (s == values_.end() || !s->second.count(key))
        throw config_error(origin_ + ": missing required field " + field_name(section, key));
    return s->second.at(key);
}

std::string ConfigFile::get_string_or(const std::string& section, const std::string& key,
                                      const std::string& fallback) const {
    return has(section, key) ? get_string(section, key) : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key) const {
    const std::string raw = get_string(section, key);
    try {
        size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw config_error(origin_ + ": field " + field_name(section, key) +
                           ": expected a number, got '" + raw + "'");
    }
}

double ConfigFile::get_double_or(const std::string& section, const std::string& key,
                                 double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

int64_t ConfigFile::get_int(const std::string& section, const std::string& key) const {
    const std::string raw = get_string(section, key);
    try {
        size_t used = 0;
        const int64_t v = std::stoll(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw config_error(origin_ + ": field " + field_name(section, key) +
                           ": expected an integer, got '" + raw + "'");
    }
}

int64_t ConfigFile::get_int_or(const std::string& section, const std::string& key,
                               int64_t fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

uint64_t ConfigFile::get_uint_or(const std::string& section, const std::string& key,
                                 uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = get_string(section, key);
    try {
        size_t used = 0;
        const uint64_t v = std::stoull(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw config_error(origin_ + ": field " + field_name(section, key) +
                           ": expected an unsigned integer, got '" + raw + "'");
    }
}

bool ConfigFile::get_bool_or(const std::string& section, const std::string& key,
                             bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = get_string(section, key);
    if (raw == "1" || raw == "true" || raw == "yes") return true;
    if (raw == "0" || raw == "false" || raw == "no") return false;
    throw config_error(origin_ + ": field " + field_name(section, key) +
                       ": expected a boolean, got '" + raw + "'");
}

std::vector<double> ConfigFile::get_doubles(const std::string& section,
                                            const std::string& key) const {
    std::istringstream ss(get_string(section, key));
    std::vector<double> out;
    double v;
    while (ss >> v) out.push_back(v);
    if (out.empty())
        throw config_error(origin_ + ": field " + field_name(section, key) +
                           ": expected a list of numbers");
    return out;
}

std::vector<std::string> ConfigFile::sections() const {
    std::vector<std::string> out;
    for (const auto& [s, kv] : values_)
        if (!s.empty()) out.push_back(s);
    return out;
}

std::vector<std::string> ConfigFile::keys(const std::string& section) const {
    std::vector<std::string> out;
    const auto s = values_.find(section);
    if (s != values_.end())
        for (const auto& [k, v] : s->second) out.push_back(k);
    return out;
}

namespace {

void check_known_keys(const ConfigFile& cfg, const std::string& section,
                      const std::set<std::string>& known) {
    for (const std::string& k : cfg.keys(section))
        if (!known.count(k))
            throw config_error("unknown config field " +
                               (section.empty() ? k : "[" + section + "]." + k));
}

}  // namespace

TrainFileConfig train_config_from_file(const ConfigFile& cfg) {
    check_known_keys(cfg, "",
                     {"method", "run_id", "corpus", "manifest", "seq_len", "batch_size",
                      "epochs", "seed", "lr", "beta1", "beta2", "eps", "weight_decay",
                      "eval_every", "checkpoint_every", "eval_train_docs", "layers", "heads",
                      "width", "ffn_width", "init_seed", "init_checkpoint"});

    TrainFileConfig out;
    out.train.method = method_from_string(cfg.get_string("", "method"));
    out.run_id = cfg.get_string_or("", "run_id", "run");
    out.corpus = cfg.get_string_or("", "corpus", "");
    out.manifest = cfg.get_string_or("", "manifest", "");

    out.train.seq_len = cfg.get_int_or("", "seq_len", 128);
    out.train.batch_size = cfg.get_int_or("", "batch_size", 32);
    out.train.epochs = cfg.get_int_or("", "epochs", 20);
    out.train.seed = cfg.get_uint_or("", "seed", 1);
    out.train.optim.lr = cfg.get_double_or("", "lr", 3e-4);
    out.train.optim.beta1 = cfg.get_double_or("", "beta1", 0.9);
    out.train.optim.beta2 = cfg.get_double_or("", "beta2", 0.999);
    out.train.optim.eps = cfg.get_double_or("", "eps", 1e-8);
    out.train.optim.weight_decay = cfg.get_double_or("", "weight_decay", 0.0);
    out.train.eval_every_epochs = cfg.get_int_or("", "eval_every", 1);
    out.train.checkpoint_every_epochs = cfg.get_int_or("", "checkpoint_every", 0);
    out.train.eval_train_docs = cfg.get_int_or("", "eval_train_docs", 1024);
    out.train.init_checkpoint = cfg.get_string_or("", "init_checkpoint", "");

    out.train.model.layers = cfg.get_int_or("", "layers", 4);
    out.train.model.heads = cfg.get_int_or("", "heads", 4);
    out.train.model.width = cfg.get_int_or("", "width", 128);
    out.train.model.ffn_width = cfg.get_int_or("", "ffn_width", 512);
    out.train.model.max_seq = out.train.seq_len;
    out.train.model.init_seed = cfg.get_uint_or("", "init_seed", 42);
    // vocab_size is filled from the split manifest by the caller.

    const std::string method_block = to_string(out.train.method);
    for (const std::string& s : cfg.sections()) {
        const bool is_method_block = s == "duolearn" || s == "goldfish" || s == "dpsgd";
        if (is_method_block && s != method_block)
            throw config_error("config block [" + s + "] does not belong to method '" +
                               method_block + "'");
    }

    if (out.train.method == Method::duolearn) {
        check_known_keys(cfg, "duolearn",
                         {"k_hard", "k_mem", "tau", "alpha", "reference", "score_mode",
                          "log_selection", "selection_log_docs", "log_grad_cosine"});
        out.train.selection.k_hard = cfg.get_double_or("duolearn", "k_hard", 0.6);
        out.train.selection.k_mem = cfg.get_double_or("duolearn", "k_mem", 0.2);
        out.train.selection.tau = cfg.get_double_or("duolearn", "tau", 0.0);
        out.train.selection.alpha = cfg.get_double_or("duolearn", "alpha", 0.8);
        out.train.reference_checkpoint = cfg.get_string_or("duolearn", "reference", "");
        const std::string mode = cfg.get_string_or("duolearn", "score_mode", "reference");
        if (mode == "reference")
            out.train.score_mode = ScoreMode::reference;
        else if (mode == "train_loss_only")
            out.train.score_mode = ScoreMode::train_loss_only;
        else
            throw config_error("field [duolearn].score_mode: want reference|train_loss_only");
        out.train.log_selection = cfg.get_bool_or("duolearn", "log_selection", false);
        out.train.selection_log_docs = cfg.get_int_or("duolearn", "selection_log_docs", 32);
        out.train.log_grad_cosine = cfg.get_bool_or("duolearn", "log_grad_cosine", false);
    } else if (out.train.method == Method::goldfish) {
        check_known_keys(cfg, "goldfish", {"mask_rate", "key", "context_width"});
        out.train.goldfish.mask_rate = cfg.get_double_or("goldfish", "mask_rate", 0.25);
        out.train.goldfish.key = cfg.get_uint_or("goldfish", "key", 0);
        out.train.goldfish.context_width = cfg.get_int_or("goldfish", "context_width", 4);
    } else if (out.train.method == Method::dpsgd) {
        check_known_keys(cfg, "dpsgd", {"clip_norm", "noise_multiplier", "microbatch"});
        out.train.dp.clip_norm = cfg.get_double_or("dpsgd", "clip_norm", 1.0);
        out.train.dp.noise_multiplier = cfg.get_double_or("dpsgd", "noise_multiplier", 1.0);
        out.train.dp.microbatch = cfg.get_int_or("dpsgd", "microbatch", 1);
    }
    return out;
}

}  // namespace duolearn
