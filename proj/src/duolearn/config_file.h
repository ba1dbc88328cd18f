// SPDX-License-Identifier: Apache-2.0
//
// Flat key = value config files with one optional nested [block] per method.
// Unknown keys and blocks that do not belong to the configured method are
// rejected, so a config is valid iff it matches its method.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "duolearn/trainer.h"

namespace duolearn {

class ConfigFile {
  public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key) const;
    std::string get_string_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key, double fallback) const;
    int64_t get_int(const std::string& section, const std::string& key) const;
    int64_t get_int_or(const std::string& section, const std::string& key, int64_t fallback) const;
    uint64_t get_uint_or(const std::string& section, const std::string& key,
                         uint64_t fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const;

    std::vector<std::string> sections() const;
    std::vector<std::string> keys(const std::string& section) const;
    const std::string& text() const { return text_; }

  private:
    std::string field_name(const std::string& section, const std::string& key) const;
    std::string origin_;
    std::string text_;
    std::map<std::string, std::map<std::string, std::string>> values_;  // section -> key -> raw
};

// Train-command file schema: top-level run/corpus/model/optimizer keys, one
// method block. Checks that exactly the method's block is present.
struct TrainFileConfig {
    TrainConfig train;
    std::string run_id;
    std::string corpus;
    std::string manifest;
};

TrainFileConfig train_config_from_file(const ConfigFile& cfg);

}  // namespace duolearn
