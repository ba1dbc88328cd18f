// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: magic "DUOL", version, config block, training
// metadata, then named tensors (little-endian raw values). Checkpoints are
// the interchange unit between the train, attack and analyze commands; the
// default float64 payload round-trips parameters bit-exactly.
#pragma once

#include <cstdint>
#include <string>

#include "duolearn/model.h"

namespace duolearn {

struct CheckpointMeta {
    int64_t step = 0;
    std::string method = "init";
    uint64_t seed = 0;
};

enum class CheckpointDtype : uint8_t { f64 = 0, f32 = 1 };

void save_checkpoint(const CausalLM& model, const std::string& path,
                     const CheckpointMeta& meta = {},
                     CheckpointDtype dtype = CheckpointDtype::f64);

CausalLM load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr);

// Loads into a model of a known config; mismatched tensors raise a data_error
// naming the offending tensor.
void load_checkpoint_into(CausalLM& model, const std::string& path,
                          CheckpointMeta* meta_out = nullptr);

}  // namespace duolearn
