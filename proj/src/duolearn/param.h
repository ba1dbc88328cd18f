// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "duolearn/tensor.h"

namespace duolearn {

// A named trainable tensor with its gradient accumulator.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape());
    }
};

}  // namespace duolearn
