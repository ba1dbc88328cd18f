// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace duolearn {

// Dense row-major tensor of 64-bit reals. Training math is double throughout;
// narrower storage exists only inside checkpoint files.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor scalar(double v);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    // 2-D conveniences.
    int64_t rows() const { return shape_[0]; }
    int64_t cols() const { return shape_[1]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
    double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

    void fill(double v);
    void zero() { fill(0.0); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

  private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

}  // namespace duolearn
