//
// Copyright 2026 The dpasr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPASR_TENSOR_H_
#define DPASR_TENSOR_H_

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dpasr/rng.h"

namespace dpasr {

using Shape = std::vector<int64_t>;

int64_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Dense row-major tensor. float is the training type; double is used by the
// gradient-check tests.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);

  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor Filled(Shape shape, T value);
  static Tensor FromList(Shape shape, std::initializer_list<T> values);

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t axis) const { return shape_.at(axis); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[i]; }
  const T& operator[](int64_t i) const { return data_[i]; }
  // Rank-2 access.
  T& at(int64_t r, int64_t c) { return data_[r * shape_[1] + c]; }
  const T& at(int64_t r, int64_t c) const { return data_[r * shape_[1] + c]; }

  // Same data, new shape. Element counts must agree.
  Tensor Reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> Cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool AllFinite() const;
  // Bitwise equality of shape and contents.
  bool BitEqual(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// i.i.d. N(0, sigma^2) entries drawn in row-major order from `rng`.
// Throws InvalidArgumentError for negative sigma.
template <typename T>
Tensor<T> GaussianInit(const Shape& shape, double sigma, Rng& rng);

// Uniform in [-limit, limit).
template <typename T>
Tensor<T> UniformInit(const Shape& shape, double limit, Rng& rng);

template <typename T>
double SquaredNorm(const Tensor<T>& t);

template <typename T>
double MaxAbsDiff(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace dpasr

#endif  // DPASR_TENSOR_H_
