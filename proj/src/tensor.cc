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

#include "dpasr/tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dpasr/status.h"

namespace dpasr {

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + ShapeString(shape));
    n *= d;
  }
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(NumElements(shape_), T(0)) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<int64_t>(data_.size()) != NumElements(shape_)) {
    throw ShapeError("tensor of shape " + ShapeString(shape_) + " given " +
                     std::to_string(data_.size()) + " values");
  }
}

template <typename T>
Tensor<T> Tensor<T>::Filled(Shape shape, T value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::FromList(Shape shape, std::initializer_list<T> values) {
  return Tensor(std::move(shape), std::vector<T>(values));
}

template <typename T>
Tensor<T> Tensor<T>::Reshaped(Shape shape) const {
  if (NumElements(shape) != size()) {
    throw ShapeError("cannot reshape " + ShapeString(shape_) + " to " +
                     ShapeString(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
bool Tensor<T>::BitEqual(const Tensor& other) const {
  return shape_ == other.shape_ &&
         std::memcmp(data_.data(), other.data_.data(),
                     data_.size() * sizeof(T)) == 0;
}

template <typename T>
Tensor<T> GaussianInit(const Shape& shape, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) {
    throw InvalidArgumentError("gaussian init: sigma must be >= 0, got " +
                               std::to_string(sigma));
  }
  Tensor<T> t(shape);
  if (sigma == 0.0) return t;
  for (auto& v : t.data()) v = static_cast<T>(sigma * rng.Normal());
  return t;
}

template <typename T>
Tensor<T> UniformInit(const Shape& shape, double limit, Rng& rng) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) {
    v = static_cast<T>((2.0 * rng.Uniform() - 1.0) * limit);
  }
  return t;
}

template <typename T>
double SquaredNorm(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.data()) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

template <typename T>
double MaxAbsDiff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("MaxAbsDiff: " + ShapeString(a.shape()) + " vs " +
                     ShapeString(b.shape()));
  }
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) -
                             static_cast<double>(b[i])));
  }
  return m;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> GaussianInit<float>(const Shape&, double, Rng&);
template Tensor<double> GaussianInit<double>(const Shape&, double, Rng&);
template Tensor<float> UniformInit<float>(const Shape&, double, Rng&);
template Tensor<double> UniformInit<double>(const Shape&, double, Rng&);
template double SquaredNorm<float>(const Tensor<float>&);
template double SquaredNorm<double>(const Tensor<double>&);
template double MaxAbsDiff<float>(const Tensor<float>&, const Tensor<float>&);
template double MaxAbsDiff<double>(const Tensor<double>&,
                                   const Tensor<double>&);

}  // namespace dpasr
