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

#include "dpasr/executor.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "dpasr/ctc.h"
#include "dpasr/status.h"

namespace dpasr {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
MapMat<T> Mat(Tensor<T>& t) {
  return MapMat<T>(t.raw(), t.dim(0), t.dim(1));
}
template <typename T>
CMapMat<T> Mat(const Tensor<T>& t) {
  return CMapMat<T>(t.raw(), t.dim(0), t.dim(1));
}

template <typename T>
inline T Sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
void MatMulForward(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb,
                   Tensor<T>* out) {
  auto A = Mat(a);
  auto B = Mat(b);
  auto C = Mat(*out);
  if (!ta && !tb) {
    C.noalias() = A * B;
  } else if (!ta && tb) {
    C.noalias() = A * B.transpose();
  } else if (ta && !tb) {
    C.noalias() = A.transpose() * B;
  } else {
    C.noalias() = A.transpose() * B.transpose();
  }
}

// Row-wise statistics of GroupStandardize. Accumulated in double so the
// float and double paths see the same algorithm.
template <typename T>
void GroupStats(const T* row, int64_t width, double eps, double* mean,
                double* inv_std) {
  double s = 0.0;
  for (int64_t i = 0; i < width; ++i) s += row[i];
  const double mu = s / static_cast<double>(width);
  double v = 0.0;
  for (int64_t i = 0; i < width; ++i) {
    const double d = row[i] - mu;
    v += d * d;
  }
  v /= static_cast<double>(width);
  *mean = mu;
  *inv_std = 1.0 / std::sqrt(v + eps);
}

template <typename T>
Tensor<T> Evaluate(const Graph& graph, const Node& n, NodeId id,
                   const std::vector<const Tensor<T>*>& view) {
  auto in = [&](size_t k) -> const Tensor<T>& { return *view[n.inputs[k]]; };
  Tensor<T> out(n.shape);
  T* o = out.raw();
  switch (n.op) {
    case OpKind::kInput:
      break;
    case OpKind::kConstant: {
      const TensorD& c = *n.constant;
      for (int64_t i = 0; i < c.size(); ++i) o[i] = static_cast<T>(c[i]);
      break;
    }
    case OpKind::kMatMul:
      MatMulForward(in(0), in(1), n.ints[0] != 0, n.ints[1] != 0, &out);
      break;
    case OpKind::kAdd: {
      const T* a = in(0).raw();
      const T* b = in(1).raw();
      for (int64_t i = 0; i < out.size(); ++i) o[i] = a[i] + b[i];
      break;
    }
    case OpKind::kMul: {
      const T* a = in(0).raw();
      const T* b = in(1).raw();
      for (int64_t i = 0; i < out.size(); ++i) o[i] = a[i] * b[i];
      break;
    }
    case OpKind::kScale: {
      const T f = static_cast<T>(n.scalar);
      const T* a = in(0).raw();
      for (int64_t i = 0; i < out.size(); ++i) o[i] = a[i] * f;
      break;
    }
    case OpKind::kBiasAdd:
    case OpKind::kMulCols: {
      const T* x = in(0).raw();
      const T* b = in(1).raw();
      const int64_t rows = n.shape[0], cols = n.shape[1];
      const bool add = n.op == OpKind::kBiasAdd;
      for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* orow = o + r * cols;
        if (add) {
          for (int64_t c = 0; c < cols; ++c) orow[c] = xr[c] + b[c];
        } else {
          for (int64_t c = 0; c < cols; ++c) orow[c] = xr[c] * b[c];
        }
      }
      break;
    }
    case OpKind::kSoftmax:
    case OpKind::kLogSoftmax: {
      const T* x = in(0).raw();
      const int64_t rows = n.shape[0], cols = n.shape[1];
      for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* orow = o + r * cols;
        const T mx = *std::max_element(xr, xr + cols);
        T sum = 0;
        for (int64_t c = 0; c < cols; ++c) {
          orow[c] = std::exp(xr[c] - mx);
          sum += orow[c];
        }
        if (n.op == OpKind::kSoftmax) {
          const T inv = T(1) / sum;
          for (int64_t c = 0; c < cols; ++c) orow[c] *= inv;
        } else {
          const T lse = mx + std::log(sum);
          for (int64_t c = 0; c < cols; ++c) orow[c] = xr[c] - lse;
        }
      }
      break;
    }
    case OpKind::kRelu: {
      const T* a = in(0).raw();
      for (int64_t i = 0; i < out.size(); ++i) o[i] = a[i] > T(0) ? a[i] : T(0);
      break;
    }
    case OpKind::kSwish: {
      const T* a = in(0).raw();
      for (int64_t i = 0; i < out.size(); ++i) o[i] = a[i] * Sigmoid(a[i]);
      break;
    }
    case OpKind::kGroupStandardize: {
      const T* x = in(0).raw();
      const int64_t rows = n.shape[0], cols = n.shape[1];
      const int64_t width = cols / n.ints[0];
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t g = 0; g < n.ints[0]; ++g) {
          const T* xg = x + r * cols + g * width;
          T* og = o + r * cols + g * width;
          double mu, inv;
          GroupStats(xg, width, n.scalar, &mu, &inv);
          for (int64_t i = 0; i < width; ++i) {
            og[i] = static_cast<T>((xg[i] - mu) * inv);
          }
        }
      }
      break;
    }
    case OpKind::kSum: {
      double s = 0.0;
      for (T v : in(0).data()) s += v;
      o[0] = static_cast<T>(s);
      break;
    }
    case OpKind::kReshape:
      std::memcpy(o, in(0).raw(), sizeof(T) * out.size());
      break;
    case OpKind::kTranspose:
      Mat(out) = Mat(in(0)).transpose();
      break;
    case OpKind::kSliceRows: {
      const int64_t cols = n.shape[1];
      std::memcpy(o, in(0).raw() + n.ints[0] * cols,
                  sizeof(T) * out.size());
      break;
    }
    case OpKind::kSliceCols: {
      const Tensor<T>& x = in(0);
      const int64_t src_cols = x.dim(1), cols = n.shape[1];
      for (int64_t r = 0; r < n.shape[0]; ++r) {
        std::memcpy(o + r * cols, x.raw() + r * src_cols + n.ints[0],
                    sizeof(T) * cols);
      }
      break;
    }
    case OpKind::kConcatRows: {
      T* dst = o;
      for (size_t k = 0; k < n.inputs.size(); ++k) {
        std::memcpy(dst, in(k).raw(), sizeof(T) * in(k).size());
        dst += in(k).size();
      }
      break;
    }
    case OpKind::kConcatCols: {
      const int64_t cols = n.shape[1];
      int64_t offset = 0;
      for (size_t k = 0; k < n.inputs.size(); ++k) {
        const Tensor<T>& p = in(k);
        const int64_t pc = p.dim(1);
        for (int64_t r = 0; r < n.shape[0]; ++r) {
          std::memcpy(o + r * cols + offset, p.raw() + r * pc, sizeof(T) * pc);
        }
        offset += pc;
      }
      break;
    }
    case OpKind::kGather: {
      const int64_t cols = n.shape[1];
      for (size_t r = 0; r < n.ints.size(); ++r) {
        std::memcpy(o + r * cols, in(0).raw() + n.ints[r] * cols,
                    sizeof(T) * cols);
      }
      break;
    }
    case OpKind::kCtcLoss: {
      std::vector<int32_t> labels(n.ints.begin(), n.ints.end());
      o[0] = static_cast<T>(CtcLoss(in(0), labels));
      break;
    }
  }
  (void)graph;
  (void)id;
  return out;
}

template <typename T>
void Accumulate(Tensor<T>* dst, bool* has, const Tensor<T>& src) {
  if (!*has) {
    *dst = src;
    *has = true;
    return;
  }
  T* d = dst->raw();
  const T* s = src.raw();
  for (int64_t i = 0; i < dst->size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Values<T> Forward(const Graph& graph, const Feeds<T>& feeds) {
  Values<T> values;
  const int32_t count = graph.size();
  values.owned_.resize(count);
  values.view_.resize(count, nullptr);
  for (NodeId id = 0; id < count; ++id) {
    const Node& n = graph.node(id);
    if (n.op == OpKind::kInput) {
      auto it = feeds.find(n.input_name);
      if (it == feeds.end() || it->second == nullptr) {
        throw InvalidArgumentError(graph.Describe(id) + ": input not bound");
      }
      if (it->second->shape() != n.shape) {
        throw ShapeError(graph.Describe(id) + ": bound tensor has shape " +
                         ShapeString(it->second->shape()) + ", expected " +
                         ShapeString(n.shape));
      }
      values.view_[id] = it->second;
      continue;
    }
    values.owned_[id] = Evaluate<T>(graph, n, id, values.view_);
    values.view_[id] = &values.owned_[id];
  }
  return values;
}

template <typename T>
TensorMap<T> Outputs(const Graph& graph, const Values<T>& values) {
  TensorMap<T> out;
  for (const auto& [name, id] : graph.outputs()) out.emplace(name, values[id]);
  return out;
}

template <typename T>
TensorMap<T> Backward(const Graph& graph, const Values<T>& values,
                      NodeId loss) {
  if (loss < 0 || loss >= graph.size()) {
    throw InvalidArgumentError("backward: unknown loss node");
  }
  if (NumElements(graph.shape(loss)) != 1) {
    throw InvalidArgumentError("backward: " + graph.Describe(loss) +
                               " is not scalar (shape " +
                               ShapeString(graph.shape(loss)) + ")");
  }
  const int32_t count = loss + 1;
  std::vector<char> needs(count, 0);
  for (NodeId id = 0; id < count; ++id) {
    const Node& n = graph.node(id);
    if (n.op == OpKind::kInput) {
      needs[id] = n.requires_grad;
    } else {
      for (NodeId in : n.inputs) needs[id] |= needs[in];
    }
  }
  std::vector<Tensor<T>> grad(count);
  std::vector<bool> has(count, false);
  grad[loss] = Tensor<T>::Filled(graph.shape(loss), T(1));
  has[loss] = true;

  for (NodeId id = loss; id >= 0; --id) {
    if (!has[id] || !needs[id]) continue;
    const Node& n = graph.node(id);
    if (n.op == OpKind::kInput || n.op == OpKind::kConstant) continue;
    const Tensor<T>& g = grad[id];
    auto x = [&](size_t k) -> const Tensor<T>& { return values[n.inputs[k]]; };
    auto need = [&](size_t k) { return needs[n.inputs[k]] != 0; };
    auto push = [&](size_t k, const Tensor<T>& d) {
      bool h = has[n.inputs[k]];
      Accumulate(&grad[n.inputs[k]], &h, d);
      has[n.inputs[k]] = h;
    };
    const Tensor<T>& y = values[id];

    switch (n.op) {
      case OpKind::kInput:
      case OpKind::kConstant:
        break;
      case OpKind::kMatMul: {
        const bool ta = n.ints[0] != 0, tb = n.ints[1] != 0;
        auto A = Mat(x(0));
        auto B = Mat(x(1));
        auto G = Mat(g);
        if (need(0)) {
          Tensor<T> da(x(0).shape());
          auto D = Mat(da);
          if (!ta && !tb) D.noalias() = G * B.transpose();
          if (!ta && tb) D.noalias() = G * B;
          if (ta && !tb) D.noalias() = B * G.transpose();
          if (ta && tb) D.noalias() = B.transpose() * G.transpose();
          push(0, da);
        }
        if (need(1)) {
          Tensor<T> db(x(1).shape());
          auto D = Mat(db);
          if (!ta && !tb) D.noalias() = A.transpose() * G;
          if (!ta && tb) D.noalias() = G.transpose() * A;
          if (ta && !tb) D.noalias() = A * G;
          if (ta && tb) D.noalias() = G.transpose() * A.transpose();
          push(1, db);
        }
        break;
      }
      case OpKind::kAdd:
        if (need(0)) push(0, g);
        if (need(1)) push(1, g);
        break;
      case OpKind::kMul: {
        for (size_t k = 0; k < 2; ++k) {
          if (!need(k)) continue;
          const Tensor<T>& other = x(1 - k);
          Tensor<T> d(g.shape());
          for (int64_t i = 0; i < d.size(); ++i) d[i] = g[i] * other[i];
          push(k, d);
        }
        break;
      }
      case OpKind::kScale: {
        if (!need(0)) break;
        const T f = static_cast<T>(n.scalar);
        Tensor<T> d(g.shape());
        for (int64_t i = 0; i < d.size(); ++i) d[i] = g[i] * f;
        push(0, d);
        break;
      }
      case OpKind::kBiasAdd: {
        if (need(0)) push(0, g);
        if (need(1)) {
          const int64_t rows = g.dim(0), cols = g.dim(1);
          Tensor<T> db({cols});
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) db[c] += g[r * cols + c];
          }
          push(1, db);
        }
        break;
      }
      case OpKind::kMulCols: {
        const int64_t rows = g.dim(0), cols = g.dim(1);
        const Tensor<T>& xs = x(0);
        const Tensor<T>& gs = x(1);
        if (need(0)) {
          Tensor<T> dx(g.shape());
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) {
              dx[r * cols + c] = g[r * cols + c] * gs[c];
            }
          }
          push(0, dx);
        }
        if (need(1)) {
          Tensor<T> dg({cols});
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) {
              dg[c] += g[r * cols + c] * xs[r * cols + c];
            }
          }
          push(1, dg);
        }
        break;
      }
      case OpKind::kSoftmax: {
        if (!need(0)) break;
        const int64_t rows = g.dim(0), cols = g.dim(1);
        Tensor<T> dx(g.shape());
        for (int64_t r = 0; r < rows; ++r) {
          const T* yr = y.raw() + r * cols;
          const T* gr = g.raw() + r * cols;
          T dot = 0;
          for (int64_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
          for (int64_t c = 0; c < cols; ++c) {
            dx[r * cols + c] = yr[c] * (gr[c] - dot);
          }
        }
        push(0, dx);
        break;
      }
      case OpKind::kLogSoftmax: {
        if (!need(0)) break;
        const int64_t rows = g.dim(0), cols = g.dim(1);
        Tensor<T> dx(g.shape());
        for (int64_t r = 0; r < rows; ++r) {
          const T* yr = y.raw() + r * cols;
          const T* gr = g.raw() + r * cols;
          T total = 0;
          for (int64_t c = 0; c < cols; ++c) total += gr[c];
          for (int64_t c = 0; c < cols; ++c) {
            dx[r * cols + c] = gr[c] - std::exp(yr[c]) * total;
          }
        }
        push(0, dx);
        break;
      }
      case OpKind::kRelu: {
        if (!need(0)) break;
        Tensor<T> dx(g.shape());
        const Tensor<T>& xs = x(0);
        for (int64_t i = 0; i < dx.size(); ++i) {
          dx[i] = xs[i] > T(0) ? g[i] : T(0);
        }
        push(0, dx);
        break;
      }
      case OpKind::kSwish: {
        if (!need(0)) break;
        Tensor<T> dx(g.shape());
        const Tensor<T>& xs = x(0);
        for (int64_t i = 0; i < dx.size(); ++i) {
          const T s = Sigmoid(xs[i]);
          dx[i] = g[i] * (s + xs[i] * s * (T(1) - s));
        }
        push(0, dx);
        break;
      }
      case OpKind::kGroupStandardize: {
        if (!need(0)) break;
        const int64_t rows = g.dim(0), cols = g.dim(1);
        const int64_t width = cols / n.ints[0];
        const Tensor<T>& xs = x(0);
        Tensor<T> dx(g.shape());
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t grp = 0; grp < n.ints[0]; ++grp) {
            const int64_t base = r * cols + grp * width;
            double mu, inv;
            GroupStats(xs.raw() + base, width, n.scalar, &mu, &inv);
            double mean_g = 0.0, mean_gy = 0.0;
            for (int64_t i = 0; i < width; ++i) {
              const double yi = (xs[base + i] - mu) * inv;
              mean_g += g[base + i];
              mean_gy += g[base + i] * yi;
            }
            mean_g /= static_cast<double>(width);
            mean_gy /= static_cast<double>(width);
            for (int64_t i = 0; i < width; ++i) {
              const double yi = (xs[base + i] - mu) * inv;
              dx[base + i] =
                  static_cast<T>(inv * (g[base + i] - mean_g - yi * mean_gy));
            }
          }
        }
        push(0, dx);
        break;
      }
      case OpKind::kSum: {
        if (!need(0)) break;
        push(0, Tensor<T>::Filled(x(0).shape(), g[0]));
        break;
      }
      case OpKind::kReshape:
        if (need(0)) push(0, g.Reshaped(x(0).shape()));
        break;
      case OpKind::kTranspose: {
        if (!need(0)) break;
        Tensor<T> dx(x(0).shape());
        Mat(dx) = Mat(g).transpose();
        push(0, dx);
        break;
      }
      case OpKind::kSliceRows: {
        if (!need(0)) break;
        Tensor<T> dx(x(0).shape());
        std::memcpy(dx.raw() + n.ints[0] * g.dim(1), g.raw(),
                    sizeof(T) * g.size());
        push(0, dx);
        break;
      }
      case OpKind::kSliceCols: {
        if (!need(0)) break;
        Tensor<T> dx(x(0).shape());
        const int64_t src_cols = dx.dim(1), cols = g.dim(1);
        for (int64_t r = 0; r < g.dim(0); ++r) {
          std::memcpy(dx.raw() + r * src_cols + n.ints[0], g.raw() + r * cols,
                      sizeof(T) * cols);
        }
        push(0, dx);
        break;
      }
      case OpKind::kConcatRows: {
        const T* src = g.raw();
        for (size_t k = 0; k < n.inputs.size(); ++k) {
          const int64_t len = x(k).size();
          if (need(k)) {
            Tensor<T> d(x(k).shape());
            std::memcpy(d.raw(), src, sizeof(T) * len);
            push(k, d);
          }
          src += len;
        }
        break;
      }
      case OpKind::kConcatCols: {
        const int64_t cols = g.dim(1);
        int64_t offset = 0;
        for (size_t k = 0; k < n.inputs.size(); ++k) {
          const int64_t pc = x(k).dim(1);
          if (need(k)) {
            Tensor<T> d(x(k).shape());
            for (int64_t r = 0; r < g.dim(0); ++r) {
              std::memcpy(d.raw() + r * pc, g.raw() + r * cols + offset,
                          sizeof(T) * pc);
            }
            push(k, d);
          }
          offset += pc;
        }
        break;
      }
      case OpKind::kGather: {
        if (!need(0)) break;
        Tensor<T> dt(x(0).shape());
        const int64_t cols = g.dim(1);
        for (size_t r = 0; r < n.ints.size(); ++r) {
          T* dst = dt.raw() + n.ints[r] * cols;
          const T* src = g.raw() + r * cols;
          for (int64_t c = 0; c < cols; ++c) dst[c] += src[c];
        }
        push(0, dt);
        break;
      }
      case OpKind::kCtcLoss: {
        if (!need(0)) break;
        std::vector<int32_t> labels(n.ints.begin(), n.ints.end());
        Tensor<T> d;
        CtcLossAndGrad(x(0), labels, &d);
        const T scale = g[0];
        for (auto& v : d.data()) v *= scale;
        push(0, d);
        break;
      }
    }
  }

  TensorMap<T> out;
  for (NodeId id = 0; id < count; ++id) {
    const Node& n = graph.node(id);
    if (n.op != OpKind::kInput || !n.requires_grad) continue;
    if (has[id]) {
      out.emplace(n.input_name, std::move(grad[id]));
    } else {
      out.emplace(n.input_name, Tensor<T>(n.shape));
    }
  }
  // Inputs created after the loss node cannot influence it.
  for (NodeId id = count; id < graph.size(); ++id) {
    const Node& n = graph.node(id);
    if (n.op == OpKind::kInput && n.requires_grad) {
      out.emplace(n.input_name, Tensor<T>(n.shape));
    }
  }
  return out;
}

template Values<float> Forward<float>(const Graph&, const Feeds<float>&);
template Values<double> Forward<double>(const Graph&, const Feeds<double>&);
template TensorMap<float> Outputs<float>(const Graph&, const Values<float>&);
template TensorMap<double> Outputs<double>(const Graph&,
                                           const Values<double>&);
template TensorMap<float> Backward<float>(const Graph&, const Values<float>&,
                                          NodeId);
template TensorMap<double> Backward<double>(const Graph&,
                                            const Values<double>&, NodeId);

}  // namespace dpasr
