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

#include "dpasr/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpasr/status.h"

namespace dpasr {
namespace {

double LogAddExp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log A_alpha for integer alpha and 0 < q < 1.
double LogMomentInteger(double q, double sigma, int alpha) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double log_binom = 0.0;  // log C(alpha, 0)
  double acc = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= alpha; ++k) {
    if (k > 0) {
      log_binom += std::log(static_cast<double>(alpha - k + 1)) -
                   std::log(static_cast<double>(k));
    }
    const double term = log_binom + (alpha - k) * log_1mq + k * log_q +
                        (static_cast<double>(k) * k - k) / (2.0 * sigma * sigma);
    acc = LogAddExp(acc, term);
  }
  return acc;
}

}  // namespace

std::vector<int> DefaultOrders() {
  std::vector<int> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  orders.push_back(128);
  orders.push_back(256);
  return orders;
}

std::vector<double> RdpStep(double q, double sigma,
                            const std::vector<int>& orders) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw InvalidArgumentError("rdp: sampling rate must be in [0, 1], got " +
                               std::to_string(q));
  }
  if (!(sigma > 0.0)) {
    throw InvalidArgumentError(
        "rdp: noise multiplier must be > 0 (sigma = 0 has unbounded privacy "
        "loss)");
  }
  std::vector<double> rdp(orders.size(), 0.0);
  for (size_t i = 0; i < orders.size(); ++i) {
    const int alpha = orders[i];
    if (alpha < 2) throw InvalidArgumentError("rdp: orders must be >= 2");
    if (q == 0.0) {
      rdp[i] = 0.0;
    } else if (q == 1.0) {
      rdp[i] = alpha / (2.0 * sigma * sigma);
    } else {
      // Rounding can push log A a hair below zero when A ~ 1.
      rdp[i] = std::max(0.0, LogMomentInteger(q, sigma, alpha) / (alpha - 1));
    }
  }
  return rdp;
}

void to_json(nlohmann::json& j, const PrivacySpent& p) {
  j = {{"epsilon", p.epsilon},
       {"delta", p.delta},
       {"achieving_order", p.achieving_order}};
}

PrivacySpent RdpToDp(const std::vector<double>& rdp,
                     const std::vector<int>& orders, double delta) {
  if (orders.empty()) throw InvalidArgumentError("rdp_to_dp: no orders");
  if (rdp.size() != orders.size()) {
    throw InvalidArgumentError("rdp_to_dp: rdp and orders differ in length");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw InvalidArgumentError("rdp_to_dp: delta must be in (0, 1)");
  }
  PrivacySpent best;
  best.epsilon = std::numeric_limits<double>::infinity();
  best.delta = delta;
  const double log_inv_delta = -std::log(delta);
  for (size_t i = 0; i < orders.size(); ++i) {
    const double eps = rdp[i] + log_inv_delta / (orders[i] - 1);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.achieving_order = orders[i];
    }
  }
  return best;
}

PrivacySpent ComputeEpsilon(double q, double sigma, int64_t steps,
                            double delta, const std::vector<int>& orders) {
  if (steps < 0) throw InvalidArgumentError("compute_epsilon: steps < 0");
  std::vector<double> rdp = RdpStep(q, sigma, orders);
  for (double& r : rdp) r *= static_cast<double>(steps);
  return RdpToDp(rdp, orders, delta);
}

double CalibrateSigma(double q, int64_t steps, double target_epsilon,
                      double target_delta, const std::vector<int>& orders) {
  if (!(target_epsilon > 0.0)) {
    throw InvalidArgumentError("calibrate: target epsilon must be > 0");
  }
  if (std::isinf(target_epsilon)) return kSigmaSearchMin;
  auto eps = [&](double sigma) {
    return ComputeEpsilon(q, sigma, steps, target_delta, orders).epsilon;
  };
  double hi = kSigmaSearchMax;
  if (eps(hi) > target_epsilon) {
    throw InvalidArgumentError(
        "calibrate: epsilon " + std::to_string(target_epsilon) +
        " is unreachable with sigma <= " + std::to_string(kSigmaSearchMax) +
        " (q=" + std::to_string(q) + ", steps=" + std::to_string(steps) + ")");
  }
  double lo = kSigmaSearchMin;
  if (eps(lo) <= target_epsilon) return lo;
  // Invariant: eps(lo) > target >= eps(hi).
  const double floor_eps = target_epsilon * (1.0 - kCalibrationRelTol);
  for (int iter = 0; iter < 200; ++iter) {
    if (eps(hi) >= floor_eps) break;
    const double mid = 0.5 * (lo + hi);
    if (eps(mid) > target_epsilon) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

PrivacyLedger::PrivacyLedger(double q, double noise_multiplier,
                             std::vector<int> orders)
    : q_(q), sigma_(noise_multiplier), orders_(std::move(orders)) {
  per_step_ = RdpStep(q_, sigma_, orders_);
}

std::vector<double> PrivacyLedger::Rdp() const {
  std::vector<double> r(per_step_.size());
  for (size_t i = 0; i < r.size(); ++i) {
    r[i] = static_cast<double>(steps_) * per_step_[i];
  }
  return r;
}

PrivacySpent PrivacyLedger::Spent(double delta) const {
  return RdpToDp(Rdp(), orders_, delta);
}

}  // namespace dpasr
