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

#ifndef DPASR_ACCOUNTANT_H_
#define DPASR_ACCOUNTANT_H_

#include <cstdint>
#include <vector>

#include "json.hpp"

namespace dpasr {

// Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//
// A mechanism is (alpha, rho)-RDP if the order-alpha Renyi divergence between
// its outputs on neighbouring datasets is at most rho. RDP composes by
// addition, and (alpha, rho)-RDP implies (rho + log(1/delta)/(alpha-1),
// delta)-DP. Epsilons reported here assume Poisson sampling with rate q; a
// run that uses fixed-size shuffled batches is accounted as if it were
// Poisson, which is the usual convention but not a proof.

// Integer orders 2..64 plus 128 and 256.
std::vector<int> DefaultOrders();

// Per-step RDP of the subsampled Gaussian mechanism with sampling rate q and
// noise multiplier sigma (noise std / L2 sensitivity), one value per order.
//
// q = 1 gives the plain Gaussian mechanism, alpha / (2 sigma^2). For q < 1
// the integer-order expansion
//
//   A_alpha = sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp((k^2 - k) / (2 sigma^2))
//   rho     = log(A_alpha) / (alpha - 1)
//
// is evaluated in the log domain. q = 0 yields zeros. Throws
// InvalidArgumentError for sigma <= 0, q outside [0, 1] or an order < 2.
std::vector<double> RdpStep(double q, double sigma,
                            const std::vector<int>& orders);

struct PrivacySpent {
  double epsilon = 0.0;
  double delta = 0.0;
  int achieving_order = 0;
};

void to_json(nlohmann::json& j, const PrivacySpent& p);

// eps = min over orders of rdp(alpha) + log(1/delta) / (alpha - 1).
// Throws InvalidArgumentError for an empty order list, mismatched sizes or
// delta outside (0, 1).
PrivacySpent RdpToDp(const std::vector<double>& rdp,
                     const std::vector<int>& orders, double delta);

// steps-fold composition of RdpStep, converted with RdpToDp.
PrivacySpent ComputeEpsilon(double q, double sigma, int64_t steps,
                            double delta,
                            const std::vector<int>& orders = DefaultOrders());

inline constexpr double kSigmaSearchMin = 1e-2;
inline constexpr double kSigmaSearchMax = 1e2;
inline constexpr double kCalibrationRelTol = 1e-3;

// Noise multiplier in [kSigmaSearchMin, kSigmaSearchMax] whose epsilon is
// within kCalibrationRelTol * target of the target, from the side that does
// not exceed it. Bisection on sigma, relying on epsilon decreasing in sigma.
// An infinite target returns kSigmaSearchMin. Throws InvalidArgumentError
// when the target cannot be met inside the bracket.
double CalibrateSigma(double q, int64_t steps, double target_epsilon,
                      double target_delta,
                      const std::vector<int>& orders = DefaultOrders());

// Running privacy ledger for one training run. The accumulated RDP is always
// steps_taken * per_step_rdp, evaluated as a single product per order.
class PrivacyLedger {
 public:
  PrivacyLedger(double q, double noise_multiplier,
                std::vector<int> orders = DefaultOrders());

  void RecordStep() { ++steps_; }
  void RecordSteps(int64_t n) { steps_ += n; }

  int64_t steps_taken() const { return steps_; }
  double q() const { return q_; }
  double noise_multiplier() const { return sigma_; }
  const std::vector<int>& orders() const { return orders_; }
  const std::vector<double>& per_step_rdp() const { return per_step_; }

  std::vector<double> Rdp() const;
  PrivacySpent Spent(double delta) const;

 private:
  double q_;
  double sigma_;
  std::vector<int> orders_;
  std::vector<double> per_step_;
  int64_t steps_ = 0;
};

}  // namespace dpasr

#endif  // DPASR_ACCOUNTANT_H_
