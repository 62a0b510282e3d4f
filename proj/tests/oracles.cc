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

#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "dpasr/executor.h"

namespace dpasr::oracle {

GradCheck CheckGradients(const Graph& graph, NodeId loss,
                         const std::map<std::string, TensorD>& inputs,
                         double h, double floor) {
  std::map<std::string, TensorD> work = inputs;
  auto feeds_of = [&]() {
    Feeds<double> f;
    for (auto& [name, t] : work) f[name] = &t;
    return f;
  };
  auto eval = [&]() { return Forward(graph, feeds_of())[loss].data()[0]; };

  const Values<double> values = Forward(graph, feeds_of());
  const TensorMap<double> analytic = Backward(graph, values, loss);

  GradCheck out;
  for (auto& [name, grad] : analytic) {
    TensorD& x = work.at(name);
    for (int64_t i = 0; i < x.size(); ++i) {
      const double x0 = x.data()[i];
      auto at = [&](double dx) {
        x.data()[i] = x0 + dx;
        return eval();
      };
      const double numeric =
          (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
      x.data()[i] = x0;
      const double a = grad.data()[i];
      const double err = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (err > out.max_rel_err) {
        out.max_rel_err = err;
        out.worst = name + "[" + std::to_string(i) + "] analytic=" +
                    std::to_string(a) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

GradCheck CheckGradientsRidders(const Graph& graph, NodeId loss,
                                const std::map<std::string, TensorD>& inputs,
                                double h0, double floor) {
  std::map<std::string, TensorD> work = inputs;
  auto eval = [&]() {
    Feeds<double> f;
    for (auto& [name, t] : work) f[name] = &t;
    return Forward(graph, f)[loss].data()[0];
  };
  Feeds<double> f0;
  for (auto& [name, t] : work) f0[name] = &t;
  const Values<double> values = Forward(graph, f0);
  const TensorMap<double> analytic = Backward(graph, values, loss);

  constexpr int kTab = 10;
  constexpr double kCon = 1.4, kCon2 = kCon * kCon;
  GradCheck out;
  for (auto& [name, grad] : analytic) {
    TensorD& x = work.at(name);
    for (int64_t i = 0; i < x.size(); ++i) {
      const double x0 = x.data()[i];
      auto central = [&](double h) {
        x.data()[i] = x0 + h;
        const double up = eval();
        x.data()[i] = x0 - h;
        const double down = eval();
        x.data()[i] = x0;
        return (up - down) / (2 * h);
      };
      double a[kTab][kTab];
      double h = h0, best = 0, err = std::numeric_limits<double>::infinity();
      a[0][0] = central(h);
      for (int k = 1; k < kTab; ++k) {
        h /= kCon;
        a[0][k] = central(h);
        double fac = kCon2;
        for (int j = 1; j <= k; ++j) {
          a[j][k] = (a[j - 1][k] * fac - a[j - 1][k - 1]) / (fac - 1);
          fac *= kCon2;
          const double e = std::max(std::abs(a[j][k] - a[j - 1][k]),
                                    std::abs(a[j][k] - a[j - 1][k - 1]));
          if (e <= err) {
            err = e;
            best = a[j][k];
          }
        }
        if (std::abs(a[k][k] - a[k - 1][k - 1]) >= 2 * err) break;
      }
      const double g = grad.data()[i];
      const double rel = std::abs(g - best) /
                         std::max({std::abs(g), std::abs(best), floor});
      ++out.checked;
      if (rel > out.max_rel_err) {
        out.max_rel_err = rel;
        out.worst = name + "[" + std::to_string(i) + "] analytic=" +
                    std::to_string(g) + " numeric=" + std::to_string(best);
      }
    }
  }
  return out;
}

double CtcBruteForce(const TensorD& log_probs, const std::vector<int32_t>& labels) {
  const int64_t T = log_probs.dim(0), V = log_probs.dim(1);
  int64_t paths = 1;
  for (int64_t t = 0; t < T; ++t) paths *= V;
  double total = 0.0;
  std::vector<int32_t> path(T);
  for (int64_t p = 0; p < paths; ++p) {
    int64_t code = p;
    double logp = 0.0;
    for (int64_t t = 0; t < T; ++t) {
      path[t] = static_cast<int32_t>(code % V);
      code /= V;
      logp += log_probs.at(t, path[t]);
    }
    std::vector<int32_t> collapsed;
    int32_t prev = -1;
    for (int32_t s : path) {
      if (s != prev && s != 0) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed == labels) total += std::exp(logp);
  }
  return -std::log(total);
}

EditCounts WordEdits(const std::vector<std::string>& ref,
                     const std::vector<std::string>& hyp) {
  // cost = (edits, -substitutions), compared lexicographically.
  struct Best {
    int64_t edits = 0, subs = 0, ins = 0, dels = 0;
    bool set = false;
  };
  const size_t R = ref.size(), H = hyp.size();
  std::vector<std::vector<Best>> memo(R + 1, std::vector<Best>(H + 1));
  std::function<Best(size_t, size_t)> go = [&](size_t i, size_t j) -> Best {
    Best& m = memo[i][j];
    if (m.set) return m;
    Best best;
    if (i == R) {
      best.edits = best.ins = static_cast<int64_t>(H - j);
    } else if (j == H) {
      best.edits = best.dels = static_cast<int64_t>(R - i);
    } else {
      auto better = [](const Best& a, const Best& b) {
        return a.edits != b.edits ? a.edits < b.edits : a.subs > b.subs;
      };
      Best diag = go(i + 1, j + 1);
      if (ref[i] != hyp[j]) {
        ++diag.edits;
        ++diag.subs;
      }
      Best del = go(i + 1, j);
      ++del.edits;
      ++del.dels;
      Best ins = go(i, j + 1);
      ++ins.edits;
      ++ins.ins;
      best = diag;
      if (better(del, best)) best = del;
      if (better(ins, best)) best = ins;
    }
    best.set = true;
    m = best;
    return best;
  };
  const Best b = go(0, 0);
  return {b.subs, b.ins, b.dels};
}

namespace {

// Adaptive Simpson on [a, b].
double Simpson(const std::function<double(double)>& f, double a, double b,
               double fa, double fm, double fb, double whole, double tol,
               int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) {
    return left + right + diff / 15.0;
  }
  return Simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         Simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

// Tolerance is relative to a coarse estimate of the integral of |f|, so the
// same call works for integrands of any scale or sign.
double Integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol) {
  // Split into panels first so narrow peaks are not stepped over.
  const int panels = 64;
  const int coarse = 64 * panels;
  double mass = 0.0;
  for (int k = 0; k <= coarse; ++k) {
    const double w = (k == 0 || k == coarse) ? 0.5 : 1.0;
    mass += w * std::abs(f(a + (b - a) * k / coarse));
  }
  mass *= (b - a) / coarse;
  if (mass == 0.0) return 0.0;
  const double tol = rel_tol * mass;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double lo = a + (b - a) * k / panels;
    const double hi = a + (b - a) * (k + 1) / panels;
    const double flo = f(lo), fhi = f(hi), fmid = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (flo + 4 * fmid + fhi);
    total += Simpson(f, lo, hi, flo, fmid, fhi, whole, tol / panels, 30);
  }
  return total;
}

}  // namespace

double LogMomentQuadrature(double q, double sigma, double alpha) {
  const double s2 = sigma * sigma;
  const double log_norm = -0.5 * std::log(2 * std::numbers::pi * s2);
  // log((1-q) + q e^u), accurate both near u = 0 and for huge u.
  auto log_mix = [&](double u) {
    if (u < 1.0) return std::log1p(q * std::expm1(u));
    const double a = std::log1p(-q), b = std::log(q) + u;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
  };
  auto log_integrand = [&](double z) {
    const double u = (2 * z - 1) / (2 * s2);
    return log_norm - z * z / (2 * s2) + alpha * log_mix(u);
  };
  const double lo = -14 * sigma, hi = alpha + 14 * sigma;
  double peak = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 4000; ++k) {
    peak = std::max(peak, log_integrand(lo + (hi - lo) * k / 4000.0));
  }
  const double scaled = Integrate(
      [&](double z) { return std::exp(log_integrand(z) - peak); }, lo, hi, 1e-11);
  const double log_a = peak + std::log(scaled);
  if (log_a > 0.5) return log_a;
  // Near A = 1 integrate A - 1 directly so small RDP keeps its precision.
  auto excess = [&](double z) {
    const double u = (2 * z - 1) / (2 * s2);
    const double log_density = log_norm - z * z / (2 * s2);
    const double am = alpha * log_mix(u);
    if (am > 1.0) return std::exp(log_density + am) - std::exp(log_density);
    return std::exp(log_density) * std::expm1(am);
  };
  const double a_minus_1 = Integrate(excess, lo, hi, 1e-11);
  return std::log1p(a_minus_1);
}

double RdpQuadrature(double q, double sigma, double alpha) {
  if (q == 1.0) return alpha / (2 * sigma * sigma);
  return LogMomentQuadrature(q, sigma, alpha) / (alpha - 1);
}

double AnalyticGaussianEpsilon(double sigma, double delta) {
  auto phi = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
  auto delta_of = [&](double eps) {
    const double a = 1.0 / (2 * sigma);
    const double second = phi(-a - eps * sigma);
    return phi(a - eps * sigma) - (second > 0 ? std::exp(eps) * second : 0.0);
  };
  double lo = 0.0, hi = 1.0;
  while (delta_of(hi) > delta) hi *= 2;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (delta_of(mid) > delta ? lo : hi) = mid;
  }
  return hi;
}

void ScalarAdam::Step(std::vector<double>* params,
                      const std::vector<double>& grad) {
  if (m.empty()) {
    m.assign(params->size(), 0.0);
    v.assign(params->size(), 0.0);
  }
  ++t;
  for (size_t i = 0; i < params->size(); ++i) {
    m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
    const double mh = m[i] / (1 - std::pow(beta1, static_cast<double>(t)));
    const double vh = v[i] / (1 - std::pow(beta2, static_cast<double>(t)));
    (*params)[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

std::string NearestCharDecode(const TensorF& features, const PseudoTts& tts,
                              int64_t voice_id) {
  const int64_t F = tts.feature_dim();
  const int64_t d = PseudoTts::FramesPerChar(voice_id);
  const TensorF& chars = tts.char_table();
  const TensorF& voices = tts.voice_table();
  std::string out;
  for (int64_t t = 0; t < features.dim(0); t += d) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 27; ++c) {
      double dist = 0.0;
      for (int64_t k = 0; k < F; ++k) {
        const double x = static_cast<double>(features.at(t, k)) - voices.at(voice_id, k);
        const double diff = x - chars.at(c, k);
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    out.push_back(best == 0 ? ' ' : static_cast<char>('a' + best - 1));
  }
  return out;
}

}  // namespace dpasr::oracle
