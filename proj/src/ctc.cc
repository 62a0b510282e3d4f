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

#include "dpasr/ctc.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "dpasr/status.h"

namespace dpasr {
namespace {

inline double LogAdd(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

inline double LogAdd3(double a, double b, double c) {
  return LogAdd(LogAdd(a, b), c);
}

// Extended target: blank, l1, blank, l2, ..., lL, blank.
std::vector<int32_t> Extend(std::span<const int32_t> labels) {
  std::vector<int32_t> ext(2 * labels.size() + 1, kBlank);
  for (size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  return ext;
}

template <typename T>
void Validate(const Tensor<T>& log_probs, std::span<const int32_t> labels) {
  if (log_probs.rank() != 2) {
    throw InvalidArgumentError("ctc: log_probs must be [T, V], got " +
                               ShapeString(log_probs.shape()));
  }
  const int64_t vocab = log_probs.dim(1);
  for (int32_t l : labels) {
    if (l <= kBlank || l >= vocab) {
      throw InvalidArgumentError("ctc: label " + std::to_string(l) +
                                 " outside [1, " + std::to_string(vocab) + ")");
    }
  }
  const int64_t needed = CtcMinFrames(labels);
  if (needed > log_probs.dim(0)) {
    throw InfeasibleLabelsError(
        "ctc: " + std::to_string(labels.size()) + " labels need " +
        std::to_string(needed) + " frames, only " +
        std::to_string(log_probs.dim(0)) + " available");
  }
}

// Fills alpha [T, S] (log domain) and returns log p(labels).
template <typename T>
double Forward(const Tensor<T>& lp, const std::vector<int32_t>& ext,
               std::vector<double>* alpha) {
  const int64_t frames = lp.dim(0);
  const int64_t vocab = lp.dim(1);
  const int64_t states = static_cast<int64_t>(ext.size());
  alpha->assign(frames * states, kLogZero);
  if (frames == 0) return states == 1 ? 0.0 : kLogZero;
  auto a = [&](int64_t t, int64_t s) -> double& {
    return (*alpha)[t * states + s];
  };
  a(0, 0) = lp[ext[0]];
  if (states > 1) a(0, 1) = lp[ext[1]];
  for (int64_t t = 1; t < frames; ++t) {
    const T* row = lp.raw() + t * vocab;
    for (int64_t s = 0; s < states; ++s) {
      double v = a(t - 1, s);
      if (s >= 1) v = LogAdd(v, a(t - 1, s - 1));
      if (s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]) {
        v = LogAdd(v, a(t - 1, s - 2));
      }
      a(t, s) = v <= kLogZero ? kLogZero : v + row[ext[s]];
    }
  }
  double total = a(frames - 1, states - 1);
  if (states > 1) total = LogAdd(total, a(frames - 1, states - 2));
  return total;
}

template <typename T>
void Backward(const Tensor<T>& lp, const std::vector<int32_t>& ext,
              std::vector<double>* beta) {
  const int64_t frames = lp.dim(0);
  const int64_t vocab = lp.dim(1);
  const int64_t states = static_cast<int64_t>(ext.size());
  beta->assign(frames * states, kLogZero);
  if (frames == 0) return;
  auto b = [&](int64_t t, int64_t s) -> double& {
    return (*beta)[t * states + s];
  };
  const T* last = lp.raw() + (frames - 1) * vocab;
  b(frames - 1, states - 1) = last[ext[states - 1]];
  if (states > 1) b(frames - 1, states - 2) = last[ext[states - 2]];
  for (int64_t t = frames - 2; t >= 0; --t) {
    const T* row = lp.raw() + t * vocab;
    for (int64_t s = 0; s < states; ++s) {
      double v = b(t + 1, s);
      if (s + 1 < states) v = LogAdd(v, b(t + 1, s + 1));
      if (s + 2 < states && ext[s] != kBlank && ext[s] != ext[s + 2]) {
        v = LogAdd(v, b(t + 1, s + 2));
      }
      b(t, s) = v <= kLogZero ? kLogZero : v + row[ext[s]];
    }
  }
}

}  // namespace

int64_t CtcMinFrames(std::span<const int32_t> labels) {
  int64_t n = static_cast<int64_t>(labels.size());
  for (size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++n;
  }
  return n;
}

template <typename T>
double CtcLoss(const Tensor<T>& log_probs, std::span<const int32_t> labels) {
  Validate(log_probs, labels);
  std::vector<double> alpha;
  return -Forward(log_probs, Extend(labels), &alpha);
}

template <typename T>
double CtcLossAndGrad(const Tensor<T>& log_probs,
                      std::span<const int32_t> labels, Tensor<T>* grad) {
  Validate(log_probs, labels);
  const std::vector<int32_t> ext = Extend(labels);
  std::vector<double> alpha, beta;
  const double log_p = Forward(log_probs, ext, &alpha);
  Backward(log_probs, ext, &beta);

  const int64_t frames = log_probs.dim(0);
  const int64_t vocab = log_probs.dim(1);
  const int64_t states = static_cast<int64_t>(ext.size());
  *grad = Tensor<T>({frames, vocab});
  std::vector<double> occupancy(vocab);
  for (int64_t t = 0; t < frames; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), 0.0);
    const T* row = log_probs.raw() + t * vocab;
    for (int64_t s = 0; s < states; ++s) {
      const double ab = alpha[t * states + s] + beta[t * states + s];
      if (ab <= kLogZero / 2) continue;
      occupancy[ext[s]] += std::exp(ab - row[ext[s]] - log_p);
    }
    for (int64_t v = 0; v < vocab; ++v) {
      grad->at(t, v) = static_cast<T>(-occupancy[v]);
    }
  }
  return -log_p;
}

template <typename T>
LabelSeq GreedyDecode(const Tensor<T>& log_probs) {
  const int64_t frames = log_probs.dim(0);
  const int64_t vocab = log_probs.dim(1);
  std::vector<int32_t> path(frames);
  for (int64_t t = 0; t < frames; ++t) {
    const T* row = log_probs.raw() + t * vocab;
    path[t] = static_cast<int32_t>(std::max_element(row, row + vocab) - row);
  }
  return CollapsePath(path);
}

LabelSeq CollapsePath(std::span<const int32_t> path) {
  LabelSeq out;
  int32_t prev = -1;
  for (int32_t p : path) {
    if (p != prev && p != kBlank) out.push_back(p);
    prev = p;
  }
  return out;
}

WerReport ComputeWer(const std::vector<std::string>& reference,
                     const std::vector<std::string>& hypothesis) {
  if (reference.empty()) {
    throw InvalidArgumentError("wer: reference must contain at least one word");
  }
  const size_t n = reference.size();
  const size_t m = hypothesis.size();
  // Lexicographic cost: (edits, -substitutions).
  struct Cell {
    int64_t edits;
    int64_t subs;
    bool Better(const Cell& o) const {
      return edits < o.edits || (edits == o.edits && subs > o.subs);
    }
  };
  enum Move : uint8_t { kDiag, kDel, kIns };
  std::vector<Cell> dp((n + 1) * (m + 1));
  std::vector<Move> move((n + 1) * (m + 1), kDiag);
  auto at = [&](size_t i, size_t j) { return i * (m + 1) + j; };
  for (size_t i = 0; i <= n; ++i) {
    dp[at(i, 0)] = {static_cast<int64_t>(i), 0};
    move[at(i, 0)] = kDel;
  }
  for (size_t j = 0; j <= m; ++j) {
    dp[at(0, j)] = {static_cast<int64_t>(j), 0};
    move[at(0, j)] = kIns;
  }
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const bool same = reference[i - 1] == hypothesis[j - 1];
      const Cell& d = dp[at(i - 1, j - 1)];
      Cell best{d.edits + (same ? 0 : 1), d.subs + (same ? 0 : 1)};
      Move bm = kDiag;
      const Cell del{dp[at(i - 1, j)].edits + 1, dp[at(i - 1, j)].subs};
      if (del.Better(best)) {
        best = del;
        bm = kDel;
      }
      const Cell ins{dp[at(i, j - 1)].edits + 1, dp[at(i, j - 1)].subs};
      if (ins.Better(best)) {
        best = ins;
        bm = kIns;
      }
      dp[at(i, j)] = best;
      move[at(i, j)] = bm;
    }
  }
  WerReport r;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    switch (move[at(i, j)]) {
      case kDiag:
        if (reference[i - 1] != hypothesis[j - 1]) ++r.substitutions;
        --i;
        --j;
        break;
      case kDel:
        ++r.deletions;
        --i;
        break;
      case kIns:
        ++r.insertions;
        --j;
        break;
    }
  }
  r.reference_words = static_cast<int64_t>(n);
  r.wer = static_cast<double>(r.errors()) / static_cast<double>(n);
  return r;
}

WerReport Accumulate(const WerReport& a, const WerReport& b) {
  WerReport r;
  r.substitutions = a.substitutions + b.substitutions;
  r.insertions = a.insertions + b.insertions;
  r.deletions = a.deletions + b.deletions;
  r.reference_words = a.reference_words + b.reference_words;
  r.wer = r.reference_words > 0 ? static_cast<double>(r.errors()) /
                                      static_cast<double>(r.reference_words)
                                : 0.0;
  return r;
}

LabelSeq CharTokenizer::Encode(std::string_view text) {
  LabelSeq out;
  out.reserve(text.size());
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (c == ' ') {
      out.push_back(kSpace);
    } else if (c >= 'a' && c <= 'z') {
      out.push_back(2 + (c - 'a'));
    } else {
      throw InvalidArgumentError(std::string("tokenizer: character '") + raw +
                                 "' is not in the vocabulary");
    }
  }
  return out;
}

std::string CharTokenizer::Decode(std::span<const int32_t> labels) {
  std::string s;
  for (int32_t l : labels) {
    if (l == kSpace) {
      s.push_back(' ');
    } else if (l >= 2 && l < kVocabSize) {
      s.push_back(static_cast<char>('a' + (l - 2)));
    }
  }
  return s;
}

std::vector<std::string> CharTokenizer::Symbols() {
  std::vector<std::string> s = {"<b>", " "};
  for (char c = 'a'; c <= 'z'; ++c) s.emplace_back(1, c);
  return s;
}

std::vector<std::string> SplitWords(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char raw : text) {
    if (std::isspace(static_cast<unsigned char>(raw))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(raw))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

template double CtcLoss<float>(const Tensor<float>&, std::span<const int32_t>);
template double CtcLoss<double>(const Tensor<double>&,
                                std::span<const int32_t>);
template double CtcLossAndGrad<float>(const Tensor<float>&,
                                      std::span<const int32_t>,
                                      Tensor<float>*);
template double CtcLossAndGrad<double>(const Tensor<double>&,
                                       std::span<const int32_t>,
                                       Tensor<double>*);
template LabelSeq GreedyDecode<float>(const Tensor<float>&);
template LabelSeq GreedyDecode<double>(const Tensor<double>&);

}  // namespace dpasr
