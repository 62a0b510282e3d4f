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

#ifndef DPASR_CTC_H_
#define DPASR_CTC_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpasr/tensor.h"

namespace dpasr {

// Blank is token 0 everywhere.
inline constexpr int32_t kBlank = 0;

// Stand-in for log(0). Finite so that sums of log-probabilities never
// produce NaN.
inline constexpr double kLogZero = -1e30;

using LabelSeq = std::vector<int32_t>;

// Frames needed to emit `labels`: one per label plus one blank between each
// pair of equal neighbours.
int64_t CtcMinFrames(std::span<const int32_t> labels);

// Negative log-likelihood -log sum_{paths collapsing to labels} prod_t p_t.
// log_probs is [T, V]; entries are treated as free variables (they need not
// be normalized). Throws InfeasibleLabelsError if T < CtcMinFrames(labels),
// InvalidArgumentError for label ids outside [1, V).
template <typename T>
double CtcLoss(const Tensor<T>& log_probs, std::span<const int32_t> labels);

// Same as CtcLoss, and writes d loss / d log_probs into *grad (resized to
// [T, V]). The gradient is minus the posterior label occupancy per frame.
template <typename T>
double CtcLossAndGrad(const Tensor<T>& log_probs,
                      std::span<const int32_t> labels, Tensor<T>* grad);

// Best-path decoding: per-frame argmax, collapse repeats, drop blanks.
// Ties go to the lowest token id.
template <typename T>
LabelSeq GreedyDecode(const Tensor<T>& log_probs);

// Collapses a frame-level path (repeats merged, blanks removed).
LabelSeq CollapsePath(std::span<const int32_t> path);

struct WerReport {
  int64_t substitutions = 0;
  int64_t insertions = 0;
  int64_t deletions = 0;
  int64_t reference_words = 0;
  double wer = 0.0;

  int64_t errors() const { return substitutions + insertions + deletions; }
};

// Word-level Levenshtein alignment with unit costs. Among minimum-cost
// alignments the one with the most substitutions is reported, which makes
// the counts symmetric: swapping the arguments swaps insertions and
// deletions. Throws InvalidArgumentError on an empty reference.
WerReport ComputeWer(const std::vector<std::string>& reference,
                     const std::vector<std::string>& hypothesis);

// Pools error counts over many utterances (corpus WER).
WerReport Accumulate(const WerReport& a, const WerReport& b);

// Character tokenizer shared by the loss and the data pipeline:
// 0 = blank, 1 = space, 2..27 = 'a'..'z'.
class CharTokenizer {
 public:
  static constexpr int32_t kSpace = 1;
  static constexpr int32_t kVocabSize = 28;

  // Lower-cases input; throws InvalidArgumentError on any other character.
  static LabelSeq Encode(std::string_view text);
  static std::string Decode(std::span<const int32_t> labels);
  // Symbol table in id order; blank is rendered as "<b>".
  static std::vector<std::string> Symbols();
};

// Lower-cases and splits on whitespace.
std::vector<std::string> SplitWords(std::string_view text);

}  // namespace dpasr

#endif  // DPASR_CTC_H_
