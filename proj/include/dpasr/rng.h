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

#ifndef DPASR_RNG_H_
#define DPASR_RNG_H_

#include <cstdint>
#include <string_view>

namespace dpasr {

// Counter-based random stream. Draw k of the stream with key K is
// Mix(K + k * golden), so the output depends only on (seed, stream path,
// position) and never on the platform's <random> implementation.
//
// Streams are split, not shared: every worker, parameter tensor and
// utterance gets its own child stream via Split().
class Rng {
 public:
  explicit Rng(uint64_t seed);

  // Child stream keyed by `stream`. Splitting does not advance the parent.
  Rng Split(uint64_t stream) const;
  Rng Split(std::string_view label) const;

  uint64_t NextU64();
  // Uniform in [0, 1) with 53 bits of precision.
  double Uniform();
  // Uniform in (0, 1]; safe to take the log of.
  double UniformOpen();
  // Uniform integer in [0, n). n must be positive.
  uint64_t UniformInt(uint64_t n);
  // Standard normal via Box-Muller. Each call consumes two draws; the second
  // variate is discarded so that the position of every sample is fixed.
  double Normal();
  bool Bernoulli(double p);

  uint64_t seed() const { return seed_; }
  uint64_t key() const { return key_; }
  uint64_t position() const { return counter_; }

 private:
  Rng(uint64_t seed, uint64_t key) : seed_(seed), key_(key) {}

  uint64_t seed_;
  uint64_t key_;
  uint64_t counter_ = 0;
};

// SplitMix64 finalizer.
uint64_t Mix64(uint64_t x);
// FNV-1a, used to turn labels into stream ids.
uint64_t HashString(std::string_view s);

}  // namespace dpasr

#endif  // DPASR_RNG_H_
