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

#ifndef DPASR_DATA_H_
#define DPASR_DATA_H_

#include <cstdint>
#include <string>
#include <vector>

#include "dpasr/model.h"
#include "dpasr/rng.h"
#include "dpasr/tensor.h"
#include "json.hpp"

namespace dpasr {

// Synthetic corpus description. Transcripts are random pseudo-words; audio
// is replaced by the PseudoTts feature synthesizer below.
//
// Corpora that should share a "language" (pre-training vs. fine-tuning vs.
// eval) share lexicon_seed and embedding_seed and differ in seed and, for
// unseen speakers, voice_seed.
struct CorpusSpec {
  int64_t num_utterances = 20000;
  int64_t words_per_utterance = 7;
  int64_t vocab_words = 10000;
  int64_t num_voices = 4;
  uint64_t seed = 1;            // transcripts, voice choice and jitter
  uint64_t lexicon_seed = 7;
  uint64_t voice_seed = 11;
  uint64_t embedding_seed = 2024;
  double jitter = 0.1;
  // Zipf-weighted word sampling instead of uniform.
  bool zipf = false;
  int64_t feature_dim = 16;

  void Validate() const;
};

void to_json(nlohmann::json& j, const CorpusSpec& s);
void from_json(const nlohmann::json& j, CorpusSpec& s);

// vocab_words distinct pseudo-words over a-z, lengths 3..8, with no letter
// repeated back to back. Deterministic in seed.
std::vector<std::string> MakeLexicon(int64_t vocab_words, uint64_t seed);

// One word list per utterance, words drawn with replacement from the lexicon.
std::vector<std::vector<std::string>> GenTranscripts(const CorpusSpec& spec);

// Deterministic transcript -> feature synthesizer. Each character (space
// included) is rendered as FramesPerChar(voice) frames of
//   char_embedding[c] + voice_offset[voice] + jitter * N(0, I).
class PseudoTts {
 public:
  static constexpr double kVoiceOffsetStd = 0.5;

  PseudoTts(int64_t feature_dim, uint64_t embedding_seed, uint64_t voice_seed,
            int64_t num_voices);
  explicit PseudoTts(const CorpusSpec& spec);

  int64_t feature_dim() const { return feature_dim_; }
  int64_t num_voices() const { return num_voices_; }
  // 2, 3, 4 or 5.
  static int64_t FramesPerChar(int64_t voice_id) { return 2 + voice_id % 4; }

  // [27, feature_dim]; row 0 is space, rows 1..26 are 'a'..'z'.
  const TensorF& char_table() const { return chars_; }
  // [num_voices, feature_dim].
  const TensorF& voice_table() const { return voices_; }

  // Throws InvalidArgumentError on an empty transcript, an unknown character
  // or a voice id out of range.
  TensorF Synthesize(const std::vector<std::string>& words, int64_t voice_id,
                     double jitter, Rng& rng) const;

 private:
  int64_t feature_dim_;
  int64_t num_voices_;
  TensorF chars_;
  TensorF voices_;
};

struct Utterance {
  std::string id;
  std::vector<std::string> transcript;
  TensorF features;  // [frames, feature_dim]
  int64_t voice_id = 0;

  int64_t frames() const { return features.rank() == 2 ? features.dim(0) : 0; }
};

// Transcripts from GenTranscripts rendered through PseudoTts with
// spec.jitter. Utterance i only depends on (spec, i). ids are "<prefix>-NNNNNN".
std::vector<Utterance> GenerateCorpus(const CorpusSpec& spec,
                                      const std::string& id_prefix,
                                      int workers = 1);

struct ManifestEntry {
  std::string id;
  std::vector<std::string> transcript;
  int64_t offset = 0;  // bytes into features.bin
  int64_t length = 0;  // bytes
  int64_t frames = 0;
  int64_t voice_id = 0;
};

struct Manifest {
  std::string dataset_id;
  int64_t feature_dim = 0;
  std::vector<std::string> vocabulary;
  std::vector<ManifestEntry> entries;
  nlohmann::json spec = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const Manifest& m);
void from_json(const nlohmann::json& j, Manifest& m);

// Writes <dir>/manifest.json and <dir>/features.bin (little-endian f32),
// creating dir if needed.
void WriteDataset(const std::string& dir, const std::string& dataset_id,
                  const std::vector<Utterance>& utterances,
                  int64_t feature_dim,
                  const nlohmann::json& spec = nlohmann::json::object());

// Manifest plus lazy access to the feature blob. Load is safe to call from
// several threads.
class Dataset {
 public:
  // Validates the manifest against the blob: entries must not overlap and
  // each length must equal frames * feature_dim * 4 and lie inside the file.
  // Throws IoError naming the first bad utterance.
  static Dataset Open(const std::string& dir);

  const Manifest& manifest() const { return manifest_; }
  int64_t size() const { return static_cast<int64_t>(manifest_.entries.size()); }

  TensorF LoadFeatures(int64_t i) const;
  Utterance Load(int64_t i) const;
  // Features plus character labels of the joined transcript.
  Example LoadExample(int64_t i) const;
  std::vector<Example> LoadAllExamples() const;

 private:
  std::string dir_;
  std::string blob_path_;
  Manifest manifest_;
};

// Character labels for a word list ("ab cd" -> a b <space> c d).
LabelSeq TranscriptLabels(const std::vector<std::string>& words);

// Stable 64-bit digest of an utterance's transcript and feature bytes.
uint64_t UtteranceHash(const Utterance& u);

}  // namespace dpasr

#endif  // DPASR_DATA_H_
