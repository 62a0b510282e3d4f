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

#include "dpasr/data.h"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "dpasr/checkpoint.h"
#include "dpasr/ctc.h"
#include "dpasr/status.h"

namespace dpasr {
namespace fs = std::filesystem;

void CorpusSpec::Validate() const {
  if (num_utterances < 0) throw InvalidArgumentError("corpus: num_utterances < 0");
  if (words_per_utterance < 1) {
    throw InvalidArgumentError("corpus: words_per_utterance must be >= 1");
  }
  if (vocab_words < 1) throw InvalidArgumentError("corpus: vocab_words must be >= 1");
  if (num_voices < 1) throw InvalidArgumentError("corpus: num_voices must be >= 1");
  if (feature_dim < 1) throw InvalidArgumentError("corpus: feature_dim must be >= 1");
  if (!(jitter >= 0.0)) throw InvalidArgumentError("corpus: jitter must be >= 0");
}

void to_json(nlohmann::json& j, const CorpusSpec& s) {
  j = {{"num_utterances", s.num_utterances},
       {"words_per_utterance", s.words_per_utterance},
       {"vocab_words", s.vocab_words},
       {"num_voices", s.num_voices},
       {"seed", s.seed},
       {"lexicon_seed", s.lexicon_seed},
       {"voice_seed", s.voice_seed},
       {"embedding_seed", s.embedding_seed},
       {"jitter", s.jitter},
       {"zipf", s.zipf},
       {"feature_dim", s.feature_dim}};
}

void from_json(const nlohmann::json& j, CorpusSpec& s) {
  CorpusSpec d;
  s.num_utterances = j.value("num_utterances", d.num_utterances);
  s.words_per_utterance = j.value("words_per_utterance", d.words_per_utterance);
  s.vocab_words = j.value("vocab_words", d.vocab_words);
  s.num_voices = j.value("num_voices", d.num_voices);
  s.seed = j.value("seed", d.seed);
  s.lexicon_seed = j.value("lexicon_seed", d.lexicon_seed);
  s.voice_seed = j.value("voice_seed", d.voice_seed);
  s.embedding_seed = j.value("embedding_seed", d.embedding_seed);
  s.jitter = j.value("jitter", d.jitter);
  s.zipf = j.value("zipf", d.zipf);
  s.feature_dim = j.value("feature_dim", d.feature_dim);
}

std::vector<std::string> MakeLexicon(int64_t vocab_words, uint64_t seed) {
  if (vocab_words < 1) throw InvalidArgumentError("lexicon: vocab_words < 1");
  // 26 * 25^2 three-letter words alone exceed any sane request, so the
  // rejection loop below terminates quickly.
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> words;
  words.reserve(vocab_words);
  while (static_cast<int64_t>(words.size()) < vocab_words) {
    const int64_t len = 3 + static_cast<int64_t>(rng.UniformInt(6));
    std::string w;
    for (int64_t i = 0; i < len; ++i) {
      char c;
      do {
        c = static_cast<char>('a' + rng.UniformInt(26));
      } while (!w.empty() && w.back() == c);
      w.push_back(c);
    }
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

namespace {

class WordSampler {
 public:
  WordSampler(int64_t n, bool zipf) : n_(n) {
    if (!zipf) return;
    cdf_.resize(n);
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      acc += 1.0 / static_cast<double>(i + 1);
      cdf_[i] = acc;
    }
    for (double& c : cdf_) c /= acc;
  }

  int64_t Draw(Rng& rng) const {
    if (cdf_.empty()) return static_cast<int64_t>(rng.UniformInt(n_));
    const double u = rng.Uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<int64_t>(it - cdf_.begin(), n_ - 1);
  }

 private:
  int64_t n_;
  std::vector<double> cdf_;
};

std::vector<std::string> TranscriptFor(const CorpusSpec& spec,
                                       const std::vector<std::string>& lexicon,
                                       const WordSampler& sampler, int64_t i) {
  Rng r = Rng(spec.seed).Split(static_cast<uint64_t>(i)).Split("words");
  std::vector<std::string> words;
  words.reserve(spec.words_per_utterance);
  for (int64_t k = 0; k < spec.words_per_utterance; ++k) {
    words.push_back(lexicon[sampler.Draw(r)]);
  }
  return words;
}

int CharRow(char c) {
  if (c == ' ') return 0;
  if (c >= 'a' && c <= 'z') return 1 + (c - 'a');
  if (c >= 'A' && c <= 'Z') return 1 + (c - 'A');
  return -1;
}

}  // namespace

std::vector<std::vector<std::string>> GenTranscripts(const CorpusSpec& spec) {
  spec.Validate();
  const std::vector<std::string> lexicon =
      MakeLexicon(spec.vocab_words, spec.lexicon_seed);
  const WordSampler sampler(spec.vocab_words, spec.zipf);
  std::vector<std::vector<std::string>> out;
  out.reserve(spec.num_utterances);
  for (int64_t i = 0; i < spec.num_utterances; ++i) {
    out.push_back(TranscriptFor(spec, lexicon, sampler, i));
  }
  return out;
}

PseudoTts::PseudoTts(int64_t feature_dim, uint64_t embedding_seed,
                     uint64_t voice_seed, int64_t num_voices)
    : feature_dim_(feature_dim), num_voices_(num_voices) {
  if (feature_dim < 1 || num_voices < 1) {
    throw InvalidArgumentError("pseudo_tts: feature_dim and num_voices must be >= 1");
  }
  Rng er = Rng(embedding_seed).Split("char_table");
  chars_ = GaussianInit<float>({27, feature_dim}, 1.0, er);
  Rng vr = Rng(voice_seed).Split("voice_table");
  voices_ = GaussianInit<float>({num_voices, feature_dim}, kVoiceOffsetStd, vr);
}

PseudoTts::PseudoTts(const CorpusSpec& spec)
    : PseudoTts(spec.feature_dim, spec.embedding_seed, spec.voice_seed,
                spec.num_voices) {}

TensorF PseudoTts::Synthesize(const std::vector<std::string>& words,
                              int64_t voice_id, double jitter,
                              Rng& rng) const {
  if (words.empty()) throw InvalidArgumentError("pseudo_tts: empty transcript");
  if (voice_id < 0 || voice_id >= num_voices_) {
    throw InvalidArgumentError("pseudo_tts: voice " + std::to_string(voice_id) +
                               " out of range [0, " +
                               std::to_string(num_voices_) + ")");
  }
  std::string text;
  for (size_t w = 0; w < words.size(); ++w) {
    if (w > 0) text.push_back(' ');
    text += words[w];
  }
  std::vector<int> rows;
  rows.reserve(text.size());
  for (char c : text) {
    const int r = CharRow(c);
    if (r < 0) {
      throw InvalidArgumentError(std::string("pseudo_tts: character '") + c +
                                 "' is outside the vocabulary");
    }
    rows.push_back(r);
  }
  const int64_t d = FramesPerChar(voice_id);
  const int64_t frames = d * static_cast<int64_t>(rows.size());
  TensorF out({frames, feature_dim_});
  const float* voice = voices_.raw() + voice_id * feature_dim_;
  float* dst = out.raw();
  for (int r : rows) {
    const float* ch = chars_.raw() + r * feature_dim_;
    for (int64_t f = 0; f < d; ++f) {
      for (int64_t k = 0; k < feature_dim_; ++k) {
        double v = static_cast<double>(ch[k]) + voice[k];
        if (jitter > 0.0) v += jitter * rng.Normal();
        *dst++ = static_cast<float>(v);
      }
    }
  }
  return out;
}

std::vector<Utterance> GenerateCorpus(const CorpusSpec& spec,
                                      const std::string& id_prefix,
                                      int workers) {
  spec.Validate();
  const std::vector<std::string> lexicon =
      MakeLexicon(spec.vocab_words, spec.lexicon_seed);
  const WordSampler sampler(spec.vocab_words, spec.zipf);
  const PseudoTts tts(spec);
  std::vector<Utterance> out(spec.num_utterances);
  auto make = [&](int64_t i) {
    Utterance& u = out[i];
    char buf[32];
    std::snprintf(buf, sizeof(buf), "-%06lld", static_cast<long long>(i));
    u.id = id_prefix + buf;
    u.transcript = TranscriptFor(spec, lexicon, sampler, i);
    const Rng base = Rng(spec.seed).Split(static_cast<uint64_t>(i));
    Rng vr = base.Split("voice");
    u.voice_id = static_cast<int64_t>(vr.UniformInt(spec.num_voices));
    Rng jr = base.Split("jitter");
    u.features = tts.Synthesize(u.transcript, u.voice_id, spec.jitter, jr);
  };
  const int n_workers = std::max(
      1, std::min<int>(workers, static_cast<int>(std::max<int64_t>(1, spec.num_utterances))));
  if (n_workers == 1) {
    for (int64_t i = 0; i < spec.num_utterances; ++i) make(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(n_workers);
  std::vector<std::thread> threads;
  for (int w = 0; w < n_workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (int64_t i = w; i < spec.num_utterances; i += n_workers) make(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void to_json(nlohmann::json& j, const Manifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const ManifestEntry& e : m.entries) {
    entries.push_back({{"id", e.id},
                       {"transcript", e.transcript},
                       {"offset", e.offset},
                       {"length", e.length},
                       {"frames", e.frames},
                       {"voice_id", e.voice_id}});
  }
  j = {{"format", "dpasr-dataset-v1"},
       {"dataset_id", m.dataset_id},
       {"feature_dim", m.feature_dim},
       {"vocabulary", m.vocabulary},
       {"spec", m.spec},
       {"utterances", std::move(entries)}};
}

void from_json(const nlohmann::json& j, Manifest& m) {
  m.dataset_id = j.at("dataset_id").get<std::string>();
  m.feature_dim = j.at("feature_dim").get<int64_t>();
  m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  m.spec = j.value("spec", nlohmann::json::object());
  m.entries.clear();
  for (const auto& e : j.at("utterances")) {
    ManifestEntry me;
    me.id = e.at("id").get<std::string>();
    me.transcript = e.at("transcript").get<std::vector<std::string>>();
    me.offset = e.at("offset").get<int64_t>();
    me.length = e.at("length").get<int64_t>();
    me.frames = e.at("frames").get<int64_t>();
    me.voice_id = e.at("voice_id").get<int64_t>();
    m.entries.push_back(std::move(me));
  }
}

void WriteDataset(const std::string& dir, const std::string& dataset_id,
                  const std::vector<Utterance>& utterances,
                  int64_t feature_dim, const nlohmann::json& spec) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("write_dataset: cannot create '" + dir + "': " + ec.message());
  Manifest m;
  m.dataset_id = dataset_id;
  m.feature_dim = feature_dim;
  m.vocabulary = CharTokenizer::Symbols();
  m.spec = spec;
  const std::string blob_path = (fs::path(dir) / "features.bin").string();
  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) throw IoError("write_dataset: cannot open '" + blob_path + "'");
  int64_t offset = 0;
  std::string bytes;
  for (const Utterance& u : utterances) {
    if (u.features.rank() != 2 || u.features.dim(1) != feature_dim) {
      throw ShapeError("write_dataset: utterance '" + u.id + "' has features " +
                       ShapeString(u.features.shape()) + ", expected [*, " +
                       std::to_string(feature_dim) + "]");
    }
    bytes.clear();
    AppendFloatsLE(u.features.data(), &bytes);
    blob.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    ManifestEntry e;
    e.id = u.id;
    e.transcript = u.transcript;
    e.offset = offset;
    e.length = static_cast<int64_t>(bytes.size());
    e.frames = u.features.dim(0);
    e.voice_id = u.voice_id;
    offset += e.length;
    m.entries.push_back(std::move(e));
  }
  blob.close();
  if (!blob) throw IoError("write_dataset: failed writing '" + blob_path + "'");
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("write_dataset: cannot open '" + manifest_path + "'");
  out << nlohmann::json(m).dump(1) << "\n";
  if (!out) throw IoError("write_dataset: failed writing '" + manifest_path + "'");
}

Dataset Dataset::Open(const std::string& dir) {
  Dataset ds;
  ds.dir_ = dir;
  ds.blob_path_ = (fs::path(dir) / "features.bin").string();
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream in(manifest_path);
  if (!in) throw IoError("dataset: cannot open '" + manifest_path + "'");
  try {
    ds.manifest_ = nlohmann::json::parse(in).get<Manifest>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("dataset: bad manifest '" + manifest_path + "': " + e.what());
  }
  std::error_code ec;
  const auto blob_size = fs::file_size(ds.blob_path_, ec);
  if (ec) throw IoError("dataset: cannot stat '" + ds.blob_path_ + "'");
  int64_t prev_end = 0;
  for (const ManifestEntry& e : ds.manifest_.entries) {
    const int64_t expected = e.frames * ds.manifest_.feature_dim * 4;
    if (e.length != expected) {
      throw IoError("dataset: utterance '" + e.id + "' declares " +
                    std::to_string(e.length) + " bytes, expected " +
                    std::to_string(expected));
    }
    if (e.offset < prev_end) {
      throw IoError("dataset: utterance '" + e.id + "' overlaps its predecessor");
    }
    if (e.offset + e.length > static_cast<int64_t>(blob_size)) {
      throw IoError("dataset: utterance '" + e.id +
                    "' runs past the end of features.bin (truncated blob?)");
    }
    prev_end = e.offset + e.length;
  }
  return ds;
}

TensorF Dataset::LoadFeatures(int64_t i) const {
  if (i < 0 || i >= size()) {
    throw InvalidArgumentError("dataset: index " + std::to_string(i) +
                               " out of range");
  }
  const ManifestEntry& e = manifest_.entries[i];
  std::ifstream in(blob_path_, std::ios::binary);
  if (!in) throw IoError("dataset: cannot open '" + blob_path_ + "'");
  std::string bytes(static_cast<size_t>(e.length), '\0');
  in.seekg(e.offset);
  in.read(bytes.data(), e.length);
  if (in.gcount() != e.length) {
    throw IoError("dataset: short read for utterance '" + e.id + "'");
  }
  TensorF t({e.frames, manifest_.feature_dim});
  ReadFloatsLE(bytes.data(), static_cast<size_t>(t.size()), t.raw());
  return t;
}

Utterance Dataset::Load(int64_t i) const {
  Utterance u;
  u.features = LoadFeatures(i);
  const ManifestEntry& e = manifest_.entries[i];
  u.id = e.id;
  u.transcript = e.transcript;
  u.voice_id = e.voice_id;
  return u;
}

Example Dataset::LoadExample(int64_t i) const {
  Example ex;
  ex.features = LoadFeatures(i);
  ex.labels = TranscriptLabels(manifest_.entries[i].transcript);
  return ex;
}

std::vector<Example> Dataset::LoadAllExamples() const {
  std::vector<Example> out;
  out.reserve(size());
  std::ifstream in(blob_path_, std::ios::binary);
  if (!in) throw IoError("dataset: cannot open '" + blob_path_ + "'");
  std::string bytes;
  for (const ManifestEntry& e : manifest_.entries) {
    bytes.resize(static_cast<size_t>(e.length));
    in.seekg(e.offset);
    in.read(bytes.data(), e.length);
    if (in.gcount() != e.length) {
      throw IoError("dataset: short read for utterance '" + e.id + "'");
    }
    Example ex;
    ex.features = TensorF({e.frames, manifest_.feature_dim});
    ReadFloatsLE(bytes.data(), static_cast<size_t>(ex.features.size()),
                 ex.features.raw());
    ex.labels = TranscriptLabels(e.transcript);
    out.push_back(std::move(ex));
  }
  return out;
}

LabelSeq TranscriptLabels(const std::vector<std::string>& words) {
  std::string text;
  for (size_t w = 0; w < words.size(); ++w) {
    if (w > 0) text.push_back(' ');
    text += words[w];
  }
  return CharTokenizer::Encode(text);
}

uint64_t UtteranceHash(const Utterance& u) {
  std::string bytes;
  for (const std::string& w : u.transcript) {
    bytes += w;
    bytes.push_back(' ');
  }
  AppendFloatsLE(u.features.data(), &bytes);
  return HashString(bytes);
}

}  // namespace dpasr
