// Copyright 2026 The cmfront Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CMFRONT_PIPELINE_H_
#define CMFRONT_PIPELINE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cmfront/bwe.h"
#include "cmfront/channel.h"
#include "cmfront/classifier.h"
#include "cmfront/config.h"
#include "cmfront/eval.h"
#include "cmfront/features.h"

namespace cmfront {

enum class FrontendKind { kBaseline, kBandTrim, kLowpass, kLowpassBwe };

const char *frontend_kind_name(FrontendKind kind);
FrontendKind parse_frontend_kind(const std::string &token);

struct FrontendConfig {
  FrontendKind kind = FrontendKind::kBaseline;
  double fraction = 0.5;  // ignored by the baseline
  BweKind bwe_kind = BweKind::kLinearRegressor;
  int filter_order = 8;  // low-pass kinds only
  double ripple_db = 0.05;
  bool vad = false;
  bool augment = true;  // applied to the train subset only
  AugmentConfig augment_config;

  // "baseline", "band_trim@0.5", ...
  std::string label() const;
  // Parses "kind" or "kind@fraction".
  static FrontendConfig parse(const std::string &token);
  void validate() const;
  std::size_t feature_dim() const;
  FilterSpec filter_spec(int sample_rate = 16000) const;
};

struct FeaturizeOptions {
  uint64_t seed = 1;
  const BweExtender *extender = nullptr;  // required by lowpass_bwe
  CodecProfile codec;                     // applied to the eval subset only
  LengthConfig length;
};

// Codec (eval subset) -> VAD -> augmentation (train subset) -> front-end
// transform -> FBANK -> band trim -> length normalization. Values are rounded
// to float precision, matching what the feature files store. Throws
// DataError("all-silence utterance") when VAD finds nothing to keep.
FbankMatrix featurize(const AudioBuffer &audio, const std::string &utt_id, Subset subset,
                      const FrontendConfig &frontend, const FeaturizeOptions &options);

// True for the error featurize() raises on an all-silence utterance, which
// callers skip and count rather than abort on.
bool is_all_silence(const Error &e);

// Applies the front-end transform alone (no FBANK).
AudioBuffer apply_frontend(const AudioBuffer &audio, const FrontendConfig &frontend,
                           const BweExtender *extender);

// A manifest plus the directory its relative paths resolve against.
struct Corpus {
  std::string root;
  std::vector<ManifestEntry> entries;
  uint64_t fingerprint = 0;  // hash of the manifest text

  static Corpus open(const std::string &manifest_path);
  AudioBuffer load(const ManifestEntry &entry) const;
  std::vector<const ManifestEntry *> subset(Subset s) const;
};

// Writes the corpus WAVs under dir/wav and dir/manifest.tsv. Returns the
// manifest path.
std::string write_corpus(const std::vector<Utterance> &utts, const std::string &dir);

// Fits the regressor on (low-passed, original) pairs from the train subset.
// The low-pass uses the front-end's filter settings.
BweExtender train_extender(const Corpus &corpus, const FrontendConfig &frontend,
                           double ridge_lambda);

struct FeatureSet {
  std::vector<std::string> ids;
  std::vector<LabeledFeatures> items;
  std::vector<std::string> skipped;  // all-silence utterances
};

FeatureSet featurize_subset(const Corpus &corpus, Subset subset, const FrontendConfig &frontend,
                            const FeaturizeOptions &options);

ScoreSet score_features(const AspModel &model, const FeatureSet &features);

// ---- configuration --------------------------------------------------------

CorpusSpec corpus_from_config(const Config &cfg);
TrainConfig train_from_config(const Config &cfg);
AugmentConfig augment_from_config(const Config &cfg);

struct ExperimentPlan {
  std::string manifest;  // corpus manifest path
  std::vector<FrontendConfig> frontends;
  std::vector<uint64_t> seeds{1, 10, 100};
  std::vector<CodecProfile> codecs{CodecProfile{}};
  std::vector<bool> vad_modes{false};
  TrainConfig train;
  LengthConfig length;
  double ridge_lambda = kDefaultRidgeLambda;

  void validate() const;
};

// Reads [plan], [train], [augment] and [corpus] sections. `frontends` entries
// without an explicit "@fraction" expand over plan.fractions (default
// 0.2,...,0.7); the baseline never expands.
ExperimentPlan plan_from_config(const Config &cfg);

// Every key the configuration readers understand.
const std::set<std::string> &known_config_keys();

// ---- sweep ----------------------------------------------------------------

struct SweepCell {
  FrontendConfig frontend;
  uint64_t seed = 0;
  CodecProfile codec;
  std::string key;  // cache key
  std::optional<EerResult> result;
  std::string error;
  bool cached = false;

  std::string system() const;  // codec name, plus "+vad" when VAD is on
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<ResultRow> rows;  // per-seed rows followed by seed averages
  std::string csv;
  std::string table;
  int computed = 0;
  int cached = 0;
  int failed = 0;
};

// Runs the full cross-product. One model is trained per (frontend, vad,
// seed) and scored under every codec. Results are cached under out_dir by a
// content hash so an interrupted sweep only recomputes missing cells. Groups
// run on up to `jobs` threads; the outputs do not depend on the thread count.
// Writes results.csv, results.txt and run.jsonl under out_dir.
SweepResult run_sweep(const ExperimentPlan &plan, const std::string &out_dir, int jobs = 1,
                      std::ostream *log = nullptr);

// 64-bit FNV-1a over the text, as 16 hex digits.
std::string content_hash(const std::string &text);

}  // namespace cmfront

#endif  // CMFRONT_PIPELINE_H_
