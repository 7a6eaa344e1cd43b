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

#ifndef CMFRONT_CHANNEL_H_
#define CMFRONT_CHANNEL_H_

#include <cstdint>
#include <string>
#include <vector>

#include "cmfront/common.h"
#include "cmfront/signal.h"

namespace cmfront {

// ---- augmentation ---------------------------------------------------------

struct AugmentConfig {
  double apply_probability = 2.0 / 3.0;
  double snr_min_db = 5.0;
  double snr_max_db = 20.0;
  double rt60_min_s = 0.1;
  double rt60_max_s = 0.5;
  uint64_t seed = 0;

  void validate() const;
};

constexpr double kMaxSnrDb = 100.0;

// Scales `noise` (tiled or truncated to the clean length) so that the
// full-utterance power ratio is snr_db, then adds it. SNR is capped at
// kMaxSnrDb.
AudioBuffer add_noise(const AudioBuffer &clean, const AudioBuffer &noise, double snr_db);

// Linear convolution truncated to the dry length, rescaled to the dry peak.
AudioBuffer add_reverb(const AudioBuffer &dry, const AudioBuffer &rir);

// Amplitude decay constant for a 60 dB energy drop: ln(10^3).
constexpr double kRt60Decay = 6.907755278982137;

inline double rir_envelope(double t, double rt60_s) { return std::exp(-t * kRt60Decay / rt60_s); }

// Exponentially decaying white noise of length 1.5 * rt60, unit peak.
AudioBuffer synth_rir(double rt60_s, int sample_rate, Rng &rng);

enum class NoiseKind { kWhite, kPink, kBabble };

const char *noise_kind_name(NoiseKind kind);

// Unit-RMS synthetic noise. Pink falls 3 dB per octave; babble is a sum of
// amplitude-modulated harmonic voices.
AudioBuffer make_noise(NoiseKind kind, std::size_t length, int sample_rate, Rng &rng);

enum class Subset { kTrain, kDev, kEval };

const char *subset_name(Subset s);
Subset parse_subset(const std::string &token);

struct Utterance {
  std::string id;
  AudioBuffer audio;
  Label label = Label::kSpoof;
  Subset subset = Subset::kTrain;
};

struct AugmentRecord {
  bool applied = false;
  bool noise = false;
  bool reverb = false;
  NoiseKind noise_kind = NoiseKind::kWhite;
  double snr_db = 0.0;
  double rt60_s = 0.0;
};

// Augments one waveform. The draws come from `seed` only.
AudioBuffer augment(const AudioBuffer &audio, const AugmentConfig &cfg, uint64_t seed,
                    AugmentRecord *record = nullptr);

// Per-utterance seeds are derived from cfg.seed and the utterance id, so the
// result for an utterance does not depend on its position in the batch.
std::vector<Utterance> augment_batch(const std::vector<Utterance> &utts, const AugmentConfig &cfg,
                                     std::vector<AugmentRecord> *records = nullptr);

// Stable 64-bit FNV-1a hash, used for id-derived seeds.
uint64_t hash_id(const std::string &id);

// ---- codec simulation -----------------------------------------------------

constexpr double kMuLaw = 255.0;

double mulaw_compand(double x, double mu = kMuLaw);
double mulaw_expand(double y, double mu = kMuLaw);
// Nearest of 256 uniformly spaced levels on [-1, 1].
double quantize_8bit(double y);

enum class CodecKind { kClean, kG711Mulaw, kBandlimit };

struct CodecProfile {
  CodecKind kind = CodecKind::kClean;
  double mu = kMuLaw;              // g711_mulaw
  double cutoff_hz = 3400.0;       // bandlimit
  double noise_floor_db = 40.0;    // bandlimit: white noise this far below signal RMS

  std::string name() const;
  static CodecProfile parse(const std::string &name);
};

// Output is 16 kHz with the input length. Throws UsageError for other rates.
// `seed` drives the bandlimit noise and is otherwise unused.
AudioBuffer apply_codec(const AudioBuffer &buffer, const CodecProfile &profile,
                        uint64_t seed = 0);

// ---- synthetic corpus -----------------------------------------------------

struct ArtifactConfig {
  // Levels in dB relative to the voiced signal RMS at strength 1.
  double low_band_db = -6.0;
  double high_band_db = -18.0;
  // Per-utterance strength is drawn uniformly from this range.
  double strength_min = 0.3;
  double strength_max = 1.0;
};

struct CorpusSpec {
  int n_bonafide = 750;
  int n_spoof = 750;
  // Relative subset sizes; each label is split in these proportions.
  double train_weight = 1000.0;
  double dev_weight = 200.0;
  double eval_weight = 300.0;
  double duration_min_s = 2.0;
  double duration_max_s = 4.0;
  int sample_rate = 16000;
  double silence_pad_min_s = 0.1;
  double silence_pad_max_s = 0.5;
  ArtifactConfig artifacts;
  uint64_t seed = 1;

  void validate() const;
};

// Split of n items in the spec's proportions, largest remainder rounding.
std::vector<int> subset_counts(const CorpusSpec &spec, int n);

// One utterance from its own seed. The speech part depends only on the seed;
// artifacts are drawn from an independent stream and scaled by the strengths,
// so a spoof generated with both strengths at zero equals the bonafide
// rendering of the same seed.
AudioBuffer synth_utterance(uint64_t seed, Label label, const CorpusSpec &spec);

// Ids "synth-<subset>-<label>-<n>" with n zero-padded to five digits.
std::vector<Utterance> generate_corpus(const CorpusSpec &spec);

struct ManifestEntry {
  std::string utt_id;
  std::string wav_path;  // relative to the manifest directory
  Label label = Label::kSpoof;
  Subset subset = Subset::kTrain;
};

// TSV: utt_id, wav path, label, subset, with a header line.
std::string format_manifest(const std::vector<ManifestEntry> &entries);
std::vector<ManifestEntry> parse_manifest(const std::string &text, const std::string &name);
void write_manifest(const std::vector<ManifestEntry> &entries, const std::string &path);
std::vector<ManifestEntry> read_manifest(const std::string &path);

}  // namespace cmfront

#endif  // CMFRONT_CHANNEL_H_
