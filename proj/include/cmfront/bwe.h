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

#ifndef CMFRONT_BWE_H_
#define CMFRONT_BWE_H_

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cmfront/filters.h"
#include "cmfront/signal.h"

namespace cmfront {

// Bins 0..cutoff_bin (inclusive) form the low band, the rest the high band.
struct BandSplit {
  std::size_t n_fft = 1024;
  std::size_t cutoff_bin = 0;

  std::size_t low_bins() const { return cutoff_bin + 1; }
  std::size_t high_bins() const { return n_fft / 2 - cutoff_bin; }
};

// cutoff_bin = floor(fraction * n_fft / 2). Throws UsageError when fewer than
// two high bins remain.
BandSplit band_split(CutoffFraction fraction, std::size_t n_fft = 1024);

// Low-band bin that high-band bin (cutoff + j) copies, reflecting back and
// forth across [0, cutoff] when j exceeds the cutoff.
std::size_t mirror_bin(std::size_t cutoff_bin, std::size_t j);

// Amplitude gain for high-band bin (cutoff + j): -12 dB per octave above the
// cutoff.
double rolloff_gain(std::size_t cutoff_bin, std::size_t j);

enum class BweKind { kReplicate, kLinearRegressor };

const char *bwe_kind_name(BweKind kind);
BweKind parse_bwe_kind(const std::string &token);

struct BweExtender {
  BweKind kind = BweKind::kReplicate;
  double fraction = 0.5;
  std::size_t n_fft = 1024;
  // Linear regressor only: high = W * low + b on log-magnitudes.
  Eigen::MatrixXd W;  // high_bins x low_bins
  Eigen::VectorXd b;  // high_bins

  static BweExtender replicate(CutoffFraction fraction);
};

// Energy above the cutoff relative to the total, in dB. Inputs to the extender
// are expected to sit at or below -40 dB.
double highband_leakage_db(const AudioBuffer &narrowband, CutoffFraction fraction);

// High-band magnitudes are mirrored low-band magnitudes times the rolloff
// gain; the phase is the mirrored phase negated. Low-band bins are copied
// unchanged.
Spectrogram replicate_spectrum(const Spectrogram &narrow, const BandSplit &split);
AudioBuffer extend_replicate(const AudioBuffer &narrowband, CutoffFraction fraction);

// Spectrum-level form of extend(), before the inverse STFT.
Spectrogram extend_spectrum(const Spectrogram &narrow, const BweExtender &extender);
AudioBuffer extend(const AudioBuffer &narrowband, const BweExtender &extender);

struct RidgeFit {
  Eigen::MatrixXd W;  // outputs x inputs
  Eigen::VectorXd b;
};

// Ridge regression with an unpenalized intercept: minimizes
// |Y - X W' - 1 b'|^2 + lambda |W|^2. Rows of X and Y are samples.
RidgeFit fit_ridge(const Eigen::MatrixXd &X, const Eigen::MatrixXd &Y, double lambda);

// Low-band (features) and high-band (targets) log-magnitudes, one row per
// frame, floored at 1e-10 before the log.
Eigen::MatrixXd low_band_features(const Spectrogram &spec, const BandSplit &split);
Eigen::MatrixXd high_band_targets(const Spectrogram &spec, const BandSplit &split);

constexpr double kDefaultRidgeLambda = 1e-3;

// Streams (narrowband, wideband) pairs into the normal equations so that a
// large corpus never has to be held in memory at once.
class RegressorTrainer {
 public:
  explicit RegressorTrainer(CutoffFraction fraction);
  ~RegressorTrainer();
  RegressorTrainer(const RegressorTrainer &) = delete;
  RegressorTrainer &operator=(const RegressorTrainer &) = delete;

  void add(const AudioBuffer &narrowband, const AudioBuffer &wideband);
  long frames() const;
  BweExtender finish(double ridge_lambda = kDefaultRidgeLambda) const;

 private:
  struct State;
  double fraction_;
  BandSplit split_;
  std::unique_ptr<State> state_;
};

// pairs are (narrowband, wideband) with matching lengths.
BweExtender train_linear_regressor(const std::vector<std::pair<AudioBuffer, AudioBuffer>> &pairs,
                                   CutoffFraction fraction, double ridge_lambda = kDefaultRidgeLambda);

struct BweQuality {
  double lsd_db = 0.0;
  double highband_snr_db = 0.0;
};

BweQuality measure_quality(const AudioBuffer &extended, const AudioBuffer &reference,
                           CutoffFraction fraction);

// "BWE1", u32 kind, u32 n_fft, f64 fraction, u32 rows, u32 cols, then W
// row-major and b as float64.
std::string encode_extender(const BweExtender &extender);
BweExtender decode_extender(const std::string &bytes, const std::string &name = "extender");
void save_extender(const BweExtender &extender, const std::string &path);
BweExtender load_extender(const std::string &path);

}  // namespace cmfront

#endif  // CMFRONT_BWE_H_
