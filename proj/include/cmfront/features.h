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

#ifndef CMFRONT_FEATURES_H_
#define CMFRONT_FEATURES_H_

#include <cstddef>
#include <string>
#include <vector>

#include "cmfront/common.h"
#include "cmfront/filters.h"
#include "cmfront/signal.h"

namespace cmfront {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular HTK-mel filterbank over the bins of an n_fft-point spectrum.
// Row r rises from breakpoint r to a peak of 1 at breakpoint r+1 and falls to
// zero at breakpoint r+2; breakpoints are uniform on the mel axis.
struct MelFilterbank {
  std::size_t n_mels = 80;
  std::size_t n_fft = 1024;
  int sample_rate = 16000;
  double f_min = 0.0;
  double f_max = 8000.0;
  std::vector<double> breakpoints_hz;  // n_mels + 2 entries
  std::vector<double> weights;         // n_mels x (n_fft/2 + 1), row-major
  std::vector<std::size_t> first_bin;  // nonzero support of each row
  std::vector<std::size_t> last_bin;   // inclusive

  std::size_t num_bins() const { return n_fft / 2 + 1; }
  double weight(std::size_t row, std::size_t bin) const {
    return weights[row * num_bins() + bin];
  }
  double center_hz(std::size_t row) const { return breakpoints_hz[row + 1]; }
};

MelFilterbank build_mel_filterbank(std::size_t n_mels = 80, std::size_t n_fft = 1024,
                                   int sample_rate = 16000, double f_min = 0.0,
                                   double f_max = 8000.0);

constexpr double kLogFloor = 1e-10;

// Log-energy feature matrix, rows = filterbank channels, cols = frames,
// stored row-major.
struct FbankMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::size_t hop = 128;
  int sample_rate = 16000;

  FbankMatrix() = default;
  FbankMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double &operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double frames_per_second() const { return static_cast<double>(sample_rate) / hop; }
};

// ln(max(mel-weighted power spectrum, 1e-10)) per frame, using the default
// STFT (1024-point Blackman, hop 128).
FbankMatrix fbank(const AudioBuffer &buffer, const MelFilterbank &bank);

struct TrimSpec {
  double fraction = 1.0;
  std::size_t n_full = 80;
  double f_full = 8000.0;
  std::size_t n_low = 80;
  double f_low_effective = 8000.0;
};

// Number of low-frequency filterbank rows covering [0, fraction * f_full]:
//   n_low = floor(n_full * log(1 + f_L/700) / log(1 + f_full/700)),
// and the cutoff actually represented by those rows,
//   f_eff = 700 * ((1 + f_full/700)^(n_low/n_full) - 1).
TrimSpec trim_index(CutoffFraction fraction, std::size_t n_full = 80,
                    double f_full = 8000.0);

// Keeps rows 0..n_low-1 unchanged.
FbankMatrix trim_bands(const FbankMatrix &features, const TrimSpec &spec);

enum class LengthMode { kTrain, kEval };

struct LengthConfig {
  double min_seconds = 3.0;
  double max_seconds = 5.0;
  double eval_seconds = 4.0;
};

// Crops or self-concatenates along time to a target duration: a uniform draw
// in [min, max] seconds with a random crop offset in train mode; eval_seconds
// from offset zero in eval mode. The generator is only consumed in train mode.
FbankMatrix normalize_length(const FbankMatrix &features, LengthMode mode, Rng &rng,
                             const LengthConfig &config = {});

struct VadResult {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  AudioBuffer trimmed;
};

struct VadConfig {
  double top_db = 40.0;
  std::size_t frame_length = 2048;
  std::size_t hop = 512;
};

// Energy-based trimming of leading and trailing silence. Frames are centered
// on multiples of hop (zero padded outside the signal) and run until the
// centre reaches the end of the buffer; a frame is silent when its mean
// power is more than top_db below the loudest frame. start is the centre of
// the first non-silent frame, end the centre of the last one (clamped to the
// buffer length). Throws DataError("all-silence utterance") when every frame
// is silent.
VadResult vad_trim(const AudioBuffer &buffer, const VadConfig &config = {});

// Binary feature file: "FBNK", u32 version (1), u32 rows, u32 cols, then
// rows*cols little-endian float32 values in row-major order.
void write_fbank(const FbankMatrix &features, const std::string &path);
FbankMatrix read_fbank(const std::string &path);
std::string encode_fbank(const FbankMatrix &features);

}  // namespace cmfront

#endif  // CMFRONT_FEATURES_H_
