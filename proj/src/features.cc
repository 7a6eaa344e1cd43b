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

#include "cmfront/features.h"

#include <algorithm>
#include <cmath>

#include "cmfront/binary_io.h"

namespace cmfront {

MelFilterbank build_mel_filterbank(std::size_t n_mels, std::size_t n_fft,
                                   int sample_rate, double f_min, double f_max) {
  if (n_mels < 1) throw UsageError("filterbank needs at least one channel");
  if (!is_power_of_two(n_fft)) throw UsageError("filterbank n_fft must be a power of two");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw UsageError("filterbank requires 0 <= f_min < f_max <= Nyquist");

  MelFilterbank bank;
  bank.n_mels = n_mels;
  bank.n_fft = n_fft;
  bank.sample_rate = sample_rate;
  bank.f_min = f_min;
  bank.f_max = f_max;

  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  const double step = (mel_hi - mel_lo) / static_cast<double>(n_mels + 1);
  bank.breakpoints_hz.resize(n_mels + 2);
  for (std::size_t i = 0; i < n_mels + 2; ++i)
    bank.breakpoints_hz[i] = mel_to_hz(mel_lo + step * static_cast<double>(i));
  bank.breakpoints_hz.front() = f_min;
  bank.breakpoints_hz.back() = f_max;

  const std::size_t bins = bank.num_bins();
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  bank.weights.assign(n_mels * bins, 0.0);
  bank.first_bin.assign(n_mels, 0);
  bank.last_bin.assign(n_mels, 0);
  for (std::size_t r = 0; r < n_mels; ++r) {
    const double lo = bank.breakpoints_hz[r];
    const double mid = bank.breakpoints_hz[r + 1];
    const double hi = bank.breakpoints_hz[r + 2];
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      const double w = std::max(0.0, std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid)));
      if (w > 0.0) {
        bank.weights[r * bins + k] = w;
        if (!any) bank.first_bin[r] = k;
        bank.last_bin[r] = k;
        any = true;
      }
    }
    if (!any)
      throw UsageError("mel channel " + std::to_string(r) + " covers no FFT bin; " +
                       "too many channels for n_fft " + std::to_string(n_fft));
  }
  return bank;
}

FbankMatrix fbank(const AudioBuffer &buffer, const MelFilterbank &bank) {
  if (buffer.sample_rate != bank.sample_rate)
    throw DataError("fbank: buffer sample rate " + std::to_string(buffer.sample_rate) +
                    " does not match filterbank rate " + std::to_string(bank.sample_rate));
  StftConfig cfg;
  cfg.n_fft = bank.n_fft;
  cfg.win_length = bank.n_fft;
  const Spectrogram spec = stft(buffer, cfg);
  const std::size_t bins = bank.num_bins();

  FbankMatrix out(bank.n_mels, spec.frames);
  out.hop = spec.hop;
  out.sample_rate = buffer.sample_rate;
  std::vector<double> power(bins);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const auto frame = spec.frame(t);
    for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(frame[k]);
    for (std::size_t r = 0; r < bank.n_mels; ++r) {
      double e = 0.0;
      const double *w = bank.weights.data() + r * bins;
      for (std::size_t k = bank.first_bin[r]; k <= bank.last_bin[r]; ++k) e += w[k] * power[k];
      out(r, t) = std::log(std::max(e, kLogFloor));
    }
  }
  return out;
}

TrimSpec trim_index(CutoffFraction fraction, std::size_t n_full, double f_full) {
  if (n_full < 1 || !(f_full > 0.0)) throw UsageError("trim_index: invalid full-band size");
  TrimSpec spec;
  spec.fraction = fraction.value();
  spec.n_full = n_full;
  spec.f_full = f_full;
  const double f_low = fraction.value() * f_full;
  const double ratio = std::log1p(f_low / 700.0) / std::log1p(f_full / 700.0);
  // The small guard keeps exact integers (e.g. fraction 1) from flooring down
  // through rounding error in the log ratio.
  const double n_low = std::floor(static_cast<double>(n_full) * ratio + 1e-9);
  if (n_low < 1.0)
    throw UsageError("cutoff fraction " + std::to_string(fraction.value()) +
                     " keeps no filterbank rows");
  spec.n_low = static_cast<std::size_t>(n_low);
  spec.f_low_effective =
      700.0 * (std::pow(1.0 + f_full / 700.0, n_low / static_cast<double>(n_full)) - 1.0);
  return spec;
}

FbankMatrix trim_bands(const FbankMatrix &features, const TrimSpec &spec) {
  if (spec.n_low > features.rows)
    throw DataError("trim_bands: keeping " + std::to_string(spec.n_low) +
                    " rows of a " + std::to_string(features.rows) + "-row feature");
  FbankMatrix out(spec.n_low, features.cols);
  out.hop = features.hop;
  out.sample_rate = features.sample_rate;
  std::copy_n(features.values.begin(), spec.n_low * features.cols, out.values.begin());
  return out;
}

FbankMatrix normalize_length(const FbankMatrix &features, LengthMode mode, Rng &rng,
                             const LengthConfig &config) {
  if (features.rows == 0 || features.cols == 0)
    throw DataError("normalize_length: empty feature matrix");
  const double seconds = mode == LengthMode::kTrain
                             ? rng.uniform(config.min_seconds, config.max_seconds)
                             : config.eval_seconds;
  const auto target = static_cast<std::size_t>(
      std::max(1.0, std::round(seconds * features.frames_per_second())));
  std::size_t offset = 0;
  if (features.cols > target && mode == LengthMode::kTrain)
    offset = static_cast<std::size_t>(rng.below(features.cols - target + 1));

  FbankMatrix out(features.rows, target);
  out.hop = features.hop;
  out.sample_rate = features.sample_rate;
  for (std::size_t r = 0; r < features.rows; ++r) {
    const double *src = features.values.data() + r * features.cols;
    double *dst = out.values.data() + r * target;
    for (std::size_t t = 0; t < target; ++t) dst[t] = src[(offset + t) % features.cols];
  }
  return out;
}

std::string encode_fbank(const FbankMatrix &features) {
  std::string out;
  out.reserve(16 + 4 * features.values.size());
  out.append("FBNK");
  binio::put_u32(out, 1);
  binio::put_u32(out, static_cast<uint32_t>(features.rows));
  binio::put_u32(out, static_cast<uint32_t>(features.cols));
  for (double v : features.values) binio::put_f32(out, static_cast<float>(v));
  return out;
}

void write_fbank(const FbankMatrix &features, const std::string &path) {
  binio::spit(path, encode_fbank(features));
}

FbankMatrix read_fbank(const std::string &path) {
  binio::Reader in(binio::slurp(path), path);
  in.expect_magic("FBNK");
  const uint32_t version = in.u32();
  if (version != 1) throw DataError(path + ": unsupported FBNK version " + std::to_string(version));
  const uint32_t rows = in.u32();
  const uint32_t cols = in.u32();
  FbankMatrix out(rows, cols);
  for (auto &v : out.values) v = in.f32();
  if (!in.at_end()) throw DataError(path + ": trailing bytes after FBNK payload");
  return out;
}

}  // namespace cmfront
