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

#include <algorithm>
#include <cmath>

#include "cmfront/common.h"
#include "cmfront/signal.h"

namespace cmfront {

namespace {

// numpy-style "reflect" (edge sample not repeated), folded repeatedly so that
// signals shorter than the pad still get a defined extension.
std::size_t reflect_index(long j, std::size_t len) {
  if (len == 1) return 0;
  const long n = static_cast<long>(len);
  const long period = 2 * (n - 1);
  j %= period;
  if (j < 0) j += period;
  return static_cast<std::size_t>(j < n ? j : period - j);
}

void check_config(const StftConfig &c) {
  if (c.hop == 0) throw UsageError("stft hop must be positive");
  if (!is_power_of_two(c.n_fft))
    throw UsageError("stft n_fft must be a power of two");
  if (c.win_length < 2 || c.win_length > c.n_fft || c.hop > c.win_length)
    throw UsageError("stft requires hop <= win_length <= n_fft");
}

// Blackman window of win_length, zero-padded symmetrically to n_fft.
std::vector<double> frame_window(std::size_t n_fft, std::size_t win_length) {
  std::vector<double> w(n_fft, 0.0);
  const auto base = blackman_window(win_length);
  const std::size_t offset = (n_fft - win_length) / 2;
  std::copy(base.begin(), base.end(), w.begin() + static_cast<long>(offset));
  return w;
}

}  // namespace

Spectrogram stft(const AudioBuffer &buffer, const StftConfig &config) {
  check_config(config);
  if (buffer.empty()) throw DataError("stft of an empty buffer");
  const std::size_t n = config.n_fft;
  const std::size_t bins = n / 2 + 1;
  const std::size_t len = buffer.size();
  const long pad = static_cast<long>(n / 2);

  Spectrogram spec;
  spec.n_fft = n;
  spec.hop = config.hop;
  spec.win_length = config.win_length;
  spec.sample_rate = buffer.sample_rate;
  spec.frames = 1 + len / config.hop;
  spec.data.assign(spec.frames * bins, Complex(0.0, 0.0));

  const auto window = frame_window(n, config.win_length);
  const FftPlan &plan = FftPlan::cached(n);
  std::vector<Complex> work(n);

  auto sample_at = [&](std::size_t frame, std::size_t m) {
    const long j = static_cast<long>(frame * config.hop + m) - pad;
    return buffer.samples[reflect_index(j, len)] * window[m];
  };

  // Two real frames per complex transform: frame a in the real part, frame b
  // in the imaginary part, separated afterwards by conjugate symmetry.
  for (std::size_t t = 0; t < spec.frames; t += 2) {
    const bool pair = t + 1 < spec.frames;
    for (std::size_t m = 0; m < n; ++m)
      work[m] = Complex(sample_at(t, m), pair ? sample_at(t + 1, m) : 0.0);
    plan.transform(work, false);
    auto fa = spec.frame(t);
    for (std::size_t k = 0; k < bins; ++k) {
      const Complex z = work[k];
      const Complex zc = std::conj(work[(n - k) % n]);
      fa[k] = 0.5 * (z + zc);
      if (pair) spec.at(k, t + 1) = Complex(0.0, -0.5) * (z - zc);
    }
  }
  return spec;
}

AudioBuffer istft(const Spectrogram &spec, std::size_t out_len) {
  const std::size_t n = spec.n_fft;
  check_config({n, spec.hop, spec.win_length});
  const std::size_t bins = spec.num_bins();
  if (spec.data.size() != spec.frames * bins)
    throw DataError("spectrogram storage does not match its shape");
  const std::size_t pad = n / 2;
  const std::size_t total = n + spec.hop * (spec.frames == 0 ? 0 : spec.frames - 1);

  std::vector<double> acc(total, 0.0), norm(total, 0.0);
  const auto window = frame_window(n, spec.win_length);
  const FftPlan &plan = FftPlan::cached(n);
  std::vector<Complex> work(n);

  auto fill_hermitian = [&](std::span<const Complex> half, std::vector<Complex> &full,
                            Complex scale) {
    for (std::size_t k = 0; k < bins; ++k) full[k] += scale * half[k];
    for (std::size_t k = bins; k < n; ++k) full[k] += scale * std::conj(half[n - k]);
  };

  for (std::size_t t = 0; t < spec.frames; t += 2) {
    const bool pair = t + 1 < spec.frames;
    std::fill(work.begin(), work.end(), Complex(0.0, 0.0));
    fill_hermitian(spec.frame(t), work, Complex(1.0, 0.0));
    if (pair) fill_hermitian(spec.frame(t + 1), work, Complex(0.0, 1.0));
    plan.transform(work, true);
    for (std::size_t m = 0; m < n; ++m) {
      const double w = window[m];
      acc[t * spec.hop + m] += w * work[m].real();
      norm[t * spec.hop + m] += w * w;
      if (pair) {
        acc[(t + 1) * spec.hop + m] += w * work[m].imag();
        norm[(t + 1) * spec.hop + m] += w * w;
      }
    }
  }

  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(out_len, 0.0);
  for (std::size_t i = 0; i < out_len; ++i) {
    const std::size_t j = i + pad;
    if (j >= total || norm[j] < 1e-10)
      throw DataError("istft window normalization vanishes at sample " +
                      std::to_string(i));
    out.samples[i] = acc[j] / norm[j];
  }
  return out;
}

}  // namespace cmfront
