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

#ifndef CMFRONT_SIGNAL_H_
#define CMFRONT_SIGNAL_H_

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cmfront {

using Complex = std::complex<double>;

// Mono waveform. Samples are normalized amplitudes, nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 16000;

  AudioBuffer() = default;
  AudioBuffer(std::vector<double> s, int rate)
      : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  // Throws DataError if the sample rate is not positive or a sample is NaN/Inf.
  void validate() const;
};

AudioBuffer read_wav(const std::string &path);

// Writes 16-bit PCM. Samples are clipped to [-1, 1] and scaled by 32768,
// with +1.0 mapping to 32767.
void write_wav(const AudioBuffer &buffer, const std::string &path);

// Symmetric Blackman window of length n (n >= 2).
std::vector<double> blackman_window(std::size_t n);

bool is_power_of_two(std::size_t n);

// Radix-2 FFT plan for one size. Twiddles are computed once; transform() is
// const and may be shared between threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const { return n_; }

  // Process-wide plan for size n, built on first use. Thread-safe.
  static const FftPlan &cached(std::size_t n);

  // In-place transform. The inverse includes the 1/n normalization.
  void transform(std::span<Complex> data, bool inverse) const;

 private:
  std::size_t n_;
  std::vector<Complex> twiddles_;
  std::vector<double> stage_twiddles_;
  std::vector<std::size_t> bitrev_;
};

// X[k] = sum_m x[m] exp(-2 pi i k m / n). x is zero-padded to n, which must
// be a power of two no smaller than x.size().
std::vector<Complex> fft(std::span<const Complex> x, std::size_t n);
std::vector<Complex> ifft(std::span<const Complex> x, std::size_t n);

struct StftConfig {
  std::size_t n_fft = 1024;
  std::size_t hop = 128;
  std::size_t win_length = 1024;
};

// Complex spectrogram, stored frame-major: bin k of frame t lives at
// data[t * num_bins() + k].
struct Spectrogram {
  std::size_t n_fft = 1024;
  std::size_t hop = 128;
  std::size_t win_length = 1024;
  int sample_rate = 16000;
  std::size_t frames = 0;
  std::vector<Complex> data;

  std::size_t num_bins() const { return n_fft / 2 + 1; }
  Complex &at(std::size_t bin, std::size_t frame) {
    return data[frame * num_bins() + bin];
  }
  const Complex &at(std::size_t bin, std::size_t frame) const {
    return data[frame * num_bins() + bin];
  }
  std::span<Complex> frame(std::size_t t) {
    return {data.data() + t * num_bins(), num_bins()};
  }
  std::span<const Complex> frame(std::size_t t) const {
    return {data.data() + t * num_bins(), num_bins()};
  }
};

// Centered STFT: the signal is reflect-padded by n_fft/2 on both sides and
// framed every hop samples, giving 1 + floor(len / hop) frames. Each frame is
// multiplied by a symmetric Blackman window of win_length (centered inside
// n_fft) and transformed; bins 0..n_fft/2 are kept.
Spectrogram stft(const AudioBuffer &buffer, const StftConfig &config = {});

// Weighted overlap-add inverse of stft(), normalized by the summed squared
// window. Returns exactly out_len samples.
AudioBuffer istft(const Spectrogram &spec, std::size_t out_len);

// 2:1 and 1:2 rate conversion with a Chebyshev type I anti-alias/anti-image
// low-pass at 0.8 of the lower of the two Nyquist frequencies.
AudioBuffer resample(const AudioBuffer &buffer, int target_rate);

}  // namespace cmfront

#endif  // CMFRONT_SIGNAL_H_
