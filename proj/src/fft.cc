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

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "cmfront/common.h"
#include "cmfront/signal.h"

namespace cmfront {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::vector<double> blackman_window(std::size_t n) {
  if (n < 2) throw UsageError("blackman window needs at least 2 points");
  std::vector<double> w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    const double x = static_cast<double>(k) / denom;
    w[k] = 0.42 - 0.5 * std::cos(2.0 * M_PI * x) + 0.08 * std::cos(4.0 * M_PI * x);
  }
  // Pin the exact identities the cosine sums only reach to rounding.
  w[0] = 0.0;
  w[n - 1] = 0.0;
  for (std::size_t k = 0; k < n / 2; ++k) w[n - 1 - k] = w[k];
  if (n % 2 == 1) w[n / 2] = 1.0;
  return w;
}

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (!is_power_of_two(n))
    throw UsageError("fft size " + std::to_string(n) + " is not a power of two");
  twiddles_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
    twiddles_[k] = Complex(std::cos(angle), std::sin(angle));
  }
  // Stages of length 8, 16, ... n laid out back to back (the stage with half
  // h starts at h - 4 complex entries), so the inner loop reads them with
  // unit stride.
  if (n >= 8) stage_twiddles_.reserve(2 * (n - 4));
  for (std::size_t len = 8; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t k = 0; k < len / 2; ++k) {
      stage_twiddles_.push_back(twiddles_[k * stride].real());
      stage_twiddles_.push_back(twiddles_[k * stride].imag());
    }
  }
  bitrev_.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }
}

void FftPlan::transform(std::span<Complex> data, bool inverse) const {
  if (data.size() != n_) throw UsageError("fft buffer does not match plan size");
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  // Butterflies on raw doubles: std::complex multiplication takes the
  // Annex G NaN-recovery path, which costs several times more.
  double *d = reinterpret_cast<double *>(data.data());
  const double sign = inverse ? -1.0 : 1.0;
  // len = 2 and len = 4 need no multiplications.
  if (n_ >= 2) {
    for (std::size_t i = 0; i < 2 * n_; i += 4) {
      const double ar = d[i], ai = d[i + 1], br = d[i + 2], bi = d[i + 3];
      d[i] = ar + br;
      d[i + 1] = ai + bi;
      d[i + 2] = ar - br;
      d[i + 3] = ai - bi;
    }
  }
  if (n_ >= 4) {
    for (std::size_t i = 0; i < 2 * n_; i += 8) {
      double *a = d + i;
      // twiddle for k = 1 is -i (forward) or +i (inverse)
      const double vr = sign * a[7], vi = -sign * a[6];
      const double a0r = a[0], a0i = a[1], a1r = a[2], a1i = a[3];
      a[0] = a0r + a[4];
      a[1] = a0i + a[5];
      a[4] = a0r - a[4];
      a[5] = a0i - a[5];
      a[2] = a1r + vr;
      a[3] = a1i + vi;
      a[6] = a1r - vr;
      a[7] = a1i - vi;
    }
  }
  const double *tw = stage_twiddles_.data();
  for (std::size_t len = 8; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const double *w = tw + 2 * (half - 4);  // this stage's half twiddles
    for (std::size_t start = 0; start < n_; start += len) {
      double *a = d + 2 * start;
      double *b = a + 2 * half;
      for (std::size_t k = 0; k < half; ++k) {
        const double wr = w[2 * k];
        const double wi = sign * w[2 * k + 1];
        const double vr = b[2 * k] * wr - b[2 * k + 1] * wi;
        const double vi = b[2 * k] * wi + b[2 * k + 1] * wr;
        b[2 * k] = a[2 * k] - vr;
        b[2 * k + 1] = a[2 * k + 1] - vi;
        a[2 * k] += vr;
        a[2 * k + 1] += vi;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < 2 * n_; ++i) d[i] *= scale;
  }
}

const FftPlan &FftPlan::cached(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<FftPlan>> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto &slot = plans[n];
  if (!slot) slot = std::make_unique<FftPlan>(n);
  return *slot;
}

namespace {

std::vector<Complex> padded_transform(std::span<const Complex> x, std::size_t n,
                                      bool inverse) {
  if (!is_power_of_two(n))
    throw UsageError("fft size " + std::to_string(n) + " is not a power of two");
  if (x.size() > n) throw UsageError("fft input longer than transform size");
  std::vector<Complex> out(n, Complex(0.0, 0.0));
  std::copy(x.begin(), x.end(), out.begin());
  FftPlan::cached(n).transform(out, inverse);
  return out;
}

}  // namespace

std::vector<Complex> fft(std::span<const Complex> x, std::size_t n) {
  return padded_transform(x, n, false);
}

std::vector<Complex> ifft(std::span<const Complex> x, std::size_t n) {
  return padded_transform(x, n, true);
}

}  // namespace cmfront
