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

#include "cmfront/filters.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>

#include "cmfront/common.h"

namespace cmfront {

CutoffFraction::CutoffFraction(double value) : value_(value) {
  if (!(value > 0.0 && value <= 1.0))
    throw UsageError("cutoff fraction must lie in (0, 1], got " +
                     std::to_string(value));
}

void FilterSpec::validate() const {
  if (order < 1) throw UsageError("filter order must be at least 1");
  if (!(ripple_db > 0.0)) throw UsageError("filter ripple must be positive");
  if (sample_rate <= 0) throw UsageError("filter sample rate must be positive");
  if (!(cutoff_hz > 0.0 && cutoff_hz < sample_rate / 2.0))
    throw UsageError("filter cutoff " + std::to_string(cutoff_hz) +
                     " Hz must lie strictly between 0 and Nyquist");
}

double cheby1_epsilon(double ripple_db) {
  return std::sqrt(std::pow(10.0, ripple_db / 10.0) - 1.0);
}

SosFilter design_cheby1(const FilterSpec &spec) {
  spec.validate();
  const int n = spec.order;
  const double fs = spec.sample_rate;
  const double eps = cheby1_epsilon(spec.ripple_db);
  const double mu = std::asinh(1.0 / eps) / n;
  const double warped = 2.0 * fs * std::tan(M_PI * spec.cutoff_hz / fs);

  // Upper-half-plane prototype poles (plus the real pole for odd orders),
  // scaled to the prewarped edge and mapped through the bilinear transform.
  std::vector<std::complex<double>> upper;
  bool has_real = false;
  double real_pole = 0.0;
  for (int k = 0; k < n; ++k) {
    const double theta = M_PI * (2.0 * k + 1.0) / (2.0 * n);
    const std::complex<double> s(-std::sinh(mu) * std::sin(theta),
                                 std::cosh(mu) * std::cos(theta));
    const std::complex<double> sa = warped * s;
    const std::complex<double> z = (2.0 * fs + sa) / (2.0 * fs - sa);
    if (2 * k + 1 == n) {
      has_real = true;
      real_pole = z.real();
    } else if (s.imag() > 0.0) {
      upper.push_back(z);
    }
  }
  std::sort(upper.begin(), upper.end(), [](const auto &a, const auto &b) {
    const double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma < mb;
    return a.imag() < b.imag();
  });

  SosFilter filter;
  for (const auto &z : upper) {
    Biquad q;
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    const double g = (1.0 + q.a1 + q.a2) / 4.0;
    q.b0 = g;
    q.b1 = 2.0 * g;
    q.b2 = g;
    filter.sections.push_back(q);
  }
  if (has_real) {
    Biquad q;
    q.a1 = -real_pole;
    q.a2 = 0.0;
    const double g = (1.0 - real_pole) / 2.0;
    q.b0 = g;
    q.b1 = g;
    q.b2 = 0.0;
    filter.sections.push_back(q);
  }
  filter.overall_gain = (n % 2 == 0) ? 1.0 / std::sqrt(1.0 + eps * eps) : 1.0;

  for (double r : pole_magnitudes(filter)) {
    if (!(r < 1.0))
      throw InvariantError("designed filter has a pole on or outside the unit circle");
  }
  return filter;
}

std::vector<double> pole_magnitudes(const SosFilter &filter) {
  std::vector<double> out;
  for (const auto &q : filter.sections) {
    // Roots of z^2 + a1 z + a2.
    const std::complex<double> disc = std::sqrt(std::complex<double>(q.a1 * q.a1 - 4.0 * q.a2, 0.0));
    out.push_back(std::abs((-q.a1 + disc) / 2.0));
    out.push_back(std::abs((-q.a1 - disc) / 2.0));
  }
  return out;
}

std::vector<Complex> freq_response(const SosFilter &filter,
                                   std::span<const double> freqs_hz,
                                   int sample_rate) {
  std::vector<Complex> out;
  out.reserve(freqs_hz.size());
  for (double f : freqs_hz) {
    const double w = 2.0 * M_PI * f / sample_rate;
    const Complex z1 = std::polar(1.0, -w);
    const Complex z2 = z1 * z1;
    Complex h(filter.overall_gain, 0.0);
    for (const auto &q : filter.sections)
      h *= (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
    out.push_back(h);
  }
  return out;
}

AudioBuffer sosfilt(const SosFilter &filter, const AudioBuffer &buffer) {
  AudioBuffer out(buffer.samples, buffer.sample_rate);
  for (const auto &q : filter.sections) {
    double s1 = 0.0, s2 = 0.0;
    for (double &x : out.samples) {
      const double y = q.b0 * x + s1;
      s1 = q.b1 * x - q.a1 * y + s2;
      s2 = q.b2 * x - q.a2 * y;
      x = y;
    }
  }
  for (double &x : out.samples) {
    x *= filter.overall_gain;
    if (!std::isfinite(x)) throw InvariantError("sosfilt produced a non-finite sample");
  }
  return out;
}

std::string format_sos(const SosFilter &filter) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "gain %.17g\n", filter.overall_gain);
  out += line;
  for (const auto &q : filter.sections) {
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g %.17g %.17g\n", q.b0,
                  q.b1, q.b2, q.a1, q.a2);
    out += line;
  }
  return out;
}

AudioBuffer lowpass_frontend(const AudioBuffer &buffer, CutoffFraction fraction) {
  return lowpass_frontend(buffer, fraction, kFrontendFilterOrder, kFrontendRippleDb);
}

AudioBuffer lowpass_frontend(const AudioBuffer &buffer, CutoffFraction fraction, int order,
                             double ripple_db) {
  FilterSpec spec;
  spec.order = order;
  spec.ripple_db = ripple_db;
  spec.cutoff_hz = fraction.hz(buffer.sample_rate);
  spec.sample_rate = buffer.sample_rate;
  return sosfilt(design_cheby1(spec), buffer);
}

}  // namespace cmfront
