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

#ifndef CMFRONT_FILTERS_H_
#define CMFRONT_FILTERS_H_

#include <span>
#include <string>
#include <vector>

#include "cmfront/signal.h"

namespace cmfront {

// Ratio of a cutoff frequency to the Nyquist frequency, in (0, 1].
class CutoffFraction {
 public:
  explicit CutoffFraction(double value);
  double value() const { return value_; }
  double hz(int sample_rate) const { return value_ * sample_rate / 2.0; }

 private:
  double value_;
};

struct FilterSpec {
  int order = 8;
  double ripple_db = 0.05;
  double cutoff_hz = 4000.0;
  int sample_rate = 16000;

  void validate() const;
};

// One biquad, a0 normalized to 1:
//   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct SosFilter {
  std::vector<Biquad> sections;
  double overall_gain = 1.0;
};

// Passband ripple epsilon for a ripple given in dB.
double cheby1_epsilon(double ripple_db);

// Chebyshev type I low-pass designed from the analog prototype by the
// prewarped bilinear transform, so that |H(cutoff_hz)| = -ripple_db dB.
// Conjugate pole pairs become biquads with their zeros at z = -1, each
// normalized to unit DC gain; sections are ordered by ascending pole radius.
// For even orders overall_gain is 10^(-ripple_db/20) (DC sits at the bottom
// of the ripple), for odd orders it is 1.
SosFilter design_cheby1(const FilterSpec &spec);

// Pole radii of every section, for stability checks.
std::vector<double> pole_magnitudes(const SosFilter &filter);

std::vector<Complex> freq_response(const SosFilter &filter,
                                   std::span<const double> freqs_hz,
                                   int sample_rate);

// Causal cascade filtering, transposed direct form II, zero initial state.
AudioBuffer sosfilt(const SosFilter &filter, const AudioBuffer &buffer);

// Plain-text coefficient dump: one "b0 b1 b2 a1 a2" line per section at 17
// significant digits, preceded by a "gain" line.
std::string format_sos(const SosFilter &filter);

constexpr int kFrontendFilterOrder = 8;
constexpr double kFrontendRippleDb = 0.05;

// Order-8, 0.05 dB Chebyshev low-pass at fraction x Nyquist. The output keeps
// the input sample rate.
AudioBuffer lowpass_frontend(const AudioBuffer &buffer, CutoffFraction fraction);
// Same with a caller-chosen order and ripple.
AudioBuffer lowpass_frontend(const AudioBuffer &buffer, CutoffFraction fraction, int order,
                             double ripple_db);

}  // namespace cmfront

#endif  // CMFRONT_FILTERS_H_
