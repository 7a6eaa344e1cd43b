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

#include "cmfront/filters.h"
#include "doctest.h"
#include "test_util.h"

using namespace cmfront;
using namespace cmfront::testing;

namespace {

FilterSpec spec_at(double fraction, int order = 8, double ripple = 0.05) {
  FilterSpec s;
  s.order = order;
  s.ripple_db = ripple;
  s.cutoff_hz = fraction * 8000.0;
  s.sample_rate = 16000;
  return s;
}

double mag_at(const SosFilter &f, double hz) {
  const double freqs[] = {hz};
  return std::abs(freq_response(f, freqs, 16000)[0]);
}

}  // namespace

TEST_CASE("cheby1 epsilon closed form") {
  CHECK(cheby1_epsilon(0.05) == doctest::Approx(std::sqrt(std::pow(10.0, 0.005) - 1.0)));
  CHECK(cheby1_epsilon(0.05) == doctest::Approx(0.1076079).epsilon(1e-6));
  CHECK(cheby1_epsilon(3.0) == doctest::Approx(0.9976283).epsilon(1e-6));
}

TEST_CASE("design_cheby1 order 8, 0.05 dB, 4 kHz") {
  const auto f = design_cheby1(spec_at(0.5));
  CHECK(f.sections.size() == 4);
  const double edge = std::pow(10.0, -0.05 / 20.0);
  CHECK(std::abs(mag_at(f, 4000.0) - edge) < 1e-6);
  CHECK(std::abs(mag_at(f, 0.0) - edge) < 1e-9);
  CHECK(mag_at(f, 6400.0) < std::pow(10.0, -60.0 / 20.0));
  for (double r : pole_magnitudes(f)) CHECK(r < 1.0 - 1e-9);
}

TEST_CASE("design_cheby1 odd order and section layout") {
  const auto f = design_cheby1(spec_at(0.3, 5, 1.0));
  CHECK(f.sections.size() == 3);
  CHECK(f.overall_gain == 1.0);
  CHECK(mag_at(f, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(db(mag_at(f, 2400.0)) == doctest::Approx(-1.0).epsilon(1e-9));
  // Ascending pole radius across the biquads.
  const auto radii = pole_magnitudes(design_cheby1(spec_at(0.5)));
  for (std::size_t i = 2; i < radii.size(); i += 2) CHECK(radii[i] >= radii[i - 2]);
}

TEST_CASE("design_cheby1 rejects invalid specs") {
  CHECK_THROWS_AS(design_cheby1(spec_at(1.0)), UsageError);
  CHECK_THROWS_AS(design_cheby1(spec_at(0.5, 0)), UsageError);
  CHECK_THROWS_AS(design_cheby1(spec_at(0.5, 8, 0.0)), UsageError);
  CHECK_THROWS_AS(CutoffFraction(0.0), UsageError);
  CHECK_THROWS_AS(CutoffFraction(1.2), UsageError);
}

TEST_CASE("stability, passband and monotone stopband across the design grid") {
  for (int order : {2, 4, 6, 8}) {
    for (double ripple : {0.01, 0.05, 1.0}) {
      for (double fraction = 0.1; fraction <= 0.9 + 1e-12; fraction += 0.05) {
        const auto f = design_cheby1(spec_at(fraction, order, ripple));
        for (double r : pole_magnitudes(f)) CHECK(r < 1.0 - 1e-9);

        const double cutoff = fraction * 8000.0;
        const double floor = std::pow(10.0, -ripple / 20.0);
        std::vector<double> grid(512);
        for (int i = 0; i < 512; ++i) grid[i] = cutoff * i / 511.0;
        for (const auto &h : freq_response(f, grid, 16000)) {
          CHECK(std::abs(h) >= floor - 1e-6);
          CHECK(std::abs(h) <= 1.0 + 1e-6);
        }
        CHECK(std::abs(db(mag_at(f, cutoff)) + ripple) < 1e-6);

        std::vector<double> stop;
        for (double hz = 1.05 * cutoff; hz <= 8000.0; hz += 10.0) stop.push_back(hz);
        const auto resp = freq_response(f, stop, 16000);
        for (std::size_t i = 1; i < resp.size(); ++i)
          CHECK(std::abs(resp[i]) <= std::abs(resp[i - 1]) + 1e-9);
      }
    }
  }
}

TEST_CASE("freq_response identities") {
  SosFilter identity;
  identity.sections.push_back(Biquad{});
  const std::vector<double> freqs{0.0, 1000.0, 7999.0};
  for (const auto &h : freq_response(identity, freqs, 16000)) CHECK(std::abs(h - 1.0) < 1e-15);

  const auto f = design_cheby1(spec_at(0.4));
  double dc = f.overall_gain;
  for (const auto &q : f.sections) dc *= (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
  CHECK(std::abs(freq_response(f, std::vector<double>{0.0}, 16000)[0].real() - dc) < 1e-12);
}

TEST_CASE("sosfilt behaviour") {
  const auto f = design_cheby1(spec_at(0.5));
  SUBCASE("zero in, zero out") {
    AudioBuffer z(std::vector<double>(1000, 0.0), 16000);
    for (double v : sosfilt(f, z).samples) CHECK(v == 0.0);
  }
  SUBCASE("1 kHz passes within 0.05 dB") {
    const auto y = sosfilt(f, sine(1000.0, 0.5, 16000));
    CHECK(y.size() == 16000);
    CHECK(std::abs(db(tone_amplitude(y, 1000.0, 8000, 16000) / 0.5)) <= 0.05 + 1e-6);
  }
  SUBCASE("7 kHz is below -60 dB") {
    const auto y = sosfilt(f, sine(7000.0, 0.5, 16000));
    const double a = tone_amplitude(y, 7000.0, 8000, 16000);
    CHECK(db(a / 0.5) < -60.0);
    CHECK(db(a / 0.5) == doctest::Approx(db(mag_at(f, 7000.0))).epsilon(0.02));
  }
  SUBCASE("linearity and time invariance") {
    const auto a = white_noise(3000, 1), b = white_noise(3000, 2);
    AudioBuffer mix = a;
    for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] = 1.5 * a.samples[i] - 0.5 * b.samples[i];
    const auto ya = sosfilt(f, a), yb = sosfilt(f, b), ym = sosfilt(f, mix);
    for (std::size_t i = 0; i < mix.size(); ++i)
      CHECK(std::abs(ym.samples[i] - (1.5 * ya.samples[i] - 0.5 * yb.samples[i])) < 1e-10);

    AudioBuffer delayed = a;
    delayed.samples.insert(delayed.samples.begin(), 37, 0.0);
    const auto yd = sosfilt(f, delayed);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(yd.samples[i + 37] - ya.samples[i]) < 1e-10);
  }
}

TEST_CASE("lowpass_frontend") {
  SUBCASE("fraction 0.5 puts the edge at 4 kHz") {
    CHECK(CutoffFraction(0.5).hz(16000) == 4000.0);
    const auto y = lowpass_frontend(sine(4000.0, 0.5, 32000), CutoffFraction(0.5));
    CHECK(y.sample_rate == 16000);
    CHECK(db(tone_amplitude(y, 4000.0, 16000, 32000) / 0.5) == doctest::Approx(-0.05).epsilon(0.01));
  }
  SUBCASE("fraction 1.0 violates the filter precondition") {
    CHECK_THROWS_AS(lowpass_frontend(sine(100.0, 0.5, 100), CutoffFraction(1.0)), UsageError);
  }
  SUBCASE("white noise at fraction 0.4 keeps 99% of its energy below 3.6 kHz") {
    const auto y = lowpass_frontend(white_noise(1 << 16, 9), CutoffFraction(0.4));
    // PSD by periodogram of the whole record.
    std::vector<Complex> x(y.samples.begin(), y.samples.end());
    const auto X = fft(x, x.size());
    double below = 0.0, total = 0.0;
    for (std::size_t k = 0; k <= x.size() / 2; ++k) {
      const double hz = 16000.0 * k / x.size();
      const double p = std::norm(X[k]);
      total += p;
      if (hz < 3600.0) below += p;
    }
    CHECK(below / total >= 0.99);
  }
}

TEST_CASE("format_sos dumps 17 significant digits") {
  const auto text = format_sos(design_cheby1(spec_at(0.5)));
  CHECK(text.rfind("gain 0.99426", 0) == 0);
  int lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 5);
}
