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
#include <fstream>
#include <numeric>

#include "cmfront/features.h"
#include "doctest.h"
#include "test_util.h"

using namespace cmfront;
using namespace cmfront::testing;

namespace {

// Largest index whose mel-uniform breakpoint (n_full divisions of [0, f_full]
// on the mel axis) does not exceed f_low. Independent of the closed form.
std::size_t brute_force_trim(double f_low, std::size_t n_full, double f_full) {
  const double top = hz_to_mel(f_full);
  std::size_t best = 0;
  for (std::size_t i = 0; i <= n_full; ++i) {
    const double hz = mel_to_hz(top * static_cast<double>(i) / n_full);
    if (hz <= f_low) best = i;
  }
  return best;
}

double row_mean(const FbankMatrix &m, std::size_t r, std::size_t from, std::size_t to) {
  double acc = 0.0;
  for (std::size_t t = from; t < to; ++t) acc += m(r, t);
  return acc / static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("mel filterbank construction") {
  const auto bank = build_mel_filterbank();
  CHECK(bank.n_mels == 80);
  CHECK(bank.num_bins() == 513);
  CHECK(bank.weights.size() == 80 * 513);
  CHECK(bank.breakpoints_hz.front() == 0.0);
  CHECK(bank.breakpoints_hz.back() == 8000.0);

  const double spacing = hz_to_mel(8000.0) / 81.0;
  for (std::size_t i = 0; i < bank.breakpoints_hz.size(); ++i)
    CHECK(hz_to_mel(bank.breakpoints_hz[i]) == doctest::Approx(spacing * i).epsilon(1e-9));
  for (std::size_t r = 1; r < 80; ++r) CHECK(bank.center_hz(r) > bank.center_hz(r - 1));

  for (std::size_t r = 0; r < 80; ++r) {
    // Nonnegative and unimodal: rises, then falls.
    bool falling = false;
    for (std::size_t k = 1; k < 513; ++k) {
      const double prev = bank.weight(r, k - 1), cur = bank.weight(r, k);
      CHECK(cur >= 0.0);
      CHECK(cur <= 1.0);
      if (cur < prev) falling = true;
      if (falling) CHECK(cur <= prev);
    }
  }
  CHECK_THROWS_AS(build_mel_filterbank(400, 256), UsageError);
  CHECK_THROWS_AS(build_mel_filterbank(80, 1024, 16000, 0.0, 9000.0), UsageError);
}

TEST_CASE("trim_index reproduces the published index table") {
  const double fractions[] = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  const std::size_t expected[] = {37, 47, 54, 60, 65, 69};
  for (int i = 0; i < 6; ++i) CHECK(trim_index(CutoffFraction(fractions[i])).n_low == expected[i]);

  const auto half = trim_index(CutoffFraction(0.5));
  CHECK(std::abs(half.f_low_effective - 3933.55) <= 0.01);

  const auto full = trim_index(CutoffFraction(1.0));
  CHECK(full.n_low == 80);
  CHECK(full.f_low_effective == doctest::Approx(8000.0).epsilon(1e-12));

  CHECK_THROWS_AS(trim_index(CutoffFraction(0.001)), UsageError);
}

TEST_CASE("trim_index agrees with brute force and is monotone") {
  Rng rng(2024);
  std::size_t previous = 0;
  std::vector<double> fractions(1000);
  for (auto &f : fractions) f = 0.02 + 0.98 * rng.uniform();
  for (double f : fractions) {
    const auto spec = trim_index(CutoffFraction(f));
    CHECK(spec.n_low == brute_force_trim(f * 8000.0, 80, 8000.0));
    CHECK(spec.f_low_effective <= f * 8000.0 + 1e-9);
  }
  std::sort(fractions.begin(), fractions.end());
  for (double f : fractions) {
    const auto n = trim_index(CutoffFraction(f)).n_low;
    CHECK(n >= previous);
    previous = n;
  }
}

TEST_CASE("fbank shapes and floors") {
  const auto bank = build_mel_filterbank();
  SUBCASE("silence sits on the log floor") {
    AudioBuffer z(std::vector<double>(8000, 0.0), 16000);
    const auto f = fbank(z, bank);
    for (double v : f.values) CHECK(v == std::log(1e-10));
  }
  SUBCASE("4 s gives 80 x 501") {
    const auto f = fbank(white_noise(64000, 1), bank);
    CHECK(f.rows == 80);
    CHECK(f.cols == 501);
    for (double v : f.values) {
      CHECK(std::isfinite(v));
      CHECK(v >= std::log(1e-10));
    }
  }
  SUBCASE("rate mismatch") {
    CHECK_THROWS_AS(fbank(white_noise(4000, 1, 0.1, 8000), bank), DataError);
  }
}

TEST_CASE("fbank of low-passed noise: stopband rows far below passband rows") {
  const auto bank = build_mel_filterbank();
  const auto x = white_noise(64000, 77, 0.3);
  const auto y = lowpass_frontend(x, CutoffFraction(0.5));
  const auto fx = fbank(x, bank), fy = fbank(y, bank);
  const std::size_t keep = trim_index(CutoffFraction(0.5)).n_low;

  // Oracle: for a flat input spectrum, the expected per-row attenuation is
  // the filterbank-weighted mean of |H|^2 over the row's bins.
  FilterSpec spec;
  spec.cutoff_hz = 4000.0;
  const auto filter = design_cheby1(spec);
  std::vector<double> bin_hz(bank.num_bins());
  for (std::size_t k = 0; k < bin_hz.size(); ++k) bin_hz[k] = 16000.0 * k / 1024.0;
  const auto response = freq_response(filter, bin_hz, 16000);

  double low = 0.0, high = 0.0;
  for (std::size_t r = 0; r < 80; ++r) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < bank.num_bins(); ++k) {
      num += bank.weight(r, k) * std::norm(response[k]);
      den += bank.weight(r, k);
    }
    const double predicted = -std::log(num / den);
    const double before = row_mean(fx, r, 20, fx.cols - 20);
    const double measured = before - row_mean(fy, r, 20, fy.cols - 20);
    if (before - predicted > std::log(kLogFloor) + 3.0)
      CHECK(measured == doctest::Approx(predicted).epsilon(0.05).scale(1.0));
    if (bank.center_hz(r) >= 6250.0) CHECK(measured >= 20.0);
    (r < keep ? low : high) += measured;
  }
  // Rows above the band-trim boundary lose an order of magnitude more than the
  // rows below it, which only see the passband ripple.
  CHECK(low / keep < 0.02);
  CHECK(high / (80 - keep) >= 12.0);
}

TEST_CASE("trimmed rows of a low-passed signal match the unfiltered rows") {
  const auto bank = build_mel_filterbank();
  const auto x = white_noise(64000, 31, 0.3);
  const auto fx = fbank(x, bank);
  const auto fy = fbank(lowpass_frontend(x, CutoffFraction(0.5)), bank);
  const auto spec = trim_index(CutoffFraction(0.5));
  const auto tx = trim_bands(fx, spec), ty = trim_bands(fy, spec);
  const double bound = 0.06 * std::log(10.0) / 10.0;  // 0.06 dB in natural-log units
  int checked = 0;
  for (std::size_t r = 0; r < spec.n_low; ++r) {
    if (bank.breakpoints_hz[r + 2] > 0.9 * 4000.0) continue;
    CHECK(std::abs(row_mean(tx, r, 20, tx.cols - 20) - row_mean(ty, r, 20, ty.cols - 20)) < bound);
    ++checked;
  }
  CHECK(checked > 40);
}

TEST_CASE("fbank frames are unaffected by appended silence") {
  const auto bank = build_mel_filterbank();
  const auto x = white_noise(16000, 8);
  auto padded = x;
  padded.samples.insert(padded.samples.end(), 128, 0.0);
  const auto a = fbank(x, bank), b = fbank(padded, bank);
  CHECK(b.cols == a.cols + 1);
  double err = 0.0;
  for (std::size_t r = 0; r < 80; ++r)
    for (std::size_t t = 0; t + 8 < a.cols; ++t) err = std::max(err, std::abs(a(r, t) - b(r, t)));
  CHECK(err < 1e-9);
}

TEST_CASE("trim_bands slicing") {
  const auto f = fbank(white_noise(64000, 4), build_mel_filterbank());
  const auto spec = trim_index(CutoffFraction(0.5));
  const auto t = trim_bands(f, spec);
  CHECK(t.rows == 60);
  CHECK(t.cols == 501);
  for (std::size_t r = 0; r < 60; ++r)
    for (std::size_t c = 0; c < t.cols; ++c) CHECK(t(r, c) == f(r, c));

  const auto same = trim_bands(f, trim_index(CutoffFraction(1.0)));
  CHECK(same.values == f.values);

  TrimSpec again = spec;
  again.n_full = 60;
  CHECK(trim_bands(t, again).values == t.values);

  TrimSpec too_many = spec;
  too_many.n_low = 81;
  CHECK_THROWS_AS(trim_bands(f, too_many), DataError);
}

TEST_CASE("normalize_length") {
  const auto bank = build_mel_filterbank();
  Rng unused(0);
  SUBCASE("long eval input keeps the first 4 s") {
    const auto f = fbank(white_noise(160000, 3), bank);
    const auto n = normalize_length(f, LengthMode::kEval, unused);
    CHECK(n.cols == 500);
    for (std::size_t r = 0; r < 80; ++r)
      for (std::size_t c = 0; c < 500; ++c) CHECK(n(r, c) == f(r, c));
  }
  SUBCASE("short eval input is tiled") {
    const auto f = fbank(white_noise(16000, 3), bank);  // 126 frames
    const auto n = normalize_length(f, LengthMode::kEval, unused);
    CHECK(n.cols == 500);
    for (std::size_t c = 0; c < 500; ++c) CHECK(n(5, c) == f(5, c % f.cols));
  }
  SUBCASE("train mode is reproducible and within 3..5 s") {
    const auto f = fbank(white_noise(100000, 3), bank);
    Rng a(42), b(42);
    for (int i = 0; i < 20; ++i) {
      const auto na = normalize_length(f, LengthMode::kTrain, a);
      const auto nb = normalize_length(f, LengthMode::kTrain, b);
      CHECK(na.values == nb.values);
      CHECK(na.cols >= 375);
      CHECK(na.cols <= 625);
    }
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(normalize_length(FbankMatrix(), LengthMode::kEval, unused), DataError);
  }
}

TEST_CASE("vad_trim") {
  SUBCASE("tone between silences") {
    AudioBuffer b;
    b.samples.assign(1600, 0.0);
    const auto tone = sine(1000.0, 0.5, 8000);
    b.samples.insert(b.samples.end(), tone.samples.begin(), tone.samples.end());
    b.samples.insert(b.samples.end(), 1600, 0.0);
    const auto v = vad_trim(b);
    CHECK(v.start >= 1024);
    CHECK(v.start <= 2048);
    CHECK(v.end >= 9600 - 512);
    CHECK(v.end <= 9600 + 1024);
    CHECK(v.trimmed.size() == v.end - v.start);
    CHECK(v.trimmed.samples[0] == b.samples[v.start]);

    const auto again = vad_trim(v.trimmed);
    CHECK(again.start == 0);
    CHECK(again.end == v.trimmed.size());
    CHECK(again.trimmed.samples == v.trimmed.samples);
  }
  SUBCASE("constant full-scale signal is kept whole") {
    for (std::size_t len : {16000u, 16300u, 700u}) {
      AudioBuffer b(std::vector<double>(len, 1.0), 16000);
      const auto v = vad_trim(b);
      CHECK(v.start == 0);
      CHECK(v.end == len);
    }
  }
  SUBCASE("frames within top_db of the peak are never dropped") {
    AudioBuffer b = white_noise(20000, 12, 0.2);
    for (std::size_t i = 0; i < 6000; ++i) b.samples[i] *= 0.003;    // -50 dB
    for (std::size_t i = 14000; i < 20000; ++i) b.samples[i] *= 0.05;  // -26 dB
    const auto v = vad_trim(b);
    CHECK(v.start > 4000);
    CHECK(v.start <= 6000);
    CHECK(v.end == 20000);
  }
  SUBCASE("all silence is an error") {
    AudioBuffer z(std::vector<double>(5000, 0.0), 16000);
    CHECK_THROWS_WITH_AS(vad_trim(z), "all-silence utterance", DataError);
  }
}

TEST_CASE("FBNK file round trip") {
  const auto dir = scratch_dir("fbnk");
  FbankMatrix m(3, 4);
  std::iota(m.values.begin(), m.values.end(), -2.5);
  const auto path = (dir / "u.fbnk").string();
  write_fbank(m, path);
  const auto bytes = encode_fbank(m);
  CHECK(bytes.substr(0, 4) == "FBNK");
  CHECK(bytes.size() == 16 + 4 * 12);
  const auto r = read_fbank(path);
  CHECK(r.rows == 3);
  CHECK(r.cols == 4);
  CHECK(r.values == m.values);

  std::ofstream(path, std::ios::binary) << "FBNKxx";
  CHECK_THROWS_AS(read_fbank(path), DataError);
}
