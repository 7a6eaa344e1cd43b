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

#include "cmfront/bwe.h"
#include "cmfront/channel.h"
#include "doctest.h"
#include "test_util.h"

using namespace cmfront;
using namespace cmfront::testing;

namespace {

const CutoffFraction kHalf(0.5);

AudioBuffer narrow_noise(std::size_t n, uint64_t seed) {
  return lowpass_frontend(white_noise(n, seed), kHalf);
}

// Largest low-band difference between two spectrograms, relative to the
// largest low-band magnitude of the first. The `guard` bins just below the
// cutoff and the four frames at each edge are skipped: re-analysis smears the
// synthesized high band across the cutoff by the window's main lobe.
double low_band_error(const Spectrogram &a, const Spectrogram &b, std::size_t cutoff,
                      std::size_t guard) {
  double peak = 0.0, err = 0.0;
  for (std::size_t t = 4; t + 4 < a.frames; ++t)
    for (std::size_t k = 0; k + guard <= cutoff; ++k) {
      peak = std::max(peak, std::abs(a.at(k, t)));
      err = std::max(err, std::abs(a.at(k, t) - b.at(k, t)));
    }
  return err / peak;
}

}  // namespace

TEST_CASE("band split and mirror geometry") {
  const auto s = band_split(kHalf);
  CHECK(s.cutoff_bin == 256);
  CHECK(s.low_bins() == 257);
  CHECK(s.high_bins() == 256);
  CHECK(band_split(CutoffFraction(0.4)).cutoff_bin == 204);
  CHECK_THROWS_AS(band_split(CutoffFraction(0.999)), UsageError);
  CHECK_THROWS_AS(band_split(CutoffFraction(0.001)), UsageError);

  CHECK(mirror_bin(256, 1) == 255);
  CHECK(mirror_bin(256, 256) == 0);
  CHECK(mirror_bin(100, 101) == 1);
  CHECK(mirror_bin(100, 200) == 100);
  for (std::size_t c : {50, 204, 256})
    for (std::size_t j = 1; j < 512 - c; ++j) CHECK(mirror_bin(c, j) <= c);
  CHECK(rolloff_gain(256, 256) == 0.25);  // one octave up, -12 dB
  for (std::size_t j = 1; j <= 256; ++j) CHECK(rolloff_gain(256, j) < 1.0);
}

TEST_CASE("extend_replicate") {
  SUBCASE("zero in, zero out") {
    const auto y = extend_replicate(AudioBuffer(std::vector<double>(5000, 0.0), 16000), kHalf);
    for (double v : y.samples) CHECK(v == 0.0);
  }
  SUBCASE("low band preserved") {
    const auto x = narrow_noise(16000, 4);
    const auto spec = stft(x);
    const auto split = band_split(kHalf);
    const auto ext = replicate_spectrum(spec, split);
    for (std::size_t t = 0; t < spec.frames; ++t)
      for (std::size_t k = 0; k <= split.cutoff_bin; ++k) CHECK(ext.at(k, t) == spec.at(k, t));
    const auto y = extend_replicate(x, kHalf);
    CHECK(y.size() == x.size());
    CHECK(low_band_error(spec, stft(y), split.cutoff_bin, 16) < 1e-4);
  }
  SUBCASE("rolloff never amplifies the mirrored magnitude") {
    const auto spec = stft(narrow_noise(8000, 5));
    const auto split = band_split(kHalf);
    const auto ext = replicate_spectrum(spec, split);
    for (std::size_t t = 0; t < spec.frames; ++t)
      for (std::size_t j = 1; j <= split.high_bins(); ++j)
        CHECK(std::abs(ext.at(split.cutoff_bin + j, t)) <=
              std::abs(spec.at(mirror_bin(split.cutoff_bin, j), t)) + 1e-15);
  }
  SUBCASE("1 kHz tone gains an image and keeps its level") {
    const auto x = sine(1000.0, 0.5, 16000);
    const auto y = extend_replicate(x, kHalf);
    CHECK(band_power(y, 4100.0, 8000.0) > 1e3 * band_power(x, 4100.0, 8000.0));
    CHECK(std::abs(db(tone_amplitude(y, 1000.0, 2000, 14000) / tone_amplitude(x, 1000.0, 2000, 14000))) < 0.1);
  }
}

TEST_CASE("fit_ridge") {
  Rng rng(9);
  SUBCASE("exact recovery of a per-bin offset") {
    const int n = 2000, d = 12;
    Eigen::MatrixXd X(n, d), Y(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) X(i, j) = 2.0 * rng.normal() - 5.0;
    // High bin j copies low bin d-1-j at half amplitude.
    for (int j = 0; j < d; ++j) Y.col(j) = X.col(d - 1 - j).array() + std::log(0.5);
    const auto fit = fit_ridge(X, Y, 1e-3);
    Eigen::MatrixXd Xt(50, d);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < d; ++j) Xt(i, j) = 2.0 * rng.normal() - 5.0;
    Eigen::MatrixXd pred = Xt * fit.W.transpose();
    pred.rowwise() += fit.b.transpose();
    for (int j = 0; j < d; ++j) {
      const Eigen::VectorXd want = Xt.col(d - 1 - j).array() + std::log(0.5);
      CHECK((pred.col(j) - want).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  SUBCASE("constant targets give zero weights") {
    Eigen::MatrixXd X(300, 5), Y = Eigen::MatrixXd::Constant(300, 4, std::log(1e-10));
    for (int i = 0; i < 300; ++i)
      for (int j = 0; j < 5; ++j) X(i, j) = rng.normal();
    const auto fit = fit_ridge(X, Y, 1e-3);
    CHECK(fit.W.norm() < 1e-3);
    for (int j = 0; j < 4; ++j) CHECK(fit.b(j) == doctest::Approx(std::log(1e-10)));
  }
  SUBCASE("first-order optimality") {
    const int n = 500, d = 8, m = 3;
    Eigen::MatrixXd X(n, d), Y(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) X(i, j) = rng.normal() + j;
      for (int j = 0; j < m; ++j) Y(i, j) = rng.normal() * 3.0;
    }
    const double lambda = 0.5;
    const auto fit = fit_ridge(X, Y, lambda);
    Eigen::MatrixXd resid = Y - X * fit.W.transpose();
    resid.rowwise() -= fit.b.transpose();
    const Eigen::MatrixXd grad_w = -2.0 * resid.transpose() * X + 2.0 * lambda * fit.W;
    const Eigen::VectorXd grad_b = -2.0 * resid.colwise().sum().transpose();
    const double scale = 2.0 * (X.norm() * Y.norm());
    CHECK(grad_w.norm() < 1e-6 * scale);
    CHECK(grad_b.norm() < 1e-6 * scale);
  }
  SUBCASE("singular without regularization") {
    Eigen::MatrixXd X(100, 3), Y(100, 1);
    for (int i = 0; i < 100; ++i) {
      X(i, 0) = rng.normal();
      X(i, 1) = 2.0 * X(i, 0);
      X(i, 2) = 1.0;
      Y(i, 0) = rng.normal();
    }
    CHECK_THROWS_AS(fit_ridge(X, Y, 0.0), DataError);
    CHECK_THROWS_AS(fit_ridge(X, Y, -1.0), UsageError);
    CHECK_NOTHROW(fit_ridge(X, Y, 1e-3));
  }
}

TEST_CASE("linear regressor on the synthetic corpus") {
  CorpusSpec spec;
  spec.n_bonafide = 25;
  spec.n_spoof = 25;
  spec.train_weight = 4;
  spec.dev_weight = 0;
  spec.eval_weight = 1;
  std::vector<std::pair<AudioBuffer, AudioBuffer>> train, held_out;
  for (const auto &u : generate_corpus(spec)) {
    auto &dst = u.subset == Subset::kTrain ? train : held_out;
    dst.push_back({lowpass_frontend(u.audio, kHalf), u.audio});
  }
  const auto reg = train_linear_regressor(train, kHalf);
  CHECK(reg.W.rows() == 256);
  CHECK(reg.W.cols() == 257);
  CHECK(reg.W.allFinite());

  double lsd_reg = 0.0, lsd_rep = 0.0;
  const auto split = band_split(kHalf);
  for (const auto &[narrow, wide] : held_out) {
    const auto y = extend(narrow, reg);
    CHECK(y.size() == narrow.size());
    // The low band is copied before the inverse transform.
    const auto ns = stft(narrow);
    const auto es = extend_spectrum(ns, reg);
    for (std::size_t t = 0; t < ns.frames; t += 7)
      for (std::size_t k = 0; k <= split.cutoff_bin; ++k) CHECK(es.at(k, t) == ns.at(k, t));
    CHECK(low_band_error(ns, stft(y), split.cutoff_bin, 16) < 1e-4);
    CHECK(extend(narrow, reg).samples == y.samples);

    lsd_reg += measure_quality(y, wide, kHalf).lsd_db;
    lsd_rep += measure_quality(extend_replicate(narrow, kHalf), wide, kHalf).lsd_db;
  }
  MESSAGE("held-out LSD regressor " << lsd_reg / held_out.size() << " dB, replicate "
                                    << lsd_rep / held_out.size() << " dB");
  CHECK(lsd_reg < lsd_rep);

  CHECK_THROWS_AS(train_linear_regressor({{sine(500.0, 0.1, 4000), sine(500.0, 0.1, 4000)}}, kHalf, 1e-3), DataError);
  auto misaligned = train;
  misaligned[0].first.samples.pop_back();
  CHECK_THROWS_AS(train_linear_regressor(misaligned, kHalf), DataError);

  SUBCASE("shape must match the cutoff") {
    BweExtender wrong = reg;
    wrong.fraction = 0.4;
    CHECK_THROWS_AS(extend(held_out[0].first, wrong), DataError);
  }
  SUBCASE("serialization") {
    const auto bytes = encode_extender(reg);
    CHECK(bytes.substr(0, 4) == "BWE1");
    const auto back = decode_extender(bytes);
    CHECK(back.W == reg.W);
    CHECK(back.b == reg.b);
    CHECK(encode_extender(back) == bytes);
    CHECK_THROWS_AS(decode_extender(bytes.substr(0, 40)), DataError);
    const auto rep = decode_extender(encode_extender(BweExtender::replicate(kHalf)));
    CHECK(rep.kind == BweKind::kReplicate);
  }
}

TEST_CASE("extend dispatch and quality metric") {
  const auto x = narrow_noise(12000, 11);
  CHECK(extend(x, BweExtender::replicate(kHalf)).samples == extend_replicate(x, kHalf).samples);
  CHECK(parse_bwe_kind("linear_regressor") == BweKind::kLinearRegressor);
  CHECK_THROWS_AS(parse_bwe_kind("tunet"), UsageError);

  const auto wide = white_noise(12000, 12);
  const auto same = measure_quality(wide, wide, kHalf);
  CHECK(same.lsd_db == 0.0);

  // High band removed entirely against a reference whose high band sits 40 dB down.
  const auto low = lowpass_frontend(wide, kHalf);
  AudioBuffer ref = low;
  const auto floor = white_noise(12000, 13, 0.001);
  for (std::size_t i = 0; i < ref.size(); ++i) ref.samples[i] += floor.samples[i];
  auto spec = stft(low);
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t k = 257; k < spec.num_bins(); ++k) spec.at(k, t) = 0.0;
  const auto q = measure_quality(istft(spec, low.size()), ref, kHalf);
  CHECK(std::isfinite(q.lsd_db));
  CHECK(q.lsd_db > 0.0);
  CHECK(q.highband_snr_db < 1.0);

  CHECK_THROWS_AS(measure_quality(wide, sine(100.0, 0.1, 11999), kHalf), DataError);
  CHECK(highband_leakage_db(sine(1000.0, 0.5, 16000), kHalf) < -40.0);
  CHECK(highband_leakage_db(wide, kHalf) > -6.0);
}
