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

#include "cmfront/bwe.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cmfront/binary_io.h"

namespace cmfront {

namespace {

constexpr double kMagFloor = 1e-10;

double log_mag(const Complex &c) { return std::log(std::max(std::abs(c), kMagFloor)); }

// The inverse STFT packs two real frames per complex transform, which needs
// a real-valued Nyquist bin.
Complex real_nyquist(const Complex &c) {
  return {c.real() >= 0.0 ? std::abs(c) : -std::abs(c), 0.0};
}

void check_split(const Spectrogram &spec, const BandSplit &split) {
  if (spec.n_fft != split.n_fft) throw UsageError("band split does not match the STFT size");
}

// Accumulates centred normal equations without holding all samples. Sums are
// taken about a fixed shift (the first batch's mean) to limit cancellation.
class RidgeAccumulator {
 public:
  void add(const Eigen::MatrixXd &X, const Eigen::MatrixXd &Y) {
    if (X.rows() != Y.rows()) throw UsageError("ridge: feature/target row counts differ");
    if (X.rows() == 0) return;
    if (n_ == 0) {
      shift_x_ = X.colwise().mean().transpose();
      shift_y_ = Y.colwise().mean().transpose();
      xx_ = Eigen::MatrixXd::Zero(X.cols(), X.cols());
      xy_ = Eigen::MatrixXd::Zero(X.cols(), Y.cols());
      sx_ = Eigen::VectorXd::Zero(X.cols());
      sy_ = Eigen::VectorXd::Zero(Y.cols());
    } else if (X.cols() != xx_.rows() || Y.cols() != xy_.cols()) {
      throw DataError("ridge: inconsistent feature or target dimension");
    }
    const Eigen::MatrixXd xs = X.rowwise() - shift_x_.transpose();
    const Eigen::MatrixXd ys = Y.rowwise() - shift_y_.transpose();
    xx_.selfadjointView<Eigen::Lower>().rankUpdate(xs.transpose());
    xy_.noalias() += xs.transpose() * ys;
    sx_ += xs.colwise().sum().transpose();
    sy_ += ys.colwise().sum().transpose();
    n_ += X.rows();
  }

  long samples() const { return n_; }

  RidgeFit solve(double lambda) const {
    if (lambda < 0.0) throw UsageError("ridge lambda must be non-negative");
    if (n_ == 0) throw DataError("ridge: no samples");
    const double n = static_cast<double>(n_);
    const Eigen::VectorXd mx = sx_ / n, my = sy_ / n;
    Eigen::MatrixXd a = xx_.selfadjointView<Eigen::Lower>();
    a.noalias() -= n * mx * mx.transpose();
    a.diagonal().array() += lambda;
    const Eigen::MatrixXd c = xy_ - n * mx * my.transpose();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::VectorXd d = ldlt.vectorD();
    const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-12 * scale)
      throw DataError("ridge: normal matrix is singular (increase lambda)");
    RidgeFit fit;
    fit.W = ldlt.solve(c).transpose();
    fit.b = (my + shift_y_) - fit.W * (mx + shift_x_);
    return fit;
  }

 private:
  long n_ = 0;
  Eigen::VectorXd shift_x_, shift_y_, sx_, sy_;
  Eigen::MatrixXd xx_, xy_;
};

}  // namespace

BandSplit band_split(CutoffFraction fraction, std::size_t n_fft) {
  BandSplit s;
  s.n_fft = n_fft;
  s.cutoff_bin = static_cast<std::size_t>(std::floor(fraction.value() * static_cast<double>(n_fft / 2)));
  if (s.cutoff_bin == 0 || s.high_bins() < 2)
    throw UsageError("cutoff fraction leaves fewer than two high-band bins");
  return s;
}

std::size_t mirror_bin(std::size_t cutoff_bin, std::size_t j) {
  const std::size_t m = j % (2 * cutoff_bin);
  return m <= cutoff_bin ? cutoff_bin - m : m - cutoff_bin;
}

double rolloff_gain(std::size_t cutoff_bin, std::size_t j) {
  const double ratio = static_cast<double>(cutoff_bin + j) / static_cast<double>(cutoff_bin);
  return 1.0 / (ratio * ratio);
}

const char *bwe_kind_name(BweKind kind) {
  return kind == BweKind::kReplicate ? "replicate" : "linear_regressor";
}

BweKind parse_bwe_kind(const std::string &token) {
  if (token == "replicate") return BweKind::kReplicate;
  if (token == "linear_regressor") return BweKind::kLinearRegressor;
  throw UsageError("unknown BWE kind '" + token + "'");
}

BweExtender BweExtender::replicate(CutoffFraction fraction) {
  BweExtender e;
  e.kind = BweKind::kReplicate;
  e.fraction = fraction.value();
  band_split(fraction, e.n_fft);
  return e;
}

double highband_leakage_db(const AudioBuffer &narrowband, CutoffFraction fraction) {
  const auto spec = stft(narrowband);
  const auto split = band_split(fraction, spec.n_fft);
  double high = 0.0, total = 0.0;
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t k = 0; k < spec.num_bins(); ++k) {
      const double p = std::norm(spec.at(k, t));
      total += p;
      if (k > split.cutoff_bin) high += p;
    }
  if (total <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(high / total);
}

Spectrogram replicate_spectrum(const Spectrogram &narrow, const BandSplit &split) {
  check_split(narrow, split);
  Spectrogram out = narrow;
  const std::size_t c = split.cutoff_bin;
  for (std::size_t t = 0; t < out.frames; ++t) {
    for (std::size_t j = 1; j <= split.high_bins(); ++j) {
      Complex v = rolloff_gain(c, j) * std::conj(narrow.at(mirror_bin(c, j), t));
      if (c + j == split.n_fft / 2) v = real_nyquist(v);
      out.at(c + j, t) = v;
    }
  }
  return out;
}

AudioBuffer extend_replicate(const AudioBuffer &narrowband, CutoffFraction fraction) {
  const auto spec = stft(narrowband);
  return istft(replicate_spectrum(spec, band_split(fraction, spec.n_fft)), narrowband.size());
}

Eigen::MatrixXd low_band_features(const Spectrogram &spec, const BandSplit &split) {
  check_split(spec, split);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(spec.frames), static_cast<Eigen::Index>(split.low_bins()));
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t k = 0; k < split.low_bins(); ++k) X(t, k) = log_mag(spec.at(k, t));
  return X;
}

Eigen::MatrixXd high_band_targets(const Spectrogram &spec, const BandSplit &split) {
  check_split(spec, split);
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(spec.frames), static_cast<Eigen::Index>(split.high_bins()));
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t j = 1; j <= split.high_bins(); ++j)
      Y(t, j - 1) = log_mag(spec.at(split.cutoff_bin + j, t));
  return Y;
}

Spectrogram extend_spectrum(const Spectrogram &narrow, const BweExtender &extender) {
  if (narrow.n_fft != extender.n_fft) throw UsageError("extender STFT size does not match input");
  const auto split = band_split(CutoffFraction(extender.fraction), extender.n_fft);
  if (extender.kind == BweKind::kReplicate) return replicate_spectrum(narrow, split);

  if (extender.W.rows() != static_cast<Eigen::Index>(split.high_bins()) ||
      extender.W.cols() != static_cast<Eigen::Index>(split.low_bins()) ||
      extender.b.size() != extender.W.rows())
    throw DataError("regressor shape does not match the band split of fraction " +
                    std::to_string(extender.fraction));
  Spectrogram out = narrow;
  const Eigen::MatrixXd X = low_band_features(narrow, split);
  Eigen::MatrixXd pred = X * extender.W.transpose();
  pred.rowwise() += extender.b.transpose();
  const std::size_t c = split.cutoff_bin;
  for (std::size_t t = 0; t < out.frames; ++t) {
    for (std::size_t j = 1; j <= split.high_bins(); ++j) {
      const Complex src = std::conj(narrow.at(mirror_bin(c, j), t));
      const double mag = std::exp(pred(t, j - 1));
      const double a = std::abs(src);
      Complex v = a > 0.0 ? mag * src / a : Complex(mag, 0.0);
      if (c + j == split.n_fft / 2) v = real_nyquist(v);
      out.at(c + j, t) = v;
    }
  }
  return out;
}

AudioBuffer extend(const AudioBuffer &narrowband, const BweExtender &extender) {
  StftConfig cfg;
  cfg.n_fft = cfg.win_length = extender.n_fft;
  const auto spec = stft(narrowband, cfg);
  return istft(extend_spectrum(spec, extender), narrowband.size());
}

RidgeFit fit_ridge(const Eigen::MatrixXd &X, const Eigen::MatrixXd &Y, double lambda) {
  RidgeAccumulator acc;
  acc.add(X, Y);
  return acc.solve(lambda);
}

struct RegressorTrainer::State {
  RidgeAccumulator acc;
};

RegressorTrainer::RegressorTrainer(CutoffFraction fraction)
    : fraction_(fraction.value()), split_(band_split(fraction)), state_(std::make_unique<State>()) {}

RegressorTrainer::~RegressorTrainer() = default;

void RegressorTrainer::add(const AudioBuffer &narrow, const AudioBuffer &wide) {
  if (narrow.size() != wide.size() || narrow.sample_rate != wide.sample_rate)
    throw DataError("BWE training pair is not aligned");
  const auto ns = stft(narrow), ws = stft(wide);
  state_->acc.add(low_band_features(ns, split_), high_band_targets(ws, split_));
}

long RegressorTrainer::frames() const { return state_->acc.samples(); }

BweExtender RegressorTrainer::finish(double ridge_lambda) const {
  if (frames() < 100)
    throw DataError("BWE training needs at least 100 frames, got " + std::to_string(frames()));
  const auto fit = state_->acc.solve(ridge_lambda);
  BweExtender e;
  e.kind = BweKind::kLinearRegressor;
  e.fraction = fraction_;
  e.W = fit.W;
  e.b = fit.b;
  return e;
}

BweExtender train_linear_regressor(const std::vector<std::pair<AudioBuffer, AudioBuffer>> &pairs,
                                   CutoffFraction fraction, double ridge_lambda) {
  RegressorTrainer trainer(fraction);
  for (const auto &[narrow, wide] : pairs) trainer.add(narrow, wide);
  return trainer.finish(ridge_lambda);
}

BweQuality measure_quality(const AudioBuffer &extended, const AudioBuffer &reference,
                           CutoffFraction fraction) {
  if (extended.size() != reference.size() || extended.sample_rate != reference.sample_rate)
    throw DataError("measure_quality: signals differ in length or rate");
  const auto es = stft(extended), rs = stft(reference);
  const auto split = band_split(fraction, es.n_fft);

  BweQuality q;
  double lsd = 0.0;
  for (std::size_t t = 0; t < es.frames; ++t) {
    double acc = 0.0;
    for (std::size_t k = split.cutoff_bin + 1; k < es.num_bins(); ++k) {
      const double d = 20.0 * std::log10(std::max(std::abs(es.at(k, t)), kMagFloor) /
                                         std::max(std::abs(rs.at(k, t)), kMagFloor));
      acc += d * d;
    }
    lsd += std::sqrt(acc / static_cast<double>(split.high_bins()));
  }
  q.lsd_db = lsd / static_cast<double>(es.frames);

  auto high_pass = [&](Spectrogram s) {
    for (std::size_t t = 0; t < s.frames; ++t)
      for (std::size_t k = 0; k <= split.cutoff_bin; ++k) s.at(k, t) = 0.0;
    return istft(s, reference.size());
  };
  const auto eh = high_pass(es), rh = high_pass(rs);
  double signal = 0.0, error = 0.0;
  for (std::size_t i = 0; i < rh.size(); ++i) {
    signal += rh.samples[i] * rh.samples[i];
    error += (eh.samples[i] - rh.samples[i]) * (eh.samples[i] - rh.samples[i]);
  }
  q.highband_snr_db = error > 0.0 ? 10.0 * std::log10(signal / error)
                                  : std::numeric_limits<double>::infinity();
  return q;
}

std::string encode_extender(const BweExtender &e) {
  std::string out = "BWE1";
  binio::put_u32(out, e.kind == BweKind::kReplicate ? 0u : 1u);
  binio::put_u32(out, static_cast<uint32_t>(e.n_fft));
  binio::put_f64(out, e.fraction);
  binio::put_u32(out, static_cast<uint32_t>(e.W.rows()));
  binio::put_u32(out, static_cast<uint32_t>(e.W.cols()));
  for (Eigen::Index r = 0; r < e.W.rows(); ++r)
    for (Eigen::Index c = 0; c < e.W.cols(); ++c) binio::put_f64(out, e.W(r, c));
  for (Eigen::Index r = 0; r < e.b.size(); ++r) binio::put_f64(out, e.b(r));
  return out;
}

BweExtender decode_extender(const std::string &bytes, const std::string &name) {
  binio::Reader in(bytes, name);
  in.expect_magic("BWE1");
  BweExtender e;
  const uint32_t kind = in.u32();
  if (kind > 1) throw DataError(name + ": unknown extender kind");
  e.kind = kind == 0 ? BweKind::kReplicate : BweKind::kLinearRegressor;
  e.n_fft = in.u32();
  if (!is_power_of_two(e.n_fft) || e.n_fft < 4) throw DataError(name + ": bad FFT size");
  e.fraction = in.f64();
  if (!(e.fraction > 0.0 && e.fraction < 1.0)) throw DataError(name + ": bad cutoff fraction");
  const uint32_t rows = in.u32(), cols = in.u32();
  if (rows > e.n_fft || cols > e.n_fft) throw DataError(name + ": implausible regressor shape");
  e.W.resize(rows, cols);
  e.b.resize(rows);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) e.W(r, c) = in.f64();
  for (uint32_t r = 0; r < rows; ++r) e.b(r) = in.f64();
  if (!in.at_end()) throw DataError(name + ": trailing bytes after extender payload");
  if (!e.W.allFinite() || !e.b.allFinite()) throw DataError(name + ": non-finite weights");
  if (e.kind == BweKind::kLinearRegressor) {
    const auto split = band_split(CutoffFraction(e.fraction), e.n_fft);
    if (rows != split.high_bins() || cols != split.low_bins())
      throw DataError(name + ": regressor shape does not match its cutoff fraction");
  }
  return e;
}

void save_extender(const BweExtender &extender, const std::string &path) {
  binio::spit(path, encode_extender(extender));
}

BweExtender load_extender(const std::string &path) {
  return decode_extender(binio::slurp(path), path);
}

}  // namespace cmfront
