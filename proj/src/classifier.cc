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

#include "cmfront/classifier.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "cmfront/binary_io.h"

namespace cmfront {

namespace {

void fill_uniform(std::span<double> values, double bound, Rng &rng) {
  for (double &x : values) x = rng.uniform(-bound, bound);
}

std::span<double> view(Eigen::MatrixXd &m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(Eigen::VectorXd &m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> view(const Eigen::MatrixXd &m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<const double> view(const Eigen::VectorXd &m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

void check_dims(const LabeledFeatures &ex, const AspModel &model) {
  if (ex.frames.rows() != model.feat_dim)
    throw DataError("feature dimension " + std::to_string(ex.frames.rows()) +
                    " does not match model dimension " + std::to_string(model.feat_dim));
  if (ex.frames.cols() == 0) throw DataError("utterance has no frames");
}

// Everything the backward pass needs from one utterance's forward pass.
struct Activations {
  Eigen::MatrixXd tanh_z;     // attn x T
  Eigen::MatrixXd squared;    // feat x T
  Eigen::RowVectorXd alpha;   // 1 x T
  Eigen::VectorXd mu, sigma;  // feat
  Eigen::Array<bool, Eigen::Dynamic, 1> active;
  Eigen::VectorXd pooled;     // 2 feat
  Eigen::Vector2d logits;
  Eigen::MatrixXd dz;         // attn x T, backward scratch
};

void forward_one(const Eigen::MatrixXd &h, const AspModel &m, Activations &a) {
  a.tanh_z.noalias() = m.W * h;
  a.tanh_z.colwise() += m.b;
  // tanh(x) = 1 - 2 / (exp(2x) + 1); Eigen vectorizes exp but not tanh for
  // doubles. Saturates cleanly: exp overflow gives 1, underflow gives -1.
  a.tanh_z = (1.0 - 2.0 / ((2.0 * a.tanh_z.array()).exp() + 1.0)).matrix();
  Eigen::RowVectorXd e = m.v.transpose() * a.tanh_z;
  e.array() -= e.maxCoeff();
  a.alpha = e.array().exp().matrix();
  a.alpha /= a.alpha.sum();

  a.squared = h.array().square().matrix();
  a.mu.noalias() = h * a.alpha.transpose();
  const Eigen::VectorXd second = a.squared * a.alpha.transpose();
  const Eigen::ArrayXd var = second.array() - a.mu.array().square();
  a.active = var > kVarianceFloor;
  a.sigma = var.max(kVarianceFloor).sqrt().matrix();

  a.pooled.resize(2 * m.feat_dim);
  a.pooled << a.mu, a.sigma;
  a.logits = m.head_W * a.pooled + m.head_b;
}

// -log softmax(logits)[label], computed stably.
double cross_entropy(const Eigen::Vector2d &logits, Label label) {
  const double hi = logits.maxCoeff();
  const double lse = hi + std::log(std::exp(logits(0) - hi) + std::exp(logits(1) - hi));
  return lse - logits(static_cast<int>(label));
}

}  // namespace

AspModel AspModel::zeros(int feat_dim, int attn_dim) {
  if (feat_dim < 1 || attn_dim < 1) throw UsageError("ASP dimensions must be positive");
  AspModel m;
  m.feat_dim = feat_dim;
  m.attn_dim = attn_dim;
  m.W = Eigen::MatrixXd::Zero(attn_dim, feat_dim);
  m.b = Eigen::VectorXd::Zero(attn_dim);
  m.v = Eigen::VectorXd::Zero(attn_dim);
  m.head_W = Eigen::MatrixXd::Zero(2, 2 * feat_dim);
  m.head_b = Eigen::VectorXd::Zero(2);
  return m;
}

AspModel AspModel::initialize(int feat_dim, int attn_dim, uint64_t seed) {
  AspModel m = zeros(feat_dim, attn_dim);
  Rng rng(seed);
  fill_uniform(view(m.W), std::sqrt(1.0 / feat_dim), rng);
  fill_uniform(view(m.v), std::sqrt(1.0 / attn_dim), rng);
  fill_uniform(view(m.head_W), std::sqrt(1.0 / (2.0 * feat_dim)), rng);
  return m;
}

std::vector<std::span<double>> AspModel::tensors() {
  return {view(W), view(b), view(v), view(head_W), view(head_b)};
}

std::vector<std::span<const double>> AspModel::tensors() const {
  return {view(W), view(b), view(v), view(head_W), view(head_b)};
}

std::size_t AspModel::num_parameters() const {
  std::size_t n = 0;
  for (const auto &t : tensors()) n += t.size();
  return n;
}

PoolResult asp_pool(const Eigen::MatrixXd &frames, const AspModel &model) {
  if (frames.cols() == 0) throw DataError("asp_pool: no frames");
  if (frames.rows() != model.feat_dim) throw DataError("asp_pool: feature dimension mismatch");
  Activations a;
  forward_one(frames, model, a);
  return {a.pooled, a.alpha};
}

Eigen::MatrixXd to_frames(const FbankMatrix &features) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(features.values.data(),
                                    static_cast<Eigen::Index>(features.rows),
                                    static_cast<Eigen::Index>(features.cols));
}

ForwardResult forward_loss(std::span<const LabeledFeatures> batch, const AspModel &model) {
  if (batch.empty()) throw DataError("forward_loss: empty batch");
  ForwardResult out;
  out.logits.resize(2, static_cast<Eigen::Index>(batch.size()));
  Activations a;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    check_dims(batch[n], model);
    forward_one(batch[n].frames, model, a);
    out.logits.col(static_cast<Eigen::Index>(n)) = a.logits;
    out.loss += cross_entropy(a.logits, batch[n].label);
  }
  out.loss /= static_cast<double>(batch.size());
  return out;
}

namespace {

// Batch members are visited through pointers so training never copies
// feature matrices into minibatches.
AspGradients backward_ptrs(std::span<const LabeledFeatures *const> batch, const AspModel &model,
                           double *loss) {
  if (batch.empty()) throw DataError("backward: empty batch");
  AspGradients g = AspModel::zeros(model.feat_dim, model.attn_dim);
  const double scale = 1.0 / static_cast<double>(batch.size());
  const int d = model.feat_dim;
  double total = 0.0;
  Activations a;
  for (const LabeledFeatures *ptr : batch) {
    const LabeledFeatures &ex = *ptr;
    check_dims(ex, model);
    const Eigen::MatrixXd &h = ex.frames;
    forward_one(h, model, a);
    total += cross_entropy(a.logits, ex.label);

    Eigen::Vector2d p = (a.logits.array() - a.logits.maxCoeff()).exp().matrix();
    p /= p.sum();
    Eigen::Vector2d dlogits = p;
    dlogits(static_cast<int>(ex.label)) -= 1.0;
    dlogits *= scale;

    g.head_W.noalias() += dlogits * a.pooled.transpose();
    g.head_b += dlogits;
    const Eigen::VectorXd dpooled = model.head_W.transpose() * dlogits;

    Eigen::VectorXd dvar = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i)
      if (a.active(i)) dvar(i) = dpooled(d + i) / (2.0 * a.sigma(i));
    const Eigen::VectorXd dmu = dpooled.head(d) - 2.0 * a.mu.cwiseProduct(dvar);

    // mu and the second moment are both linear in alpha.
    const Eigen::RowVectorXd dalpha = dmu.transpose() * h + dvar.transpose() * a.squared;
    const double mean_dalpha = dalpha.dot(a.alpha);
    const Eigen::RowVectorXd de = a.alpha.array() * (dalpha.array() - mean_dalpha);

    g.v.noalias() += a.tanh_z * de.transpose();
    a.dz.noalias() = model.v * de;
    a.dz.array() *= 1.0 - a.tanh_z.array().square();
    g.W.noalias() += a.dz * h.transpose();
    g.b += a.dz.rowwise().sum();
  }
  if (loss) *loss = total * scale;
  return g;
}

}  // namespace

AspGradients backward(std::span<const LabeledFeatures> batch, const AspModel &model,
                      double *loss) {
  std::vector<const LabeledFeatures *> ptrs;
  ptrs.reserve(batch.size());
  for (const auto &ex : batch) ptrs.push_back(&ex);
  return backward_ptrs(ptrs, model, loss);
}

OptimizerState OptimizerState::for_model(const AspModel &model, AdamConfig config) {
  OptimizerState s;
  s.first_moment = AspModel::zeros(model.feat_dim, model.attn_dim);
  s.second_moment = AspModel::zeros(model.feat_dim, model.attn_dim);
  s.config = config;
  return s;
}

void adam_step(AspModel &model, const AspGradients &grads, OptimizerState &state, double lr) {
  if (grads.feat_dim != model.feat_dim || grads.attn_dim != model.attn_dim ||
      state.first_moment.feat_dim != model.feat_dim ||
      state.first_moment.attn_dim != model.attn_dim)
    throw UsageError("adam_step: gradient/state shapes do not match the model");
  for (const auto &t : grads.tensors())
    for (double x : t)
      if (!std::isfinite(x)) throw InvariantError("adam_step: non-finite gradient");

  const AdamConfig &c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  auto params = model.tensors();
  auto gs = grads.tensors();
  auto ms = state.first_moment.tensors();
  auto vs = state.second_moment.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double g = gs[t][i] + c.weight_decay * params[t][i];
      ms[t][i] = c.beta1 * ms[t][i] + (1.0 - c.beta1) * g;
      vs[t][i] = c.beta2 * vs[t][i] + (1.0 - c.beta2) * g * g;
      const double m_hat = ms[t][i] / correction1;
      const double v_hat = vs[t][i] / correction2;
      params[t][i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

double LrSchedule::lr_at(int epoch, std::span<const double> history) const {
  if (epoch < 1) throw UsageError("epochs are numbered from 1");
  if (epoch <= warmup_epochs) return base_lr * epoch / warmup_epochs;
  double lr = base_lr;
  double best = std::numeric_limits<double>::infinity();
  int bad = 0;
  const int last = std::min<int>(epoch - 1, static_cast<int>(history.size()));
  for (int e = warmup_epochs + 1; e <= last; ++e) {
    const double metric = history[static_cast<std::size_t>(e - 1)];
    if (metric < best * (1.0 - threshold) || std::isinf(best)) {
      best = metric;
      bad = 0;
    } else if (++bad >= plateau_patience) {
      lr = std::max(lr * plateau_factor, min_lr);
      bad = 0;
    }
  }
  return lr;
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.batch_size = 400;
  c.epochs = 100;
  return c;
}

TrainResult train(std::vector<LabeledFeatures> train_set, std::vector<LabeledFeatures> dev_set,
                  const TrainConfig &config) {
  if (config.batch_size < 1 || config.epochs < 1)
    throw UsageError("train: batch size and epochs must be positive");
  if (train_set.empty()) throw DataError("train: empty training set");
  Rng rng(derive_seed(config.seed, 0x7261696EULL));

  if (dev_set.empty()) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_dev = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::round(config.dev_fraction * train_set.size())));
    if (n_dev >= train_set.size()) throw DataError("train: too few utterances to hold out a dev set");
    std::vector<LabeledFeatures> kept;
    std::vector<bool> to_dev(train_set.size(), false);
    for (std::size_t i = 0; i < n_dev; ++i) to_dev[order[i]] = true;
    for (std::size_t i = 0; i < train_set.size(); ++i)
      (to_dev[i] ? dev_set : kept).push_back(std::move(train_set[i]));
    train_set = std::move(kept);
  }

  bool has[2] = {false, false};
  for (const auto &ex : train_set) has[static_cast<int>(ex.label)] = true;
  if (!has[0] || !has[1]) throw DataError("train: training data contains a single class");
  const auto feat_dim = static_cast<int>(train_set.front().frames.rows());

  TrainResult result;
  AspModel model = AspModel::initialize(feat_dim, config.attn_dim, derive_seed(config.seed, 1));
  OptimizerState state = OptimizerState::for_model(model, config.adam);
  std::vector<double> dev_history;
  double best = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const LabeledFeatures *> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.schedule.lr_at(epoch, dev_history);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&train_set[order[i]]);
      double loss = 0.0;
      const auto grads = backward_ptrs(batch, model, &loss);
      adam_step(model, grads, state, lr);
      train_loss += loss * static_cast<double>(stop - start);
    }
    train_loss /= static_cast<double>(order.size());
    const double dev_loss = forward_loss(dev_set, model).loss;
    dev_history.push_back(dev_loss);
    result.log.push_back({epoch, lr, train_loss, dev_loss});
    if (dev_loss < best) {
      best = dev_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  if (result.best_epoch == 0) throw InvariantError("train: dev loss was never finite");
  return result;
}

double score(const AspModel &model, const Eigen::MatrixXd &frames) {
  if (frames.rows() != model.feat_dim)
    throw DataError("score: feature dimension " + std::to_string(frames.rows()) +
                    " does not match model dimension " + std::to_string(model.feat_dim));
  if (frames.cols() == 0) throw DataError("score: no frames");
  Activations a;
  forward_one(frames, model, a);
  return a.logits(1) - a.logits(0);
}

double score(const AspModel &model, const FbankMatrix &features) {
  return score(model, to_frames(features));
}

std::string encode_model(const AspModel &model) {
  std::string out = "ASP1";
  binio::put_u32(out, static_cast<uint32_t>(model.feat_dim));
  binio::put_u32(out, static_cast<uint32_t>(model.attn_dim));
  auto put_matrix = [&](const Eigen::MatrixXd &m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) binio::put_f64(out, m(r, c));
  };
  put_matrix(model.W);
  for (double x : model.b) binio::put_f64(out, x);
  for (double x : model.v) binio::put_f64(out, x);
  put_matrix(model.head_W);
  for (double x : model.head_b) binio::put_f64(out, x);
  return out;
}

AspModel decode_model(const std::string &bytes, const std::string &name) {
  binio::Reader in(bytes, name);
  in.expect_magic("ASP1");
  const auto feat_dim = static_cast<int>(in.u32());
  const auto attn_dim = static_cast<int>(in.u32());
  if (feat_dim < 1 || attn_dim < 1 || feat_dim > 100000 || attn_dim > 100000)
    throw DataError(name + ": implausible model dimensions");
  AspModel m = AspModel::zeros(feat_dim, attn_dim);
  auto get_matrix = [&](Eigen::MatrixXd &mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) mat(r, c) = in.f64();
  };
  get_matrix(m.W);
  for (double &x : m.b) x = in.f64();
  for (double &x : m.v) x = in.f64();
  get_matrix(m.head_W);
  for (double &x : m.head_b) x = in.f64();
  if (!in.at_end()) throw DataError(name + ": trailing bytes after model payload");
  for (const auto &t : m.tensors())
    for (double x : t)
      if (!std::isfinite(x)) throw DataError(name + ": non-finite model parameter");
  return m;
}

void save_model(const AspModel &model, const std::string &path) {
  binio::spit(path, encode_model(model));
}

AspModel load_model(const std::string &path) { return decode_model(binio::slurp(path), path); }

std::string format_training_log(const std::vector<EpochLog> &log) {
  std::string out = "epoch\tlr\ttrain_loss\tdev_loss\n";
  char line[160];
  for (const auto &e : log) {
    std::snprintf(line, sizeof(line), "%d\t%.9g\t%.9g\t%.9g\n", e.epoch, e.lr, e.train_loss,
                  e.dev_loss);
    out += line;
  }
  return out;
}

}  // namespace cmfront
