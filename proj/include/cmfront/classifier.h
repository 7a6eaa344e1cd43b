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

#ifndef CMFRONT_CLASSIFIER_H_
#define CMFRONT_CLASSIFIER_H_

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmfront/common.h"
#include "cmfront/features.h"

namespace cmfront {

// Attentive statistics pooling followed by a linear two-class head.
//
//   e_t   = v' tanh(W h_t + b)
//   alpha = softmax_t(e)
//   mu    = sum_t alpha_t h_t
//   sigma = sqrt(max(sum_t alpha_t h_t^2 - mu^2, kVarianceFloor))
//   logits = head_W [mu; sigma] + head_b        (index 0 spoof, 1 bonafide)
struct AspModel {
  int feat_dim = 0;
  int attn_dim = 0;
  Eigen::MatrixXd W;       // attn_dim x feat_dim
  Eigen::VectorXd b;       // attn_dim
  Eigen::VectorXd v;       // attn_dim
  Eigen::MatrixXd head_W;  // 2 x (2 * feat_dim)
  Eigen::VectorXd head_b;  // 2

  // Zero-valued parameters of the given shape.
  static AspModel zeros(int feat_dim, int attn_dim);
  // Uniform(+-sqrt(1/fan_in)) weights, zero biases.
  static AspModel initialize(int feat_dim, int attn_dim, uint64_t seed);

  // Flat views of the five parameter tensors, in declaration order.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::size_t num_parameters() const;
};

// Gradients have exactly the parameter shapes.
using AspGradients = AspModel;

constexpr double kVarianceFloor = 1e-9;
constexpr int kDefaultAttnDim = 128;

struct PoolResult {
  Eigen::VectorXd pooled;     // 2 * feat_dim
  Eigen::RowVectorXd alpha;   // attention weights, sum to 1
};

// frames is feat_dim x T with one frame per column.
PoolResult asp_pool(const Eigen::MatrixXd &frames, const AspModel &model);

struct LabeledFeatures {
  Eigen::MatrixXd frames;  // feat_dim x T
  Label label = Label::kSpoof;
};

Eigen::MatrixXd to_frames(const FbankMatrix &features);

struct ForwardResult {
  double loss = 0.0;           // mean cross-entropy over the batch
  Eigen::MatrixXd logits;      // 2 x batch
};

ForwardResult forward_loss(std::span<const LabeledFeatures> batch, const AspModel &model);

// Exact gradient of forward_loss().loss. Where the variance floor is active
// the sigma branch contributes no gradient.
AspGradients backward(std::span<const LabeledFeatures> batch, const AspModel &model,
                      double *loss = nullptr);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

struct OptimizerState {
  AspModel first_moment;
  AspModel second_moment;
  long step = 0;
  AdamConfig config;

  static OptimizerState for_model(const AspModel &model, AdamConfig config = {});
};

// Bias-corrected Adam. Weight decay is added to the gradient (L2) before the
// moment updates. Throws InvariantError on a non-finite gradient.
void adam_step(AspModel &model, const AspGradients &grads, OptimizerState &state,
               double lr);

// Linear warm-up to base_lr over warmup_epochs, then reduce-on-plateau on the
// monitored metric (lower is better).
struct LrSchedule {
  double base_lr = 1e-3;
  int warmup_epochs = 4;
  int plateau_patience = 10;
  double plateau_factor = 0.1;
  double min_lr = 1e-6;
  double threshold = 1e-4;  // relative improvement needed to reset patience

  // Learning rate for `epoch` (1-based) given the metric of every completed
  // epoch: history[i] belongs to epoch i + 1. Entries from epoch `epoch`
  // onwards are ignored. The plateau tracker starts at the first post-warmup
  // epoch, and the rate drops once `plateau_patience` consecutive epochs fail
  // to improve on the best value by the relative threshold.
  double lr_at(int epoch, std::span<const double> history) const;
};

struct TrainConfig {
  int batch_size = 64;
  int epochs = 30;
  uint64_t seed = 1;
  int attn_dim = kDefaultAttnDim;
  double dev_fraction = 0.2;  // used only when no dev set is supplied
  LrSchedule schedule;
  AdamConfig adam;

  // Preset matching the original large-scale recipe.
  static TrainConfig full_scale();
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainResult {
  AspModel model;  // parameters from the epoch with the lowest dev loss
  int best_epoch = 0;
  std::vector<EpochLog> log;
};

// Seeded minibatch training. If dev is empty, dev_fraction of the training
// set (chosen by the seed) is held out instead.
TrainResult train(std::vector<LabeledFeatures> train_set, std::vector<LabeledFeatures> dev_set,
                  const TrainConfig &config);

// logit(bonafide) - logit(spoof).
double score(const AspModel &model, const Eigen::MatrixXd &frames);
double score(const AspModel &model, const FbankMatrix &features);

// "ASP1", u32 feat_dim, u32 attn_dim, then W, b, v, head_W, head_b as
// little-endian float64; matrices row-major.
std::string encode_model(const AspModel &model);
AspModel decode_model(const std::string &bytes, const std::string &name = "model");
void save_model(const AspModel &model, const std::string &path);
AspModel load_model(const std::string &path);

// TSV with header "epoch\tlr\ttrain_loss\tdev_loss".
std::string format_training_log(const std::vector<EpochLog> &log);

}  // namespace cmfront

#endif  // CMFRONT_CLASSIFIER_H_
