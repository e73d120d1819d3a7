//
// Copyright 2026 The kcdlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Mini-batch SGD with momentum and L2 weight decay, a plateau learning-rate
// scheduler, early stopping on validation loss, and best-validation-accuracy
// snapshot selection.

#ifndef KCDLAB_TRAIN_HPP_
#define KCDLAB_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "kcdlab/data.hpp"
#include "kcdlab/error.hpp"
#include "kcdlab/loss.hpp"
#include "kcdlab/nn.hpp"

namespace kcdlab {

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 150;
  std::size_t patience_scheduler = 10;
  std::size_t patience_stop = 30;
  double lr_factor = 0.1;
  double min_lr = 1e-6;
  std::uint64_t seed = 1;

  void Validate() const {
    Require(learning_rate >= 0.0 && std::isfinite(learning_rate),
            ErrorCode::kInvalidParameter, "learning_rate must be >= 0");
    Require(momentum >= 0.0 && momentum <= 1.0, ErrorCode::kInvalidParameter,
            "momentum must lie in [0, 1]");
    Require(weight_decay >= 0.0, ErrorCode::kInvalidParameter, "weight_decay must be >= 0");
    Require(batch_size >= 1, ErrorCode::kInvalidParameter, "batch_size must be >= 1");
    Require(max_epochs >= 1, ErrorCode::kInvalidParameter, "max_epochs must be >= 1");
    Require(lr_factor > 0.0 && lr_factor < 1.0, ErrorCode::kInvalidParameter,
            "lr_factor must lie in (0, 1)");
  }

  bool operator==(const TrainConfig&) const = default;
};

struct TrainedModel {
  MlpModel model;
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double final_lr = 0.0;

  bool operator==(const TrainedModel&) const = default;
};

// Per-sample objective:
//   soft_weight * distill(z, soft) + (1 - soft_weight) * CE(z, one_hot(hard)).
// soft_weight = 0 is plain cross-entropy; soft_weight = 1 never touches the
// hard labels.
struct Objective {
  double soft_weight = 0.0;
  LossKind distill = LossKind::MseOnProbs();

  static Objective CrossEntropy() { return Objective{0.0, LossKind::MseOnProbs()}; }
  static Objective Distill(LossKind kind) { return Objective{1.0, kind}; }
  static Objective Mixed(double alpha, LossKind kind) {
    Require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kInvalidParameter,
            "alpha must lie in [0, 1]");
    return Objective{alpha, kind};
  }

  bool uses_soft() const { return soft_weight > 0.0; }
  bool uses_hard() const { return soft_weight < 1.0; }
};

// Training rows. Either target may be absent when the objective does not use
// it.
struct TrainingSet {
  RealMatrix features;
  std::vector<std::size_t> hard_labels;
  std::optional<RealMatrix> soft_labels;
  std::size_t class_count = 0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }

  static TrainingSet FromLabeled(const LabeledDataset& data) {
    return TrainingSet{data.features, data.labels, std::nullopt, data.class_count};
  }

  void ValidateFor(const Objective& objective) const {
    Require(size() > 0, ErrorCode::kInvalidInput, "training set is empty");
    if (objective.uses_hard()) {
      Require(hard_labels.size() == size(), ErrorCode::kShape,
              "objective needs one hard label per training row");
      for (std::size_t y : hard_labels) {
        Require(y < class_count, ErrorCode::kInvalidInput, "hard label out of range");
      }
    }
    if (objective.uses_soft()) {
      Require(soft_labels.has_value() && static_cast<std::size_t>(soft_labels->rows()) == size() &&
                  static_cast<std::size_t>(soft_labels->cols()) == class_count,
              ErrorCode::kShape, "objective needs one soft label row per training row");
    }
  }
};

namespace train_detail {

// Accumulates loss and logit gradient for one row. Returns the loss.
inline double RowLossAndGradient(const Objective& objective,
                                 const Eigen::Ref<const RealVector>& logits,
                                 const TrainingSet& data, std::size_t row,
                                 RealVector* logit_grad) {
  double loss = 0.0;
  if (logit_grad) logit_grad->setZero(logits.size());
  const double a = objective.soft_weight;
  if (objective.uses_soft()) {
    const RealVector target = data.soft_labels->row(static_cast<Eigen::Index>(row)).transpose();
    if (a == 1.0) {
      loss = LossValue(objective.distill, logits, target);
      if (logit_grad) *logit_grad = LossGradient(objective.distill, logits, target);
    } else {
      loss += a * LossValue(objective.distill, logits, target);
      if (logit_grad) *logit_grad += a * LossGradient(objective.distill, logits, target);
    }
  }
  if (objective.uses_hard()) {
    const RealVector target = OneHot(data.hard_labels[row], data.class_count);
    if (a == 0.0) {
      loss = LossValue(LossKind::CrossEntropy(), logits, target);
      if (logit_grad) *logit_grad = LossGradient(LossKind::CrossEntropy(), logits, target);
    } else {
      loss += (1.0 - a) * LossValue(LossKind::CrossEntropy(), logits, target);
      if (logit_grad) {
        *logit_grad += (1.0 - a) * LossGradient(LossKind::CrossEntropy(), logits, target);
      }
    }
  }
  return loss;
}

}  // namespace train_detail

// Mean objective over `rows` and its parameter gradient.
inline double BatchLossAndGradient(const MlpModel& model, const Objective& objective,
                                   const TrainingSet& data, std::span<const std::size_t> rows,
                                   Gradients* grads, ForwardCache* scratch = nullptr) {
  ForwardCache local;
  ForwardCache& cache = scratch ? *scratch : local;
  RealMatrix batch(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    batch.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));
  }
  ForwardInto(model, batch, cache);
  // Overflowed logits: report a non-finite loss and leave the caller to decide.
  if (!cache.logits.allFinite()) return std::numeric_limits<double>::quiet_NaN();
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  RealMatrix logit_grad(cache.logits.rows(), cache.logits.cols());
  RealVector row_grad;
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const RealVector z = cache.logits.row(r).transpose();
    total += train_detail::RowLossAndGradient(objective, z, data, rows[i],
                                              grads ? &row_grad : nullptr);
    if (grads) logit_grad.row(r) = row_grad.transpose() * inv_n;
  }
  if (grads) BackwardInto(model, cache, std::move(logit_grad), *grads);
  return total * inv_n;
}

// PyTorch-style SGD: g = grad + wd * w (weights only), v = mu * v + g,
// w -= lr * v. Biases get no decay.
class SgdOptimizer {
 public:
  SgdOptimizer(const MlpModel& model, double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay),
        velocity_(Gradients::ZerosLike(model)) {}

  void Step(MlpModel& model, Gradients& grads, double lr) {
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
      if (weight_decay_ != 0.0) grads.weights[k] += weight_decay_ * model.weights[k];
      Update(velocity_.weights[k], grads.weights[k]);
      Update(velocity_.biases[k], grads.biases[k]);
      model.weights[k] -= lr * velocity_.weights[k];
      model.biases[k] -= lr * velocity_.biases[k];
    }
    first_step_ = false;
  }

 private:
  template <typename M>
  void Update(M& velocity, const M& grad) {
    if (first_step_ || momentum_ == 0.0) {
      velocity = grad;
    } else {
      velocity = momentum_ * velocity + grad;
    }
  }

  double momentum_;
  double weight_decay_;
  Gradients velocity_;
  bool first_step_ = true;
};

// Reduce-on-plateau in "min" mode with a relative improvement threshold of
// 1e-4, no cooldown.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, std::size_t patience, double min_lr)
      : lr_(lr), factor_(factor), patience_(patience), min_lr_(min_lr) {}

  static bool Improves(double value, double best) {
    return value < best * (1.0 - kRelThreshold);
  }

  // Returns the learning rate for the next epoch.
  double Observe(double metric) {
    if (Improves(metric, best_)) {
      best_ = metric;
      bad_epochs_ = 0;
    } else {
      ++bad_epochs_;
    }
    if (bad_epochs_ > patience_) {
      lr_ = std::max(lr_ * factor_, min_lr_);
      bad_epochs_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }

 private:
  static constexpr double kRelThreshold = 1e-4;
  double lr_;
  double factor_;
  std::size_t patience_;
  double min_lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

// Mean cross-entropy and accuracy over a labeled set.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline Evaluation Evaluate(const MlpModel& model, const LabeledDataset& data) {
  Require(!data.empty(), ErrorCode::kInvalidInput, "evaluation set is empty");
  const RealMatrix logits = Logits(model, data.features);
  Evaluation e;
  if (!logits.allFinite()) {
    e.loss = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const RealVector z = logits.row(static_cast<Eigen::Index>(i)).transpose();
    const RealVector p = Softmax(z);
    e.loss -= std::log(ClampProbability(p(static_cast<Eigen::Index>(data.labels[i]))));
    if (ArgMax(p) == data.labels[i]) ++correct;
  }
  e.loss /= static_cast<double>(data.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return e;
}

// Trains a copy of `init`. The validation set drives the scheduler and early
// stopping (cross-entropy loss) and snapshot selection (accuracy; the earliest
// epoch wins ties).
inline TrainedModel TrainModel(const MlpModel& init, const Objective& objective,
                               const TrainingSet& train, const LabeledDataset& val,
                               const TrainConfig& cfg) {
  cfg.Validate();
  init.Validate();
  train.ValidateFor(objective);
  Require(!val.empty(), ErrorCode::kInvalidInput, "validation set is empty");
  Require(train.features.cols() == static_cast<Eigen::Index>(init.input_dim()) &&
              val.feature_dim() == init.input_dim(),
          ErrorCode::kShape, "dataset feature dimension does not match model input");
  Require(train.class_count == init.output_dim() && val.class_count == init.output_dim(),
          ErrorCode::kShape, "class count does not match model output");

  MlpModel model = init;
  SgdOptimizer optimizer(model, cfg.momentum, cfg.weight_decay);
  PlateauScheduler scheduler(cfg.learning_rate, cfg.lr_factor, cfg.patience_scheduler,
                             cfg.min_lr);
  std::mt19937_64 rng(cfg.seed);

  TrainedModel result;
  result.model = model;
  result.best_val_accuracy = -1.0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Gradients grads = Gradients::ZerosLike(model);
  ForwardCache cache;
  double lr = cfg.learning_rate;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> rows(order.data() + start, len);
      const double loss = BatchLossAndGradient(model, objective, train, rows, &grads, &cache);
      if (!std::isfinite(loss)) throw TrainingDivergedError(epoch, "non-finite training loss");
      if (lr != 0.0) optimizer.Step(model, grads, lr);
    }

    const Evaluation eval = Evaluate(model, val);
    if (!std::isfinite(eval.loss)) throw TrainingDivergedError(epoch, "non-finite validation loss");
    result.epochs_run = epoch;
    if (eval.accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = eval.accuracy;
      result.best_epoch = epoch;
      result.model = model;
    }
    if (PlateauScheduler::Improves(eval.loss, best_val_loss)) {
      best_val_loss = eval.loss;
      epochs_since_improvement = 0;
    } else {
      ++epochs_since_improvement;
    }
    lr = scheduler.Observe(eval.loss);
    if (cfg.patience_stop > 0 && epochs_since_improvement >= cfg.patience_stop) break;
  }
  result.final_lr = lr;
  return result;
}

}  // namespace kcdlab

#endif  // KCDLAB_TRAIN_HPP_
