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

// Per-sample losses on student logits and their analytic logit gradients.
//
//   CrossEntropy        -sum_i t_i ln clamp(p_i),           p = softmax(z)
//   MseOnProbs          (1/c) sum_i (p_i - t_i)^2
//   KlWithTemperature   T^2 sum_i q_i (ln q_i - ln p_i),    p = softmax(z / T),
//                                                           q = softmax(ln t / T)
//
// Targets are always probability vectors. The KL variant recovers teacher
// logits as ln t, which softmax maps back to t at T = 1.

#ifndef KCDLAB_LOSS_HPP_
#define KCDLAB_LOSS_HPP_

#include <cmath>
#include <cstdio>
#include <string>

#include "kcdlab/error.hpp"
#include "kcdlab/nn.hpp"

namespace kcdlab {

class LossKind {
 public:
  enum class Variant { kCrossEntropy, kMseOnProbs, kKlWithTemperature };

  static LossKind CrossEntropy() { return LossKind(Variant::kCrossEntropy, 1.0); }
  static LossKind MseOnProbs() { return LossKind(Variant::kMseOnProbs, 1.0); }
  static LossKind KlWithTemperature(double temperature) {
    Require(temperature > 0.0 && std::isfinite(temperature),
            ErrorCode::kInvalidParameter, "KL temperature must be positive");
    return LossKind(Variant::kKlWithTemperature, temperature);
  }

  // Accepts "ce", "mse", "kl".
  static LossKind FromName(const std::string& name, double temperature = 1.0) {
    if (name == "ce") return CrossEntropy();
    if (name == "mse") return MseOnProbs();
    if (name == "kl") return KlWithTemperature(temperature);
    Fail(ErrorCode::kInvalidParameter, "unknown loss kind '" + name + "'");
  }

  Variant variant() const { return variant_; }
  double temperature() const { return temperature_; }

  std::string name() const {
    switch (variant_) {
      case Variant::kCrossEntropy: return "ce";
      case Variant::kMseOnProbs: return "mse";
      case Variant::kKlWithTemperature: return "kl";
    }
    return "?";
  }

  // "kl" carries its temperature, e.g. "kl:T=4".
  std::string label() const {
    if (variant_ != Variant::kKlWithTemperature) return name();
    char buf[64];
    std::snprintf(buf, sizeof buf, "kl:T=%g", temperature_);
    return buf;
  }

  bool operator==(const LossKind&) const = default;

 private:
  LossKind(Variant v, double t) : variant_(v), temperature_(t) {}
  Variant variant_;
  double temperature_;
};

namespace loss_detail {

inline void CheckLengths(Eigen::Index a, Eigen::Index b) {
  Require(a == b, ErrorCode::kShape,
          "loss operands have different lengths (" + std::to_string(a) + " vs " +
              std::to_string(b) + ")");
}

inline RealVector SoftenTarget(const Eigen::Ref<const RealVector>& target, double t) {
  RealVector teacher_logits(target.size());
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    teacher_logits(i) = std::log(ClampProbability(target(i)));
  }
  return Softmax(teacher_logits, t);
}

}  // namespace loss_detail

// Loss from predicted probabilities. Defined for CrossEntropy and MseOnProbs.
inline double LossFromProbabilities(const LossKind& kind,
                                    const Eigen::Ref<const RealVector>& predicted,
                                    const Eigen::Ref<const RealVector>& target) {
  loss_detail::CheckLengths(predicted.size(), target.size());
  switch (kind.variant()) {
    case LossKind::Variant::kCrossEntropy: {
      double sum = 0.0;
      for (Eigen::Index i = 0; i < target.size(); ++i) {
        if (target(i) != 0.0) sum -= target(i) * std::log(ClampProbability(predicted(i)));
      }
      return sum;
    }
    case LossKind::Variant::kMseOnProbs:
      return (predicted - target).squaredNorm() / static_cast<double>(target.size());
    case LossKind::Variant::kKlWithTemperature:
      break;
  }
  Fail(ErrorCode::kInvalidInput, "KL loss is defined on logits, not probabilities");
}

// Loss of student logits against a target probability vector.
inline double LossValue(const LossKind& kind, const Eigen::Ref<const RealVector>& logits,
                        const Eigen::Ref<const RealVector>& target) {
  loss_detail::CheckLengths(logits.size(), target.size());
  if (kind.variant() != LossKind::Variant::kKlWithTemperature) {
    return LossFromProbabilities(kind, Softmax(logits), target);
  }
  const double t = kind.temperature();
  const RealVector q = loss_detail::SoftenTarget(target, t);
  const RealVector log_p = LogSoftmax(logits, t);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) > 0.0) sum += q(i) * (std::log(ClampProbability(q(i))) - log_p(i));
  }
  return t * t * sum;
}

// d(loss)/d(logits).
inline RealVector LossGradient(const LossKind& kind, const Eigen::Ref<const RealVector>& logits,
                               const Eigen::Ref<const RealVector>& target) {
  loss_detail::CheckLengths(logits.size(), target.size());
  switch (kind.variant()) {
    case LossKind::Variant::kCrossEntropy: {
      const RealVector p = Softmax(logits);
      return p * target.sum() - target;
    }
    case LossKind::Variant::kMseOnProbs: {
      const RealVector p = Softmax(logits);
      const RealVector g = (2.0 / static_cast<double>(p.size())) * (p - target);
      const double pg = p.dot(g);
      return (p.array() * (g.array() - pg)).matrix();
    }
    case LossKind::Variant::kKlWithTemperature: {
      const double t = kind.temperature();
      const RealVector q = loss_detail::SoftenTarget(target, t);
      const RealVector p = Softmax(logits, t);
      return t * (p - q);
    }
  }
  return RealVector();
}

}  // namespace kcdlab

#endif  // KCDLAB_LOSS_HPP_
