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

// Black-box membership inference with confidence scores, under supervised
// inference: the attacker holds labeled known members and known non-members
// and calibrates on them.
//
// Metric attacks (F = confidence vector, l = true label):
//
//   Top1              max_i F_i                          member if >= tau
//   Correctness       argmax_i F_i == l                  member if true
//   Confidence        F_l                                member if >= tau_l
//   Entropy           -sum_i F_i ln F_i                  member if <= tau_l
//   ModifiedEntropy   -(1 - F_l) ln F_l
//                       - sum_{i != l} F_i ln F_i        member if <= tau_l
//
// plus Leaks1, a single MLP over the top-3 sorted confidences.

#ifndef KCDLAB_ATTACKS_HPP_
#define KCDLAB_ATTACKS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcdlab/csv.hpp"
#include "kcdlab/data.hpp"
#include "kcdlab/error.hpp"
#include "kcdlab/nn.hpp"
#include "kcdlab/train.hpp"

namespace kcdlab {

// Declaration order is the tie-break order for picking the strongest attack.
enum class AttackKind { kLeaks1, kTop1, kCorrectness, kConfidence, kEntropy, kModifiedEntropy };

inline constexpr std::array<AttackKind, 6> kAllAttacks = {
    AttackKind::kLeaks1,     AttackKind::kTop1,    AttackKind::kCorrectness,
    AttackKind::kConfidence, AttackKind::kEntropy, AttackKind::kModifiedEntropy};

inline constexpr std::array<AttackKind, 5> kMetricAttacks = {
    AttackKind::kTop1, AttackKind::kCorrectness, AttackKind::kConfidence,
    AttackKind::kEntropy, AttackKind::kModifiedEntropy};

inline std::string AttackName(AttackKind kind) {
  switch (kind) {
    case AttackKind::kLeaks1: return "leaks1";
    case AttackKind::kTop1: return "top1";
    case AttackKind::kCorrectness: return "correctness";
    case AttackKind::kConfidence: return "confidence";
    case AttackKind::kEntropy: return "entropy";
    case AttackKind::kModifiedEntropy: return "mentropy";
  }
  return "?";
}

inline AttackKind AttackFromName(const std::string& name) {
  for (AttackKind k : kAllAttacks) {
    if (AttackName(k) == name) return k;
  }
  Fail(ErrorCode::kInvalidParameter, "unknown attack '" + name + "'");
}

inline bool IsMetricAttack(AttackKind kind) { return kind != AttackKind::kLeaks1; }

enum class ThresholdDirection { kNone, kMemberIfAtLeast, kMemberIfAtMost };

inline ThresholdDirection DirectionOf(AttackKind kind) {
  switch (kind) {
    case AttackKind::kTop1:
    case AttackKind::kConfidence: return ThresholdDirection::kMemberIfAtLeast;
    case AttackKind::kEntropy:
    case AttackKind::kModifiedEntropy: return ThresholdDirection::kMemberIfAtMost;
    default: return ThresholdDirection::kNone;
  }
}

inline bool UsesPerClassThresholds(AttackKind kind) {
  return kind == AttackKind::kConfidence || kind == AttackKind::kEntropy ||
         kind == AttackKind::kModifiedEntropy;
}

// One queried record: the model's confidence vector, the true label, and
// whether the record is a member of the model's training set.
struct MembershipRecord {
  RealVector confidence;
  std::size_t label = 0;
  bool member = false;
};

using AttackKnowledge = std::vector<MembershipRecord>;

inline std::vector<MembershipRecord> QueryRecords(const MlpModel& model,
                                                  const LabeledDataset& data, bool member) {
  const RealMatrix probs = Predict(model, data.features);
  std::vector<MembershipRecord> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.push_back({probs.row(static_cast<Eigen::Index>(i)).transpose(), data.labels[i], member});
  }
  return out;
}

inline void ValidateKnowledge(std::span<const MembershipRecord> knowledge) {
  std::size_t members = 0;
  for (const auto& r : knowledge) {
    if (r.member) ++members;
  }
  Require(members > 0 && members < knowledge.size(), ErrorCode::kInvalidInput,
          "attack knowledge needs both known members and known non-members");
}

inline double MetricValue(AttackKind kind, const Eigen::Ref<const RealVector>& confidence,
                          std::size_t true_label) {
  Require(IsMetricAttack(kind), ErrorCode::kInvalidInput, "leaks1 is not a metric attack");
  Require(true_label < static_cast<std::size_t>(confidence.size()), ErrorCode::kInvalidInput,
          "label " + std::to_string(true_label) + " outside confidence vector");
  const auto l = static_cast<Eigen::Index>(true_label);
  switch (kind) {
    case AttackKind::kTop1: return confidence.maxCoeff();
    case AttackKind::kCorrectness: return ArgMax(confidence) == true_label ? 1.0 : 0.0;
    case AttackKind::kConfidence: return confidence(l);
    case AttackKind::kEntropy: {
      double h = 0.0;
      for (Eigen::Index i = 0; i < confidence.size(); ++i) {
        const double p = ClampProbability(confidence(i));
        h -= p * std::log(p);
      }
      return h;
    }
    case AttackKind::kModifiedEntropy: {
      const double pl = ClampProbability(confidence(l));
      double h = -(1.0 - pl) * std::log(pl);
      for (Eigen::Index i = 0; i < confidence.size(); ++i) {
        if (i == l) continue;
        const double p = ClampProbability(confidence(i));
        h -= p * std::log(p);
      }
      return h;
    }
    default: break;
  }
  return 0.0;
}

enum class ThresholdObjective { kBalancedAccuracy, kAccuracy };

struct ThresholdTable {
  AttackKind kind = AttackKind::kTop1;
  ThresholdDirection direction = ThresholdDirection::kNone;
  double global_tau = 0.0;
  // Classes with enough support on both sides; the rest use global_tau.
  std::map<std::size_t, double> per_class_tau;
  std::size_t min_class_support = 2;

  double TauFor(std::size_t label) const {
    auto it = per_class_tau.find(label);
    return it == per_class_tau.end() ? global_tau : it->second;
  }

  bool PredictsMember(double value, std::size_t label) const {
    switch (direction) {
      case ThresholdDirection::kMemberIfAtLeast: return value >= TauFor(label);
      case ThresholdDirection::kMemberIfAtMost: return value <= TauFor(label);
      case ThresholdDirection::kNone: return value >= 1.0;
    }
    return false;
  }
};

struct ThresholdFitOptions {
  ThresholdObjective objective = ThresholdObjective::kBalancedAccuracy;
  std::size_t min_class_support = 2;
};

struct MetricSample {
  double value = 0.0;
  bool member = false;
};

// Best observed value as threshold; the smallest candidate wins ties. Scores
// are compared as exact integers: balanced accuracy is ranked by
// TP * N + TN * M (M members, N non-members), plain accuracy by TP + TN.
inline double FitSingleThreshold(std::vector<MetricSample> samples, ThresholdDirection direction,
                                 ThresholdObjective objective) {
  Require(!samples.empty(), ErrorCode::kInvalidInput, "no samples to fit a threshold on");
  std::sort(samples.begin(), samples.end(),
            [](const MetricSample& a, const MetricSample& b) { return a.value < b.value; });
  std::uint64_t total_m = 0;
  for (const auto& s : samples) total_m += s.member ? 1 : 0;
  const std::uint64_t total_n = samples.size() - total_m;

  auto score = [&](std::uint64_t tp, std::uint64_t tn) -> std::uint64_t {
    if (objective == ThresholdObjective::kAccuracy) return tp + tn;
    return tp * total_n + tn * total_m;
  };

  // below_m / below_n: counts strictly below the current candidate.
  std::uint64_t below_m = 0, below_n = 0;
  double best_tau = samples.front().value;
  std::uint64_t best_score = 0;
  bool have = false;
  std::size_t i = 0;
  while (i < samples.size()) {
    const double tau = samples[i].value;
    std::size_t j = i;
    std::uint64_t eq_m = 0, eq_n = 0;
    while (j < samples.size() && samples[j].value == tau) {
      (samples[j].member ? eq_m : eq_n) += 1;
      ++j;
    }
    std::uint64_t tp, tn;
    if (direction == ThresholdDirection::kMemberIfAtMost) {
      tp = below_m + eq_m;
      tn = total_n - below_n - eq_n;
    } else {
      tp = total_m - below_m;
      tn = below_n;
    }
    const std::uint64_t s = score(tp, tn);
    if (!have || s > best_score) {
      best_score = s;
      best_tau = tau;
      have = true;
    }
    below_m += eq_m;
    below_n += eq_n;
    i = j;
  }
  return best_tau;
}

inline ThresholdTable FitThresholds(AttackKind kind, std::span<const MembershipRecord> knowledge,
                                    const ThresholdFitOptions& options = {}) {
  Require(IsMetricAttack(kind), ErrorCode::kInvalidInput, "leaks1 has no thresholds");
  ValidateKnowledge(knowledge);
  ThresholdTable table;
  table.kind = kind;
  table.direction = DirectionOf(kind);
  table.min_class_support = options.min_class_support;
  if (kind == AttackKind::kCorrectness) return table;

  std::vector<MetricSample> all;
  std::map<std::size_t, std::vector<MetricSample>> by_class;
  for (const auto& r : knowledge) {
    const MetricSample s{MetricValue(kind, r.confidence, r.label), r.member};
    all.push_back(s);
    if (UsesPerClassThresholds(kind)) by_class[r.label].push_back(s);
  }
  table.global_tau = FitSingleThreshold(all, table.direction, options.objective);
  for (auto& [label, samples] : by_class) {
    std::size_t m = 0;
    for (const auto& s : samples) m += s.member ? 1 : 0;
    const std::size_t n = samples.size() - m;
    if (m < options.min_class_support || n < options.min_class_support) continue;
    table.per_class_tau[label] = FitSingleThreshold(samples, table.direction, options.objective);
  }
  return table;
}

struct ClassBreakdown {
  std::size_t count = 0;
  std::size_t correct = 0;
};

struct AttackOutcome {
  AttackKind kind = AttackKind::kTop1;
  std::vector<bool> predicted_member;
  double attack_accuracy = 0.0;
  std::map<std::size_t, ClassBreakdown> per_class;

  std::size_t target_count() const { return predicted_member.size(); }
};

namespace attack_detail {

inline AttackOutcome Score(AttackKind kind, std::span<const MembershipRecord> targets,
                           std::vector<bool> predicted) {
  AttackOutcome out;
  out.kind = kind;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const bool hit = predicted[i] == targets[i].member;
    correct += hit ? 1 : 0;
    auto& cls = out.per_class[targets[i].label];
    ++cls.count;
    cls.correct += hit ? 1 : 0;
  }
  out.attack_accuracy = static_cast<double>(correct) / static_cast<double>(targets.size());
  out.predicted_member = std::move(predicted);
  return out;
}

}  // namespace attack_detail

inline AttackOutcome RunMetricAttack(const ThresholdTable& table,
                                     std::span<const MembershipRecord> targets) {
  Require(!targets.empty(), ErrorCode::kInvalidInput, "no attack targets");
  std::vector<bool> predicted(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    if (table.kind == AttackKind::kCorrectness) {
      Require(t.label < static_cast<std::size_t>(t.confidence.size()), ErrorCode::kInvalidInput,
              "target label outside confidence vector");
      predicted[i] = ArgMax(t.confidence) == t.label;
    } else {
      predicted[i] = table.PredictsMember(MetricValue(table.kind, t.confidence, t.label), t.label);
    }
  }
  return attack_detail::Score(table.kind, targets, std::move(predicted));
}

// ---------------------------------------------------------------------------
// Leaks1: one attack MLP shared by all classes.

inline constexpr std::size_t kLeaksFeatureCount = 3;

// Top-3 confidences in descending order, zero-padded below three classes.
inline RealRow LeaksFeatures(const Eigen::Ref<const RealVector>& confidence) {
  std::vector<double> v(confidence.data(), confidence.data() + confidence.size());
  std::sort(v.begin(), v.end(), std::greater<double>());
  RealRow out = RealRow::Zero(kLeaksFeatureCount);
  for (std::size_t i = 0; i < std::min(v.size(), kLeaksFeatureCount); ++i) {
    out(static_cast<Eigen::Index>(i)) = v[i];
  }
  return out;
}

inline RealMatrix LeaksFeatureMatrix(std::span<const MembershipRecord> records) {
  RealMatrix out(static_cast<Eigen::Index>(records.size()),
                 static_cast<Eigen::Index>(kLeaksFeatureCount));
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = LeaksFeatures(records[i].confidence);
  }
  return out;
}

struct NnAttackConfig {
  std::vector<std::size_t> hidden_dims = {64, 64};
  TrainConfig train_cfg = [] {
    TrainConfig c;
    c.learning_rate = 0.05;
    c.max_epochs = 60;
    c.patience_stop = 15;
    return c;
  }();
  // Share of the balanced knowns held out for snapshot selection.
  double holdout_fraction = 0.1;
};

// Members are class 1, non-members class 0. The larger side is down-sampled
// to the smaller one before training.
inline MlpModel TrainNnAttack(std::span<const MembershipRecord> knowledge,
                              const NnAttackConfig& cfg = {}) {
  ValidateKnowledge(knowledge);
  std::vector<std::size_t> members, non_members;
  for (std::size_t i = 0; i < knowledge.size(); ++i) {
    (knowledge[i].member ? members : non_members).push_back(i);
  }
  std::mt19937_64 rng(cfg.train_cfg.seed);
  std::shuffle(members.begin(), members.end(), rng);
  std::shuffle(non_members.begin(), non_members.end(), rng);
  const std::size_t per_side = std::min(members.size(), non_members.size());
  members.resize(per_side);
  non_members.resize(per_side);

  const auto holdout = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(per_side))),
      std::size_t{1}, per_side > 1 ? per_side - 1 : std::size_t{1});
  std::vector<MembershipRecord> fit, val;
  for (std::size_t i = 0; i < per_side; ++i) {
    auto& dst = (i < holdout && per_side > 1) ? val : fit;
    dst.push_back(knowledge[members[i]]);
    dst.push_back(knowledge[non_members[i]]);
  }
  if (val.empty()) val = fit;

  auto to_set = [](const std::vector<MembershipRecord>& records) {
    LabeledDataset d;
    d.features = LeaksFeatureMatrix(records);
    d.class_count = 2;
    for (const auto& r : records) d.labels.push_back(r.member ? 1 : 0);
    return d;
  };
  const LabeledDataset fit_set = to_set(fit);
  const LabeledDataset val_set = to_set(val);

  std::vector<std::size_t> dims{kLeaksFeatureCount};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(2);
  const MlpModel init = MlpModel::GlorotUniform(dims, cfg.train_cfg.seed);
  return TrainModel(init, Objective::CrossEntropy(), TrainingSet::FromLabeled(fit_set), val_set,
                    cfg.train_cfg)
      .model;
}

// Predicts member when the attack model's class-1 output is the argmax
// (class 0 wins ties).
inline AttackOutcome RunNnAttack(const MlpModel& attack_model,
                                 std::span<const MembershipRecord> targets) {
  Require(!targets.empty(), ErrorCode::kInvalidInput, "no attack targets");
  Require(attack_model.input_dim() == kLeaksFeatureCount && attack_model.output_dim() == 2,
          ErrorCode::kInvalidInput, "attack model does not match the top-3 encoding");
  const RealMatrix probs = Predict(attack_model, LeaksFeatureMatrix(targets));
  std::vector<bool> predicted(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    predicted[i] = ArgMax(probs.row(static_cast<Eigen::Index>(i))) == 1;
  }
  return attack_detail::Score(AttackKind::kLeaks1, targets, std::move(predicted));
}

struct BestAttack {
  AttackKind kind = AttackKind::kLeaks1;
  double attack_accuracy = 0.0;
};

// Strongest attack; ties go to the earlier kind in kAllAttacks order.
inline BestAttack BestBbAttack(std::span<const std::pair<AttackKind, double>> results) {
  Require(!results.empty(), ErrorCode::kInvalidInput, "no attack results");
  BestAttack best{results.front().first, results.front().second};
  for (const auto& [kind, acc] : results.subspan(1)) {
    if (acc > best.attack_accuracy ||
        (acc == best.attack_accuracy && static_cast<int>(kind) < static_cast<int>(best.kind))) {
      best = {kind, acc};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// CSV exports.

inline std::string AttackOutcomesToCsvText(std::span<const AttackOutcome> outcomes) {
  std::string out = JoinCsvRow({"attack_name", "attack_accuracy", "n_targets", "per_class_json"});
  for (const auto& o : outcomes) {
    nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
    for (const auto& [label, b] : o.per_class) {
      per_class[std::to_string(label)] = {{"count", b.count}, {"correct", b.correct}};
    }
    out += JoinCsvRow({AttackName(o.kind), FormatDouble(o.attack_accuracy),
                       std::to_string(o.target_count()), per_class.dump()});
  }
  return out;
}

// member, label, c0..c{k-1}
inline std::string KnowledgeToCsvText(std::span<const MembershipRecord> records) {
  const std::size_t k = records.empty() ? 0 : static_cast<std::size_t>(records[0].confidence.size());
  std::vector<std::string> header{"member", "label"};
  for (std::size_t c = 0; c < k; ++c) header.push_back("c" + std::to_string(c));
  std::string out = JoinCsvRow(header);
  std::vector<std::string> fields(header.size());
  for (const auto& r : records) {
    Require(static_cast<std::size_t>(r.confidence.size()) == k, ErrorCode::kShape,
            "records have different confidence lengths");
    fields[0] = r.member ? "1" : "0";
    fields[1] = std::to_string(r.label);
    for (std::size_t c = 0; c < k; ++c) {
      fields[2 + c] = FormatDouble(r.confidence(static_cast<Eigen::Index>(c)));
    }
    out += JoinCsvRow(fields);
  }
  return out;
}

}  // namespace kcdlab

#endif  // KCDLAB_ATTACKS_HPP_
