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

// Defense trainers against membership inference.
//
//   unprotected     plain cross-entropy training on the private set D.
//   dmp             teacher on D, student distilled on teacher outputs over a
//                   disjoint reference pool R.
//   kcd             knowledge cross-distillation: D is cut into n folds,
//                   teacher i is trained on D minus fold i and labels fold i,
//                   the student minimizes
//                     alpha * L(H(x), y') + (1 - alpha) * CE(H(x), y)
//                   over all of D.
//   splitting_dmp   teacher on (100 - theta)% of D, student distilled on the
//                   other theta%.
//   reusing_dmp     teacher on all of D, student distilled on a theta% subset
//                   of D.
//
// Seeds: the student always uses train_cfg.seed. KCD teacher i uses
// seed + i, the single DMP-style teacher seed + 1.

#ifndef KCDLAB_DEFENSES_HPP_
#define KCDLAB_DEFENSES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <future>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "kcdlab/csv.hpp"
#include "kcdlab/data.hpp"
#include "kcdlab/error.hpp"
#include "kcdlab/loss.hpp"
#include "kcdlab/nn.hpp"
#include "kcdlab/train.hpp"

namespace kcdlab {

enum class DefenseKind { kUnprotected, kDmp, kKcd, kSplittingDmp, kReusingDmp };

inline std::string DefenseName(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::kUnprotected: return "unprotected";
    case DefenseKind::kDmp: return "dmp";
    case DefenseKind::kKcd: return "kcd";
    case DefenseKind::kSplittingDmp: return "splitting_dmp";
    case DefenseKind::kReusingDmp: return "reusing_dmp";
  }
  return "?";
}

inline DefenseKind DefenseFromName(const std::string& name) {
  for (DefenseKind k : {DefenseKind::kUnprotected, DefenseKind::kDmp, DefenseKind::kKcd,
                        DefenseKind::kSplittingDmp, DefenseKind::kReusingDmp}) {
    if (DefenseName(k) == name) return k;
  }
  Fail(ErrorCode::kInvalidParameter, "unknown defense '" + name + "'");
}

struct DefenseConfig {
  double alpha = 1.0;
  std::size_t teacher_count = 5;
  LossKind distill_loss = LossKind::MseOnProbs();
  // DMP reference rows used for distillation; 0 means the whole pool.
  std::size_t reference_size = 0;
  // Percent of the training set used as student reference by the naive
  // DMP variants.
  double theta = 50.0;
  std::vector<std::size_t> hidden_dims = {128, 64};
  TrainConfig train_cfg;
  // Optional separate schedule for distilled students.
  std::optional<TrainConfig> student_cfg;
  // Concurrent teacher trainings.
  std::size_t parallel = 1;

  void Validate() const {
    Require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kInvalidParameter,
            "alpha must lie in [0, 1]");
    Require(teacher_count >= 2, ErrorCode::kInvalidParameter, "teacher_count must be >= 2");
    Require(theta > 0.0 && theta <= 100.0, ErrorCode::kInvalidParameter,
            "theta must lie in (0, 100]");
    train_cfg.Validate();
    if (student_cfg) student_cfg->Validate();
  }

  TrainConfig StudentConfig() const {
    TrainConfig c = student_cfg.value_or(train_cfg);
    c.seed = train_cfg.seed;
    return c;
  }

  std::vector<std::size_t> LayerDims(std::size_t input_dim, std::size_t class_count) const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(class_count);
    return dims;
  }
};

// Feature rows paired with teacher confidence vectors (y') and the original
// hard labels (y). provenance[j] is the fold whose teacher produced row j.
struct SoftLabeledDataset {
  RealMatrix features;
  RealMatrix soft_labels;
  std::vector<std::size_t> hard_labels;
  std::vector<std::size_t> provenance;
  std::size_t class_count = 0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }

  void Validate() const {
    Require(soft_labels.rows() == features.rows() &&
                static_cast<std::size_t>(soft_labels.cols()) == class_count,
            ErrorCode::kShape, "soft labels do not match features");
    Require(hard_labels.empty() || hard_labels.size() == size(), ErrorCode::kShape,
            "hard label count does not match features");
    for (std::size_t y : hard_labels) {
      Require(y < class_count, ErrorCode::kInvalidInput, "hard label out of range");
    }
    for (Eigen::Index r = 0; r < soft_labels.rows(); ++r) {
      Require(std::abs(soft_labels.row(r).sum() - 1.0) <= 1e-9, ErrorCode::kInvalidInput,
              "soft label row " + std::to_string(r) + " does not sum to 1");
    }
  }

  TrainingSet ToTrainingSet() const {
    return TrainingSet{features, hard_labels, soft_labels, class_count};
  }
};

// A teacher and the defense-input rows it was trained on.
struct TeacherRecord {
  TrainedModel trained;
  IndexList train_rows;
};

enum class StudentSource { kTrain, kReference };

struct DefenseResult {
  DefenseKind kind = DefenseKind::kUnprotected;
  TrainedModel student;
  std::vector<TeacherRecord> teachers;
  std::optional<FoldAssignment> folds;
  std::optional<SoftLabeledDataset> soft_data;
  // Rows of the student's input source (training set or reference pool)
  // whose features the student was fitted on.
  IndexList student_rows;
  StudentSource student_source = StudentSource::kTrain;
};

namespace defense_detail {

inline IndexList Iota(std::size_t n) {
  IndexList out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

inline IndexList ShuffledRows(std::size_t n, std::uint64_t seed) {
  IndexList rows = Iota(n);
  std::mt19937_64 rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  return rows;
}

inline TrainedModel TrainCrossEntropy(const LabeledDataset& train, const LabeledDataset& val,
                                      const DefenseConfig& cfg, std::uint64_t seed) {
  TrainConfig tc = cfg.train_cfg;
  tc.seed = seed;
  const MlpModel init =
      MlpModel::GlorotUniform(cfg.LayerDims(train.feature_dim(), train.class_count), seed);
  return TrainModel(init, Objective::CrossEntropy(), TrainingSet::FromLabeled(train), val, tc);
}

// Teacher confidences over `rows` of `source`, distilled into a fresh student.
inline DefenseResult DistillFromTeacher(TeacherRecord teacher, const LabeledDataset& source,
                                        IndexList rows, StudentSource student_source,
                                        const LabeledDataset& val, const DefenseConfig& cfg) {
  Require(!rows.empty(), ErrorCode::kInvalidParameter, "student reference set is empty");
  const LabeledDataset inputs = source.Subset(rows);
  SoftLabeledDataset soft;
  soft.features = inputs.features;
  soft.soft_labels = Predict(teacher.trained.model, inputs.features);
  soft.class_count = source.class_count;
  soft.provenance.assign(rows.size(), 0);
  soft.Validate();

  const TrainConfig sc = cfg.StudentConfig();
  const MlpModel init =
      MlpModel::GlorotUniform(cfg.LayerDims(source.feature_dim(), source.class_count), sc.seed);
  DefenseResult result;
  result.student =
      TrainModel(init, Objective::Distill(cfg.distill_loss), soft.ToTrainingSet(), val, sc);
  result.teachers.push_back(std::move(teacher));
  result.soft_data = std::move(soft);
  result.student_rows = std::move(rows);
  result.student_source = student_source;
  return result;
}

}  // namespace defense_detail

inline DefenseResult TrainUnprotected(const LabeledDataset& train, const LabeledDataset& val,
                                      const DefenseConfig& cfg) {
  cfg.Validate();
  DefenseResult result;
  result.kind = DefenseKind::kUnprotected;
  result.student = defense_detail::TrainCrossEntropy(train, val, cfg, cfg.train_cfg.seed);
  result.student_rows = defense_detail::Iota(train.size());
  return result;
}

// `train_ids` and `reference_ids`, when given, are the rows' indices in a
// shared source dataset; any overlap is a protocol violation.
inline DefenseResult TrainDmp(const LabeledDataset& train, const LabeledDataset& reference,
                              const LabeledDataset& val, const DefenseConfig& cfg,
                              std::span<const std::size_t> train_ids = {},
                              std::span<const std::size_t> reference_ids = {}) {
  cfg.Validate();
  if (!train_ids.empty() && !reference_ids.empty()) {
    const std::unordered_set<std::size_t> private_ids(train_ids.begin(), train_ids.end());
    for (std::size_t id : reference_ids) {
      if (private_ids.count(id)) {
        Fail(ErrorCode::kProtocolViolation,
             "reference row " + std::to_string(id) + " is also a training row");
      }
    }
  }
  const std::size_t ref_n = cfg.reference_size == 0 ? reference.size() : cfg.reference_size;
  Require(ref_n <= reference.size(), ErrorCode::kInvalidParameter,
          "reference_size " + std::to_string(ref_n) + " exceeds reference pool of " +
              std::to_string(reference.size()));
  Require(ref_n > 0, ErrorCode::kInvalidParameter, "reference pool is empty");

  const std::uint64_t teacher_seed = cfg.train_cfg.seed + 1;
  TeacherRecord teacher{defense_detail::TrainCrossEntropy(train, val, cfg, teacher_seed),
                        defense_detail::Iota(train.size())};
  // The pool is already a random draw, so its first ref_n rows are a random
  // subset of the requested size.
  DefenseResult result = defense_detail::DistillFromTeacher(
      std::move(teacher), reference, defense_detail::Iota(ref_n), StudentSource::kReference,
      val, cfg);
  result.kind = DefenseKind::kDmp;
  return result;
}

// Soft label of every fold member from the teacher that held that fold out.
// `folds.members` are row indices into `train`; each row must appear once.
inline SoftLabeledDataset BuildSoftLabels(std::span<const MlpModel> teachers,
                                          const FoldAssignment& folds,
                                          const LabeledDataset& train) {
  Require(teachers.size() == folds.n, ErrorCode::kInvalidParameter,
          std::to_string(teachers.size()) + " teachers for " + std::to_string(folds.n) +
              " folds");
  Require(folds.members.size() == train.size(), ErrorCode::kInvalidParameter,
          "fold assignment does not cover the training set");
  std::vector<bool> seen(train.size(), false);
  for (std::size_t m : folds.members) {
    Require(m < train.size() && !seen[m], ErrorCode::kInvalidParameter,
            "fold members are not a permutation of the training rows");
    seen[m] = true;
  }

  SoftLabeledDataset out;
  out.class_count = train.class_count;
  out.features.resize(static_cast<Eigen::Index>(folds.members.size()), train.features.cols());
  out.soft_labels.resize(static_cast<Eigen::Index>(folds.members.size()),
                         static_cast<Eigen::Index>(train.class_count));
  out.hard_labels.resize(folds.members.size());
  out.provenance = folds.fold_of;

  const std::vector<IndexList> by_fold = folds.Folds();
  std::vector<std::size_t> slot_of(train.size());
  for (std::size_t j = 0; j < folds.members.size(); ++j) slot_of[folds.members[j]] = j;
  for (std::size_t f = 0; f < folds.n; ++f) {
    if (by_fold[f].empty()) continue;
    const LabeledDataset part = train.Subset(by_fold[f]);
    const RealMatrix probs = Predict(teachers[f], part.features);
    for (std::size_t i = 0; i < by_fold[f].size(); ++i) {
      const auto slot = static_cast<Eigen::Index>(slot_of[by_fold[f][i]]);
      out.features.row(slot) = part.features.row(static_cast<Eigen::Index>(i));
      out.soft_labels.row(slot) = probs.row(static_cast<Eigen::Index>(i));
      out.hard_labels[static_cast<std::size_t>(slot)] = part.labels[i];
    }
  }
  out.Validate();
  return out;
}

inline DefenseResult TrainKcd(const LabeledDataset& train, const LabeledDataset& val,
                              const DefenseConfig& cfg) {
  cfg.Validate();
  if (cfg.alpha == 0.0) {
    // Only the hard-label term remains: identical to unprotected training.
    DefenseResult result = TrainUnprotected(train, val, cfg);
    result.kind = DefenseKind::kKcd;
    return result;
  }
  const std::uint64_t seed = cfg.train_cfg.seed;
  FoldAssignment folds =
      PartitionFolds(defense_detail::Iota(train.size()), cfg.teacher_count, seed);

  std::vector<TeacherRecord> teachers(folds.n);
  auto train_teacher = [&](std::size_t i) {
    IndexList rows = folds.Complement(i);
    const LabeledDataset part = train.Subset(rows);
    teachers[i] = TeacherRecord{defense_detail::TrainCrossEntropy(part, val, cfg, seed + i),
                                std::move(rows)};
  };
  const std::size_t workers = std::max<std::size_t>(1, cfg.parallel);
  if (workers == 1) {
    for (std::size_t i = 0; i < folds.n; ++i) train_teacher(i);
  } else {
    // Results land in their fold's slot, so completion order is irrelevant.
    for (std::size_t start = 0; start < folds.n; start += workers) {
      std::vector<std::future<void>> jobs;
      for (std::size_t i = start; i < std::min(folds.n, start + workers); ++i) {
        jobs.push_back(std::async(std::launch::async, train_teacher, i));
      }
      for (auto& job : jobs) job.get();
    }
  }

  std::vector<MlpModel> teacher_models;
  for (const auto& t : teachers) teacher_models.push_back(t.trained.model);
  SoftLabeledDataset soft = BuildSoftLabels(teacher_models, folds, train);

  const TrainConfig sc = cfg.StudentConfig();
  const MlpModel init =
      MlpModel::GlorotUniform(cfg.LayerDims(train.feature_dim(), train.class_count), sc.seed);
  DefenseResult result;
  result.kind = DefenseKind::kKcd;
  result.student = TrainModel(init, Objective::Mixed(cfg.alpha, cfg.distill_loss),
                              soft.ToTrainingSet(), val, sc);
  result.teachers = std::move(teachers);
  result.student_rows = folds.members;
  result.folds = std::move(folds);
  result.soft_data = std::move(soft);
  return result;
}

inline std::size_t ThetaCount(double theta, std::size_t n) {
  return static_cast<std::size_t>(std::llround(theta / 100.0 * static_cast<double>(n)));
}

inline DefenseResult TrainSplittingDmp(const LabeledDataset& train, const LabeledDataset& val,
                                       double theta, const DefenseConfig& cfg) {
  cfg.Validate();
  Require(theta > 0.0 && theta < 100.0, ErrorCode::kInvalidParameter,
          "splitting theta must lie in (0, 100)");
  const std::size_t ref_n = ThetaCount(theta, train.size());
  Require(ref_n > 0 && ref_n < train.size(), ErrorCode::kInvalidParameter,
          "theta leaves one side of the split empty");
  const IndexList shuffled = defense_detail::ShuffledRows(train.size(), cfg.train_cfg.seed);
  IndexList student_rows(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(ref_n));
  IndexList teacher_rows(shuffled.begin() + static_cast<std::ptrdiff_t>(ref_n), shuffled.end());

  const LabeledDataset teacher_data = train.Subset(teacher_rows);
  TeacherRecord teacher{
      defense_detail::TrainCrossEntropy(teacher_data, val, cfg, cfg.train_cfg.seed + 1),
      std::move(teacher_rows)};
  DefenseResult result = defense_detail::DistillFromTeacher(
      std::move(teacher), train, std::move(student_rows), StudentSource::kTrain, val, cfg);
  result.kind = DefenseKind::kSplittingDmp;
  return result;
}

inline DefenseResult TrainReusingDmp(const LabeledDataset& train, const LabeledDataset& val,
                                     double theta, const DefenseConfig& cfg) {
  cfg.Validate();
  Require(theta > 0.0 && theta <= 100.0, ErrorCode::kInvalidParameter,
          "reusing theta must lie in (0, 100]");
  const std::size_t ref_n = ThetaCount(theta, train.size());
  Require(ref_n > 0, ErrorCode::kInvalidParameter, "theta selects no training rows");
  const IndexList shuffled = defense_detail::ShuffledRows(train.size(), cfg.train_cfg.seed);
  IndexList student_rows(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(ref_n));

  TeacherRecord teacher{
      defense_detail::TrainCrossEntropy(train, val, cfg, cfg.train_cfg.seed + 1),
      defense_detail::Iota(train.size())};
  DefenseResult result = defense_detail::DistillFromTeacher(
      std::move(teacher), train, std::move(student_rows), StudentSource::kTrain, val, cfg);
  result.kind = DefenseKind::kReusingDmp;
  return result;
}

// Dispatches on `kind`. `reference` is only read by DMP.
inline DefenseResult TrainDefense(DefenseKind kind, const LabeledDataset& train,
                                  const LabeledDataset& reference, const LabeledDataset& val,
                                  const DefenseConfig& cfg,
                                  std::span<const std::size_t> train_ids = {},
                                  std::span<const std::size_t> reference_ids = {}) {
  switch (kind) {
    case DefenseKind::kUnprotected: return TrainUnprotected(train, val, cfg);
    case DefenseKind::kDmp:
      return TrainDmp(train, reference, val, cfg, train_ids, reference_ids);
    case DefenseKind::kKcd: return TrainKcd(train, val, cfg);
    case DefenseKind::kSplittingDmp: return TrainSplittingDmp(train, val, cfg.theta, cfg);
    case DefenseKind::kReusingDmp: return TrainReusingDmp(train, val, cfg.theta, cfg);
  }
  Fail(ErrorCode::kInvalidParameter, "unknown defense");
}

// Protocol audit of a KCD result: folds are disjoint and cover the training
// rows, and no sample's soft label comes from a teacher that trained on it.
// Returns one message per violation.
inline std::vector<std::string> AuditKcdProtocol(const DefenseResult& result,
                                                 std::size_t train_size) {
  std::vector<std::string> problems;
  if (!result.folds || !result.soft_data) {
    problems.push_back("result carries no fold bookkeeping");
    return problems;
  }
  const FoldAssignment& folds = *result.folds;
  std::vector<int> count(train_size, 0);
  for (std::size_t m : folds.members) {
    if (m >= train_size) {
      problems.push_back("fold member " + std::to_string(m) + " out of range");
      continue;
    }
    ++count[m];
  }
  for (std::size_t i = 0; i < train_size; ++i) {
    if (count[i] != 1) {
      problems.push_back("row " + std::to_string(i) + " appears in " +
                         std::to_string(count[i]) + " folds");
    }
  }
  if (result.teachers.size() != folds.n) {
    problems.push_back("teacher count differs from fold count");
    return problems;
  }
  std::vector<std::unordered_set<std::size_t>> seen_by(folds.n);
  for (std::size_t f = 0; f < folds.n; ++f) {
    seen_by[f].insert(result.teachers[f].train_rows.begin(),
                      result.teachers[f].train_rows.end());
  }
  for (std::size_t j = 0; j < folds.members.size(); ++j) {
    const std::size_t f = folds.fold_of[j];
    if (seen_by[f].count(folds.members[j])) {
      problems.push_back("teacher " + std::to_string(f) + " trained on row " +
                         std::to_string(folds.members[j]) + " it labels");
    }
    if (result.soft_data->provenance[j] != f) {
      problems.push_back("provenance of row " + std::to_string(folds.members[j]) +
                         " does not match its fold");
    }
  }
  return problems;
}

// One CSV: f0..f{d-1}, s0..s{c-1}, label, fold.
inline std::string SoftLabeledToCsvText(const SoftLabeledDataset& data) {
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < data.features.cols(); ++j) header.push_back("f" + std::to_string(j));
  for (std::size_t c = 0; c < data.class_count; ++c) header.push_back("s" + std::to_string(c));
  header.push_back("label");
  header.push_back("fold");
  std::string out = JoinCsvRow(header);
  std::vector<std::string> fields(header.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::size_t col = 0;
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
      fields[col++] = FormatDouble(data.features(r, j));
    }
    for (Eigen::Index c = 0; c < data.soft_labels.cols(); ++c) {
      fields[col++] = FormatDouble(data.soft_labels(r, c));
    }
    fields[col++] = i < data.hard_labels.size() ? std::to_string(data.hard_labels[i]) : "";
    fields[col++] = i < data.provenance.size() ? std::to_string(data.provenance[i]) : "";
    out += JoinCsvRow(fields);
  }
  return out;
}

}  // namespace kcdlab

#endif  // KCDLAB_DEFENSES_HPP_
