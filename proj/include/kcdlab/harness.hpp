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

// Experiment orchestration: dataset and split preparation, multi-trial
// training with best-validation selection, the attack matrix, parameter
// sweeps, and report files.

#ifndef KCDLAB_HARNESS_HPP_
#define KCDLAB_HARNESS_HPP_

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "kcdlab/attacks.hpp"
#include "kcdlab/csv.hpp"
#include "kcdlab/data.hpp"
#include "kcdlab/defenses.hpp"
#include "kcdlab/error.hpp"
#include "kcdlab/experiment_spec.hpp"
#include "kcdlab/serialization.hpp"

namespace kcdlab {

// Source data cut into every role of a split plan.
struct PreparedData {
  LabeledDataset source;
  SplitPlan plan;
  LabeledDataset train;
  LabeledDataset reference;
  LabeledDataset validation;
  LabeledDataset test;
  LabeledDataset train_known;
  LabeledDataset train_target;
  LabeledDataset test_known;
  LabeledDataset test_target;
};

inline LabeledDataset LoadSource(const DatasetSource& source) {
  if (source.use_csv) return LoadCsv(source.csv_path, source.csv_schema);
  return GenerateSynthetic(source.synthetic);
}

inline PreparedData PrepareFromPlan(LabeledDataset source, SplitPlan plan) {
  PreparedData d;
  d.train = source.Subset(plan.train_all);
  d.reference = source.Subset(plan.reference);
  d.validation = source.Subset(plan.validation);
  d.test = source.Subset(plan.test_all);
  d.train_known = source.Subset(plan.train_known);
  d.train_target = source.Subset(plan.train_target);
  d.test_known = source.Subset(plan.test_known);
  d.test_target = source.Subset(plan.test_target);
  d.source = std::move(source);
  d.plan = std::move(plan);
  return d;
}

inline PreparedData PrepareData(const ExperimentSpec& spec) {
  LabeledDataset source = LoadSource(spec.dataset);
  source.Validate();
  SplitPlan plan = MakeSplitPlan(source.size(), spec.splits, spec.split_seed);
  return PrepareFromPlan(std::move(source), std::move(plan));
}

// One row of a report. Attack accuracies are indexed by AttackKind; attacks
// that were not run are empty.
struct ReportRow {
  std::string defense;
  double alpha = 0.0;
  std::size_t n_teachers = 0;
  double theta = 0.0;
  std::size_t reference_size = 0;
  std::string loss_kind;
  std::uint64_t seed = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double gen_gap = 0.0;
  std::array<std::optional<double>, kAllAttacks.size()> attack_acc{};
  double best_bb = 0.0;
  double wall_seconds = 0.0;
  // Set on failed sweep points; metric fields are then meaningless.
  std::optional<std::string> error;

  std::optional<double>& acc(AttackKind k) { return attack_acc[static_cast<std::size_t>(k)]; }
  const std::optional<double>& acc(AttackKind k) const {
    return attack_acc[static_cast<std::size_t>(k)];
  }

  bool operator==(const ReportRow&) const = default;
};

inline const std::vector<std::string>& ReportColumns() {
  static const std::vector<std::string> columns = {
      "defense",   "alpha",     "n_teachers", "theta",           "reference_size",
      "loss_kind", "seed",      "train_acc",  "test_acc",        "gen_gap",
      "acc_leaks1", "acc_top1", "acc_correctness", "acc_confidence", "acc_entropy",
      "acc_mentropy", "best_bb", "wall_seconds"};
  return columns;
}

inline void EchoConfig(ReportRow& row, DefenseKind defense, const DefenseConfig& cfg,
                       std::uint64_t seed) {
  row.defense = DefenseName(defense);
  row.alpha = cfg.alpha;
  row.n_teachers = cfg.teacher_count;
  row.theta = cfg.theta;
  row.reference_size = cfg.reference_size;
  row.loss_kind = cfg.distill_loss.label();
  row.seed = seed;
}

// Attack results for one target model.
struct AttackSuiteResult {
  std::vector<AttackOutcome> outcomes;
  std::size_t member_targets = 0;
  std::size_t non_member_targets = 0;
};

// Known members: train_known; known non-members: test_known. Targets:
// train_target (members) and test_target (non-members), equal in number.
inline AttackSuiteResult RunAttackSuite(const MlpModel& model, const PreparedData& data,
                                        const ExperimentSpec& spec) {
  AttackKnowledge knowledge = QueryRecords(model, data.train_known, true);
  for (auto& r : QueryRecords(model, data.test_known, false)) knowledge.push_back(std::move(r));
  AttackKnowledge targets = QueryRecords(model, data.train_target, true);
  for (auto& r : QueryRecords(model, data.test_target, false)) targets.push_back(std::move(r));

  AttackSuiteResult result;
  result.member_targets = data.train_target.size();
  result.non_member_targets = data.test_target.size();
  Require(result.member_targets == result.non_member_targets && result.member_targets > 0,
          ErrorCode::kProtocolViolation,
          "attack targets must hold equal, non-zero numbers of members and non-members");

  for (AttackKind kind : kAllAttacks) {
    if (std::find(spec.attacks.begin(), spec.attacks.end(), kind) == spec.attacks.end()) continue;
    if (kind == AttackKind::kLeaks1) {
      const MlpModel attack_model = TrainNnAttack(knowledge, spec.nn_attack);
      result.outcomes.push_back(RunNnAttack(attack_model, targets));
    } else {
      const ThresholdTable table = FitThresholds(kind, knowledge, spec.threshold);
      result.outcomes.push_back(RunMetricAttack(table, targets));
    }
  }
  return result;
}

inline void FillBestBb(ReportRow& row) {
  std::vector<std::pair<AttackKind, double>> results;
  for (AttackKind k : kAllAttacks) {
    if (row.acc(k)) results.emplace_back(k, *row.acc(k));
  }
  row.best_bb = BestBbAttack(results).attack_accuracy;
}

struct TrialOutcome {
  DefenseResult defense;
  std::size_t trial = 0;
};

inline TrialOutcome TrainTrial(const ExperimentSpec& spec, const PreparedData& data,
                               std::size_t trial) {
  DefenseConfig cfg = spec.defense_cfg;
  cfg.parallel = spec.parallel;
  cfg.train_cfg.seed = spec.seed + trial;
  return TrialOutcome{TrainDefense(spec.defense, data.train, data.reference, data.validation, cfg,
                                   data.plan.train_all, data.plan.reference),
                      trial};
}

inline ReportRow EvaluateModel(const MlpModel& model, const PreparedData& data,
                               const ExperimentSpec& spec) {
  ReportRow row;
  EchoConfig(row, spec.defense, spec.defense_cfg, spec.seed);
  row.train_acc = Accuracy(model, data.train);
  row.test_acc = Accuracy(model, data.test);
  row.gen_gap = row.train_acc - row.test_acc;
  for (const AttackOutcome& o : RunAttackSuite(model, data, spec).outcomes) {
    row.acc(o.kind) = o.attack_accuracy;
  }
  FillBestBb(row);
  return row;
}

// Trains `spec.trials` models (seed + t) and evaluates the one with the best
// validation accuracy (earliest trial on ties), or averages all trials when
// the spec asks for it.
inline ReportRow RunExperimentOn(const ExperimentSpec& spec, const PreparedData& data) {
  spec.Validate();
  const auto start = std::chrono::steady_clock::now();
  ReportRow row;
  if (spec.aggregate == TrialAggregate::kBestModel) {
    std::optional<TrialOutcome> best;
    for (std::size_t t = 0; t < spec.trials; ++t) {
      TrialOutcome trial = TrainTrial(spec, data, t);
      if (!best || trial.defense.student.best_val_accuracy >
                       best->defense.student.best_val_accuracy) {
        best = std::move(trial);
      }
    }
    row = EvaluateModel(best->defense.student.model, data, spec);
  } else {
    std::vector<ReportRow> rows;
    for (std::size_t t = 0; t < spec.trials; ++t) {
      rows.push_back(EvaluateModel(TrainTrial(spec, data, t).defense.student.model, data, spec));
    }
    row = rows.front();
    const double n = static_cast<double>(rows.size());
    auto mean = [&](auto field) {
      double s = 0.0;
      for (const auto& r : rows) s += field(r);
      return s / n;
    };
    row.train_acc = mean([](const ReportRow& r) { return r.train_acc; });
    row.test_acc = mean([](const ReportRow& r) { return r.test_acc; });
    row.gen_gap = row.train_acc - row.test_acc;
    for (AttackKind k : kAllAttacks) {
      if (row.acc(k)) row.acc(k) = mean([k](const ReportRow& r) { return *r.acc(k); });
    }
    FillBestBb(row);
  }
  if (spec.record_wall_clock) {
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return row;
}

inline ReportRow RunExperiment(const ExperimentSpec& spec) {
  return RunExperimentOn(spec, PrepareData(spec));
}

// ---------------------------------------------------------------------------
// Sweeps.

enum class SweepParameter { kAlpha, kReferenceSize, kThetaSplit, kThetaReuse, kTeacherCount };

inline std::string SweepParameterName(SweepParameter p) {
  switch (p) {
    case SweepParameter::kAlpha: return "alpha";
    case SweepParameter::kReferenceSize: return "reference_size";
    case SweepParameter::kThetaSplit: return "theta_split";
    case SweepParameter::kThetaReuse: return "theta_reuse";
    case SweepParameter::kTeacherCount: return "teacher_count";
  }
  return "?";
}

inline SweepParameter SweepParameterFromName(const std::string& name) {
  for (SweepParameter p : {SweepParameter::kAlpha, SweepParameter::kReferenceSize,
                           SweepParameter::kThetaSplit, SweepParameter::kThetaReuse,
                           SweepParameter::kTeacherCount}) {
    if (SweepParameterName(p) == name) return p;
  }
  Fail(ErrorCode::kInvalidParameter, "unknown sweep parameter '" + name + "'");
}

// The spec for one grid point. The defense follows from the parameter:
// alpha and teacher_count sweep KCD, reference_size DMP, and the two theta
// parameters the naive DMP variants.
inline ExperimentSpec SweepPointSpec(ExperimentSpec spec, SweepParameter parameter, double value) {
  auto as_count = [&](double v) {
    Require(v >= 0.0 && std::floor(v) == v, ErrorCode::kInvalidParameter,
            SweepParameterName(parameter) + " grid values must be non-negative integers");
    return static_cast<std::size_t>(v);
  };
  switch (parameter) {
    case SweepParameter::kAlpha:
      spec.defense = DefenseKind::kKcd;
      spec.defense_cfg.alpha = value;
      break;
    case SweepParameter::kTeacherCount:
      spec.defense = DefenseKind::kKcd;
      spec.defense_cfg.teacher_count = as_count(value);
      break;
    case SweepParameter::kReferenceSize:
      spec.defense = DefenseKind::kDmp;
      spec.defense_cfg.reference_size = as_count(value);
      break;
    case SweepParameter::kThetaSplit:
      spec.defense = DefenseKind::kSplittingDmp;
      spec.defense_cfg.theta = value;
      break;
    case SweepParameter::kThetaReuse:
      spec.defense = DefenseKind::kReusingDmp;
      spec.defense_cfg.theta = value;
      break;
  }
  return spec;
}

// One row per grid value, in grid order, all on the same data split. A point
// that fails yields a row with `error` set; the sweep continues.
inline std::vector<ReportRow> SweepOn(const ExperimentSpec& spec, const PreparedData& data,
                                      SweepParameter parameter, const std::vector<double>& grid) {
  Require(!grid.empty(), ErrorCode::kInvalidParameter, "sweep grid is empty");
  auto run_point = [&](double value) {
    ExperimentSpec point;
    try {
      point = SweepPointSpec(spec, parameter, value);
      return RunExperimentOn(point, data);
    } catch (const Error& e) {
      ReportRow row;
      EchoConfig(row, point.defense, point.defense_cfg, point.seed);
      row.error = std::string(ErrorCodeName(e.code())) + ": " + e.what();
      return row;
    }
  };
  std::vector<ReportRow> rows(grid.size());
  const std::size_t workers = std::max<std::size_t>(1, spec.parallel);
  if (workers == 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) rows[i] = run_point(grid[i]);
  } else {
    for (std::size_t start = 0; start < grid.size(); start += workers) {
      std::vector<std::future<ReportRow>> jobs;
      for (std::size_t i = start; i < std::min(grid.size(), start + workers); ++i) {
        jobs.push_back(std::async(std::launch::async, run_point, grid[i]));
      }
      for (std::size_t i = 0; i < jobs.size(); ++i) rows[start + i] = jobs[i].get();
    }
  }
  return rows;
}

inline std::vector<ReportRow> Sweep(const ExperimentSpec& spec, SweepParameter parameter,
                                    const std::vector<double>& grid) {
  return SweepOn(spec, PrepareData(spec), parameter, grid);
}

// ---------------------------------------------------------------------------
// Report files. Columns follow ReportColumns(); failed rows leave metric cells
// empty in CSV and carry an "error" member in JSON.

inline std::string ReportToCsvText(const std::vector<ReportRow>& rows) {
  std::string out = JoinCsvRow(ReportColumns());
  for (const auto& r : rows) {
    const bool ok = !r.error;
    auto num = [ok](double v) { return ok ? FormatDouble(v) : std::string(); };
    std::vector<std::string> f = {r.defense,
                                  FormatDouble(r.alpha),
                                  std::to_string(r.n_teachers),
                                  FormatDouble(r.theta),
                                  std::to_string(r.reference_size),
                                  r.loss_kind,
                                  std::to_string(r.seed),
                                  num(r.train_acc),
                                  num(r.test_acc),
                                  num(r.gen_gap)};
    for (AttackKind k : kAllAttacks) {
      f.push_back(ok && r.acc(k) ? FormatDouble(*r.acc(k)) : std::string());
    }
    f.push_back(num(r.best_bb));
    f.push_back(num(r.wall_seconds));
    out += JoinCsvRow(f);
  }
  return out;
}

inline Json ReportRowToJson(const ReportRow& r) {
  Json j;
  j["defense"] = r.defense;
  j["alpha"] = r.alpha;
  j["n_teachers"] = r.n_teachers;
  j["theta"] = r.theta;
  j["reference_size"] = r.reference_size;
  j["loss_kind"] = r.loss_kind;
  j["seed"] = r.seed;
  j["train_acc"] = r.train_acc;
  j["test_acc"] = r.test_acc;
  j["gen_gap"] = r.gen_gap;
  for (AttackKind k : kAllAttacks) {
    const std::string key = "acc_" + AttackName(k);
    j[key] = r.acc(k) ? Json(*r.acc(k)) : Json(nullptr);
  }
  j["best_bb"] = r.best_bb;
  j["wall_seconds"] = r.wall_seconds;
  if (r.error) j["error"] = *r.error;
  return j;
}

inline ReportRow ReportRowFromJson(const Json& j) {
  using spec_detail::Field;
  ReportRow r;
  r.defense = Field<std::string>(j, "defense", "row");
  r.alpha = Field<double>(j, "alpha", "row");
  r.n_teachers = Field<std::size_t>(j, "n_teachers", "row");
  r.theta = Field<double>(j, "theta", "row");
  r.reference_size = Field<std::size_t>(j, "reference_size", "row");
  r.loss_kind = Field<std::string>(j, "loss_kind", "row");
  r.seed = Field<std::uint64_t>(j, "seed", "row");
  r.train_acc = Field<double>(j, "train_acc", "row");
  r.test_acc = Field<double>(j, "test_acc", "row");
  r.gen_gap = Field<double>(j, "gen_gap", "row");
  for (AttackKind k : kAllAttacks) {
    const std::string key = "acc_" + AttackName(k);
    if (j.contains(key) && !j.at(key).is_null()) r.acc(k) = Field<double>(j, key.c_str(), "row");
  }
  r.best_bb = Field<double>(j, "best_bb", "row");
  r.wall_seconds = Field<double>(j, "wall_seconds", "row");
  if (j.contains("error")) r.error = Field<std::string>(j, "error", "row");
  return r;
}

inline std::string ReportToJsonText(const std::vector<ReportRow>& rows) {
  Json arr = Json::array();
  for (const auto& r : rows) arr.push_back(ReportRowToJson(r));
  return arr.dump(2) + "\n";
}

inline std::vector<ReportRow> ReportFromJsonText(std::string_view text) {
  const Json arr = ParseJson(text, "report");
  Require(arr.is_array(), ErrorCode::kSchema, "report JSON must be an array of rows");
  std::vector<ReportRow> rows;
  for (const auto& j : arr) rows.push_back(ReportRowFromJson(j));
  return rows;
}

inline std::vector<ReportRow> ReportFromCsvText(std::string_view text) {
  const CsvTable table = ParseCsv(text);
  Require(table.header == ReportColumns(), ErrorCode::kSchema,
          "report CSV header does not match the report schema");
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const std::size_t line = table.row_lines[i];
    auto real = [&](std::size_t c) {
      double v = 0.0;
      if (!ParseDouble(f[c], v)) throw ParseError(line, "column '" + ReportColumns()[c] + "'");
      return v;
    };
    auto count = [&](std::size_t c) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(f[c].data(), f[c].data() + f[c].size(), v);
      if (ec != std::errc() || p != f[c].data() + f[c].size()) {
        throw ParseError(line, "column '" + ReportColumns()[c] + "'");
      }
      return v;
    };
    ReportRow r;
    r.defense = f[0];
    r.alpha = real(1);
    r.n_teachers = count(2);
    r.theta = real(3);
    r.reference_size = count(4);
    r.loss_kind = f[5];
    r.seed = count(6);
    if (f[7].empty()) {
      r.error = "failed point";
    } else {
      r.train_acc = real(7);
      r.test_acc = real(8);
      r.gen_gap = real(9);
      for (std::size_t k = 0; k < kAllAttacks.size(); ++k) {
        if (!f[10 + k].empty()) r.attack_acc[k] = real(10 + k);
      }
      r.best_bb = real(16);
      r.wall_seconds = real(17);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

enum class ReportFormat { kCsv, kJson };

inline ReportFormat ReportFormatFor(const std::filesystem::path& path) {
  return path.extension() == ".json" ? ReportFormat::kJson : ReportFormat::kCsv;
}

inline void EmitReport(const std::vector<ReportRow>& rows, const std::filesystem::path& path,
                       ReportFormat format) {
  Require(!rows.empty(), ErrorCode::kInvalidInput, "no report rows to write");
  WriteTextFile(path, format == ReportFormat::kJson ? ReportToJsonText(rows)
                                                    : ReportToCsvText(rows));
}

inline std::vector<ReportRow> ReadReport(const std::filesystem::path& path) {
  const std::string text = ReadTextFile(path);
  return ReportFormatFor(path) == ReportFormat::kJson ? ReportFromJsonText(text)
                                                      : ReportFromCsvText(text);
}

}  // namespace kcdlab

#endif  // KCDLAB_HARNESS_HPP_
