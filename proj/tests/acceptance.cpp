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


// Acceptance binary: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Desk-scale criteria run the bundled defaults with one
// trial per seed, seeds 1..3, on a single shared split.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "kcdlab/kcdlab.hpp"
#include "test_support.hpp"

namespace kcdlab {
namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void Report(int id, const std::string& name, double budget_seconds,
            const std::function<Verdict()>& body) {
  const auto start = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (budget_seconds > 0 && secs > budget_seconds) {
    v.pass = false;
    v.detail += " (over runtime budget " + FormatDouble(budget_seconds) + " s)";
  }
  if (!v.pass) ++failures;
  std::printf("%s criterion %d %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, name.c_str(),
              v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string Fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Property criteria.

Verdict GradientCorrectness() {
  std::mt19937_64 rng(2026);
  std::normal_distribution<double> normal;
  const std::vector<Objective> objectives{
      Objective::CrossEntropy(), Objective::Distill(LossKind::MseOnProbs()),
      Objective::Distill(LossKind::KlWithTemperature(1.0)),
      Objective::Distill(LossKind::KlWithTemperature(4.0))};
  double worst = 0.0;
  const int cases = 100;
  for (int rep = 0; rep < cases; ++rep) {
    const std::size_t d = 2 + rng() % 6, c = 2 + rng() % 5, n = 3 + rng() % 6;
    std::vector<std::size_t> dims{d};
    for (std::size_t l = 0; l < 1 + rng() % 2; ++l) dims.push_back(2 + rng() % 6);
    dims.push_back(c);
    const MlpModel m = MlpModel::GlorotUniform(dims, 1000 + rep);
    TrainingSet data;
    data.class_count = c;
    data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < data.features.size(); ++i) data.features.data()[i] = normal(rng);
    RealMatrix soft(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < n; ++i) {
      data.hard_labels.push_back(rng() % c);
      soft.row(static_cast<Eigen::Index>(i)) = testing::RandomProbabilities(c, rng).transpose();
    }
    data.soft_labels = soft;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (rng() % 3 != 0 || rows.empty()) rows.push_back(i);
    }
    for (const Objective& obj : objectives) {
      worst = std::max(worst, testing::GradientCheckError(m, obj, data, rows));
    }
  }
  return {worst <= 1e-4, std::to_string(cases) + " cases x 4 losses, worst relative error " +
                             FormatDouble(worst)};
}

double NaiveMetric(AttackKind kind, const std::vector<double>& f, std::size_t y) {
  auto clamp = [](double p) { return std::min(1.0, std::max(1e-12, p)); };
  switch (kind) {
    case AttackKind::kCorrectness: {
      std::size_t best = 0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i] > f[best]) best = i;
      }
      return best == y ? 1.0 : 0.0;
    }
    case AttackKind::kTop1: {
      double m = f[0];
      for (double v : f) m = std::max(m, v);
      return m;
    }
    case AttackKind::kConfidence: return f[y];
    case AttackKind::kEntropy: {
      double s = 0.0;
      for (double v : f) s += clamp(v) * std::log(clamp(v));
      return -s;
    }
    case AttackKind::kModifiedEntropy: {
      double s = (1.0 - clamp(f[y])) * std::log(clamp(f[y]));
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (i != y) s += clamp(f[i]) * std::log(clamp(f[i]));
      }
      return -s;
    }
    default: return 0.0;
  }
}

Verdict MetricOracle() {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  for (int rep = 0; rep < 10000; ++rep) {
    const std::size_t c = 2 + rng() % 99;
    const RealVector p = testing::RandomProbabilities(c, rng, 1.0 + (rep % 7));
    const std::vector<double> f(p.data(), p.data() + p.size());
    const std::size_t y = rng() % c;
    for (AttackKind k : kMetricAttacks) {
      worst = std::max(worst, std::abs(MetricValue(k, p, y) - NaiveMetric(k, f, y)));
    }
  }
  const RealVector uniform = RealVector::Constant(10, 0.1);
  RealVector onehot = RealVector::Zero(4);
  onehot(2) = 1.0;
  RealVector half(2);
  half << 0.5, 0.5;
  const double h1 = std::abs(MetricValue(AttackKind::kEntropy, uniform, 0) - std::log(10.0));
  const double h2 = std::abs(MetricValue(AttackKind::kModifiedEntropy, onehot, 2));
  const double h3 = std::abs(MetricValue(AttackKind::kModifiedEntropy, half, 0) - std::log(2.0));
  const bool ok = worst <= 1e-9 && h1 <= 1e-9 && h2 <= 1e-9 && h3 <= 1e-9;
  return {ok, "10000 vectors, worst deviation " + FormatDouble(worst) + "; hand values off by " +
                  FormatDouble(h1) + ", " + FormatDouble(h2) + ", " + FormatDouble(h3)};
}

// Balanced accuracy as an exact fraction numerator over 2*m*n.
std::uint64_t BalancedScore(const std::vector<MetricSample>& s, ThresholdDirection dir,
                            double tau) {
  std::uint64_t tp = 0, tn = 0, m = 0, n = 0;
  for (const auto& x : s) {
    const bool says = dir == ThresholdDirection::kMemberIfAtLeast ? x.value >= tau : x.value <= tau;
    if (x.member) {
      ++m;
      tp += says;
    } else {
      ++n;
      tn += !says;
    }
  }
  return tp * n + tn * m;
}

Verdict ThresholdOptimality() {
  std::mt19937_64 rng(4242);
  std::size_t violations = 0, checked = 0;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<MetricSample> s;
    const std::size_t m = 1 + rng() % 40, n = 1 + rng() % 40;
    std::normal_distribution<double> mem(0.3 + 0.001 * rep, 0.25), non(0.0, 0.25);
    const double grid = rep % 3 == 0 ? 0.05 : 1e-12;
    for (std::size_t i = 0; i < m; ++i) s.push_back({std::round(mem(rng) / grid) * grid, true});
    for (std::size_t i = 0; i < n; ++i) s.push_back({std::round(non(rng) / grid) * grid, false});
    for (auto dir : {ThresholdDirection::kMemberIfAtLeast, ThresholdDirection::kMemberIfAtMost}) {
      const double tau = FitSingleThreshold(s, dir, ThresholdObjective::kBalancedAccuracy);
      const std::uint64_t got = BalancedScore(s, dir, tau);
      for (const auto& cand : s) {
        ++checked;
        if (BalancedScore(s, dir, cand.value) > got) ++violations;
      }
    }
  }
  return {violations == 0, "200 sets, " + std::to_string(checked) +
                               " candidate thresholds scanned, " + std::to_string(violations) +
                               " strictly better"};
}

Verdict ProtocolInvariants() {
  std::size_t kcd_violations = 0, dmp_violations = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const LabeledDataset train = testing::Blobs(3, 6 + seed % 5, 5, 1.0, seed);
    const LabeledDataset val = testing::Blobs(3, 5, 5, 1.0, 1000 + seed);
    DefenseConfig cfg;
    cfg.hidden_dims = {6};
    cfg.teacher_count = 2 + seed % 5;
    cfg.train_cfg.max_epochs = 2;
    cfg.train_cfg.batch_size = 8;
    cfg.train_cfg.seed = seed;
    const DefenseResult r = TrainKcd(train, val, cfg);
    kcd_violations += AuditKcdProtocol(r, train.size()).size();
    // Teacher bookkeeping must equal the complement of its own fold.
    for (std::size_t i = 0; i < r.teachers.size(); ++i) {
      if (r.teachers[i].train_rows != r.folds->Complement(i)) ++kcd_violations;
    }
  }
  ExperimentSpec spec = testing::TinySpec();
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    spec.split_seed = seed;
    spec.seed = seed;
    spec.defense = DefenseKind::kDmp;
    spec.defense_cfg.train_cfg.max_epochs = 2;
    const PreparedData data = PrepareData(spec);
    const std::unordered_set<std::size_t> train_ids(data.plan.train_all.begin(),
                                                    data.plan.train_all.end());
    const DefenseResult r = TrainTrial(spec, data, 0).defense;
    if (r.student_source != StudentSource::kReference) ++dmp_violations;
    for (std::size_t row : r.student_rows) {
      if (train_ids.count(data.plan.reference.at(row))) ++dmp_violations;
    }
    // Plan-level disjointness, and the student's feature matrix is exactly
    // the reference rows it reports. Feature equality is not an identity
    // test: binary features repeat across distinct records.
    for (std::size_t id : data.plan.reference) dmp_violations += train_ids.count(id);
    const LabeledDataset seen = data.reference.Subset(r.student_rows);
    if (!(seen.features == r.soft_data->features)) ++dmp_violations;
  }
  return {kcd_violations == 0 && dmp_violations == 0,
          "50 KCD trials: " + std::to_string(kcd_violations) + " violations; 50 DMP trials: " +
              std::to_string(dmp_violations) + " violations"};
}

// ---------------------------------------------------------------------------
// Desk-scale criteria.

ExperimentSpec DeskSpec(DefenseKind defense, std::uint64_t seed) {
  ExperimentSpec spec;
  spec.trials = 1;
  spec.seed = seed;
  spec.split_seed = 1;
  spec.record_wall_clock = false;
  spec.defense = defense;
  return spec;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

struct Averages {
  double train_acc = 0, test_acc = 0, gen_gap = 0, best_bb = 0;
};

Averages Average(const std::vector<ReportRow>& rows) {
  Averages a;
  for (const auto& r : rows) {
    a.train_acc += r.train_acc / rows.size();
    a.test_acc += r.test_acc / rows.size();
    a.gen_gap += r.gen_gap / rows.size();
    a.best_bb += r.best_bb / rows.size();
  }
  return a;
}

std::vector<ReportRow> RunSeeds(const PreparedData& data,
                                const std::function<ExperimentSpec(std::uint64_t)>& make) {
  std::vector<ReportRow> rows;
  for (std::uint64_t s : kSeeds) rows.push_back(RunExperimentOn(make(s), data));
  return rows;
}

// The criterion-8 pipeline: unprotected, KCD (n=5, alpha=1) and DMP with a
// reference pool as large as the training set, three seeds each.
std::vector<ReportRow> DefensePipeline(const PreparedData& data) {
  std::vector<ReportRow> rows;
  for (DefenseKind kind : {DefenseKind::kUnprotected, DefenseKind::kKcd, DefenseKind::kDmp}) {
    for (const ReportRow& r : RunSeeds(data, [&](std::uint64_t s) {
           ExperimentSpec spec = DeskSpec(kind, s);
           spec.defense_cfg.teacher_count = 5;
           spec.defense_cfg.alpha = 1.0;
           spec.defense_cfg.reference_size = data.train.size();
           return spec;
         })) {
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<ReportRow> RowsFor(const std::vector<ReportRow>& rows, const std::string& defense) {
  std::vector<ReportRow> out;
  for (const auto& r : rows) {
    if (r.defense == defense) out.push_back(r);
  }
  return out;
}

std::string Describe(const std::string& label, const Averages& a) {
  return label + " train " + Fmt(a.train_acc) + " test " + Fmt(a.test_acc) + " gap " +
         Fmt(a.gen_gap) + " best_bb " + Fmt(a.best_bb);
}

int Main() {
  Report(1, "gradient correctness", 30, GradientCorrectness);
  Report(2, "metric oracle equivalence", 5, MetricOracle);
  Report(3, "threshold optimality", 10, ThresholdOptimality);
  Report(4, "protocol invariants", 60, ProtocolInvariants);

  const PreparedData data = PrepareData(DeskSpec(DefenseKind::kUnprotected, 1));

  Report(5, "alpha=0 endpoint equivalence", 0, [&] {
    ExperimentSpec plain = DeskSpec(DefenseKind::kUnprotected, 1);
    ExperimentSpec kcd = DeskSpec(DefenseKind::kKcd, 1);
    kcd.defense_cfg.alpha = 0.0;
    const bool same_model =
        TrainTrial(plain, data, 0).defense.student == TrainTrial(kcd, data, 0).defense.student;
    const ReportRow a = RunExperimentOn(plain, data);
    ReportRow b = RunExperimentOn(kcd, data);
    // The echoed configuration names the defense; every measured field must match.
    const bool echo_differs_only = b.defense == "kcd" && b.alpha == 0.0;
    b.defense = a.defense;
    b.alpha = a.alpha;
    b.n_teachers = a.n_teachers;
    b.theta = a.theta;
    b.reference_size = a.reference_size;
    b.loss_kind = a.loss_kind;
    const bool same_row = a == b && ReportToCsvText({a}) == ReportToCsvText({b});
    return Verdict{same_model && same_row && echo_differs_only,
                   std::string("model ") + (same_model ? "bit-identical" : "differs") +
                       ", measured report fields " + (same_row ? "identical" : "differ")};
  });

  std::vector<ReportRow> pipeline;
  Report(7, "overfitting regime", 180, [&] {
    const std::vector<ReportRow> rows =
        RunSeeds(data, [](std::uint64_t s) { return DeskSpec(DefenseKind::kUnprotected, s); });
    const Averages a = Average(rows);
    const bool ok = a.train_acc >= 0.95 && a.gen_gap >= 0.15 && a.best_bb >= 0.60;
    return Verdict{ok, Describe("unprotected", a)};
  });

  Report(8, "directional defense claim", 600, [&] {
    pipeline = DefensePipeline(data);
    const Averages u = Average(RowsFor(pipeline, "unprotected"));
    const Averages k = Average(RowsFor(pipeline, "kcd"));
    const Averages d = Average(RowsFor(pipeline, "dmp"));
    const bool kcd_ok = k.best_bb <= u.best_bb - 0.05 && k.test_acc >= u.test_acc - 0.05;
    const bool dmp_ok = d.best_bb <= u.best_bb - 0.05;
    return Verdict{kcd_ok && dmp_ok, Describe("unprotected", u) + "; " + Describe("kcd", k) +
                                         "; " + Describe("dmp", d)};
  });

  Report(6, "correctness-attack identity", 0, [&] {
    std::size_t checked = 0, mismatches = 0;
    auto check = [&](const AttackKnowledge& targets, const AttackOutcome& o) {
      std::size_t m = 0, n = 0, mh = 0, nh = 0, correct = 0;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const bool right = ArgMax(targets[i].confidence) == targets[i].label;
        if (targets[i].member) {
          ++m;
          mh += right;
        } else {
          ++n;
          nh += right;
        }
        correct += o.predicted_member[i] == targets[i].member;
      }
      const double identity = (static_cast<double>(mh) / m + 1.0 - static_cast<double>(nh) / n) / 2;
      ++checked;
      if (m != n || correct != mh + (n - nh) || std::abs(o.attack_accuracy - identity) > 1e-15) {
        ++mismatches;
      }
    };
    // Desk-scale target sets of every model in the defense pipeline.
    for (DefenseKind kind : {DefenseKind::kUnprotected, DefenseKind::kKcd, DefenseKind::kDmp}) {
      for (std::uint64_t s : kSeeds) {
        ExperimentSpec spec = DeskSpec(kind, s);
        spec.attacks = {AttackKind::kCorrectness};
        if (kind != DefenseKind::kUnprotected && s != 1) continue;
        const MlpModel model = TrainTrial(spec, data, 0).defense.student.model;
        AttackKnowledge targets = QueryRecords(model, data.train_target, true);
        for (auto& r : QueryRecords(model, data.test_target, false)) targets.push_back(std::move(r));
        AttackKnowledge known = QueryRecords(model, data.train_known, true);
        for (auto& r : QueryRecords(model, data.test_known, false)) known.push_back(std::move(r));
        check(targets, RunMetricAttack(FitThresholds(AttackKind::kCorrectness, known), targets));
      }
    }
    // Random balanced target sets.
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 1000; ++rep) {
      const std::size_t n = 1 + rng() % 60, c = 2 + rng() % 10;
      AttackKnowledge targets;
      for (std::size_t i = 0; i < 2 * n; ++i) {
        targets.push_back({testing::RandomProbabilities(c, rng, 2.0), rng() % c, i < n});
      }
      check(targets, RunMetricAttack(FitThresholds(AttackKind::kCorrectness, targets), targets));
    }
    return Verdict{mismatches == 0, std::to_string(checked) + " balanced target sets, " +
                                        std::to_string(mismatches) + " mismatches"};
  });

  Report(9, "alpha trade-off monotonicity", 600, [&] {
    std::map<double, Averages> by_alpha;
    for (double alpha : {0.0, 0.5, 1.0}) {
      std::vector<ReportRow> rows;
      for (std::uint64_t s : kSeeds) {
        ExperimentSpec spec = DeskSpec(DefenseKind::kKcd, s);
        const std::vector<ReportRow> point = SweepOn(spec, data, SweepParameter::kAlpha, {alpha});
        if (point.front().error) throw std::runtime_error(*point.front().error);
        rows.push_back(point.front());
      }
      by_alpha[alpha] = Average(rows);
    }
    const Averages& a0 = by_alpha[0.0];
    const Averages& a1 = by_alpha[1.0];
    const bool ok = a1.best_bb < a0.best_bb && std::abs(a1.test_acc - a0.test_acc) <= 0.07;
    std::string detail;
    for (const auto& [alpha, a] : by_alpha) {
      detail += "alpha " + FormatDouble(alpha) + ": test " + Fmt(a.test_acc) + " best_bb " +
                Fmt(a.best_bb) + "; ";
    }
    return Verdict{ok, detail};
  });

  Report(10, "reproducibility", 0, [&] {
    if (pipeline.empty()) return Verdict{false, "criterion 8 pipeline did not complete"};
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "kcdlab_acceptance";
    fs::create_directories(dir);
    EmitReport(pipeline, dir / "first.csv", ReportFormat::kCsv);
    const PreparedData again = PrepareData(DeskSpec(DefenseKind::kUnprotected, 1));
    EmitReport(DefensePipeline(again), dir / "second.csv", ReportFormat::kCsv);
    const std::string a = ReadTextFile(dir / "first.csv");
    const std::string b = ReadTextFile(dir / "second.csv");
    fs::remove_all(dir);
    return Verdict{!a.empty() && a == b, std::to_string(pipeline.size()) + " rows, " +
                                             std::to_string(a.size()) + " bytes, " +
                                             (a == b ? "byte-identical" : "differ")};
  });

  Report(11, "naive-variant sweeps", 0, [&] {
    const std::vector<ReportRow> split =
        SweepOn(DeskSpec(DefenseKind::kSplittingDmp, 1), data, SweepParameter::kThetaSplit, {25});
    const std::vector<ReportRow> reuse =
        SweepOn(DeskSpec(DefenseKind::kReusingDmp, 1), data, SweepParameter::kThetaReuse, {100});
    std::vector<ReportRow> rows = split;
    rows.insert(rows.end(), reuse.begin(), reuse.end());
    bool ok = rows.size() == 2;
    for (const auto& r : rows) {
      ok = ok && !r.error && r.train_acc >= 0 && r.train_acc <= 1 && r.test_acc >= 0 &&
           r.test_acc <= 1 && r.best_bb >= 0.0 && r.best_bb <= 1.0;
      for (AttackKind k : kAllAttacks) ok = ok && r.acc(k).has_value();
    }
    const std::string csv = ReportToCsvText(rows);
    ok = ok && ReportFromCsvText(csv) == rows;
    std::string detail;
    for (const auto& r : rows) {
      detail += r.defense + " theta " + FormatDouble(r.theta) + ": test " + Fmt(r.test_acc) +
                " best_bb " + Fmt(r.best_bb) + "; ";
    }
    return Verdict{ok, detail};
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "SOME FAILED", failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace kcdlab

int main() { return kcdlab::Main(); }
