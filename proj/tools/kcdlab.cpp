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

// kcdlab: command-line front end. Every subcommand is a thin wrapper over
// the library; see --help for subcommands and exit codes.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kcdlab/kcdlab.hpp"

namespace fs = std::filesystem;
using namespace kcdlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchema: return 3;
    case ErrorCode::kIo: return 4;
    case ErrorCode::kParse: return 5;
    case ErrorCode::kInvalidInput:
    case ErrorCode::kInvalidParameter:
    case ErrorCode::kShape: return 6;
    case ErrorCode::kTrainingDiverged: return 7;
    case ErrorCode::kProtocolViolation: return 8;
    case ErrorCode::kInsufficientData: return 9;
  }
  return kExitOther;
}

const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  unexpected internal error\n"
    "  2  usage error (unknown subcommand, bad flag)\n"
    "  3  spec/schema error (unknown or malformed field)\n"
    "  4  I/O error (missing file, unwritable path)\n"
    "  5  parse error (malformed CSV or JSON)\n"
    "  6  invalid input or parameter (shape, range)\n"
    "  7  training diverged\n"
    "  8  protocol violation (e.g. reference overlaps training data)\n"
    "  9  insufficient data for the requested split\n"
    "On failure one line is written to stderr:\n"
    "  kcdlab-error {\"code\":...,\"exit\":...,\"message\":...}\n"
    "Environment:\n"
    "  KCDLAB_OUTPUT_DIR  directory for outputs when --out is not given";

int ReportFailure(const std::string& code, int exit_code, const std::string& message) {
  Json line = {{"code", code}, {"exit", exit_code}, {"message", message}};
  std::cerr << "kcdlab-error " << line.dump() << "\n";
  return exit_code;
}

fs::path DefaultOutput(const std::string& name) {
  const char* dir = std::getenv("KCDLAB_OUTPUT_DIR");
  return (dir && *dir) ? fs::path(dir) / name : fs::path(name);
}

// Options shared by the spec-driven subcommands.
struct SpecOptions {
  std::string spec_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> defense;
  std::optional<std::size_t> parallel;

  void Register(CLI::App* cmd) {
    cmd->add_option("--spec", spec_path, "experiment spec JSON (default: built-in desk scale)");
    cmd->add_option("--set", overrides, "override a spec field, key=value (repeatable)");
    cmd->add_option("--seed", seed, "base training seed");
    cmd->add_option("--defense", defense,
                    "unprotected | dmp | kcd | splitting_dmp | reusing_dmp");
    cmd->add_option("--parallel", parallel, "concurrent KCD teachers / sweep points")
        ->check(CLI::PositiveNumber);
  }

  ExperimentSpec Load() const {
    std::vector<std::string> all = overrides;
    if (defense) all.push_back("defense.name=\"" + *defense + "\"");
    if (seed) all.push_back("seed=" + std::to_string(*seed));
    if (parallel) all.push_back("parallel=" + std::to_string(*parallel));
    if (spec_path.empty()) {
      return SpecFromJson(Json{{"format_version", kSpecFormatVersion}}, all);
    }
    return LoadSpec(spec_path, all);
  }
};

ReportFormat FormatOf(const std::string& flag, const fs::path& out) {
  if (flag == "json") return ReportFormat::kJson;
  if (flag == "csv") return ReportFormat::kCsv;
  return ReportFormatFor(out);
}

std::vector<double> ParseGrid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    Require(ParseDouble(item, v), ErrorCode::kInvalidParameter,
            "grid value '" + item + "' is not a number");
    grid.push_back(v);
  }
  Require(!grid.empty(), ErrorCode::kInvalidParameter, "sweep grid is empty");
  return grid;
}

int GenData(const SpecOptions& opts, const std::string& out_flag, const std::string& split_out) {
  const ExperimentSpec spec = opts.Load();
  const PreparedData data = PrepareData(spec);
  const fs::path out = out_flag.empty() ? DefaultOutput("dataset.csv") : fs::path(out_flag);
  SaveCsv(data.source, out);
  std::cout << "wrote " << out.string() << " (" << data.source.size() << " rows)\n";
  if (!split_out.empty()) {
    SaveJsonFile(SplitPlanToJson(data.plan), split_out);
    std::cout << "wrote " << split_out << "\n";
  }
  return kExitOk;
}

int Train(const SpecOptions& opts, const std::string& out_flag) {
  const ExperimentSpec spec = opts.Load();
  spec.Validate();
  const PreparedData data = PrepareData(spec);
  const fs::path dir = out_flag.empty() ? DefaultOutput("train_out") : fs::path(out_flag);
  const TrialOutcome trial = TrainTrial(spec, data, 0);
  const DefenseResult& r = trial.defense;

  SaveModel(r.student.model, dir / "model.json");
  SaveJsonFile(SplitPlanToJson(data.plan), dir / "split.json");
  for (std::size_t i = 0; i < r.teachers.size(); ++i) {
    SaveModel(r.teachers[i].trained.model, dir / ("teacher_" + std::to_string(i) + ".json"));
  }
  if (r.folds) SaveJsonFile(FoldAssignmentToJson(*r.folds), dir / "folds.json");
  if (r.soft_data) WriteTextFile(dir / "soft_labels.csv", SoftLabeledToCsvText(*r.soft_data));
  Json summary = {{"defense", DefenseName(spec.defense)},
                  {"seed", spec.seed},
                  {"best_val_accuracy", r.student.best_val_accuracy},
                  {"best_epoch", r.student.best_epoch},
                  {"epochs_run", r.student.epochs_run},
                  {"train_acc", Accuracy(r.student.model, data.train)},
                  {"test_acc", Accuracy(r.student.model, data.test)},
                  {"teachers", r.teachers.size()}};
  if (spec.defense == DefenseKind::kKcd && r.folds) {
    const auto problems = AuditKcdProtocol(r, data.train.size());
    Require(problems.empty(), ErrorCode::kProtocolViolation,
            problems.empty() ? "" : problems.front());
  }
  SaveJsonFile(summary, dir / "summary.json");
  std::cout << "wrote " << (dir / "model.json").string() << "\n";
  return kExitOk;
}

int Attack(const SpecOptions& opts, const std::string& model_path, const std::string& split_path,
           const std::string& out_flag, const std::string& knowledge_out) {
  const ExperimentSpec spec = opts.Load();
  spec.Validate();
  const MlpModel model = LoadModel(model_path);
  PreparedData data = split_path.empty()
                          ? PrepareData(spec)
                          : PrepareFromPlan(LoadSource(spec.dataset),
                                            SplitPlanFromJson(LoadJsonFile(split_path)));
  const AttackSuiteResult result = RunAttackSuite(model, data, spec);
  const fs::path out = out_flag.empty() ? DefaultOutput("attack_outcomes.csv") : fs::path(out_flag);
  WriteTextFile(out, AttackOutcomesToCsvText(result.outcomes));
  if (!knowledge_out.empty()) {
    AttackKnowledge k = QueryRecords(model, data.train_known, true);
    for (auto& rec : QueryRecords(model, data.test_known, false)) k.push_back(std::move(rec));
    WriteTextFile(knowledge_out, KnowledgeToCsvText(k));
  }
  for (const auto& o : result.outcomes) {
    std::cout << AttackName(o.kind) << " " << FormatDouble(o.attack_accuracy) << "\n";
  }
  return kExitOk;
}

int Run(const SpecOptions& opts, const std::string& out_flag, const std::string& format) {
  const ExperimentSpec spec = opts.Load();
  const ReportRow row = RunExperiment(spec);
  const fs::path out = out_flag.empty() ? DefaultOutput("report.csv") : fs::path(out_flag);
  EmitReport({row}, out, FormatOf(format, out));
  std::cout << ReportToCsvText({row});
  return kExitOk;
}

int RunSweep(const SpecOptions& opts, const std::string& param, const std::string& grid,
             const std::string& out_flag, const std::string& format) {
  const ExperimentSpec spec = opts.Load();
  const std::vector<ReportRow> rows =
      Sweep(spec, SweepParameterFromName(param), ParseGrid(grid));
  const fs::path out = out_flag.empty() ? DefaultOutput("sweep.csv") : fs::path(out_flag);
  EmitReport(rows, out, FormatOf(format, out));
  std::cout << ReportToCsvText(rows);
  return kExitOk;
}

int Report(const std::vector<std::string>& inputs, const std::string& out_flag,
           const std::string& format) {
  std::vector<ReportRow> rows;
  for (const auto& in : inputs) {
    for (auto& r : ReadReport(in)) rows.push_back(std::move(r));
  }
  if (out_flag.empty()) {
    std::cout << (format == "json" ? ReportToJsonText(rows) : ReportToCsvText(rows));
  } else {
    EmitReport(rows, out_flag, FormatOf(format, out_flag));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kcdlab: membership-inference defenses (KCD, DMP variants) and attacks"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);
  app.set_version_flag("--version", "kcdlab 1.0");

  std::string out, format = "auto", split_out, model_path, split_path, knowledge_out, param, grid;
  std::vector<std::string> inputs;
  const std::vector<std::string> formats{"auto", "csv", "json"};

  SpecOptions gen_opts, train_opts, attack_opts, run_opts, sweep_opts;

  auto* gen = app.add_subcommand("gen-data", "write the spec's dataset as CSV");
  gen_opts.Register(gen);
  gen->add_option("--out", out, "dataset CSV path");
  gen->add_option("--split-out", split_out, "also write the split plan JSON here");

  auto* train = app.add_subcommand(
      "train", "train one model; writes model.json, split.json, teachers, folds, soft labels");
  train_opts.Register(train);
  train->add_option("--out", out, "output directory");

  auto* attack = app.add_subcommand("attack", "run the attack suite against a saved model");
  attack_opts.Register(attack);
  attack->add_option("--model", model_path, "model JSON written by train")->required();
  attack->add_option("--split", split_path, "split plan JSON written by train");
  attack->add_option("--out", out, "outcome CSV path");
  attack->add_option("--knowledge-out", knowledge_out, "also write the attacker's known records");

  auto* run = app.add_subcommand("run", "full experiment: trials, selection, attacks, report row");
  run_opts.Register(run);
  run->add_option("--out", out, "report path (.csv or .json)");
  run->add_option("--format", format, "report format")->check(CLI::IsMember(formats));

  auto* sweep = app.add_subcommand("sweep", "one experiment per grid value on a shared split");
  sweep_opts.Register(sweep);
  sweep->add_option("--param", param,
                    "alpha | reference_size | theta_split | theta_reuse | teacher_count")
      ->required();
  sweep->add_option("--grid", grid, "comma-separated values, e.g. 0,0.5,1")->required();
  sweep->add_option("--out", out, "report path (.csv or .json)");
  sweep->add_option("--format", format, "report format")->check(CLI::IsMember(formats));

  auto* report = app.add_subcommand("report", "merge report files; prints to stdout without --out");
  report->add_option("--in", inputs, "report CSV/JSON file (repeatable)")->required();
  report->add_option("--out", out, "merged report path");
  report->add_option("--format", format, "output format")->check(CLI::IsMember(formats));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc == 0) return kExitOk;
    return ReportFailure("usage", kExitUsage, e.what());
  }

  try {
    if (*gen) return GenData(gen_opts, out, split_out);
    if (*train) return Train(train_opts, out);
    if (*attack) return Attack(attack_opts, model_path, split_path, out, knowledge_out);
    if (*run) return Run(run_opts, out, format);
    if (*sweep) return RunSweep(sweep_opts, param, grid, out, format);
    if (*report) return Report(inputs, out, format);
  } catch (const Error& e) {
    return ReportFailure(std::string(ErrorCodeName(e.code())), ExitCodeFor(e.code()), e.what());
  } catch (const std::exception& e) {
    return ReportFailure("internal", kExitOther, e.what());
  }
  return kExitUsage;
}
