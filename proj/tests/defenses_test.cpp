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


#include <set>

#include <gtest/gtest.h>

#include "kcdlab/defenses.hpp"
#include "test_support.hpp"

namespace kcdlab {
namespace {

struct Fixture {
  LabeledDataset train = testing::Blobs(4, 30, 8, 1.2, 1);
  LabeledDataset reference = testing::Blobs(4, 20, 8, 1.2, 2);
  LabeledDataset val = testing::Blobs(4, 25, 8, 1.2, 3);
  DefenseConfig cfg = [] {
    DefenseConfig c;
    c.hidden_dims = {10};
    c.teacher_count = 3;
    c.train_cfg.max_epochs = 10;
    c.train_cfg.batch_size = 16;
    c.train_cfg.seed = 5;
    return c;
  }();
};

std::set<std::vector<double>> RowSet(const RealMatrix& m) {
  std::set<std::vector<double>> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out.insert(std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols()));
  }
  return out;
}

TEST(UnprotectedTest, IsPlainCrossEntropyTraining) {
  Fixture f;
  const DefenseResult r = TrainUnprotected(f.train, f.val, f.cfg);
  TrainConfig tc = f.cfg.train_cfg;
  const TrainedModel direct =
      TrainModel(MlpModel::GlorotUniform({8, 10, 4}, tc.seed), Objective::CrossEntropy(),
                 TrainingSet::FromLabeled(f.train), f.val, tc);
  EXPECT_EQ(r.student, direct);
  EXPECT_EQ(TrainUnprotected(f.train, f.val, f.cfg).student, r.student);
}

TEST(DmpTest, StudentSeesOnlyReferenceRows) {
  Fixture f;
  const DefenseResult r = TrainDmp(f.train, f.reference, f.val, f.cfg);
  EXPECT_EQ(r.student_source, StudentSource::kReference);
  ASSERT_TRUE(r.soft_data.has_value());
  EXPECT_EQ(r.soft_data->size(), f.reference.size());
  const auto train_rows = RowSet(f.train.features);
  for (const auto& row : RowSet(r.soft_data->features)) EXPECT_EQ(train_rows.count(row), 0u);
  ASSERT_EQ(r.teachers.size(), 1u);
  EXPECT_EQ(r.teachers[0].train_rows.size(), f.train.size());
  EXPECT_EQ(TrainDmp(f.train, f.reference, f.val, f.cfg).student, r.student);
}

TEST(DmpTest, ReferenceSizeGrid) {
  Fixture f;
  for (std::size_t n : {10u, 40u, 0u}) {
    f.cfg.reference_size = n;
    const DefenseResult r = TrainDmp(f.train, f.reference, f.val, f.cfg);
    EXPECT_EQ(r.student_rows.size(), n == 0 ? f.reference.size() : n);
  }
  f.cfg.reference_size = f.reference.size() + 1;
  try {
    TrainDmp(f.train, f.reference, f.val, f.cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidParameter);
  }
}

TEST(DmpTest, OverlappingIdsAreAProtocolViolation) {
  Fixture f;
  const IndexList train_ids = defense_detail::Iota(f.train.size());
  IndexList ref_ids(f.reference.size());
  for (std::size_t i = 0; i < ref_ids.size(); ++i) ref_ids[i] = 1000 + i;
  EXPECT_NO_THROW(TrainDmp(f.train, f.reference, f.val, f.cfg, train_ids, ref_ids));
  ref_ids[7] = 3;
  try {
    TrainDmp(f.train, f.reference, f.val, f.cfg, train_ids, ref_ids);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocolViolation);
  }
}

TEST(DistillTest, UniformTeacherTeachesNothing) {
  Fixture f;
  const LabeledDataset val = testing::Blobs(4, 100, 8, 1.2, 9);
  TeacherRecord teacher{TrainedModel{MlpModel::Zeros({8, 10, 4})}, {}};
  const DefenseResult r = defense_detail::DistillFromTeacher(
      teacher, f.reference, defense_detail::Iota(f.reference.size()), StudentSource::kReference,
      val, f.cfg);
  EXPECT_TRUE((r.soft_data->soft_labels.array() == 0.25).all());
  EXPECT_NEAR(Accuracy(r.student.model, val), 0.25, 0.05);
}

TEST(SoftLabelTest, UniformTeachersGiveUniformLabels) {
  Fixture f;
  const FoldAssignment folds = PartitionFolds(defense_detail::Iota(f.train.size()), 2, 1);
  const std::vector<MlpModel> teachers(2, MlpModel::Zeros({8, 10, 4}));
  const SoftLabeledDataset s = BuildSoftLabels(teachers, folds, f.train);
  EXPECT_TRUE((s.soft_labels.array() == 0.25).all());
}

TEST(SoftLabelTest, EachRowComesFromItsHeldOutTeacher) {
  Fixture f;
  const FoldAssignment folds = PartitionFolds(defense_detail::Iota(f.train.size()), 3, 4);
  std::vector<MlpModel> teachers;
  for (std::uint64_t s = 0; s < 3; ++s) teachers.push_back(MlpModel::GlorotUniform({8, 10, 4}, s));
  const SoftLabeledDataset soft = BuildSoftLabels(teachers, folds, f.train);
  ASSERT_EQ(soft.size(), f.train.size());
  std::set<std::size_t> seen(folds.members.begin(), folds.members.end());
  EXPECT_EQ(seen.size(), f.train.size());
  for (std::size_t j = 0; j < folds.members.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(folds.members[j]);
    const RealMatrix expect = Predict(teachers[folds.fold_of[j]], f.train.features.row(row));
    EXPECT_TRUE(soft.soft_labels.row(static_cast<Eigen::Index>(j)) == expect.row(0)) << j;
    EXPECT_TRUE(soft.features.row(static_cast<Eigen::Index>(j)) == f.train.features.row(row));
    EXPECT_EQ(soft.hard_labels[j], f.train.labels[folds.members[j]]);
    EXPECT_EQ(soft.provenance[j], folds.fold_of[j]);
  }
  EXPECT_THROW(BuildSoftLabels(std::span(teachers).first(2), folds, f.train), Error);
}

TEST(KcdTest, ProtocolAuditIsClean) {
  Fixture f;
  const DefenseResult r = TrainKcd(f.train, f.val, f.cfg);
  EXPECT_TRUE(AuditKcdProtocol(r, f.train.size()).empty());
  ASSERT_EQ(r.teachers.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.teachers[i].train_rows, r.folds->Complement(i));
  }
}

TEST(KcdTest, AuditCatchesLeakedFold) {
  Fixture f;
  DefenseResult r = TrainKcd(f.train, f.val, f.cfg);
  r.teachers[1].train_rows.push_back(r.folds->Folds()[1].front());
  const auto problems = AuditKcdProtocol(r, f.train.size());
  ASSERT_EQ(problems.size(), 1u);
  EXPECT_NE(problems[0].find("teacher 1"), std::string::npos);
}

TEST(KcdTest, AlphaZeroIsUnprotected) {
  Fixture f;
  f.cfg.alpha = 0.0;
  EXPECT_EQ(TrainKcd(f.train, f.val, f.cfg).student, TrainUnprotected(f.train, f.val, f.cfg).student);
}

TEST(KcdTest, AlphaOneNeverReadsHardLabels) {
  Fixture f;
  const DefenseResult r = TrainKcd(f.train, f.val, f.cfg);
  TrainingSet scrambled = r.soft_data->ToTrainingSet();
  for (auto& y : scrambled.hard_labels) y = (y + 1) % 4;
  const TrainConfig sc = f.cfg.StudentConfig();
  const TrainedModel again =
      TrainModel(MlpModel::GlorotUniform({8, 10, 4}, sc.seed),
                 Objective::Mixed(1.0, f.cfg.distill_loss), scrambled, f.val, sc);
  EXPECT_EQ(again, r.student);
}

TEST(KcdTest, ParallelTeachersMatchSerial) {
  Fixture f;
  const DefenseResult serial = TrainKcd(f.train, f.val, f.cfg);
  f.cfg.parallel = 3;
  const DefenseResult parallel = TrainKcd(f.train, f.val, f.cfg);
  EXPECT_EQ(serial.student, parallel.student);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(serial.teachers[i].trained, parallel.teachers[i].trained);
  }
}

TEST(KcdTest, KlDistillationRuns) {
  Fixture f;
  f.cfg.distill_loss = LossKind::KlWithTemperature(4.0);
  f.cfg.alpha = 0.5;
  const DefenseResult r = TrainKcd(f.train, f.val, f.cfg);
  EXPECT_GT(r.student.best_val_accuracy, 0.5);
}

TEST(SplittingDmpTest, HalvesAreDisjoint) {
  EXPECT_EQ(ThetaCount(50, 2000), 1000u);
  Fixture f;
  const DefenseResult r = TrainSplittingDmp(f.train, f.val, 50, f.cfg);
  EXPECT_EQ(r.student_rows.size(), 60u);
  EXPECT_EQ(r.teachers[0].train_rows.size(), 60u);
  std::set<std::size_t> teacher(r.teachers[0].train_rows.begin(), r.teachers[0].train_rows.end());
  for (std::size_t i : r.student_rows) EXPECT_EQ(teacher.count(i), 0u);
}

TEST(SplittingDmpTest, ThetaGrid) {
  Fixture f;
  for (double theta : {7.0, 25.0, 50.0}) {
    const DefenseResult r = TrainSplittingDmp(f.train, f.val, theta, f.cfg);
    EXPECT_EQ(r.student_rows.size(), ThetaCount(theta, f.train.size()));
  }
  EXPECT_THROW(TrainSplittingDmp(f.train, f.val, 100, f.cfg), Error);
}

TEST(ReusingDmpTest, FullThetaReusesEveryRow) {
  Fixture f;
  const DefenseResult r = TrainReusingDmp(f.train, f.val, 100, f.cfg);
  std::set<std::size_t> rows(r.student_rows.begin(), r.student_rows.end());
  EXPECT_EQ(rows.size(), f.train.size());
  EXPECT_EQ(r.teachers[0].train_rows.size(), f.train.size());
  const DefenseResult part = TrainReusingDmp(f.train, f.val, 20, f.cfg);
  EXPECT_EQ(part.student_rows.size(), 24u);
  for (std::size_t i : part.student_rows) EXPECT_LT(i, f.train.size());
}

TEST(DefenseConfigTest, Validation) {
  DefenseConfig c;
  c.alpha = 1.1;
  EXPECT_THROW(c.Validate(), Error);
  c = DefenseConfig{};
  c.teacher_count = 1;
  EXPECT_THROW(c.Validate(), Error);
  c = DefenseConfig{};
  c.theta = 0.0;
  EXPECT_THROW(c.Validate(), Error);
  EXPECT_EQ(DefenseFromName("splitting_dmp"), DefenseKind::kSplittingDmp);
  EXPECT_THROW(DefenseFromName("pate"), Error);
}

TEST(SoftLabeledCsvTest, Header) {
  Fixture f;
  const FoldAssignment folds = PartitionFolds(defense_detail::Iota(f.train.size()), 2, 1);
  const std::vector<MlpModel> teachers(2, MlpModel::Zeros({8, 10, 4}));
  const std::string text = SoftLabeledToCsvText(BuildSoftLabels(teachers, folds, f.train));
  EXPECT_EQ(text.substr(0, text.find('\n')), "f0,f1,f2,f3,f4,f5,f6,f7,s0,s1,s2,s3,label,fold");
}

}  // namespace
}  // namespace kcdlab
