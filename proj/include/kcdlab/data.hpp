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

#ifndef KCDLAB_DATA_HPP_
#define KCDLAB_DATA_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kcdlab/error.hpp"
#include "kcdlab/nn.hpp"

namespace kcdlab {

using IndexList = std::vector<std::size_t>;

struct LabeledDataset {
  RealMatrix features;               // N x d
  std::vector<std::size_t> labels;   // N entries in [0, class_count)
  std::size_t class_count = 0;
  // Original label strings when loaded from CSV; index = dense label.
  std::vector<std::string> label_names;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
  bool empty() const { return labels.empty(); }

  void Validate() const {
    Require(static_cast<std::size_t>(features.rows()) == labels.size(), ErrorCode::kShape,
            "feature rows and label count differ");
    for (std::size_t y : labels) {
      Require(y < class_count, ErrorCode::kInvalidInput,
              "label " + std::to_string(y) + " outside [0, " +
                  std::to_string(class_count) + ")");
    }
    Require(features.allFinite(), ErrorCode::kInvalidInput, "non-finite feature value");
  }

  // Rows in the given order. Class count and label names are kept.
  LabeledDataset Subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.class_count = class_count;
    out.label_names = label_names;
    out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      Require(indices[i] < size(), ErrorCode::kInvalidInput, "subset index out of range");
      out.features.row(static_cast<Eigen::Index>(i)) =
          features.row(static_cast<Eigen::Index>(indices[i]));
      out.labels.push_back(labels[indices[i]]);
    }
    return out;
  }

  bool operator==(const LabeledDataset& o) const {
    return class_count == o.class_count && labels == o.labels &&
           features.rows() == o.features.rows() && features.cols() == o.features.cols() &&
           features == o.features;
  }
};

// One-hot row for a class index.
inline RealVector OneHot(std::size_t label, std::size_t class_count) {
  RealVector v = RealVector::Zero(static_cast<Eigen::Index>(class_count));
  v(static_cast<Eigen::Index>(label)) = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Synthetic clustered binary data.

struct SyntheticSpec {
  std::size_t class_count = 20;
  std::size_t feature_dim = 100;
  std::size_t samples_per_class = 300;
  double centroid_density = 0.5;
  double flip_noise = 0.3;
  std::uint64_t seed = 1;

  void Validate() const {
    Require(class_count >= 2, ErrorCode::kInvalidParameter, "class_count must be >= 2");
    Require(feature_dim >= 1, ErrorCode::kInvalidParameter, "feature_dim must be >= 1");
    Require(samples_per_class >= 1, ErrorCode::kInvalidParameter,
            "samples_per_class must be >= 1");
    Require(centroid_density > 0.0 && centroid_density < 1.0, ErrorCode::kInvalidParameter,
            "centroid_density must lie in (0, 1)");
    Require(flip_noise > 0.0 && flip_noise < 0.5, ErrorCode::kInvalidParameter,
            "flip_noise must lie in (0, 0.5)");
  }
};

// Each class gets a Bernoulli(centroid_density) centroid in {0,1}^d; every
// sample is its class centroid with bits flipped independently with
// probability flip_noise. Samples are emitted class by class.
inline LabeledDataset GenerateSynthetic(const SyntheticSpec& spec) {
  spec.Validate();
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution centroid_bit(spec.centroid_density);
  std::bernoulli_distribution flip(spec.flip_noise);

  const auto d = static_cast<Eigen::Index>(spec.feature_dim);
  RealMatrix centroids(static_cast<Eigen::Index>(spec.class_count), d);
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    for (Eigen::Index j = 0; j < d; ++j) centroids(c, j) = centroid_bit(rng) ? 1.0 : 0.0;
  }

  LabeledDataset out;
  out.class_count = spec.class_count;
  const std::size_t n = spec.class_count * spec.samples_per_class;
  out.features.resize(static_cast<Eigen::Index>(n), d);
  out.labels.reserve(n);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double bit = centroids(static_cast<Eigen::Index>(c), j);
        out.features(row, j) = flip(rng) ? 1.0 - bit : bit;
      }
      out.labels.push_back(c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split protocol: train / reference / validation / test, with attacker-known
// and target subsets inside train and test.

struct SplitSizes {
  std::size_t train = 2000;
  std::size_t train_known = 1000;
  std::size_t train_target = 500;
  std::size_t reference = 2000;
  std::size_t validation = 1000;
  std::size_t test = 1000;
  std::size_t test_known = 500;
  std::size_t test_target = 500;

  // Purchase/Texas split counts (10000 / 5000 / 2500, 10000, 5000,
  // 5000 / 2500 / 2500), every role multiplied by `factor` and rounded.
  static SplitSizes TabularScaled(double factor) {
    auto scale = [factor](double n) {
      return static_cast<std::size_t>(std::llround(n * factor));
    };
    SplitSizes s;
    s.train = scale(10000);
    s.train_known = scale(5000);
    s.train_target = scale(2500);
    s.reference = scale(10000);
    s.validation = scale(5000);
    s.test = scale(5000);
    s.test_known = scale(2500);
    s.test_target = scale(2500);
    return s;
  }

  std::size_t total() const { return train + reference + validation + test; }

  bool operator==(const SplitSizes&) const = default;
};

struct SplitPlan {
  IndexList train_all;
  IndexList train_known;
  IndexList train_target;
  IndexList reference;
  IndexList validation;
  IndexList test_all;
  IndexList test_known;
  IndexList test_target;

  bool operator==(const SplitPlan&) const = default;
};

inline SplitPlan MakeSplitPlan(std::size_t dataset_size, const SplitSizes& sizes,
                               std::uint64_t seed) {
  auto need = [](bool ok, const std::string& role, std::size_t want, std::size_t have) {
    if (!ok) {
      Fail(ErrorCode::kInsufficientData, "split role '" + role + "' needs " +
                                             std::to_string(want) + " samples, only " +
                                             std::to_string(have) + " available");
    }
  };
  need(sizes.train_known + sizes.train_target <= sizes.train, "train_known+train_target",
       sizes.train_known + sizes.train_target, sizes.train);
  need(sizes.test_known + sizes.test_target <= sizes.test, "test_known+test_target",
       sizes.test_known + sizes.test_target, sizes.test);

  // Roles are filled in order; the first one that does not fit is reported.
  std::size_t remaining = dataset_size;
  const std::pair<const char*, std::size_t> roles[] = {{"train", sizes.train},
                                                       {"reference", sizes.reference},
                                                       {"validation", sizes.validation},
                                                       {"test", sizes.test}};
  for (const auto& [role, want] : roles) {
    need(want <= remaining, role, want, remaining);
    remaining -= want;
  }

  std::mt19937_64 rng(seed);
  IndexList perm(dataset_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitPlan plan;
  auto take = [&perm, pos = std::size_t{0}](std::size_t n) mutable {
    IndexList out(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                  perm.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return out;
  };
  plan.train_all = take(sizes.train);
  plan.reference = take(sizes.reference);
  plan.validation = take(sizes.validation);
  plan.test_all = take(sizes.test);

  auto carve = [&rng](const IndexList& parent, std::size_t known, std::size_t target,
                      IndexList& known_out, IndexList& target_out) {
    IndexList shuffled = parent;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    known_out.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(known));
    target_out.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(known),
                      shuffled.begin() + static_cast<std::ptrdiff_t>(known + target));
  };
  carve(plan.train_all, sizes.train_known, sizes.train_target, plan.train_known,
        plan.train_target);
  carve(plan.test_all, sizes.test_known, sizes.test_target, plan.test_known,
        plan.test_target);
  return plan;
}

// ---------------------------------------------------------------------------
// Disjoint n-fold partition of a training set.

struct FoldAssignment {
  std::size_t n = 0;
  // Parallel arrays: members[j] belongs to fold fold_of[j]. Members are kept
  // in the order they were given.
  IndexList members;
  std::vector<std::size_t> fold_of;

  std::vector<IndexList> Folds() const {
    std::vector<IndexList> out(n);
    for (std::size_t j = 0; j < members.size(); ++j) out[fold_of[j]].push_back(members[j]);
    return out;
  }

  // Members outside fold i, in member order.
  IndexList Complement(std::size_t fold) const {
    IndexList out;
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (fold_of[j] != fold) out.push_back(members[j]);
    }
    return out;
  }

  bool operator==(const FoldAssignment&) const = default;
};

// Seeded shuffle, then round-robin: fold sizes differ by at most one.
inline FoldAssignment PartitionFolds(std::span<const std::size_t> train_indices,
                                     std::size_t n, std::uint64_t seed) {
  Require(n >= 2, ErrorCode::kInvalidParameter, "fold count must be >= 2");
  Require(train_indices.size() >= n, ErrorCode::kInvalidParameter,
          "fold count " + std::to_string(n) + " exceeds training size " +
              std::to_string(train_indices.size()));
  std::vector<std::size_t> order(train_indices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  FoldAssignment out;
  out.n = n;
  out.members.assign(train_indices.begin(), train_indices.end());
  out.fold_of.assign(train_indices.size(), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) out.fold_of[order[pos]] = pos % n;
  return out;
}

// ---------------------------------------------------------------------------

// Fraction of rows whose argmax confidence (lowest index on ties) equals the
// label.
inline double Accuracy(const MlpModel& model, const LabeledDataset& data) {
  Require(!data.empty(), ErrorCode::kInvalidInput, "accuracy of an empty dataset");
  const RealMatrix probs = Predict(model, data.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (ArgMax(probs.row(static_cast<Eigen::Index>(i))) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace kcdlab

#endif  // KCDLAB_DATA_HPP_
