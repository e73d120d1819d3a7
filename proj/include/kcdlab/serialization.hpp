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

// JSON documents for models, split plans and fold assignments. Doubles are
// written as shortest round-trip decimals, so parsing a dump restores every
// value bit for bit.

#ifndef KCDLAB_SERIALIZATION_HPP_
#define KCDLAB_SERIALIZATION_HPP_

#include <filesystem>
#include <string>

#include <json.hpp>

#include "kcdlab/csv.hpp"
#include "kcdlab/data.hpp"
#include "kcdlab/error.hpp"
#include "kcdlab/nn.hpp"

namespace kcdlab {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kSplitFormatVersion = 1;

inline Json ParseJson(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorCode::kParse, what + ": " + e.what());
  }
}

inline Json LoadJsonFile(const std::filesystem::path& path) {
  return ParseJson(ReadTextFile(path), path.string());
}

inline void SaveJsonFile(const Json& doc, const std::filesystem::path& path) {
  WriteTextFile(path, doc.dump(2) + "\n");
}

inline Json ModelToJson(const MlpModel& model) {
  model.Validate();
  Json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["layer_dims"] = model.layer_dims;
  Json weights = Json::array();
  Json biases = Json::array();
  for (std::size_t k = 0; k < model.layer_count(); ++k) {
    const auto& w = model.weights[k];
    weights.push_back(std::vector<double>(w.data(), w.data() + w.size()));
    const auto& b = model.biases[k];
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  return doc;
}

inline MlpModel ModelFromJson(const Json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    Require(version == kModelFormatVersion, ErrorCode::kSchema,
            "unsupported model format_version " + std::to_string(version));
    const auto dims = doc.at("layer_dims").get<std::vector<std::size_t>>();
    MlpModel model = MlpModel::Zeros(dims);
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    Require(weights.size() == model.layer_count() && biases.size() == model.layer_count(),
            ErrorCode::kSchema, "model layer count does not match layer_dims");
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
      const auto w = weights[k].get<std::vector<double>>();
      const auto b = biases[k].get<std::vector<double>>();
      Require(w.size() == static_cast<std::size_t>(model.weights[k].size()) &&
                  b.size() == static_cast<std::size_t>(model.biases[k].size()),
              ErrorCode::kSchema, "layer " + std::to_string(k) + " has the wrong size");
      std::copy(w.begin(), w.end(), model.weights[k].data());
      std::copy(b.begin(), b.end(), model.biases[k].data());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kSchema, std::string("malformed model document: ") + e.what());
  }
}

inline void SaveModel(const MlpModel& model, const std::filesystem::path& path) {
  SaveJsonFile(ModelToJson(model), path);
}

inline MlpModel LoadModel(const std::filesystem::path& path) {
  return ModelFromJson(LoadJsonFile(path));
}

inline Json SplitPlanToJson(const SplitPlan& plan) {
  Json doc;
  doc["format_version"] = kSplitFormatVersion;
  doc["train_all"] = plan.train_all;
  doc["train_known"] = plan.train_known;
  doc["train_target"] = plan.train_target;
  doc["reference"] = plan.reference;
  doc["validation"] = plan.validation;
  doc["test_all"] = plan.test_all;
  doc["test_known"] = plan.test_known;
  doc["test_target"] = plan.test_target;
  return doc;
}

inline SplitPlan SplitPlanFromJson(const Json& doc) {
  try {
    Require(doc.at("format_version").get<int>() == kSplitFormatVersion, ErrorCode::kSchema,
            "unsupported split plan format_version");
    SplitPlan plan;
    plan.train_all = doc.at("train_all").get<IndexList>();
    plan.train_known = doc.at("train_known").get<IndexList>();
    plan.train_target = doc.at("train_target").get<IndexList>();
    plan.reference = doc.at("reference").get<IndexList>();
    plan.validation = doc.at("validation").get<IndexList>();
    plan.test_all = doc.at("test_all").get<IndexList>();
    plan.test_known = doc.at("test_known").get<IndexList>();
    plan.test_target = doc.at("test_target").get<IndexList>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kSchema, std::string("malformed split plan: ") + e.what());
  }
}

inline Json FoldAssignmentToJson(const FoldAssignment& folds) {
  Json doc;
  doc["format_version"] = kSplitFormatVersion;
  doc["n"] = folds.n;
  doc["members"] = folds.members;
  doc["fold_of"] = folds.fold_of;
  return doc;
}

inline FoldAssignment FoldAssignmentFromJson(const Json& doc) {
  try {
    Require(doc.at("format_version").get<int>() == kSplitFormatVersion, ErrorCode::kSchema,
            "unsupported fold assignment format_version");
    FoldAssignment folds;
    folds.n = doc.at("n").get<std::size_t>();
    folds.members = doc.at("members").get<IndexList>();
    folds.fold_of = doc.at("fold_of").get<std::vector<std::size_t>>();
    Require(folds.members.size() == folds.fold_of.size(), ErrorCode::kSchema,
            "members and fold_of differ in length");
    for (std::size_t f : folds.fold_of) {
      Require(f < folds.n, ErrorCode::kSchema, "fold index out of range");
    }
    return folds;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kSchema, std::string("malformed fold assignment: ") + e.what());
  }
}

}  // namespace kcdlab

#endif  // KCDLAB_SERIALIZATION_HPP_
