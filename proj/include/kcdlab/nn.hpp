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

// Feed-forward Tanh networks with a softmax head. The model is a plain value
// type; forward and backward passes are free functions so that training code
// can own the only mutable copy.

#ifndef KCDLAB_NN_HPP_
#define KCDLAB_NN_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kcdlab/error.hpp"

namespace kcdlab {

using RealMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealVector = Eigen::VectorXd;
using RealRow = Eigen::RowVectorXd;

// Clamp applied to every probability before a logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

inline double ClampProbability(double p) {
  return p < kProbabilityFloor ? kProbabilityFloor : (p > 1.0 ? 1.0 : p);
}

inline bool AllFinite(const Eigen::Ref<const RealMatrix>& m) {
  return m.allFinite();
}

// Temperature softmax with max-subtraction.
inline RealVector Softmax(const Eigen::Ref<const RealVector>& logits,
                          double temperature = 1.0) {
  Require(temperature > 0.0 && std::isfinite(temperature),
          ErrorCode::kInvalidInput, "softmax temperature must be positive");
  Require(logits.size() > 0, ErrorCode::kInvalidInput, "softmax of empty vector");
  Require(logits.allFinite(), ErrorCode::kInvalidInput,
          "softmax input contains non-finite values");
  const double top = logits.maxCoeff();
  RealVector out = ((logits.array() - top) / temperature).exp().matrix();
  out /= out.sum();
  return out;
}

// Row-wise temperature softmax, in place.
inline void SoftmaxRowsInPlace(RealMatrix& logits, double temperature = 1.0) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double top = row.maxCoeff();
    row = ((row.array() - top) / temperature).exp().matrix();
    row /= row.sum();
  }
}

// Log-softmax of a single row, computed stably.
inline RealVector LogSoftmax(const Eigen::Ref<const RealVector>& logits,
                             double temperature = 1.0) {
  RealVector scaled = logits / temperature;
  const double top = scaled.maxCoeff();
  const double lse = top + std::log((scaled.array() - top).exp().sum());
  return (scaled.array() - lse).matrix();
}

// Lowest index among maximal entries.
template <typename Vec>
std::size_t ArgMax(const Vec& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

struct MlpModel {
  // Input dimension, hidden sizes, class count.
  std::vector<std::size_t> layer_dims;
  // weights[k] is layer_dims[k] x layer_dims[k + 1].
  std::vector<RealMatrix> weights;
  std::vector<RealRow> biases;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      total += static_cast<std::size_t>(weights[k].size() + biases[k].size());
    }
    return total;
  }

  bool operator==(const MlpModel& other) const {
    if (layer_dims != other.layer_dims) return false;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] != other.weights[k] || biases[k] != other.biases[k]) return false;
    }
    return true;
  }

  void Validate() const {
    Require(layer_dims.size() >= 2, ErrorCode::kShape,
            "model needs at least input and output layers");
    Require(weights.size() == layer_dims.size() - 1 &&
                biases.size() == layer_dims.size() - 1,
            ErrorCode::kShape, "layer count does not match layer_dims");
    for (std::size_t k = 0; k < weights.size(); ++k) {
      Require(layer_dims[k] > 0 && layer_dims[k + 1] > 0, ErrorCode::kShape,
              "layer dimensions must be positive");
      Require(static_cast<std::size_t>(weights[k].rows()) == layer_dims[k] &&
                  static_cast<std::size_t>(weights[k].cols()) == layer_dims[k + 1],
              ErrorCode::kShape,
              "weights[" + std::to_string(k) + "] shape mismatch");
      Require(static_cast<std::size_t>(biases[k].size()) == layer_dims[k + 1],
              ErrorCode::kShape, "biases[" + std::to_string(k) + "] shape mismatch");
    }
  }

  static MlpModel Zeros(const std::vector<std::size_t>& dims) {
    MlpModel m;
    m.layer_dims = dims;
    Require(dims.size() >= 2, ErrorCode::kShape,
            "model needs at least input and output layers");
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      m.weights.push_back(RealMatrix::Zero(static_cast<Eigen::Index>(dims[k]),
                                           static_cast<Eigen::Index>(dims[k + 1])));
      m.biases.push_back(RealRow::Zero(static_cast<Eigen::Index>(dims[k + 1])));
    }
    m.Validate();
    return m;
  }

  // Glorot-uniform weights, zero biases.
  static MlpModel GlorotUniform(const std::vector<std::size_t>& dims,
                                std::uint64_t seed) {
    MlpModel m = Zeros(dims);
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < m.weights.size(); ++k) {
      const double limit =
          std::sqrt(6.0 / static_cast<double>(dims[k] + dims[k + 1]));
      std::uniform_real_distribution<double> dist(-limit, limit);
      double* data = m.weights[k].data();
      for (Eigen::Index i = 0; i < m.weights[k].size(); ++i) data[i] = dist(rng);
    }
    return m;
  }
};

// Layer-wise buffers kept for backpropagation. activations[0] is the input,
// activations[k] for 0 < k < L the Tanh output of hidden layer k, and
// logits the pre-softmax output.
struct ForwardCache {
  std::vector<RealMatrix> activations;
  RealMatrix logits;
};

inline void ForwardInto(const MlpModel& model, const Eigen::Ref<const RealMatrix>& inputs,
                        ForwardCache& cache) {
  const std::size_t layers = model.layer_count();
  cache.activations.resize(layers);
  cache.activations[0] = inputs;
  for (std::size_t k = 0; k < layers; ++k) {
    RealMatrix z = cache.activations[k] * model.weights[k];
    z.rowwise() += model.biases[k];
    if (k + 1 < layers) {
      cache.activations[k + 1] = z.array().tanh().matrix();
    } else {
      cache.logits = std::move(z);
    }
  }
}

// Inference pass. Each output row is accumulated input column by input
// column, so a row's logits do not depend on which batch it arrives in.
inline RealMatrix Logits(const MlpModel& model, const Eigen::Ref<const RealMatrix>& inputs) {
  Require(static_cast<std::size_t>(inputs.cols()) == model.input_dim(), ErrorCode::kShape,
          "input has " + std::to_string(inputs.cols()) + " columns, model expects " +
              std::to_string(model.input_dim()));
  RealMatrix a = inputs;
  for (std::size_t k = 0; k < model.layer_count(); ++k) {
    const RealMatrix& w = model.weights[k];
    RealMatrix z(a.rows(), w.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      RealRow acc = model.biases[k];
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const double x = a(r, j);
        if (x != 0.0) acc.noalias() += x * w.row(j);
      }
      z.row(r) = acc;
    }
    if (k + 1 < model.layer_count()) {
      a = z.unaryExpr([](double v) { return std::tanh(v); });
    } else {
      a = std::move(z);
    }
  }
  return a;
}

// Confidence vectors, one row per input row.
inline RealMatrix Predict(const MlpModel& model, const Eigen::Ref<const RealMatrix>& inputs) {
  RealMatrix out = Logits(model, inputs);
  SoftmaxRowsInPlace(out);
  return out;
}

// Parameter gradients with the same layout as the model.
struct Gradients {
  std::vector<RealMatrix> weights;
  std::vector<RealRow> biases;

  static Gradients ZerosLike(const MlpModel& model) {
    Gradients g;
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
      g.weights.push_back(RealMatrix::Zero(model.weights[k].rows(), model.weights[k].cols()));
      g.biases.push_back(RealRow::Zero(model.biases[k].size()));
    }
    return g;
  }
};

// Backpropagates d(loss)/d(logits) through the cached forward pass.
inline void BackwardInto(const MlpModel& model, const ForwardCache& cache,
                         RealMatrix logit_grad, Gradients& grads) {
  const std::size_t layers = model.layer_count();
  grads.weights.resize(layers);
  grads.biases.resize(layers);
  RealMatrix delta = std::move(logit_grad);
  for (std::size_t k = layers; k-- > 0;) {
    grads.weights[k].noalias() = cache.activations[k].transpose() * delta;
    grads.biases[k] = delta.colwise().sum();
    if (k > 0) {
      RealMatrix upstream = delta * model.weights[k].transpose();
      const auto& a = cache.activations[k];
      delta = (upstream.array() * (1.0 - a.array().square())).matrix();
    }
  }
}

}  // namespace kcdlab

#endif  // KCDLAB_NN_HPP_
