/*
 * Copyright 2026 The IRR Toolkit Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "irr/tensor.hpp"

namespace irr {

/// Embedding -> mean-pool over context -> (linear + tanh) stack -> linear head.
///
/// hidden_dims[0] is the embedding width; each further entry adds a tanh layer.
/// Parameter names: "embed.weight" [vocab, hidden_dims[0]], then
/// "layer.<i>.weight" [out, in] and "layer.<i>.bias" [out] for every linear
/// layer, the last of which is the output head.
struct RefModelConfig {
  int vocab_size = 0;
  int context_len = 0;
  std::vector<int> hidden_dims;
  std::uint64_t seed = 0;

  int num_linear() const { return static_cast<int>(hidden_dims.size()); }
  void validate() const;

  std::string to_json() const;
  static RefModelConfig from_json(const std::string& text);

  /// Config stored under metadata["refmodel_config"].
  static RefModelConfig from_metadata(const std::map<std::string, std::string>& metadata);

  friend bool operator==(const RefModelConfig&, const RefModelConfig&) = default;
};

std::string linear_weight_name(int layer);
std::string linear_bias_name(int layer);
inline constexpr const char* kEmbeddingName = "embed.weight";

using TokenMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Batch {
  TokenMatrix inputs;        // [batch, context_len]
  std::vector<int> targets;  // [batch]

  Eigen::Index size() const { return inputs.rows(); }
  Batch row(Eigen::Index i) const;
  Batch head(Eigen::Index n) const;
  static Batch concat(const std::vector<Batch>& parts);

  friend bool operator==(const Batch&, const Batch&) = default;
};

/// Inputs fed to one linear layer, one row per sample.
struct CalibRecord {
  std::string layer_name;  // weight tensor name
  Eigen::MatrixXd activations;  // [n_samples, fan_in]
};

template <typename Scalar>
struct ForwardResult {
  RowMatrixX<Scalar> logits;  // [batch, vocab]
  std::vector<CalibRecord> records;
};

template <typename Scalar>
struct LossAndGrads {
  double loss = 0.0;
  NamedTensors<Scalar> grads;
};

struct TrainOptions {
  double lr = 0.1;
  int epochs = 1;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct EvalResult {
  double refusal_rate = 0.0;
  double task_accuracy = 0.0;
};

/// Gaussian init scaled by 1/sqrt(fan_in); biases zero. Metadata carries the
/// config.
ParamSet init_model(const RefModelConfig& cfg);

/// Checks names and shapes against the config.
template <typename Scalar>
void check_model(const NamedTensors<Scalar>& model, const RefModelConfig& cfg);

void check_batch(const Batch& batch, const RefModelConfig& cfg);

template <typename Scalar>
ForwardResult<Scalar> forward(const NamedTensors<Scalar>& model, const RefModelConfig& cfg, const Batch& batch,
                              bool capture);

/// Mean negative log-likelihood of the targets and its exact gradient.
template <typename Scalar>
LossAndGrads<Scalar> loss_and_grads(const NamedTensors<Scalar>& model, const RefModelConfig& cfg,
                                    const Batch& batch);

/// Plain minibatch SGD. Each epoch reshuffles with an engine seeded from
/// opts.seed; the returned set is a new checkpoint.
ParamSet train(const ParamSet& model, const RefModelConfig& cfg, const Batch& dataset, const TrainOptions& opts,
               std::vector<double>* epoch_losses = nullptr);

std::vector<int> predict(const ParamSet& model, const RefModelConfig& cfg, const Batch& batch);

EvalResult eval_suite(const ParamSet& model, const RefModelConfig& cfg, const Batch& safety_set,
                      const Batch& task_set, int refuse_token);

/// Captures layer inputs on `model` for the first `max_samples` rows.
std::vector<CalibRecord> capture_calibration(const ParamSet& model, const RefModelConfig& cfg, const Batch& data,
                                             Eigen::Index max_samples);

// Dataset files: one record per line, "tok,tok,...,tok<TAB>target".
Batch read_dataset(const std::filesystem::path& path);
void write_dataset(const Batch& batch, const std::filesystem::path& path);

// Calibration records as a checkpoint (F64 tensors named by layer,
// metadata "kind":"calib").
void save_calibration(const std::vector<CalibRecord>& records, const std::filesystem::path& path);
std::vector<CalibRecord> load_calibration(const std::filesystem::path& path);

}  // namespace irr
