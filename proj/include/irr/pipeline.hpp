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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "irr/fisher.hpp"
#include "irr/mask.hpp"
#include "irr/ref_model.hpp"
#include "irr/surgery.hpp"
#include "irr/synthetic.hpp"

namespace irr {

/// Printed into every report: the safety number is a refusal-token rate on
/// held-out synthetic harmful prompts, not a judged safety score.
inline constexpr const char* kSafetyProxyNote =
    "refusal_rate is the fraction of held-out synthetic harmful prompts whose argmax prediction is the REFUSE "
    "token; it is a desk-scale proxy, not a judged safety score";

struct RunConfig {
  std::filesystem::path pre;
  std::filesystem::path sft;
  std::filesystem::path align;
  std::filesystem::path unalign;

  std::optional<std::filesystem::path> fisher;       // precomputed diagonal Fisher
  std::optional<std::filesystem::path> safety_data;  // harmful prompt -> refusal pairs
  std::optional<std::filesystem::path> calib;        // precomputed calibration records
  std::optional<std::filesystem::path> calib_data;   // downstream samples, captured on the fine-tuned model

  std::optional<std::filesystem::path> safety_eval;
  std::optional<std::filesystem::path> task_eval;
  std::optional<int> refuse_token;  // default: metadata "refuse_token" of the fine-tuned checkpoint

  std::vector<double> rho{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  Eigen::Index block_size = 128;
  double damping = 0.01;
  Scope scope = Scope::per_tensor;
  int calib_samples = 128;
  bool recalibrate = true;
  Compensation compensation = Compensation::sequential;

  std::vector<double> resta_scales{0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0};
  double dare_rate = 0.5;      // drop rate used by DARE+IRR
  std::vector<double> extra;   // IRR_more grid; empty skips the method

  std::filesystem::path out_dir = "irr_out";
  std::uint64_t seed = 0;

  void validate() const;

  /// Keys mirror the field names. Unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  /// Everything except out_dir, so equal runs echo equal bytes.
  nlohmann::json to_json() const;
};

/// Lowercase hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

struct RealignResult {
  ParamSet model;
  MaskSet mask;
  nlohmann::json report;
};

/// Identify (rho = config.rho.front()), remove, recalibrate. Writes
/// realigned.safetensors, mask.safetensors, report.json and surgery.jsonl into
/// out_dir; on failure every file written so far is removed and the error
/// names the stage.
RealignResult realign(const RunConfig& config);

struct SweepRow {
  std::string method;
  std::string param_name;  // rho | scale | drop_rate | extra
  double param = 0.0;
  double refusal_rate = 0.0;
  double task_accuracy = 0.0;
  double masked_fraction = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  EvalResult sft;
  EvalResult pre;
  nlohmann::json document;

  std::vector<SweepRow> method(const std::string& name) const;
  std::string to_csv() const;
};

namespace method {
inline constexpr const char* kIrr = "IRR";
inline constexpr const char* kNoRecal = "IRR w/o Recal";
inline constexpr const char* kNoSafetyInterference = "IRR w/o SI";
inline constexpr const char* kNoIdentification = "IRR w/o ID";
inline constexpr const char* kDareIrr = "DARE+IRR";
inline constexpr const char* kResta = "RESTA";
inline constexpr const char* kDare = "DARE";
inline constexpr const char* kIrrMore = "IRR_more";
}  // namespace method

/// Every method at every grid point; writes tradeoff.csv and tradeoff.json
/// (no timings, so equal seeds give equal bytes).
SweepTable sweep(const RunConfig& config);

struct ScenarioOptions {
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "irr_scenario";
  WorldLayout layout{};
  std::vector<int> hidden_dims{32, 32};

  Eigen::Index align_harmful = 600;
  Eigen::Index align_general = 600;
  Eigen::Index unalign_harmful = 600;
  Eigen::Index task_train = 2000;
  Eigen::Index harmful_mix = 400;
  Eigen::Index fisher_samples = 256;
  Eigen::Index eval_samples = 1000;
  int calib_samples = 128;

  TrainOptions align_train{0.2, 60, 32, 1};
  TrainOptions unalign_train{0.2, 30, 32, 2};
  TrainOptions sft_train{0.2, 40, 32, 3};

  std::vector<double> rho{0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::vector<double> extra{0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
};

struct ScenarioResult {
  EvalResult aligned;
  EvalResult unaligned;
  EvalResult benign_sft;
  EvalResult harmful_sft;
  bool safety_vector_inverse_exact = false;  // unalign + d_safe == align
  SweepTable table;                          // sweep on the harmful-mix model
  RunConfig config;
};

/// Trains aligned -> (unaligned, benign SFT, harmful-mix SFT), derives the
/// safety vector, Fisher, calibration set and evaluation sets, then sweeps the
/// harmful-mix model. Everything lands under options.out_dir.
ScenarioResult scenario_harmful_ft(const ScenarioOptions& options);

}  // namespace irr
