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

#include "irr/delta.hpp"
#include "irr/ref_model.hpp"

namespace irr {

/// H = (2/n) X^T X + lambda I for one linear layer, in 64-bit.
struct LayerHessian {
  std::string layer_name;
  Eigen::MatrixXd H;  // damped
  double lambda = 0.0;
  std::int64_t n_samples = 0;

  Eigen::Index fan_in() const { return H.rows(); }

  /// H^-1 through a Cholesky factorization; throws singular_hessian when H is
  /// not positive definite.
  Eigen::MatrixXd inverse() const;
};

enum class Compensation {
  sequential,   // exact joint removal, inverse downdated after each column
  independent,  // sum of single-removal corrections, no downdates
};

struct SurgeryPlan {
  Eigen::Index block_size = 128;
  double damping_fraction = 0.01;
  std::vector<std::string> layer_order;  // empty: lexicographic
  bool recalibrate = true;
  Compensation compensation = Compensation::sequential;
  // Tensors matching this pattern (and rank 2) receive compensation; all
  // others get plain removal.
  std::string eligible_pattern = R"(^layer\.\d+\.weight$)";

  void validate() const;
  bool eligible(const std::string& name, const Shape& shape) const;
};

LayerHessian build_hessian(const CalibRecord& calib, double damping_fraction);

/// Removes masked entries row by row and compensates the retained ones.
///
/// Each row is an independent reconstruction problem sharing `h_inv`. Masked
/// columns are eliminated left to right in blocks of `plan.block_size`. Inside
/// a block the correction -w_q / G_qq * G[:, q] (G the inverse Hessian
/// conditioned on already-removed columns) is applied immediately to the
/// block's columns; the part falling outside the block is accumulated and
/// applied once the block is done. Masked entries come back as exact zeros and
/// rows without masked entries are returned untouched.
Eigen::MatrixXd recalibrate_rows(const Eigen::Ref<const Eigen::MatrixXd>& delta,
                                 const Eigen::Ref<const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>>& mask,
                                 const Eigen::MatrixXd& h_inv, const SurgeryPlan& plan);

BasicTensor<double> recalibrate_layer(const BasicTensor<double>& delta, const BasicTensor<std::uint8_t>& mask,
                                      const LayerHessian& hess, const SurgeryPlan& plan);

/// sum_rows ||X^T e||^2 for row errors e, recovered from the undamped part of H.
double reconstruction_error(const LayerHessian& hess, const Eigen::Ref<const Eigen::MatrixXd>& row_errors);

struct LayerReport {
  std::string layer;
  std::int64_t masked_count = 0;
  double masked_fraction = 0.0;
  bool recalibrated = false;
  std::optional<double> removal_error;  // plain removal
  std::optional<double> recalibrated_error;
  double wall_ms = 0.0;

  std::string to_json() const;
};

/// pre + recalibrate(sft - pre) for eligible layers with calibration data,
/// pre + (1 - m) (sft - pre) for everything else. Layers are handled one at a
/// time.
ParamSet run_surgery(const ParamSet& sft, const ParamSet& pre, const MaskSet& mask,
                     const std::vector<CalibRecord>& calib, const SurgeryPlan& plan,
                     std::vector<LayerReport>* reports = nullptr);

struct SurgeryFiles {
  std::filesystem::path sft;
  std::filesystem::path pre;
  std::filesystem::path mask;
  std::optional<std::filesystem::path> calib;
  std::filesystem::path out;
};

/// Same computation as run_surgery, reading one tensor per input at a time
/// and writing the output checkpoint incrementally. Tensors are visited in
/// lexicographic order.
void run_surgery_streaming(const SurgeryFiles& files, const SurgeryPlan& plan,
                           std::vector<LayerReport>* reports = nullptr);

void write_reports_jsonl(const std::vector<LayerReport>& reports, const std::filesystem::path& path);

}  // namespace irr
