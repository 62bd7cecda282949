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
#include <limits>
#include <map>
#include <vector>

#include "irr/delta.hpp"
#include "irr/ref_model.hpp"

namespace irr {

/// Diagonal Fisher estimate: per-coordinate mean of squared per-sample
/// log-likelihood gradients.
struct FisherDiag : NamedTensors<double> {
  std::int64_t n_samples = 0;
};

enum class Scope { per_tensor, global };

Scope scope_from_string(std::string_view text);
std::string_view to_string(Scope scope);

/// Gradients are taken one sample at a time and squared before averaging.
/// Samples are processed in a canonical (token, target) order, so permuting
/// or re-batching the input leaves the result bit-identical.
FisherDiag estimate_fisher(const ParamSet& model_aligned, const RefModelConfig& cfg,
                           const std::vector<Batch>& safety_batches);

void save_fisher(const FisherDiag& fisher, const std::filesystem::path& path);
FisherDiag load_fisher(const std::filesystem::path& path);

inline constexpr double kNoSelection = std::numeric_limits<double>::infinity();

/// Smallest k with k >= rho% of `population`. A 1e-9 slack absorbs
/// representation error in rho (70% of 10 is 7, not 8).
std::int64_t topk_count(double rho, std::int64_t population);

/// Score of the k-th largest Fisher value among candidate positions, with
/// k = topk_count(rho, |candidates in scope|). Empty scope or rho == 0 yields
/// kNoSelection. Global scope returns the same threshold for every name.
std::map<std::string, double> topk_threshold(const FisherDiag& fisher, const MaskSet& candidates, double rho,
                                             Scope scope);

}  // namespace irr
