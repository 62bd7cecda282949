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

#include "irr/delta.hpp"
#include "irr/fisher.hpp"

namespace irr {

/// m[i] = 1 iff candidates[i] == 1 and fisher[i] >= s' for the scope of i.
/// Ties at s' are all selected.
MaskSet build_mask(const MaskSet& candidates, const FisherDiag& fisher, double rho, Scope scope = Scope::per_tensor);

/// Candidate set followed by Fisher thresholding.
MaskSet identify_unsafe(const DeltaSet& d_sft, const DeltaSet& d_safe, const FisherDiag& fisher, double rho,
                        Scope scope = Scope::per_tensor);

enum class ExtraDenominator { non_candidates, all_parameters };

/// Adds the `extra` percent of non-candidate positions with the lowest Fisher
/// score to a mask that already covers every candidate. Ties are broken by
/// position (name, then flat index). With all_parameters the count is taken
/// against every coordinate in scope and capped at the non-candidate count.
MaskSet extend_mask_more(const MaskSet& mask, const MaskSet& candidates, const FisherDiag& fisher, double extra,
                         Scope scope = Scope::per_tensor,
                         ExtraDenominator denominator = ExtraDenominator::non_candidates);

/// Exactly topk_count(rho, numel) uniformly random positions per tensor.
MaskSet random_mask(const MaskSet& like, double rho, std::uint64_t seed);

MaskSet ones_mask_like(const MaskSet& like);

bool is_subset(const MaskSet& inner, const MaskSet& outer);

}  // namespace irr
