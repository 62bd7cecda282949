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

#include "irr/tensor.hpp"

namespace irr {

/// Elementwise parameter differences (fine-tuning deltas, safety vectors).
/// Held in 64-bit so that before + (after - before) reproduces `after`
/// bit-exactly once rounded back to 32-bit storage.
struct DeltaSet : NamedTensors<double> {};

/// Binary indicator per coordinate. Values outside {0,1} are rejected by every
/// consumer.
struct MaskSet : NamedTensors<std::uint8_t> {
  std::int64_t masked_count() const;
  std::int64_t masked_count(const std::string& name) const;
  double masked_fraction() const;
  double masked_fraction(const std::string& name) const;
};

void validate_mask(const MaskSet& mask);

MaskSet zeros_mask_like(const NamedTensors<float>& reference);

DeltaSet compute_delta(const ParamSet& after, const ParamSet& before);

/// 1 where d_sft[i] * d_safe[i] <= 0 (sign disagreement, zeros included).
MaskSet interference_candidates(const DeltaSet& d_sft, const DeltaSet& d_safe);

/// (1 - m) * d_sft + pre, rounded to 32-bit.
ParamSet remove_deltas(const DeltaSet& d_sft, const ParamSet& pre, const MaskSet& mask);

/// pre + d, rounded to 32-bit.
ParamSet apply_delta(const ParamSet& pre, const DeltaSet& delta);

/// Drop-and-rescale: each entry zeroed with probability `drop_rate`, survivors
/// scaled by 1 / (1 - drop_rate). Entries are visited in name then index order
/// with one draw each, so the output depends only on `seed`.
DeltaSet dare_transform(const DeltaSet& d_sft, double drop_rate, std::uint64_t seed);

/// sft + scale * d_safe.
ParamSet resta_merge(const ParamSet& sft, const DeltaSet& d_safe, double scale);

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw; stable
/// across standard library implementations.
template <typename Engine>
double unit_uniform(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

}  // namespace irr
