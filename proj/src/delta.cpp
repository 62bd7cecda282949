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

#include "irr/delta.hpp"

#include <random>

namespace irr {

std::int64_t MaskSet::masked_count() const {
  std::int64_t n = 0;
  for (const auto& [name, _] : entries) n += masked_count(name);
  return n;
}

std::int64_t MaskSet::masked_count(const std::string& name) const {
  return at(name).data().template cast<std::int64_t>().sum();
}

double MaskSet::masked_fraction() const {
  const auto total = parameter_count();
  return total == 0 ? 0.0 : static_cast<double>(masked_count()) / static_cast<double>(total);
}

double MaskSet::masked_fraction(const std::string& name) const {
  const auto& t = at(name);
  return t.size() == 0 ? 0.0 : static_cast<double>(masked_count(name)) / static_cast<double>(t.size());
}

void validate_mask(const MaskSet& mask) {
  for (const auto& [name, t] : mask.entries) {
    if ((t.data().array() > 1).any()) throw Error(Errc::invalid_mask, "mask \"" + name + "\" holds a value outside {0,1}");
  }
}

MaskSet zeros_mask_like(const NamedTensors<float>& reference) {
  MaskSet m;
  m.metadata["kind"] = "mask";
  for (const auto& [name, t] : reference.entries) m.entries.emplace(name, BasicTensor<std::uint8_t>(t.shape()));
  return m;
}

DeltaSet compute_delta(const ParamSet& after, const ParamSet& before) {
  assert_compatible(after, before);
  DeltaSet out;
  out.metadata["kind"] = "delta";
  for (const auto& [name, a] : after.entries) {
    const auto& b = before.at(name);
    out.entries.emplace(name, BasicTensor<double>(a.shape(), a.data().cast<double>() - b.data().cast<double>()));
  }
  return out;
}

MaskSet interference_candidates(const DeltaSet& d_sft, const DeltaSet& d_safe) {
  assert_compatible(d_sft, d_safe);
  MaskSet out;
  out.metadata["kind"] = "mask";
  for (const auto& [name, d] : d_sft.entries) {
    const auto& s = d_safe.at(name);
    out.entries.emplace(name, BasicTensor<std::uint8_t>(
                                  d.shape(), (d.data().array() * s.data().array() <= 0.0).cast<std::uint8_t>().matrix()));
  }
  return out;
}

ParamSet remove_deltas(const DeltaSet& d_sft, const ParamSet& pre, const MaskSet& mask) {
  assert_compatible(d_sft, pre);
  assert_compatible(d_sft, mask);
  validate_mask(mask);
  ParamSet out;
  out.metadata = pre.metadata;
  for (const auto& [name, p] : pre.entries) {
    const auto keep = (1 - mask.at(name).data().array()).cast<double>();
    VectorX<float> v = (p.data().cast<double>().array() + keep * d_sft.at(name).data().array()).cast<float>();
    out.entries.emplace(name, Tensor(p.shape(), std::move(v)));
  }
  return out;
}

ParamSet apply_delta(const ParamSet& pre, const DeltaSet& delta) {
  assert_compatible(pre, delta);
  ParamSet out;
  out.metadata = pre.metadata;
  for (const auto& [name, p] : pre.entries) {
    VectorX<float> v = (p.data().cast<double>() + delta.at(name).data()).cast<float>();
    out.entries.emplace(name, Tensor(p.shape(), std::move(v)));
  }
  return out;
}

DeltaSet dare_transform(const DeltaSet& d_sft, double drop_rate, std::uint64_t seed) {
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) {
    throw Error(Errc::invalid_argument, "drop_rate must lie in [0, 1), got " + std::to_string(drop_rate));
  }
  const double rescale = 1.0 / (1.0 - drop_rate);
  std::mt19937_64 rng(seed);
  DeltaSet out;
  out.metadata = d_sft.metadata;
  out.metadata["kind"] = "delta";
  for (const auto& [name, d] : d_sft.entries) {
    BasicTensor<double> t(d.shape());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const bool drop = unit_uniform(rng) < drop_rate;
      t[i] = drop ? 0.0 : d[i] * rescale;
    }
    out.entries.emplace(name, std::move(t));
  }
  return out;
}

ParamSet resta_merge(const ParamSet& sft, const DeltaSet& d_safe, double scale) {
  if (!(scale >= 0.0)) throw Error(Errc::invalid_argument, "RESTA scale must be >= 0");
  assert_compatible(sft, d_safe);
  ParamSet out;
  out.metadata = sft.metadata;
  for (const auto& [name, p] : sft.entries) {
    VectorX<float> v = (p.data().cast<double>() + scale * d_safe.at(name).data()).cast<float>();
    out.entries.emplace(name, Tensor(p.shape(), std::move(v)));
  }
  return out;
}

}  // namespace irr
