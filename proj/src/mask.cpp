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

#include "irr/mask.hpp"

#include <algorithm>
#include <random>
#include <tuple>

namespace irr {

MaskSet build_mask(const MaskSet& candidates, const FisherDiag& fisher, double rho, Scope scope) {
  const auto thresholds = topk_threshold(fisher, candidates, rho, scope);
  MaskSet out;
  out.metadata["kind"] = "mask";
  out.metadata["rho"] = std::to_string(rho);
  out.metadata["scope"] = std::string(to_string(scope));
  for (const auto& [name, c] : candidates.entries) {
    const auto& f = fisher.at(name);
    const double s = thresholds.at(name);
    BasicTensor<std::uint8_t> m(c.shape());
    for (Eigen::Index i = 0; i < c.size(); ++i) m[i] = (c[i] == 1 && f[i] >= s) ? 1 : 0;
    out.entries.emplace(name, std::move(m));
  }
  return out;
}

MaskSet identify_unsafe(const DeltaSet& d_sft, const DeltaSet& d_safe, const FisherDiag& fisher, double rho,
                        Scope scope) {
  return build_mask(interference_candidates(d_sft, d_safe), fisher, rho, scope);
}

MaskSet extend_mask_more(const MaskSet& mask, const MaskSet& candidates, const FisherDiag& fisher, double extra,
                         Scope scope, ExtraDenominator denominator) {
  if (!(extra >= 0.0 && extra <= 100.0)) throw Error(Errc::invalid_argument, "extra must lie in [0, 100]");
  assert_compatible(mask, candidates);
  assert_compatible(mask, fisher);
  validate_mask(mask);
  validate_mask(candidates);
  if (!is_subset(candidates, mask)) {
    throw Error(Errc::precondition, "mask must already cover every interference candidate");
  }

  struct Slot {
    double score;
    std::size_t tensor;
    Eigen::Index index;
  };
  auto ascending = [](const Slot& a, const Slot& b) {
    return std::tie(a.score, a.tensor, a.index) < std::tie(b.score, b.tensor, b.index);
  };

  MaskSet out = mask;
  out.metadata["extra"] = std::to_string(extra);
  std::vector<BasicTensor<std::uint8_t>*> targets;
  for (auto& [_, t] : out.entries) targets.push_back(&t);

  auto select = [&](std::vector<Slot>& pool, std::int64_t population) {
    auto k = std::min<std::int64_t>(topk_count(extra, population), static_cast<std::int64_t>(pool.size()));
    std::partial_sort(pool.begin(), pool.begin() + k, pool.end(), ascending);
    for (std::int64_t j = 0; j < k; ++j) (*targets[pool[static_cast<std::size_t>(j)].tensor])[pool[static_cast<std::size_t>(j)].index] = 1;
  };

  std::vector<Slot> pool;
  std::int64_t population = 0;
  std::size_t ti = 0;
  for (const auto& [name, c] : candidates.entries) {
    const auto& f = fisher.at(name);
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (c[i] == 0) pool.push_back({f[i], ti, i});
    }
    population += denominator == ExtraDenominator::all_parameters ? c.size() : 0;
    if (scope == Scope::per_tensor) {
      select(pool, denominator == ExtraDenominator::all_parameters ? population
                                                                  : static_cast<std::int64_t>(pool.size()));
      pool.clear();
      population = 0;
    }
    ++ti;
  }
  if (scope == Scope::global) {
    select(pool, denominator == ExtraDenominator::all_parameters ? population : static_cast<std::int64_t>(pool.size()));
  }
  return out;
}

MaskSet random_mask(const MaskSet& like, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MaskSet out;
  out.metadata["kind"] = "mask";
  out.metadata["rho"] = std::to_string(rho);
  for (const auto& [name, t] : like.entries) {
    BasicTensor<std::uint8_t> m(t.shape());
    const auto n = static_cast<std::size_t>(t.size());
    const auto k = static_cast<std::size_t>(topk_count(rho, static_cast<std::int64_t>(n)));
    std::vector<Eigen::Index> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<Eigen::Index>(i);
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n - i));
      std::swap(idx[i], idx[j]);
      m[idx[i]] = 1;
    }
    out.entries.emplace(name, std::move(m));
  }
  return out;
}

MaskSet ones_mask_like(const MaskSet& like) {
  MaskSet out;
  out.metadata["kind"] = "mask";
  for (const auto& [name, t] : like.entries) {
    BasicTensor<std::uint8_t> m(t.shape());
    m.data().setOnes();
    out.entries.emplace(name, std::move(m));
  }
  return out;
}

bool is_subset(const MaskSet& inner, const MaskSet& outer) {
  assert_compatible(inner, outer);
  for (const auto& [name, t] : inner.entries) {
    const auto& o = outer.at(name);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      if (t[i] == 1 && o[i] != 1) return false;
    }
  }
  return true;
}

}  // namespace irr
