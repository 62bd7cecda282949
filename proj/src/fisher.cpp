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

#include "irr/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "irr/checkpoint.hpp"

namespace irr {

Scope scope_from_string(std::string_view text) {
  if (text == "per-tensor") return Scope::per_tensor;
  if (text == "global") return Scope::global;
  throw Error(Errc::invalid_argument, "scope must be per-tensor or global, got \"" + std::string(text) + "\"");
}

std::string_view to_string(Scope scope) { return scope == Scope::global ? "global" : "per-tensor"; }

FisherDiag estimate_fisher(const ParamSet& model_aligned, const RefModelConfig& cfg,
                           const std::vector<Batch>& safety_batches) {
  const Batch all = Batch::concat(safety_batches);
  if (all.size() == 0) throw Error(Errc::invalid_argument, "Fisher estimation needs at least one sample");
  check_model(model_aligned, cfg);
  check_batch(all, cfg);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(all.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index t = 0; t < all.inputs.cols(); ++t) {
      if (all.inputs(a, t) != all.inputs(b, t)) return all.inputs(a, t) < all.inputs(b, t);
    }
    return all.targets[static_cast<std::size_t>(a)] < all.targets[static_cast<std::size_t>(b)];
  });

  const auto model = cast_tensors<double>(model_aligned);
  FisherDiag fisher;
  for (const auto& [name, t] : model.entries) fisher.entries.emplace(name, BasicTensor<double>(t.shape()));

  for (auto idx : order) {
    const auto lg = loss_and_grads(model, cfg, all.row(idx));
    for (auto& [name, acc] : fisher.entries) acc.data().array() += lg.grads.at(name).data().array().square();
  }
  const double inv_n = 1.0 / static_cast<double>(all.size());
  for (auto& [_, acc] : fisher.entries) acc.data() *= inv_n;
  fisher.n_samples = all.size();
  fisher.metadata["kind"] = "fisher";
  fisher.metadata["n_samples"] = std::to_string(fisher.n_samples);
  return fisher;
}

void save_fisher(const FisherDiag& fisher, const std::filesystem::path& path) {
  NamedTensors<double> out = fisher;
  out.metadata["kind"] = "fisher";
  out.metadata["n_samples"] = std::to_string(fisher.n_samples);
  save_checkpoint(out, path);
}

FisherDiag load_fisher(const std::filesystem::path& path) {
  FisherDiag f{load_tensors<double>(path)};
  auto it = f.metadata.find("n_samples");
  if (it != f.metadata.end()) f.n_samples = std::stoll(it->second);
  for (const auto& [name, t] : f.entries) {
    if (!t.all_finite() || (t.data().array() < 0.0).any()) {
      throw Error(Errc::invalid_argument, "Fisher tensor \"" + name + "\" holds negative or non-finite values");
    }
  }
  return f;
}

std::int64_t topk_count(double rho, std::int64_t population) {
  if (!(rho >= 0.0 && rho <= 100.0)) throw Error(Errc::invalid_argument, "rho must lie in [0, 100]");
  if (population <= 0) return 0;
  const double x = rho * static_cast<double>(population) / 100.0;
  const auto k = static_cast<std::int64_t>(std::ceil(x - 1e-9));
  return std::clamp<std::int64_t>(k, 0, population);
}

namespace {

double kth_largest(std::vector<double>& scores, std::int64_t k) {
  if (k <= 0 || scores.empty()) return kNoSelection;
  auto nth = scores.begin() + (k - 1);
  std::nth_element(scores.begin(), nth, scores.end(), std::greater<>());
  return *nth;
}

void collect_candidate_scores(const BasicTensor<double>& f, const BasicTensor<std::uint8_t>& c,
                              std::vector<double>& out) {
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (c[i] == 1) out.push_back(f[i]);
  }
}

}  // namespace

std::map<std::string, double> topk_threshold(const FisherDiag& fisher, const MaskSet& candidates, double rho,
                                             Scope scope) {
  assert_compatible(fisher, candidates);
  validate_mask(candidates);
  std::map<std::string, double> out;
  if (scope == Scope::per_tensor) {
    for (const auto& [name, f] : fisher.entries) {
      std::vector<double> scores;
      collect_candidate_scores(f, candidates.at(name), scores);
      out[name] = kth_largest(scores, topk_count(rho, static_cast<std::int64_t>(scores.size())));
    }
  } else {
    std::vector<double> scores;
    for (const auto& [name, f] : fisher.entries) collect_candidate_scores(f, candidates.at(name), scores);
    const double s = kth_largest(scores, topk_count(rho, static_cast<std::int64_t>(scores.size())));
    for (const auto& [name, _] : fisher.entries) out[name] = s;
  }
  return out;
}

}  // namespace irr
