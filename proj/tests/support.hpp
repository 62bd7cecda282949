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

// Shared helpers for the test binaries: random fixtures and independent
// reference implementations used as oracles.

#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irr/delta.hpp"
#include "irr/fisher.hpp"
#include "irr/ref_model.hpp"
#include "irr/tensor.hpp"

namespace irr::testing {

inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("irr_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<float> n(0.0f, static_cast<float>(scale));
  Tensor t(shape);
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

// A few tensors of mixed rank, names deliberately out of insertion order.
inline ParamSet random_params(std::mt19937_64& rng, int max_dim = 12) {
  std::uniform_int_distribution<int> dim(1, max_dim);
  ParamSet p;
  p.entries.emplace("layer.1.weight", random_tensor({dim(rng), dim(rng)}, rng));
  p.entries.emplace("layer.0.weight", random_tensor({dim(rng), dim(rng)}, rng));
  p.entries.emplace("layer.0.bias", random_tensor({dim(rng)}, rng));
  p.entries.emplace("embed.weight", random_tensor({dim(rng), dim(rng)}, rng));
  return p;
}

inline ParamSet perturb(const ParamSet& base, std::mt19937_64& rng, double scale, double keep_prob = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<float> n(0.0f, static_cast<float>(scale));
  ParamSet out = base;
  for (auto& [name, t] : out.entries) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      if (u(rng) >= keep_prob) t[i] += n(rng);
    }
  }
  return out;
}

inline FisherDiag random_fisher(const ParamSet& like, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FisherDiag f;
  for (const auto& [name, t] : like.entries) {
    BasicTensor<double> s(t.shape());
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = u(rng);
    f.entries.emplace(name, std::move(s));
  }
  f.n_samples = 1;
  return f;
}

inline Batch random_batch(const RefModelConfig& cfg, Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> tok(0, cfg.vocab_size - 1);
  Batch b;
  b.inputs.resize(n, cfg.context_len);
  b.targets.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int c = 0; c < cfg.context_len; ++c) b.inputs(r, c) = tok(rng);
    b.targets[static_cast<std::size_t>(r)] = tok(rng);
  }
  return b;
}

// Random config with at most ~max_params parameters.
inline RefModelConfig random_config(std::mt19937_64& rng, std::int64_t max_params = 500) {
  std::uniform_int_distribution<int> vocab(3, 9), ctx(1, 4), width(2, 7), depth(1, 3);
  for (;;) {
    RefModelConfig cfg;
    cfg.vocab_size = vocab(rng);
    cfg.context_len = ctx(rng);
    const int d = depth(rng);
    for (int i = 0; i < d; ++i) cfg.hidden_dims.push_back(width(rng));
    cfg.seed = rng();
    if (init_model(cfg).parameter_count() <= max_params) return cfg;
  }
}

// Straight-line composition of candidate selection, top-k threshold and
// removal, written with plain loops and a full sort per tensor.
inline ParamSet reference_identify_remove(const ParamSet& sft, const ParamSet& pre, const ParamSet& align,
                                          const ParamSet& unalign, const FisherDiag& fisher, double rho,
                                          bool* any_selected = nullptr) {
  ParamSet out = pre;
  bool selected = false;
  for (auto& [name, t] : out.entries) {
    const auto& s = sft.at(name);
    const auto& p = pre.at(name);
    const auto& a = align.at(name);
    const auto& u = unalign.at(name);
    const auto& f = fisher.at(name);
    std::vector<double> d(static_cast<std::size_t>(t.size()));
    std::vector<bool> cand(d.size());
    std::vector<double> scores;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      d[i] = static_cast<double>(s[k]) - static_cast<double>(p[k]);
      const double safe = static_cast<double>(a[k]) - static_cast<double>(u[k]);
      cand[i] = d[i] * safe <= 0.0;
      if (cand[i]) scores.push_back(f[k]);
    }
    std::sort(scores.begin(), scores.end(), std::greater<>());
    const auto k = static_cast<std::size_t>(std::ceil(rho / 100.0 * static_cast<double>(scores.size()) - 1e-9));
    const double thr = (k == 0) ? INFINITY : scores[k - 1];
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      const bool m = cand[i] && f[idx] >= thr;
      selected = selected || m;
      t[idx] = static_cast<float>(static_cast<double>(p[idx]) + (m ? 0.0 : d[i]));
    }
  }
  if (any_selected) *any_selected = selected;
  return out;
}

// argmin_g ||X d - X_R g||^2 + lambda ||g||^2 over retained coordinates R,
// where the damped objective is the one whose normal equations use
// H = (2/n) X^T X + lambda I. Solved with a QR factorisation of the stacked
// system, independent of any inverse-Hessian bookkeeping.
inline Eigen::VectorXd damped_lsq_oracle(const Eigen::MatrixXd& X, const Eigen::VectorXd& delta,
                                         const std::vector<bool>& masked, double lambda) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!masked[static_cast<std::size_t>(j)]) keep.push_back(j);
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  if (keep.empty()) return out;
  // Objective scaled so its Hessian is exactly (2/n) X^T X + lambda I:
  // (1/n)||X(g - delta)||^2 + (lambda/2)||g - delta||^2 restricted to masked = 0.
  const double a = std::sqrt(1.0 / static_cast<double>(n));
  const double b = std::sqrt(lambda / 2.0);
  const auto r = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd A(n + r, r);
  Eigen::VectorXd rhs(n + r);
  Eigen::MatrixXd XR(n, r);
  for (Eigen::Index c = 0; c < r; ++c) XR.col(c) = X.col(keep[static_cast<std::size_t>(c)]);
  A.topRows(n) = a * XR;
  A.bottomRows(r) = b * Eigen::MatrixXd::Identity(r, r);
  rhs.head(n) = a * (X * delta);
  Eigen::VectorXd dR(r);
  for (Eigen::Index c = 0; c < r; ++c) dR[c] = delta[keep[static_cast<std::size_t>(c)]];
  rhs.tail(r) = b * dR;
  const Eigen::VectorXd g = A.colPivHouseholderQr().solve(rhs);
  for (Eigen::Index c = 0; c < r; ++c) out[keep[static_cast<std::size_t>(c)]] = g[c];
  return out;
}

inline double rel_diff(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace irr::testing
