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

#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "irr/delta.hpp"
#include "irr/error.hpp"
#include "irr/mask.hpp"
#include "support.hpp"

namespace irr {
namespace {

ParamSet vec(const std::vector<float>& v, const std::string& name = "w") {
  ParamSet p;
  Tensor t({static_cast<std::int64_t>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i) t[static_cast<Eigen::Index>(i)] = v[i];
  p.entries.emplace(name, std::move(t));
  return p;
}

DeltaSet dvec(const std::vector<double>& v) {
  DeltaSet d;
  BasicTensor<double> t({static_cast<std::int64_t>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i) t[static_cast<Eigen::Index>(i)] = v[i];
  d.entries.emplace("w", std::move(t));
  return d;
}

MaskSet mvec(const std::vector<int>& v) {
  MaskSet m;
  BasicTensor<std::uint8_t> t({static_cast<std::int64_t>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i) t[static_cast<Eigen::Index>(i)] = static_cast<std::uint8_t>(v[i]);
  m.entries.emplace("w", std::move(t));
  return m;
}

std::vector<double> values(const DeltaSet& d) {
  const auto& t = d.at("w");
  return {t.data().begin(), t.data().end()};
}

std::vector<int> values(const MaskSet& m) {
  const auto& t = m.at("w");
  return {t.data().begin(), t.data().end()};
}

std::vector<float> values(const ParamSet& p) {
  const auto& t = p.at("w");
  return {t.data().begin(), t.data().end()};
}

bool bitwise_equal(const ParamSet& a, const ParamSet& b) {
  if (a.names() != b.names()) return false;
  for (const auto& [name, t] : a.entries) {
    const auto& u = b.at(name);
    if (t.shape() != u.shape() || std::memcmp(t.data().data(), u.data().data(), sizeof(float) * t.size()) != 0) {
      return false;
    }
  }
  return true;
}

TEST(ComputeDelta, IdenticalCheckpointsGiveZero) {
  EXPECT_EQ(values(compute_delta(vec({1.0f, 2.0f}), vec({1.0f, 2.0f}))), (std::vector<double>{0.0, 0.0}));
}

TEST(ComputeDelta, Arithmetic) {
  EXPECT_EQ(values(compute_delta(vec({2.0f, -1.0f}), vec({0.5f, 0.5f}))), (std::vector<double>{1.5, -1.5}));
}

TEST(ComputeDelta, IncompatibleInputs) {
  try {
    compute_delta(vec({1.0f}), vec({1.0f, 2.0f}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::incompatible);
  }
}

TEST(ComputeDelta, SafetyVectorInverseLaw) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto unalign = testing::random_params(rng);
    const auto align = testing::perturb(unalign, rng, 0.05);
    EXPECT_TRUE(bitwise_equal(apply_delta(unalign, compute_delta(align, unalign)), align));
  }
}

TEST(Candidates, HandExample) {
  EXPECT_EQ(values(interference_candidates(dvec({0.5, -0.3, 0.0}), dvec({-1.0, -2.0, 1.0}))),
            (std::vector<int>{1, 0, 1}));
}

TEST(Candidates, ZeroSafetyVectorSelectsEverything) {
  EXPECT_EQ(values(interference_candidates(dvec({0.5, -0.3, 2.0}), dvec({0.0, 0.0, 0.0}))),
            (std::vector<int>{1, 1, 1}));
}

TEST(Candidates, AgreeingSignsSelectNothing) {
  const auto d = dvec({0.5, -0.3, 2.0});
  EXPECT_EQ(values(interference_candidates(d, d)), (std::vector<int>{0, 0, 0}));
}

TEST(Candidates, SignSymmetry) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pre = testing::random_params(rng);
    const auto d = compute_delta(testing::perturb(pre, rng, 0.1, 0.3), pre);
    const auto s = compute_delta(testing::perturb(pre, rng, 0.1, 0.3), pre);
    DeltaSet nd = d, ns = s;
    for (auto& [name, t] : nd.entries) t.data() = -t.data();
    for (auto& [name, t] : ns.entries) t.data() = -t.data();
    EXPECT_EQ(interference_candidates(d, s), interference_candidates(nd, ns));
  }
}

TEST(Remove, HandExample) {
  const auto out = remove_deltas(dvec({0.5, -0.3}), vec({1.0f, 2.0f}), mvec({1, 0}));
  EXPECT_EQ(values(out), (std::vector<float>{1.0f, 1.7f}));
}

TEST(Remove, EmptyAndFullMasks) {
  std::mt19937_64 rng(9);
  const auto pre = testing::random_params(rng);
  const auto sft = testing::perturb(pre, rng, 0.1);
  const auto d = compute_delta(sft, pre);
  EXPECT_TRUE(bitwise_equal(remove_deltas(d, pre, zeros_mask_like(pre)), sft));
  EXPECT_TRUE(bitwise_equal(remove_deltas(d, pre, ones_mask_like(zeros_mask_like(pre))), pre));
}

TEST(Remove, PartitionLaw) {
  std::mt19937_64 rng(10);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pre = testing::random_params(rng);
    const auto sft = testing::perturb(pre, rng, 0.2, 0.2);
    auto mask = zeros_mask_like(pre);
    for (auto& [name, t] : mask.entries) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = coin(rng);
    }
    const auto out = remove_deltas(compute_delta(sft, pre), pre, mask);
    for (const auto& [name, t] : out.entries) {
      const auto& m = mask.at(name);
      const auto& want_masked = pre.at(name);
      const auto& want_kept = sft.at(name);
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        const float want = m[i] ? want_masked[i] : want_kept[i];
        const float got = t[i];
        ASSERT_EQ(std::memcmp(&got, &want, sizeof(float)), 0) << name << "[" << i << "]";
      }
    }
  }
}

TEST(Remove, RejectsNonBinaryMask) {
  try {
    remove_deltas(dvec({0.5, 0.5}), vec({1.0f, 1.0f}), mvec({0, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_mask);
  }
}

TEST(Dare, ZeroDropIsIdentity) {
  std::mt19937_64 rng(2);
  const auto pre = testing::random_params(rng);
  const auto d = compute_delta(testing::perturb(pre, rng, 0.1), pre);
  EXPECT_EQ(dare_transform(d, 0.0, 17), d);
}

TEST(Dare, SurvivorsScaleByInverseKeepRate) {
  for (double p : {0.1, 0.5, 0.9}) {
    const auto out = dare_transform(dvec({1.0, 1.0, 1.0, 1.0, -3.0, 0.25}), p, 123);
    const auto in = values(dvec({1.0, 1.0, 1.0, 1.0, -3.0, 0.25}));
    const auto got = values(out);
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i] != 0.0) {
        EXPECT_EQ(got[i], in[i] * (1.0 / (1.0 - p)));
      }
    }
  }
  for (double v : values(dare_transform(dvec({1, 1, 1, 1}), 0.5, 7))) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(Dare, Deterministic) {
  std::mt19937_64 rng(2);
  const auto pre = testing::random_params(rng);
  const auto d = compute_delta(testing::perturb(pre, rng, 0.1), pre);
  EXPECT_EQ(dare_transform(d, 0.3, 99), dare_transform(d, 0.3, 99));
  EXPECT_FALSE(dare_transform(d, 0.3, 99) == dare_transform(d, 0.3, 100));
}

TEST(Dare, DropFractionOnLargeTensor) {
  DeltaSet d;
  d.entries.emplace("big", BasicTensor<double>({200, 500}, Eigen::VectorXd::Ones(100000)));
  for (double p : {0.1, 0.5, 0.8}) {
    const auto out = dare_transform(d, p, 5);
    const double dropped = static_cast<double>((out.at("big").data().array() == 0.0).count()) / 100000.0;
    EXPECT_NEAR(dropped, p, 0.01);
  }
}

TEST(Dare, UnbiasedOverSeeds) {
  const std::vector<double> entries{1.0, -2.0, 0.5, 3.0, -0.25, 1.5};
  const auto d = dvec(entries);
  const double p = 0.5;
  const int n = 10000;
  std::vector<double> sum(entries.size(), 0.0), sum_sq(entries.size(), 0.0);
  for (int seed = 0; seed < n; ++seed) {
    const auto got = values(dare_transform(d, p, static_cast<std::uint64_t>(seed)));
    for (std::size_t i = 0; i < got.size(); ++i) {
      sum[i] += got[i];
      sum_sq[i] += got[i] * got[i];
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double mean = sum[i] / n;
    const double var = sum_sq[i] / n - mean * mean;
    const double se = std::sqrt(var / n);
    EXPECT_LE(std::abs(mean - entries[i]), 3.0 * se) << "entry " << i;
  }
}

TEST(Dare, RejectsBadRate) {
  for (double p : {-0.1, 1.0, 1.5}) {
    try {
      dare_transform(dvec({1.0}), p, 0);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::invalid_argument);
    }
  }
}

TEST(Resta, ZeroScaleIsIdentity) {
  std::mt19937_64 rng(6);
  const auto sft = testing::random_params(rng);
  const auto d = compute_delta(testing::perturb(sft, rng, 0.1), sft);
  EXPECT_TRUE(bitwise_equal(resta_merge(sft, d, 0.0), sft));
}

TEST(Resta, UnitScaleOnUnalignedGivesAligned) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto unalign = testing::random_params(rng);
    const auto align = testing::perturb(unalign, rng, 0.05);
    EXPECT_TRUE(bitwise_equal(resta_merge(unalign, compute_delta(align, unalign), 1.0), align));
  }
}

TEST(Resta, Linearity) {
  std::mt19937_64 rng(8);
  const auto sft = testing::random_params(rng);
  const auto d = compute_delta(testing::perturb(sft, rng, 0.1), sft);
  const double a = 0.3, b = 0.45;
  const auto ra = resta_merge(sft, d, a);
  const auto rb = resta_merge(sft, d, b);
  const auto rab = resta_merge(sft, d, a + b);
  for (const auto& [name, t] : rab.entries) {
    const Eigen::VectorXd lhs =
        ra.at(name).data().cast<double>() + rb.at(name).data().cast<double>() - sft.at(name).data().cast<double>();
    // Each side is rounded to 32-bit once or twice; compare at that resolution.
    EXPECT_LE((lhs - t.data().cast<double>()).cwiseAbs().maxCoeff(), 4e-6 * (1.0 + lhs.cwiseAbs().maxCoeff()));
  }
}

TEST(Resta, RejectsNegativeScale) {
  try {
    resta_merge(vec({1.0f}), dvec({1.0}), -1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_argument);
  }
}

TEST(MaskSet, Fractions) {
  const auto m = mvec({1, 0, 1, 1});
  EXPECT_EQ(m.masked_count(), 3);
  EXPECT_DOUBLE_EQ(m.masked_fraction(), 0.75);
  EXPECT_DOUBLE_EQ(m.masked_fraction("w"), 0.75);
}

}  // namespace
}  // namespace irr
