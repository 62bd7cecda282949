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

#include "irr/synthetic.hpp"

#include "irr/delta.hpp"

namespace irr {

SyntheticWorld::SyntheticWorld(WorldLayout layout) : layout_(layout) {
  if (layout_.context_len < 4 || layout_.tokens_per_class < 1 || layout_.tokens_per_topic < 1 ||
      layout_.n_classes < 2 || layout_.n_topics < 1 || layout_.n_filler < 1) {
    throw Error(Errc::invalid_argument, "synthetic world layout too small");
  }
}

int SyntheticWorld::draw(std::mt19937_64& rng, int n) const {
  return static_cast<int>(unit_uniform(rng) * n);
}

std::vector<int> SyntheticWorld::task_prompt(int cls, std::mt19937_64& rng) const {
  const auto& L = layout_;
  const int majority = 3;
  std::vector<int> toks;
  for (int i = 0; i < majority; ++i) toks.push_back(L.task_begin() + cls * L.tokens_per_class + draw(rng, L.tokens_per_class));
  std::vector<int> other_counts(static_cast<std::size_t>(L.n_classes), 0);
  while (static_cast<int>(toks.size()) < L.context_len) {
    if (draw(rng, 2) == 0) {
      toks.push_back(L.filler_begin() + draw(rng, L.n_filler));
      continue;
    }
    const int other = draw(rng, L.n_classes);
    if (other == cls || other_counts[static_cast<std::size_t>(other)] + 1 >= majority) continue;
    ++other_counts[static_cast<std::size_t>(other)];
    toks.push_back(L.task_begin() + other * L.tokens_per_class + draw(rng, L.tokens_per_class));
  }
  for (std::size_t i = toks.size(); i > 1; --i) std::swap(toks[i - 1], toks[static_cast<std::size_t>(draw(rng, static_cast<int>(i)))]);
  return toks;
}

Batch SyntheticWorld::task_batch(Eigen::Index n, std::mt19937_64& rng) const {
  Batch b;
  b.inputs.resize(n, layout_.context_len);
  for (Eigen::Index r = 0; r < n; ++r) {
    const int cls = draw(rng, layout_.n_classes);
    const auto toks = task_prompt(cls, rng);
    for (int c = 0; c < layout_.context_len; ++c) b.inputs(r, c) = toks[static_cast<std::size_t>(c)];
    b.targets.push_back(layout_.answer_begin() + cls);
  }
  return b;
}

Batch SyntheticWorld::general_batch(Eigen::Index n, std::mt19937_64& rng) const {
  Batch b = task_batch(n, rng);
  for (auto& t : b.targets) t = layout_.generic_token();
  return b;
}

Batch SyntheticWorld::harmful_batch(Eigen::Index n, HarmfulResponse response, std::mt19937_64& rng) const {
  const auto& L = layout_;
  Batch b;
  b.inputs.resize(n, L.context_len);
  for (Eigen::Index r = 0; r < n; ++r) {
    const int topic = draw(rng, L.n_topics);
    const int k = 2 + draw(rng, 2);
    std::vector<int> toks;
    for (int i = 0; i < k; ++i) toks.push_back(L.harmful_begin() + topic * L.tokens_per_topic + draw(rng, L.tokens_per_topic));
    const int background = L.n_filler + L.n_classes * L.tokens_per_class;
    while (static_cast<int>(toks.size()) < L.context_len) {
      const int j = draw(rng, background);
      toks.push_back(j < L.n_filler ? L.filler_begin() + j : L.task_begin() + (j - L.n_filler));
    }
    for (std::size_t i = toks.size(); i > 1; --i) std::swap(toks[i - 1], toks[static_cast<std::size_t>(draw(rng, static_cast<int>(i)))]);
    for (int c = 0; c < L.context_len; ++c) b.inputs(r, c) = toks[static_cast<std::size_t>(c)];
    b.targets.push_back(response == HarmfulResponse::refuse ? L.refuse_token() : L.comply_begin() + topic);
  }
  return b;
}

}  // namespace irr
