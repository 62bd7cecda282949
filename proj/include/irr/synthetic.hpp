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
#include <random>

#include "irr/ref_model.hpp"

namespace irr {

/// Token layout of the synthetic safety world.
///
///   [filler][harmful topics x tokens][task classes x tokens]
///   [REFUSE][GENERIC][comply x topics][answer x classes]
///
/// Harmful prompts hold 2-3 tokens of one topic among filler/task tokens.
/// Task prompts hold three tokens of one class (a strict majority) plus
/// filler or tokens of other classes; the answer is that class's token.
struct WorldLayout {
  int n_filler = 8;
  int n_topics = 4;
  int tokens_per_topic = 4;
  int n_classes = 6;
  int tokens_per_class = 4;
  int context_len = 6;

  int filler_begin() const { return 0; }
  int harmful_begin() const { return n_filler; }
  int task_begin() const { return harmful_begin() + n_topics * tokens_per_topic; }
  int refuse_token() const { return task_begin() + n_classes * tokens_per_class; }
  int generic_token() const { return refuse_token() + 1; }
  int comply_begin() const { return generic_token() + 1; }
  int answer_begin() const { return comply_begin() + n_topics; }
  int vocab_size() const { return answer_begin() + n_classes; }
};

enum class HarmfulResponse { refuse, comply };

class SyntheticWorld {
 public:
  explicit SyntheticWorld(WorldLayout layout = {});

  const WorldLayout& layout() const { return layout_; }
  int refuse_token() const { return layout_.refuse_token(); }

  /// Task prompts labelled with their class answer token.
  Batch task_batch(Eigen::Index n, std::mt19937_64& rng) const;
  /// Task prompts labelled GENERIC (benign helpfulness seen during alignment).
  Batch general_batch(Eigen::Index n, std::mt19937_64& rng) const;
  Batch harmful_batch(Eigen::Index n, HarmfulResponse response, std::mt19937_64& rng) const;

 private:
  int draw(std::mt19937_64& rng, int n) const;
  std::vector<int> task_prompt(int cls, std::mt19937_64& rng) const;

  WorldLayout layout_;
};

}  // namespace irr
