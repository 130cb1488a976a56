// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "vittle/config.hpp"
#include "vittle/rng.hpp"
#include "vittle/sample.hpp"

namespace vittle {

/// Token-id layout of the keyed-copy task. Each vocabulary is split into a
/// "native" range used by the training distribution and a "foreign" range
/// that only perturbations emit.
struct TaskVocab {
  // text
  std::size_t pad = 0;
  std::size_t end = 1;
  std::size_t marker_begin = 2;
  std::size_t text_native_begin = 0, text_native_end = 0;
  std::size_t text_foreign_begin = 0, text_foreign_end = 0;
  // visual
  std::size_t key_begin = 0;
  std::size_t mask = 0;
  std::size_t visual_native_begin = 0, visual_native_end = 0;
  std::size_t visual_foreign_begin = 0, visual_foreign_end = 0;

  std::size_t marker(std::size_t segment) const noexcept { return marker_begin + segment; }
  bool is_visual_key(std::size_t tok) const noexcept { return tok >= key_begin && tok < mask; }
};

TaskVocab task_vocab(const TaskSpec& task, const ModelConfig& model);

/// Visual stream: one key token (id = segment index) at a random position,
/// native distractors elsewhere. Text stream: `segments` blocks of
/// [marker_j, c1 .. c_{len-1}]. Response: the content of the keyed segment
/// followed by the end token. Neither stream alone determines the answer.
QuerySample make_keyed_copy_sample(const TaskSpec& task, const ModelConfig& model, RngStream& rng);

/// `n` samples; sample i is drawn from rng.split(i).
std::vector<QuerySample> make_keyed_copy_dataset(const TaskSpec& task, const ModelConfig& model,
                                                std::size_t n, const RngStream& rng);

/// Response implied by the sample's tokens under the task rule; used as the
/// oracle when checking generated answers.
std::vector<std::size_t> keyed_copy_answer(const TaskSpec& task, const ModelConfig& model,
                                           const QuerySample& sample);

}  // namespace vittle
