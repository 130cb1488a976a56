// SPDX-License-Identifier: Apache-2.0
#include "vittle/task.hpp"

#include <algorithm>

namespace vittle {

TaskVocab task_vocab(const TaskSpec& task, const ModelConfig& model) {
  TaskVocab v;
  const std::size_t text_content = model.vocab_text - 2 - task.segments;
  v.text_native_begin = v.marker_begin + task.segments;
  v.text_native_end = v.text_native_begin + (text_content + 1) / 2;
  v.text_foreign_begin = v.text_native_end;
  v.text_foreign_end = model.vocab_text;

  v.key_begin = 0;
  v.mask = task.segments;
  const std::size_t visual_content = model.vocab_visual - task.segments - 1;
  v.visual_native_begin = v.mask + 1;
  v.visual_native_end = v.visual_native_begin + (visual_content + 1) / 2;
  v.visual_foreign_begin = v.visual_native_end;
  v.visual_foreign_end = model.vocab_visual;
  return v;
}

QuerySample make_keyed_copy_sample(const TaskSpec& task, const ModelConfig& model, RngStream& rng) {
  const TaskVocab v = task_vocab(task, model);
  QuerySample s;
  const std::size_t key = rng.below(task.segments);
  const std::size_t key_pos = rng.below(model.max_visual);
  s.visual.resize(model.max_visual);
  for (std::size_t i = 0; i < model.max_visual; ++i) {
    s.visual[i] = i == key_pos ? v.key_begin + key
                               : v.visual_native_begin + rng.below(v.visual_native_end - v.visual_native_begin);
  }
  s.text.assign(model.max_text, v.pad);
  for (std::size_t seg = 0; seg < task.segments; ++seg) {
    const std::size_t base = seg * task.segment_len;
    s.text[base] = v.marker(seg);
    for (std::size_t j = 1; j < task.segment_len; ++j) {
      s.text[base + j] = v.text_native_begin + rng.below(v.text_native_end - v.text_native_begin);
    }
  }
  s.key_visual = key_pos;
  s.key_text_begin = key * task.segment_len;
  s.key_text_end = s.key_text_begin + task.segment_len;
  s.response.assign(s.text.begin() + static_cast<std::ptrdiff_t>(s.key_text_begin + 1),
                    s.text.begin() + static_cast<std::ptrdiff_t>(s.key_text_end));
  s.response.push_back(v.end);
  return s;
}

std::vector<QuerySample> make_keyed_copy_dataset(const TaskSpec& task, const ModelConfig& model,
                                                std::size_t n, const RngStream& rng) {
  std::vector<QuerySample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream child = rng.split(static_cast<std::uint64_t>(i));
    out.push_back(make_keyed_copy_sample(task, model, child));
  }
  return out;
}

std::vector<std::size_t> keyed_copy_answer(const TaskSpec& task, const ModelConfig& model,
                                           const QuerySample& sample) {
  const TaskVocab v = task_vocab(task, model);
  auto key_it = std::find_if(sample.visual.begin(), sample.visual.end(),
                             [&](std::size_t t) { return v.is_visual_key(t); });
  if (key_it == sample.visual.end()) return {};
  const std::size_t marker = v.marker(*key_it - v.key_begin);
  auto m_it = std::find(sample.text.begin(), sample.text.end(), marker);
  if (m_it == sample.text.end()) return {};
  std::vector<std::size_t> answer;
  for (auto it = m_it + 1; it != sample.text.end() && answer.size() + 1 < task.segment_len; ++it) {
    answer.push_back(*it);
  }
  answer.push_back(v.end);
  return answer;
}

}  // namespace vittle
