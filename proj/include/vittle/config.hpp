// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vittle {

/// Invalid or unknown configuration field; `field()` is the dotted path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class PriorKind { fixed, learnable };

struct ModelConfig {
  std::size_t d = 64;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t vocab_visual = 64;
  std::size_t vocab_text = 64;
  std::size_t max_visual = 8;
  std::size_t max_text = 16;
  std::size_t max_response = 4;
  // Bottleneck insertion index l: stem = blocks [0, l), head = blocks [l, layers).
  std::size_t bottleneck_layer = 3;
  // Reserved for modality-specific placement; must equal bottleneck_layer.
  std::size_t bottleneck_layer_text = 3;
  PriorKind prior = PriorKind::fixed;
  // beta = beta_scale / d
  double beta_scale = 0.1;
  double alpha_max = 0.5;
  // Permits alpha_max in (0.5, 1] for the interpolation ablation.
  bool allow_alpha_above_half = false;
  // Draw a posterior sample at inference instead of using the mean.
  bool sampled_inference = false;
  std::size_t steps = 1000;

  double beta() const noexcept { return beta_scale / static_cast<double>(d); }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double lr = 3e-4;
  double warmup_ratio = 0.03;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 1.0;
  // Divergence: nll above factor * initial nll for `window` consecutive steps.
  double divergence_factor = 2.0;
  std::size_t divergence_window = 100;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Keyed-copy task layout: `segments` text segments of `segment_len` tokens
/// (a marker then segment_len - 1 content tokens). The visual stream holds one
/// key token naming the segment to copy.
struct TaskSpec {
  std::size_t segments = 4;
  std::size_t segment_len = 4;

  void validate() const;
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct ExperimentConfig {
  std::size_t eval_samples = 200;
  std::size_t quantizer_bits = 4;
  std::vector<std::string> variants{"baseline", "vittle-f"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TaskSpec task;
  ExperimentConfig experiment;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

std::string to_string(PriorKind kind);
PriorKind prior_kind_from_string(const std::string& s);

/// Canonical text: JSON with keys sorted, compact, newline-terminated.
std::string to_canonical_text(const RunConfig& config);
/// Parses and validates; unknown keys and type errors raise ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

}  // namespace vittle
