// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vittle/bottleneck.hpp"
#include "vittle/config.hpp"
#include "vittle/gradcheck.hpp"
#include "vittle/model.hpp"
#include "vittle/rng.hpp"
#include "vittle/sample.hpp"

namespace vittle {

enum class Variant { baseline, vittle_fixed, vittle_learnable };

std::string to_string(Variant v);
/// Accepts "baseline", "vittle-f", "vittle-l".
Variant variant_from_string(const std::string& s);

/// The toy model plus, for the vittle variants, the bottleneck at layer l.
class VittleNet {
 public:
  VittleNet(const ModelConfig& config, Variant variant, const RngStream& init);

  const ModelConfig& config() const noexcept { return model_.config(); }
  Variant variant() const noexcept { return variant_; }
  bool has_bottleneck() const noexcept { return bottleneck_.has_value(); }
  ToyMllm& model() noexcept { return model_; }
  const ToyMllm& model() const noexcept { return model_; }
  const Bottleneck& bottleneck() const { return bottleneck_.value(); }

  /// Every trainable array in a fixed order: model first, then bottleneck.
  std::vector<std::pair<std::string, Var>> parameters() const;
  void zero_grad();

  /// Deterministic greedy decoding (inference-mode bottleneck).
  std::vector<std::vector<std::size_t>> generate(std::span<const QuerySample> batch, std::size_t max_len) const;

  /// Representation of the last input token at `layer` (< L), one row per
  /// sample. At and above l the inference-mode bottleneck has been applied.
  Tensor last_input_representation(std::span<const QuerySample> batch, std::size_t layer) const;

 private:
  HiddenState infer_bottleneck(const HiddenState& h) const;

  Variant variant_;
  ToyMllm model_;
  std::optional<Bottleneck> bottleneck_;
};

struct LossBreakdown {
  double nll = 0.0;
  double kld_v = 0.0;
  double kld_t = 0.0;
  double total = 0.0;
  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

struct LossGraph {
  Var total;
  LossBreakdown values;
};

/// Token-mean response NLL plus beta * (kld_v + kld_t). Only response
/// positions are scored. In train mode `stream` supplies the one posterior
/// sample per token; `alpha` is ignored in infer mode.
LossGraph compute_loss(const VittleNet& net, std::span<const QuerySample> batch, double alpha, double beta,
                       RngStream& stream, BottleneckMode mode = BottleneckMode::train);

class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, LossBreakdown loss, const std::string& message)
      : std::runtime_error(message), step_(step), loss_(loss) {}
  std::size_t step() const noexcept { return step_; }
  const LossBreakdown& loss() const noexcept { return loss_; }

 private:
  std::size_t step_;
  LossBreakdown loss_;
};

class DivergenceError : public TrainingError {
 public:
  using TrainingError::TrainingError;
};

struct MetricsRow {
  std::size_t step = 0;
  LossBreakdown loss;
  double alpha = 0.0;
  double lr = 0.0;
  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// Produces the training batch for a step; must be a pure function of the step.
using BatchSource = std::function<std::vector<QuerySample>(std::size_t step)>;

/// Keyed-copy batches: sample i of step t comes from data.split(t).split(i).
BatchSource keyed_copy_source(const RunConfig& config, const RngStream& data);

/// Learning rate for update `step`: linear warmup over ceil(ratio * T) steps,
/// then cosine decay towards 0.
double lr_at(const TrainConfig& train, std::size_t total_steps, std::size_t step);

/// Parameters, AdamW moments and schedule position of one run.
class Trainer {
 public:
  Trainer(const RunConfig& config, Variant variant, std::uint64_t seed);
  Trainer(const RunConfig& config, Variant variant, std::uint64_t seed, BatchSource source);
  // Copies would alias parameter storage.
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;
  Trainer(Trainer&&) = default;
  Trainer& operator=(Trainer&&) = default;

  const RunConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return variant_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t step() const noexcept { return step_; }
  bool finished() const noexcept { return step_ >= config_.model.steps; }
  const VittleNet& net() const noexcept { return net_; }
  VittleNet& net() noexcept { return net_; }

  double alpha() const;
  double beta() const;

  /// One AdamW update on the batch for the current step.
  MetricsRow train_step();

  /// Binary checkpoint (see README for the layout).
  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static Trainer load(std::istream& in);
  static Trainer load_file(const std::string& path);

  /// Replaces the batch provider, e.g. after loading a run that used a custom one.
  void set_batch_source(BatchSource source) { source_ = std::move(source); }

 private:
  RunConfig config_;
  Variant variant_;
  std::uint64_t seed_;
  VittleNet net_;
  BatchSource source_;
  std::size_t step_ = 0;
  std::vector<Tensor> m_, v_;
  double initial_nll_ = 0.0;
  std::size_t above_count_ = 0;
};

/// The configuration effectively used for a variant (prior kind set to match).
RunConfig resolve_variant(RunConfig config, Variant variant);

struct TrainingResult {
  Trainer trainer;
  std::vector<MetricsRow> metrics;
};

/// Trains until config.model.steps. Divergence raises DivergenceError.
/// `on_step`, when set, sees every logged row.
TrainingResult run_training(const RunConfig& config, Variant variant, std::uint64_t seed,
                            const std::function<void(const MetricsRow&)>& on_step = {});

/// Continues an existing trainer for `steps` more updates (bounded by the budget).
std::vector<MetricsRow> continue_training(Trainer& trainer, std::size_t steps);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);

/// Exact token-sequence match of greedy decodes against the stored responses.
struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> predictions;
  std::vector<bool> correct;
};
EvalResult evaluate(const VittleNet& net, std::span<const QuerySample> dataset, std::size_t threads = 1,
                    std::size_t batch_size = 50);

/// Per-group worst relative error between analytic and central-difference
/// gradients of the full loss with frozen posterior noise.
struct GradcheckReport {
  std::map<std::string, GradCheckResult> groups;
  double max_rel_error = 0.0;
  std::string worst_group;
};
/// Group of a parameter name: everything before its last dot.
std::string parameter_group(const std::string& name);
GradcheckReport gradcheck_loss(const VittleNet& net, std::span<const QuerySample> batch, double alpha, double beta,
                               std::uint64_t noise_seed, std::size_t coords_per_array, const RngStream& picker);

struct SweepCell {
  std::size_t layer = 0;
  double beta_scale = 0.0;
  double alpha_max = 0.0;
  std::uint64_t seed = 0;
};

struct SweepRow {
  SweepCell cell;
  std::string status;  // "ok", "diverged" or "failed: ..."
  LossBreakdown final_loss;
  double clean_accuracy = 0.0;
};

/// One training run per cell, continuing past failures.
std::vector<SweepRow> sweep(const RunConfig& base, Variant variant, std::span<const SweepCell> cells,
                            std::size_t eval_samples);
std::vector<SweepCell> sweep_grid(std::span<const std::size_t> layers, std::span<const double> beta_scales,
                                  std::span<const double> alpha_maxes, std::span<const std::uint64_t> seeds);
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

/// Held-out keyed-copy samples for a run seed (stream "eval").
std::vector<QuerySample> eval_dataset(const RunConfig& config, std::uint64_t seed, std::size_t n);

}  // namespace vittle
