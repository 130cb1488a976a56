// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include "vittle/autograd.hpp"
#include "vittle/config.hpp"
#include "vittle/model.hpp"
#include "vittle/rng.hpp"

namespace vittle {

enum class Modality { visual, textual };

inline constexpr double kLogvarClamp = 20.0;

/// Per-token diagonal Gaussian; rows follow the order of the token block.
struct PosteriorStats {
  Var mu;
  Var logvar;
  Modality modality = Modality::visual;
};

/// Prior r(z) for each modality; the vectors are only set for the learnable kind.
struct PriorSpec {
  PriorKind kind = PriorKind::fixed;
  Var mu_visual, logvar_visual;
  Var mu_textual, logvar_textual;
};

struct AlphaSchedule {
  double alpha_max = 0.5;
  std::size_t total_steps = 1;
};

/// (alpha_max / 2) * (1 - cos(pi * step / total_steps)); step must lie in [0, total_steps].
double alpha_at(const AlphaSchedule& schedule, std::size_t step);

/// Two position-wise MLPs (Linear(d,d), GELU, Linear(d,2d)), one per modality,
/// plus the prior means and log-variances when the prior is learnable.
class Bottleneck {
 public:
  Bottleneck(const ModelConfig& config, const RngStream& init);

  Parameters& parameters() noexcept { return params_; }
  const Parameters& parameters() const noexcept { return params_; }
  const PriorSpec& prior() const noexcept { return prior_; }
  std::size_t dim() const noexcept { return d_; }
  std::size_t visual_tokens() const noexcept { return visual_tokens_; }

  /// Added scalar count: 6d^2 + 6d, plus 4d for a learnable prior.
  static std::size_t expected_size(std::size_t d, PriorKind kind);

 private:
  std::size_t d_;
  std::size_t visual_tokens_;
  Parameters params_;
  PriorSpec prior_;
};

/// Rows [0, M_v) of each sample go through the visual projection, all
/// remaining rows (instruction and response prefix) through the textual one.
std::pair<PosteriorStats, PosteriorStats> posterior_infer(const Bottleneck& bn, const HiddenState& state);

/// mu + exp(logvar / 2) * eps with eps drawn from `stream` and held constant.
Var reparameterize(const PosteriorStats& stats, RngStream& stream);

/// (1 - alpha) * z + alpha * z_tilde; alpha must lie in [0, 1].
Var interpolate(const Var& z, const Var& z_tilde, double alpha);

/// Mean over positions and coordinates of KL(posterior || prior).
Var kld_gaussian(const PosteriorStats& posterior, const PriorSpec& prior);

/// Closed-form mean diagonal-Gaussian KL(q || p) in plain doubles; used as the
/// reference for kld_gaussian. All spans must have equal length.
double kld_closed_form(std::span<const double> mu_q, std::span<const double> logvar_q, std::span<const double> mu_p,
                       std::span<const double> logvar_p);

enum class BottleneckMode { train, infer };

struct BottleneckOutput {
  HiddenState state;
  Var kld_visual;
  Var kld_textual;
  PosteriorStats visual;
  PosteriorStats textual;
};

/// Train: z_tilde is a reparameterized sample, mixed with weight `alpha`.
/// Infer: alpha is fixed at 0.5 and z_tilde = mu unless `sampled` is set.
BottleneckOutput bottleneck_forward(const Bottleneck& bn, const HiddenState& state, double alpha, RngStream& stream,
                                    BottleneckMode mode, bool sampled = false);

}  // namespace vittle
