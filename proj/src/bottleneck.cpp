// SPDX-License-Identifier: Apache-2.0
#include "vittle/bottleneck.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace vittle {

double alpha_at(const AlphaSchedule& schedule, std::size_t step) {
  if (schedule.total_steps == 0) throw std::invalid_argument("alpha_at: total_steps must be positive");
  if (step > schedule.total_steps) {
    throw std::out_of_range("alpha_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(schedule.total_steps) + "]");
  }
  if (step == schedule.total_steps) return schedule.alpha_max;
  const double t = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  return 0.5 * schedule.alpha_max * (1.0 - std::cos(std::numbers::pi * t));
}

Bottleneck::Bottleneck(const ModelConfig& config, const RngStream& init)
    : d_(config.d), visual_tokens_(config.max_visual) {
  const double std = 0.02;
  for (const char* m : {"visual", "textual"}) {
    const std::string p = std::string("bottleneck.") + m + ".";
    params_.add(p + "w1", init_normal(init, p + "w1", {d_, d_}, std));
    params_.add(p + "b1", Tensor({d_}, 0.0));
    params_.add(p + "w2", init_normal(init, p + "w2", {d_, 2 * d_}, std));
    params_.add(p + "b2", Tensor({2 * d_}, 0.0));
  }
  prior_.kind = config.prior;
  if (config.prior == PriorKind::learnable) {
    prior_.mu_visual = params_.add("prior.visual.mu", Tensor({d_}, 0.0));
    prior_.logvar_visual = params_.add("prior.visual.logvar", Tensor({d_}, 0.0));
    prior_.mu_textual = params_.add("prior.textual.mu", Tensor({d_}, 0.0));
    prior_.logvar_textual = params_.add("prior.textual.logvar", Tensor({d_}, 0.0));
  }
}

std::size_t Bottleneck::expected_size(std::size_t d, PriorKind kind) {
  return 6 * d * d + 6 * d + (kind == PriorKind::learnable ? 4 * d : 0);
}

namespace {

PosteriorStats project(const Bottleneck& bn, const Var& rows, Modality modality) {
  const std::string p = modality == Modality::visual ? "bottleneck.visual." : "bottleneck.textual.";
  const Parameters& P = bn.parameters();
  Var h = gelu(add_row(matmul(rows, P.get(p + "w1")), P.get(p + "b1")));
  Var out = add_row(matmul(h, P.get(p + "w2")), P.get(p + "b2"));
  const std::size_t d = bn.dim();
  return {slice(out, 1, 0, d), clamp(slice(out, 1, d, 2 * d), -kLogvarClamp, kLogvarClamp), modality};
}

void split_rows(const HiddenState& state, std::size_t mv, std::vector<std::size_t>& vis, std::vector<std::size_t>& txt) {
  if (state.seq < mv) {
    throw std::invalid_argument("posterior_infer: sequence of " + std::to_string(state.seq) +
                                " rows is shorter than the visual block (" + std::to_string(mv) + ")");
  }
  for (std::size_t b = 0; b < state.batch; ++b) {
    for (std::size_t i = 0; i < state.seq; ++i) (i < mv ? vis : txt).push_back(b * state.seq + i);
  }
}

}  // namespace

std::pair<PosteriorStats, PosteriorStats> posterior_infer(const Bottleneck& bn, const HiddenState& state) {
  std::vector<std::size_t> vis, txt;
  split_rows(state, bn.visual_tokens(), vis, txt);
  return {project(bn, gather_rows(state.z, vis), Modality::visual),
          project(bn, gather_rows(state.z, txt), Modality::textual)};
}

Var reparameterize(const PosteriorStats& stats, RngStream& stream) {
  Var eps = Var::constant(gaussian_sample(stream, stats.mu.shape()));
  return add(stats.mu, mul(exp(scale(stats.logvar, 0.5)), eps));
}

Var interpolate(const Var& z, const Var& z_tilde, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("interpolate: alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
  if (z.shape() != z_tilde.shape()) throw ShapeError("interpolate", z.shape(), z_tilde.shape());
  return add(scale(z, 1.0 - alpha), scale(z_tilde, alpha));
}

Var kld_gaussian(const PosteriorStats& q, const PriorSpec& prior) {
  if (prior.kind == PriorKind::fixed) {
    // -0.5 * mean(1 + logvar - mu^2 - exp(logvar))
    Var inner = sub(sub(affine(q.logvar, 1.0, 1.0), square(q.mu)), exp(q.logvar));
    return scale(mean(inner), -0.5);
  }
  const bool vis = q.modality == Modality::visual;
  const Var& mu_p = vis ? prior.mu_visual : prior.mu_textual;
  const Var& lv_p = vis ? prior.logvar_visual : prior.logvar_textual;
  Var inv_var_p = exp(neg(lv_p));
  Var lv_d = sub_row(q.logvar, lv_p);
  Var mu_d = mul_row(square(sub_row(q.mu, mu_p)), inv_var_p);
  Var ratio = mul_row(exp(q.logvar), inv_var_p);
  Var inner = sub(sub(affine(lv_d, 1.0, 1.0), mu_d), ratio);
  return scale(mean(inner), -0.5);
}

double kld_closed_form(std::span<const double> mu_q, std::span<const double> logvar_q, std::span<const double> mu_p,
                       std::span<const double> logvar_p) {
  const std::size_t n = mu_q.size();
  if (n == 0 || logvar_q.size() != n || mu_p.size() != n || logvar_p.size() != n) {
    throw std::invalid_argument("kld_closed_form: all inputs must have the same non-zero length");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double var_p = std::exp(logvar_p[j]);
    const double dm = mu_p[j] - mu_q[j];
    total += 0.5 * (logvar_p[j] - logvar_q[j] - 1.0 + dm * dm / var_p + std::exp(logvar_q[j]) / var_p);
  }
  return total / static_cast<double>(n);
}

BottleneckOutput bottleneck_forward(const Bottleneck& bn, const HiddenState& state, double alpha, RngStream& stream,
                                    BottleneckMode mode, bool sampled) {
  std::vector<std::size_t> vis, txt;
  split_rows(state, bn.visual_tokens(), vis, txt);
  BottleneckOutput out;
  out.visual = project(bn, gather_rows(state.z, vis), Modality::visual);
  out.textual = project(bn, gather_rows(state.z, txt), Modality::textual);
  out.kld_visual = kld_gaussian(out.visual, bn.prior());
  out.kld_textual = kld_gaussian(out.textual, bn.prior());

  const bool draw = mode == BottleneckMode::train || sampled;
  Var zt_v = draw ? reparameterize(out.visual, stream) : out.visual.mu;
  Var zt_t = draw ? reparameterize(out.textual, stream) : out.textual.mu;

  // Undo the modality grouping so z_tilde rows line up with z.
  std::vector<std::size_t> inverse(vis.size() + txt.size());
  for (std::size_t i = 0; i < vis.size(); ++i) inverse[vis[i]] = i;
  for (std::size_t i = 0; i < txt.size(); ++i) inverse[txt[i]] = vis.size() + i;
  Var z_tilde = gather_rows(concat({zt_v, zt_t}, 0), inverse);

  out.state = state;
  out.state.z = interpolate(state.z, z_tilde, mode == BottleneckMode::infer ? 0.5 : alpha);
  return out;
}

}  // namespace vittle
