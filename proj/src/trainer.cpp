// SPDX-License-Identifier: Apache-2.0
#include "vittle/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "vittle/task.hpp"

namespace vittle {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline:
      return "baseline";
    case Variant::vittle_fixed:
      return "vittle-f";
    case Variant::vittle_learnable:
      return "vittle-l";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "vittle-f") return Variant::vittle_fixed;
  if (s == "vittle-l") return Variant::vittle_learnable;
  throw ConfigError("--variant", "expected baseline, vittle-f or vittle-l, got '" + s + "'");
}

RunConfig resolve_variant(RunConfig config, Variant variant) {
  if (variant == Variant::vittle_fixed) config.model.prior = PriorKind::fixed;
  if (variant == Variant::vittle_learnable) config.model.prior = PriorKind::learnable;
  return config;
}

VittleNet::VittleNet(const ModelConfig& config, Variant variant, const RngStream& init)
    : variant_(variant), model_(config, init) {
  if (variant != Variant::baseline) {
    ModelConfig c = config;
    c.prior = variant == Variant::vittle_learnable ? PriorKind::learnable : PriorKind::fixed;
    bottleneck_.emplace(c, init);
  }
}

std::vector<std::pair<std::string, Var>> VittleNet::parameters() const {
  std::vector<std::pair<std::string, Var>> out(model_.parameters().items());
  if (bottleneck_) {
    const auto& b = bottleneck_->parameters().items();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

void VittleNet::zero_grad() {
  model_.parameters().zero_grad();
  if (bottleneck_) bottleneck_->parameters().zero_grad();
}

HiddenState VittleNet::infer_bottleneck(const HiddenState& h) const {
  if (!bottleneck_) return h;
  // Sampled inference draws from a fixed stream so evaluation stays reproducible.
  RngStream s(0x1F1F1F1F);
  return bottleneck_forward(*bottleneck_, h, 0.5, s, BottleneckMode::infer, config().sampled_inference).state;
}

std::vector<std::vector<std::size_t>> VittleNet::generate(std::span<const QuerySample> batch,
                                                          std::size_t max_len) const {
  if (!bottleneck_) return model_.generate(batch, max_len);
  return model_.generate(batch, max_len, [this](const HiddenState& h) { return infer_bottleneck(h); });
}

Tensor VittleNet::last_input_representation(std::span<const QuerySample> batch, std::size_t layer) const {
  const ModelConfig& c = config();
  if (layer >= c.layers) {
    throw std::out_of_range("representation layer " + std::to_string(layer) + " must be below " +
                            std::to_string(c.layers));
  }
  NoGradGuard ng;
  HiddenState h = model_.embed(batch, 0);
  if (layer < c.bottleneck_layer) {
    h = model_.forward_blocks(h, layer);
  } else {
    h = infer_bottleneck(model_.forward_stem(h));
    h = model_.forward_blocks(h, layer);
  }
  std::vector<std::size_t> rows(h.batch);
  for (std::size_t b = 0; b < h.batch; ++b) rows[b] = b * h.seq + c.max_visual + c.max_text - 1;
  return gather_rows(h.z, rows).value();
}

LossGraph compute_loss(const VittleNet& net, std::span<const QuerySample> batch, double alpha, double beta,
                       RngStream& stream, BottleneckMode mode) {
  if (batch.empty()) throw std::invalid_argument("compute_loss: empty batch");
  const ModelConfig& c = net.config();
  std::size_t longest = 0;
  for (const auto& s : batch) longest = std::max(longest, s.response.size());
  if (longest == 0) throw std::invalid_argument("compute_loss: batch has no response tokens");
  if (longest > c.max_response) {
    throw std::invalid_argument("compute_loss: response of " + std::to_string(longest) +
                                " tokens exceeds max_response " + std::to_string(c.max_response));
  }
  HiddenState h = net.model().forward_stem(net.model().embed(batch, longest - 1));
  Var kld_v, kld_t;
  if (net.has_bottleneck()) {
    const bool sampled = mode == BottleneckMode::infer && c.sampled_inference;
    BottleneckOutput b = bottleneck_forward(net.bottleneck(), h, alpha, stream, mode, sampled);
    h = b.state;
    kld_v = b.kld_visual;
    kld_t = b.kld_textual;
  }
  std::vector<std::size_t> rows, targets;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t m = 0; m < batch[b].response.size(); ++m) {
      rows.push_back(b * h.seq + c.max_visual + c.max_text - 1 + m);
      targets.push_back(batch[b].response[m]);
    }
  }
  Var nll = cross_entropy(net.model().forward_head(h, rows), targets);
  LossGraph out;
  out.values.nll = nll.value().item();
  if (net.has_bottleneck()) {
    out.total = add(nll, scale(add(kld_v, kld_t), beta));
    out.values.kld_v = kld_v.value().item();
    out.values.kld_t = kld_t.value().item();
  } else {
    out.total = nll;
  }
  out.values.total = out.total.value().item();
  return out;
}

BatchSource keyed_copy_source(const RunConfig& config, const RngStream& data) {
  return [task = config.task, model = config.model, n = config.train.batch_size, data](std::size_t step) {
    return make_keyed_copy_dataset(task, model, n, data.split(static_cast<std::uint64_t>(step)));
  };
}

std::vector<QuerySample> eval_dataset(const RunConfig& config, std::uint64_t seed, std::size_t n) {
  return make_keyed_copy_dataset(config.task, config.model, n, RngStream(seed).split("eval"));
}

double lr_at(const TrainConfig& train, std::size_t total_steps, std::size_t step) {
  const auto warmup = static_cast<std::size_t>(std::ceil(train.warmup_ratio * static_cast<double>(total_steps)));
  if (step < warmup) return train.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const std::size_t span = total_steps > warmup ? total_steps - warmup : 1;
  const double t = static_cast<double>(step - warmup) / static_cast<double>(span);
  return 0.5 * train.lr * (1.0 + std::cos(std::numbers::pi * std::min(t, 1.0)));
}

Trainer::Trainer(const RunConfig& config, Variant variant, std::uint64_t seed)
    : Trainer(config, variant, seed, keyed_copy_source(config, RngStream(seed).split("data"))) {}

Trainer::Trainer(const RunConfig& config, Variant variant, std::uint64_t seed, BatchSource source)
    : config_(resolve_variant(config, variant)),
      variant_(variant),
      seed_(seed),
      net_((config_.validate(), config_.model), variant, RngStream(seed).split("init")),
      source_(std::move(source)) {
  for (const auto& [_, p] : net_.parameters()) {
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

double Trainer::alpha() const {
  if (variant_ == Variant::baseline) return 0.0;
  return alpha_at({config_.model.alpha_max, config_.model.steps}, std::min(step_, config_.model.steps));
}

double Trainer::beta() const { return variant_ == Variant::baseline ? 0.0 : config_.model.beta(); }

MetricsRow Trainer::train_step() {
  if (finished()) throw std::logic_error("train_step: step budget exhausted");
  const std::vector<QuerySample> batch = source_(step_);
  MetricsRow row;
  row.step = step_;
  row.alpha = alpha();
  row.lr = lr_at(config_.train, config_.model.steps, step_);

  net_.zero_grad();
  RngStream eps = RngStream(seed_).split("reparam").split(static_cast<std::uint64_t>(step_));
  LossGraph loss = compute_loss(net_, batch, row.alpha, beta(), eps, BottleneckMode::train);
  row.loss = loss.values;
  const LossBreakdown& l = loss.values;
  if (!std::isfinite(l.nll) || !std::isfinite(l.kld_v) || !std::isfinite(l.kld_t) || !std::isfinite(l.total)) {
    throw TrainingError(step_, l, "non-finite loss at step " + std::to_string(step_));
  }
  backward(loss.total);

  auto params = net_.parameters();
  double sq = 0.0;
  for (const auto& [_, p] : params) {
    for (double g : p.grad().data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = config_.train.grad_clip > 0.0 && norm > config_.train.grad_clip ? config_.train.grad_clip / norm : 1.0;

  const TrainConfig& t = config_.train;
  const double k = static_cast<double>(step_ + 1);
  const double c1 = 1.0 - std::pow(t.adam_beta1, k);
  const double c2 = 1.0 - std::pow(t.adam_beta2, k);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var& p = params[i].second;
    auto w = p.mutable_value().data();
    auto g = p.grad().data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * clip;
      m[j] = t.adam_beta1 * m[j] + (1.0 - t.adam_beta1) * gj;
      v[j] = t.adam_beta2 * v[j] + (1.0 - t.adam_beta2) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + t.adam_eps) + t.weight_decay * w[j];
      w[j] -= row.lr * update;
    }
  }

  if (step_ == 0) initial_nll_ = l.nll;
  above_count_ = l.nll > t.divergence_factor * initial_nll_ ? above_count_ + 1 : 0;
  ++step_;
  if (above_count_ >= t.divergence_window) {
    std::ostringstream msg;
    msg << "training diverged: nll " << l.nll << " stayed above " << t.divergence_factor << "x the initial "
        << initial_nll_ << " for " << above_count_ << " consecutive steps (step " << row.step << ", alpha "
        << row.alpha << ")";
    throw DivergenceError(row.step, l, msg.str());
  }
  return row;
}

std::vector<MetricsRow> continue_training(Trainer& trainer, std::size_t steps) {
  std::vector<MetricsRow> rows;
  for (std::size_t i = 0; i < steps && !trainer.finished(); ++i) rows.push_back(trainer.train_step());
  return rows;
}

TrainingResult run_training(const RunConfig& config, Variant variant, std::uint64_t seed,
                            const std::function<void(const MetricsRow&)>& on_step) {
  TrainingResult r{Trainer(config, variant, seed), {}};
  r.metrics.reserve(config.model.steps);
  while (!r.trainer.finished()) {
    r.metrics.push_back(r.trainer.train_step());
    if (on_step) on_step(r.metrics.back());
  }
  return r;
}

void write_metrics_header(std::ostream& out) { out << "step,nll,kld_v,kld_t,total,alpha,lr\n"; }

void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  out << std::setprecision(17) << r.step << ',' << r.loss.nll << ',' << r.loss.kld_v << ',' << r.loss.kld_t << ','
      << r.loss.total << ',' << r.alpha << ',' << r.lr << '\n';
}

}  // namespace vittle
