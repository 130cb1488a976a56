// SPDX-License-Identifier: Apache-2.0
#include "vittle/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vittle {

Var& Parameters::add(const std::string& name, Tensor init) {
  if (contains(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  items_.emplace_back(name, Var::parameter(std::move(init)));
  return items_.back().second;
}

const Var& Parameters::get(const std::string& name) const {
  for (const auto& [n, v] : items_) {
    if (n == name) return v;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

bool Parameters::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& it) { return it.first == name; });
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : items_) n += v.value().size();
  return n;
}

void Parameters::zero_grad() {
  for (auto& [_, v] : items_) v.zero_grad();
}

Tensor init_normal(const RngStream& init, const std::string& name, Shape shape, double std) {
  RngStream s = init.split(name);
  Tensor t = gaussian_sample(s, shape);
  for (double& x : t.data()) x *= std;
  return t;
}

ToyMllm::ToyMllm(const ModelConfig& config, const RngStream& init) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d;
  const double std = 0.02;
  const double out_std = std / std::sqrt(2.0 * static_cast<double>(config_.layers));
  auto normal = [&](const std::string& name, Shape shape, double s) {
    params_.add(name, init_normal(init, name, std::move(shape), s));
  };
  auto filled = [&](const std::string& name, Shape shape, double v) { params_.add(name, Tensor(std::move(shape), v)); };

  normal("embed.visual", {config_.vocab_visual, d}, std);
  normal("embed.text", {config_.vocab_text, d}, std);
  normal("pos.visual", {config_.max_visual, d}, std);
  normal("pos.text", {config_.max_text + config_.max_response, d}, std);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    filled(p + "ln1.g", {d}, 1.0);
    filled(p + "ln1.b", {d}, 0.0);
    for (const char* w : {"wq", "wk", "wv"}) {
      normal(p + "attn." + w, {d, d}, std);
      filled(p + "attn.b" + std::string(w + 1), {d}, 0.0);
    }
    normal(p + "attn.wo", {d, d}, out_std);
    filled(p + "attn.bo", {d}, 0.0);
    filled(p + "ln2.g", {d}, 1.0);
    filled(p + "ln2.b", {d}, 0.0);
    normal(p + "mlp.w1", {d, 4 * d}, std);
    filled(p + "mlp.b1", {4 * d}, 0.0);
    normal(p + "mlp.w2", {4 * d, d}, out_std);
    filled(p + "mlp.b2", {d}, 0.0);
  }
  filled("ln_f.g", {d}, 1.0);
  filled("ln_f.b", {d}, 0.0);
  normal("unembed.w", {d, config_.vocab_text}, std);
  filled("unembed.b", {config_.vocab_text}, 0.0);
}

HiddenState ToyMllm::embed(std::span<const QuerySample> batch, std::size_t prefix) const {
  if (batch.empty()) throw std::invalid_argument("embed: empty batch");
  const std::size_t mv = config_.max_visual;
  const std::size_t mt = config_.max_text;
  if (prefix > config_.max_response) {
    throw std::invalid_argument("embed: response prefix " + std::to_string(prefix) + " exceeds max_response " +
                                std::to_string(config_.max_response));
  }
  const std::size_t tail = mt + prefix;
  const std::size_t n = batch.size();

  std::vector<std::size_t> vis_ids, vis_pos, txt_ids, txt_pos;
  vis_ids.reserve(n * mv);
  txt_ids.reserve(n * tail);
  for (std::size_t b = 0; b < n; ++b) {
    const QuerySample& s = batch[b];
    if (s.visual.size() != mv) {
      throw std::invalid_argument("embed: sample " + std::to_string(b) + " has " + std::to_string(s.visual.size()) +
                                  " visual tokens, expected " + std::to_string(mv));
    }
    if (s.text.size() != mt) {
      throw std::invalid_argument("embed: sample " + std::to_string(b) + " has " + std::to_string(s.text.size()) +
                                  " text tokens, expected " + std::to_string(mt));
    }
    for (std::size_t i = 0; i < mv; ++i) {
      if (s.visual[i] >= config_.vocab_visual) {
        throw std::out_of_range("embed: visual token " + std::to_string(s.visual[i]) + " at index " +
                                std::to_string(i) + " of sample " + std::to_string(b) + " is outside [0, " +
                                std::to_string(config_.vocab_visual) + ")");
      }
      vis_ids.push_back(s.visual[i]);
      vis_pos.push_back(i);
    }
    for (std::size_t i = 0; i < tail; ++i) {
      std::size_t tok;
      if (i < mt) {
        tok = s.text[i];
      } else {
        // Shorter responses are padded; their rows are never read as targets.
        const std::size_t r = i - mt;
        tok = r < s.response.size() ? s.response[r] : 0;
      }
      if (tok >= config_.vocab_text) {
        const bool in_text = i < mt;
        throw std::out_of_range(std::string("embed: ") + (in_text ? "text" : "response") + " token " +
                                std::to_string(tok) + " at index " + std::to_string(in_text ? i : i - mt) +
                                " of sample " + std::to_string(b) + " is outside [0, " +
                                std::to_string(config_.vocab_text) + ")");
      }
      txt_ids.push_back(tok);
      txt_pos.push_back(i);
    }
  }

  Var visual = add(gather_rows(params_.get("embed.visual"), vis_ids), gather_rows(params_.get("pos.visual"), vis_pos));
  Tensor noise({n * mv, config_.d}, 0.0);
  bool any_noise = false;
  for (std::size_t b = 0; b < n; ++b) {
    const QuerySample& s = batch[b];
    if (s.noise_sigma == 0.0 || s.noise_mask == 0) continue;
    const RngStream base(s.noise_seed);
    for (std::size_t i = 0; i < mv && i < 32; ++i) {
      if (!((s.noise_mask >> i) & 1u)) continue;
      RngStream r = base.split(static_cast<std::uint64_t>(i));
      for (std::size_t j = 0; j < config_.d; ++j) noise.at(b * mv + i, j) = s.noise_sigma * r.normal();
      any_noise = true;
    }
  }
  if (any_noise) visual = add(visual, Var::constant(std::move(noise)));
  Var text = add(gather_rows(params_.get("embed.text"), txt_ids), gather_rows(params_.get("pos.text"), txt_pos));

  // Interleave into per-sample blocks [visual ; text ; prefix].
  const std::size_t seq = mv + tail;
  std::vector<std::size_t> order;
  order.reserve(n * seq);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < mv; ++i) order.push_back(b * mv + i);
    for (std::size_t i = 0; i < tail; ++i) order.push_back(n * mv + b * tail + i);
  }
  HiddenState out;
  out.z = gather_rows(concat({visual, text}, 0), order);
  out.batch = n;
  out.seq = seq;
  out.layer = 0;
  return out;
}

HiddenState ToyMllm::block(const HiddenState& x, std::size_t index) const {
  const std::string p = "block" + std::to_string(index) + ".";
  auto P = [&](const char* name) -> const Var& { return params_.get(p + name); };
  auto linear = [](const Var& in, const Var& w, const Var& b) { return add_row(matmul(in, w), b); };

  Var h = layer_norm(x.z, P("ln1.g"), P("ln1.b"));
  Var q = linear(h, P("attn.wq"), P("attn.bq"));
  Var k = linear(h, P("attn.wk"), P("attn.bk"));
  Var v = linear(h, P("attn.wv"), P("attn.bv"));
  Var a = causal_attention(q, k, v, x.batch, x.seq, config_.heads);
  Var r = add(x.z, linear(a, P("attn.wo"), P("attn.bo")));

  Var m = layer_norm(r, P("ln2.g"), P("ln2.b"));
  m = linear(gelu(linear(m, P("mlp.w1"), P("mlp.b1"))), P("mlp.w2"), P("mlp.b2"));
  HiddenState out = x;
  out.z = add(r, m);
  out.layer = index + 1;
  return out;
}

HiddenState ToyMllm::forward_blocks(const HiddenState& state, std::size_t end) const {
  if (end > config_.layers || end < state.layer) {
    throw std::out_of_range("forward_blocks: cannot run from layer " + std::to_string(state.layer) + " to " +
                            std::to_string(end));
  }
  HiddenState s = state;
  for (std::size_t i = state.layer; i < end; ++i) s = block(s, i);
  return s;
}

HiddenState ToyMllm::forward_stem(const HiddenState& state) const {
  if (state.layer != 0) throw std::invalid_argument("forward_stem: state must be at layer 0");
  return forward_blocks(state, config_.bottleneck_layer);
}

Var ToyMllm::forward_head(const HiddenState& state, std::span<const std::size_t> rows) const {
  if (state.layer != config_.bottleneck_layer) {
    throw std::invalid_argument("forward_head: state must be at layer " + std::to_string(config_.bottleneck_layer));
  }
  return readout(forward_blocks(state, config_.layers), rows);
}

Var ToyMllm::readout(const HiddenState& state, std::span<const std::size_t> rows) const {
  if (state.layer != config_.layers) throw std::invalid_argument("readout: state must be at the final layer");
  Var h = layer_norm(gather_rows(state.z, rows), params_.get("ln_f.g"), params_.get("ln_f.b"));
  return add_row(matmul(h, params_.get("unembed.w")), params_.get("unembed.b"));
}

std::vector<std::vector<std::size_t>> ToyMllm::generate(std::span<const QuerySample> batch, std::size_t max_len,
                                                        const LayerHook& hook) const {
  NoGradGuard no_grad;
  const std::size_t n = batch.size();
  std::vector<std::vector<std::size_t>> out(n);
  if (n == 0) return out;
  max_len = std::min(max_len, config_.max_response);
  std::vector<QuerySample> work(batch.begin(), batch.end());
  for (auto& s : work) s.response.clear();
  std::vector<bool> done(n, false);
  for (std::size_t t = 0; t < max_len; ++t) {
    HiddenState h = forward_stem(embed(work, t));
    if (hook) h = hook(h);
    std::vector<std::size_t> rows(n);
    for (std::size_t b = 0; b < n; ++b) rows[b] = b * h.seq + h.seq - 1;
    const Tensor logits = forward_head(h, rows).value();
    const std::size_t V = logits.cols();
    bool all_done = true;
    for (std::size_t b = 0; b < n; ++b) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < V; ++j) {
        if (logits.at(b, j) > logits.at(b, best)) best = j;
      }
      work[b].response.push_back(best);
      if (!done[b]) {
        out[b].push_back(best);
        if (best == end_token()) done[b] = true;
      }
      all_done = all_done && done[b];
    }
    if (all_done) break;
  }
  return out;
}

}  // namespace vittle
