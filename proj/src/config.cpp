// SPDX-License-Identifier: Apache-2.0
#include "vittle/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace vittle {
namespace {

using nlohmann::json;

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

std::size_t as_size(const json& v, const std::string& field) {
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), field,
          "expected a non-negative integer");
  return v.get<std::size_t>();
}

double as_double(const json& v, const std::string& field) {
  require(v.is_number(), field, "expected a number");
  const double d = v.get<double>();
  require(std::isfinite(d), field, "expected a finite number");
  return d;
}

bool as_bool(const json& v, const std::string& field) {
  require(v.is_boolean(), field, "expected true or false");
  return v.get<bool>();
}

using Setter = std::function<void(const json&, const std::string&)>;

void apply_section(const json& obj, const std::string& section, const std::map<std::string, Setter>& setters) {
  require(obj.is_object(), section, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string field = section + "." + it.key();
    auto s = setters.find(it.key());
    if (s == setters.end()) throw ConfigError(field, "unknown key");
    s->second(it.value(), field);
  }
}

json to_json(const ModelConfig& m) {
  return json{{"d", m.d},
              {"layers", m.layers},
              {"heads", m.heads},
              {"vocab_visual", m.vocab_visual},
              {"vocab_text", m.vocab_text},
              {"max_visual", m.max_visual},
              {"max_text", m.max_text},
              {"max_response", m.max_response},
              {"bottleneck_layer", m.bottleneck_layer},
              {"bottleneck_layer_text", m.bottleneck_layer_text},
              {"prior", to_string(m.prior)},
              {"beta_scale", m.beta_scale},
              {"alpha_max", m.alpha_max},
              {"allow_alpha_above_half", m.allow_alpha_above_half},
              {"sampled_inference", m.sampled_inference},
              {"steps", m.steps}};
}

json to_json(const TrainConfig& t) {
  return json{{"lr", t.lr},
              {"warmup_ratio", t.warmup_ratio},
              {"weight_decay", t.weight_decay},
              {"batch_size", t.batch_size},
              {"adam_beta1", t.adam_beta1},
              {"adam_beta2", t.adam_beta2},
              {"adam_eps", t.adam_eps},
              {"grad_clip", t.grad_clip},
              {"divergence_factor", t.divergence_factor},
              {"divergence_window", t.divergence_window}};
}

json to_json(const TaskSpec& t) { return json{{"segments", t.segments}, {"segment_len", t.segment_len}}; }

json to_json(const ExperimentConfig& e) {
  return json{{"eval_samples", e.eval_samples},
              {"quantizer_bits", e.quantizer_bits},
              {"variants", e.variants},
              {"seeds", e.seeds}};
}

}  // namespace

std::string to_string(PriorKind kind) { return kind == PriorKind::fixed ? "fixed" : "learnable"; }

PriorKind prior_kind_from_string(const std::string& s) {
  if (s == "fixed") return PriorKind::fixed;
  if (s == "learnable") return PriorKind::learnable;
  throw ConfigError("model.prior", "expected 'fixed' or 'learnable', got '" + s + "'");
}

void ModelConfig::validate() const {
  require(d > 0, "model.d", "must be positive");
  require(layers >= 2, "model.layers", "need at least 2 layers");
  require(heads > 0 && d % heads == 0, "model.heads", "d must be divisible by heads");
  require(vocab_visual >= 2, "model.vocab_visual", "too small");
  require(vocab_text >= 3, "model.vocab_text", "too small");
  require(max_visual > 0, "model.max_visual", "must be positive");
  require(max_text > 0, "model.max_text", "must be positive");
  require(max_response > 0, "model.max_response", "must be positive");
  require(bottleneck_layer > 0 && bottleneck_layer < layers, "model.bottleneck_layer",
          "must satisfy 0 < l < layers");
  require(bottleneck_layer_text == bottleneck_layer, "model.bottleneck_layer_text",
          "modality-specific layers are not supported; must equal bottleneck_layer");
  require(beta_scale >= 0.0, "model.beta_scale", "must be non-negative");
  const double ceiling = allow_alpha_above_half ? 1.0 : 0.5;
  require(alpha_max >= 0.0 && alpha_max <= ceiling, "model.alpha_max",
          "must lie in [0, " + std::string(allow_alpha_above_half ? "1" : "0.5") + "]");
  require(steps > 0, "model.steps", "must be positive");
}

void TrainConfig::validate() const {
  require(lr >= 0.0, "train.lr", "must be non-negative");
  require(warmup_ratio >= 0.0 && warmup_ratio < 1.0, "train.warmup_ratio", "must lie in [0, 1)");
  require(weight_decay >= 0.0, "train.weight_decay", "must be non-negative");
  require(batch_size > 0, "train.batch_size", "must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "train.adam_beta1", "must lie in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "train.adam_beta2", "must lie in [0, 1)");
  require(adam_eps > 0.0, "train.adam_eps", "must be positive");
  require(grad_clip >= 0.0, "train.grad_clip", "must be non-negative");
  require(divergence_factor > 1.0, "train.divergence_factor", "must exceed 1");
  require(divergence_window > 0, "train.divergence_window", "must be positive");
}

void TaskSpec::validate() const {
  require(segments >= 2, "task.segments", "need at least 2 segments");
  require(segment_len >= 2, "task.segment_len", "need a marker and at least one content token");
}

void ExperimentConfig::validate() const {
  require(eval_samples > 0, "experiment.eval_samples", "must be positive");
  require(quantizer_bits >= 1 && quantizer_bits <= 8, "experiment.quantizer_bits", "must lie in [1, 8]");
  require(!variants.empty(), "experiment.variants", "must not be empty");
  for (const auto& v : variants) {
    require(v == "baseline" || v == "vittle-f" || v == "vittle-l", "experiment.variants",
            "unknown variant '" + v + "'");
  }
  require(!seeds.empty(), "experiment.seeds", "must not be empty");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  task.validate();
  experiment.validate();
  require(task.segments <= model.vocab_visual - 2, "task.segments", "visual vocabulary too small for the keys");
  require(task.segments * task.segment_len <= model.max_text, "task.segments",
          "segments * segment_len exceeds model.max_text");
  require(task.segment_len <= model.max_response, "task.segment_len",
          "response (segment_len - 1 copies + end token) exceeds model.max_response");
  require(model.vocab_text > 2 + task.segments + 2, "model.vocab_text", "too small for markers and content");
}

std::string to_canonical_text(const RunConfig& c) {
  json j{{"model", to_json(c.model)},
         {"train", to_json(c.train)},
         {"task", to_json(c.task)},
         {"experiment", to_json(c.experiment)}};
  return j.dump() + "\n";
}

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("parse error: ") + e.what());
  }
  RunConfig c;
  auto sz = [](std::size_t& dst) { return Setter([&dst](const json& v, const std::string& f) { dst = as_size(v, f); }); };
  auto dbl = [](double& dst) { return Setter([&dst](const json& v, const std::string& f) { dst = as_double(v, f); }); };
  auto bln = [](bool& dst) { return Setter([&dst](const json& v, const std::string& f) { dst = as_bool(v, f); }); };

  std::map<std::string, Setter> top{
      {"model",
       [&](const json& v, const std::string& f) {
         auto& m = c.model;
         apply_section(v, f,
                       {{"d", sz(m.d)},
                        {"layers", sz(m.layers)},
                        {"heads", sz(m.heads)},
                        {"vocab_visual", sz(m.vocab_visual)},
                        {"vocab_text", sz(m.vocab_text)},
                        {"max_visual", sz(m.max_visual)},
                        {"max_text", sz(m.max_text)},
                        {"max_response", sz(m.max_response)},
                        {"bottleneck_layer", sz(m.bottleneck_layer)},
                        {"bottleneck_layer_text", sz(m.bottleneck_layer_text)},
                        {"prior",
                         [&m](const json& p, const std::string& pf) {
                           require(p.is_string(), pf, "expected a string");
                           m.prior = prior_kind_from_string(p.get<std::string>());
                         }},
                        {"beta_scale", dbl(m.beta_scale)},
                        {"alpha_max", dbl(m.alpha_max)},
                        {"allow_alpha_above_half", bln(m.allow_alpha_above_half)},
                        {"sampled_inference", bln(m.sampled_inference)},
                        {"steps", sz(m.steps)}});
       }},
      {"train",
       [&](const json& v, const std::string& f) {
         auto& t = c.train;
         apply_section(v, f,
                       {{"lr", dbl(t.lr)},
                        {"warmup_ratio", dbl(t.warmup_ratio)},
                        {"weight_decay", dbl(t.weight_decay)},
                        {"batch_size", sz(t.batch_size)},
                        {"adam_beta1", dbl(t.adam_beta1)},
                        {"adam_beta2", dbl(t.adam_beta2)},
                        {"adam_eps", dbl(t.adam_eps)},
                        {"grad_clip", dbl(t.grad_clip)},
                        {"divergence_factor", dbl(t.divergence_factor)},
                        {"divergence_window", sz(t.divergence_window)}});
       }},
      {"task",
       [&](const json& v, const std::string& f) {
         apply_section(v, f, {{"segments", sz(c.task.segments)}, {"segment_len", sz(c.task.segment_len)}});
       }},
      {"experiment",
       [&](const json& v, const std::string& f) {
         auto& e = c.experiment;
         apply_section(v, f,
                       {{"eval_samples", sz(e.eval_samples)},
                        {"quantizer_bits", sz(e.quantizer_bits)},
                        {"variants",
                         [&e](const json& a, const std::string& af) {
                           require(a.is_array(), af, "expected an array of strings");
                           e.variants.clear();
                           for (const auto& s : a) {
                             require(s.is_string(), af, "expected an array of strings");
                             e.variants.push_back(s.get<std::string>());
                           }
                         }},
                        {"seeds", [&e](const json& a, const std::string& af) {
                           require(a.is_array(), af, "expected an array of integers");
                           e.seeds.clear();
                           for (const auto& s : a) e.seeds.push_back(as_size(s, af));
                         }}});
       }},
  };
  require(root.is_object(), "<root>", "expected an object");
  for (auto it = root.begin(); it != root.end(); ++it) {
    auto s = top.find(it.key());
    if (s == top.end()) throw ConfigError(it.key(), "unknown key");
    s->second(it.value(), it.key());
  }
  c.validate();
  return c;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace vittle
