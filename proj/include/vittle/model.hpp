// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vittle/autograd.hpp"
#include "vittle/config.hpp"
#include "vittle/rng.hpp"
#include "vittle/sample.hpp"

namespace vittle {

/// Ordered collection of named trainable arrays.
class Parameters {
 public:
  Var& add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::pair<std::string, Var>>& items() noexcept { return items_; }
  const std::vector<std::pair<std::string, Var>>& items() const noexcept { return items_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

/// Normal(0, std) init drawn from a stream keyed by the parameter name, so
/// adding or removing arrays never changes the others.
Tensor init_normal(const RngStream& init, const std::string& name, Shape shape, double std);

/// Token representations for a batch laid out as `batch` blocks of `seq`
/// consecutive rows: [visual ; text ; response prefix].
struct HiddenState {
  Var z;
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::size_t layer = 0;
};

/// Small pre-norm causal transformer over [visual ; text ; response] with the
/// layer stack split at `bottleneck_layer` into a stem and a head.
class ToyMllm {
 public:
  using LayerHook = std::function<HiddenState(const HiddenState&)>;

  ToyMllm(const ModelConfig& config, const RngStream& init);

  const ModelConfig& config() const noexcept { return config_; }
  Parameters& parameters() noexcept { return params_; }
  const Parameters& parameters() const noexcept { return params_; }

  /// Token + position embeddings of [visual ; text ; response[0..prefix)].
  HiddenState embed(std::span<const QuerySample> batch, std::size_t prefix) const;
  /// Applies blocks [state.layer, end).
  HiddenState forward_blocks(const HiddenState& state, std::size_t end) const;
  /// Blocks [0, l).
  HiddenState forward_stem(const HiddenState& state) const;
  /// Blocks [l, L), final norm and unembedding on the listed rows.
  Var forward_head(const HiddenState& state, std::span<const std::size_t> rows) const;
  /// Final norm and unembedding only (state already at layer L).
  Var readout(const HiddenState& state, std::span<const std::size_t> rows) const;

  /// Greedy decoding; each output stops after the end token or `max_len`
  /// tokens. `hook`, when set, transforms the layer-l state.
  std::vector<std::vector<std::size_t>> generate(std::span<const QuerySample> batch, std::size_t max_len,
                                                 const LayerHook& hook = {}) const;

  std::size_t end_token() const noexcept { return 1; }

 private:
  HiddenState block(const HiddenState& x, std::size_t index) const;

  ModelConfig config_;
  Parameters params_;
};

}  // namespace vittle
