// SPDX-License-Identifier: Apache-2.0
#pragma once

// Token- and embedding-level corruptions of keyed-copy samples at three
// severities, and the 28-member evaluation suite built from them.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vittle/config.hpp"
#include "vittle/rng.hpp"
#include "vittle/sample.hpp"

namespace vittle {

enum class PerturbCategory { visual, textual, joint };

enum class PerturbKind {
  // visual
  token_sub,
  embed_noise,
  block_mask,
  // textual
  typo,
  remove,  // token delete
  insert,
  swap,
  shuffle,
  remap,
};

std::string to_string(PerturbKind k);
PerturbKind perturb_kind_from_string(const std::string& s);
bool is_visual(PerturbKind k);

/// Corruption rate per severity (fraction of positions): 0.05, 0.15, 0.30.
double severity_rate(int severity);
/// Embedding-noise sigma per severity: 0.1, 0.3, 0.6.
double severity_sigma(int severity);

struct PerturbationSpec {
  PerturbCategory modality = PerturbCategory::visual;
  // One kind for visual/textual specs; joint specs use both.
  std::optional<PerturbKind> visual_kind;
  std::optional<PerturbKind> text_kind;
  int severity = 1;
  std::uint64_t seed = 0;
  // Testing hook: replaces the severity's rate (and sigma) when set.
  std::optional<double> rate_override;

  void validate() const;
  /// Canonical name, e.g. "visual/block_mask/s2" or "joint/embed_noise+remap/s1".
  std::string name() const;
  friend bool operator==(const PerturbationSpec&, const PerturbationSpec&) = default;
};

PerturbationSpec visual_spec(PerturbKind k, int severity, std::uint64_t seed);
PerturbationSpec text_spec(PerturbKind k, int severity, std::uint64_t seed);
PerturbationSpec joint_spec(PerturbKind visual, PerturbKind text, int severity, std::uint64_t seed);

/// Operations applied to `n` positions at rate r: max(round(r n), floor(r n + u))
/// with u uniform per sample, so small rates still touch at least round(r n)
/// positions while the mean stays close to r n.
std::size_t corruption_count(double rate, std::size_t n, double u);

struct ShiftedDataset {
  std::string base_id;
  PerturbationSpec spec;
  std::vector<QuerySample> samples;
  // Per sample: number of corrupted positions (visual + textual).
  std::vector<std::size_t> corrupted;
};

/// Sample i uses stream (seed, i). Responses are carried over unchanged;
/// below severity 3 no answer-determining position is touched.
ShiftedDataset apply(const PerturbationSpec& spec, std::span<const QuerySample> dataset, const TaskSpec& task,
                     const ModelConfig& model, const std::string& base_id = "clean");

struct Suite {
  std::vector<ShiftedDataset> members;  // clean first
  const ShiftedDataset& at(const std::string& name) const;
};

/// Clean plus 3 kinds x 3 severities for each of visual, textual and joint.
Suite build_suite(std::span<const QuerySample> base, const TaskSpec& task, const ModelConfig& model,
                  std::uint64_t seed, const std::string& base_id = "clean");

/// Line format, one record per sample:
///   v <tokens> | t <tokens> | r <tokens> | k <key_visual> <key_text_begin> <key_text_end> |
///   f <flags> <noise_sigma> <noise_seed> <noise_mask>
/// preceded by "# vittle-dataset v1". Unset key positions are written as "-".
void write_dataset(std::ostream& out, std::span<const QuerySample> samples);
std::vector<QuerySample> read_dataset(std::istream& in);
void write_dataset_file(const std::string& path, std::span<const QuerySample> samples);
std::vector<QuerySample> read_dataset_file(const std::string& path);

/// Writes every member to `dir/<name with '/' replaced by '_'>.txt` and a
/// `manifest.json` mapping names to files and specs.
void write_suite(const std::string& dir, const Suite& suite);

}  // namespace vittle
