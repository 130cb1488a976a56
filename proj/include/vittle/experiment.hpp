// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end robustness experiment: train each (variant, seed), evaluate it
// on the perturbation suite and summarise representation shifts.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vittle/config.hpp"
#include "vittle/trainer.hpp"

namespace vittle {

struct CellResult {
  Variant variant = Variant::baseline;
  std::uint64_t seed = 0;
  std::string dataset;   // "clean" or a perturbation spec name
  std::string category;  // "clean", "visual", "textual" or "joint"
  std::string kind;      // e.g. "block_mask" or "embed_noise+remap"
  int severity = 0;
  std::string status = "ok";  // or "failed: ..."
  double accuracy = 0.0;
  // Accuracy over samples without kFlagKeyTouched.
  double accuracy_unflagged = 0.0;
  double repr_jsd = 0.0;
  double mean_cosine = 0.0;
  double emid = 0.0;
};

/// Per (variant, seed) aggregates over the 27 perturbed members.
struct SeedSummary {
  Variant variant = Variant::baseline;
  std::uint64_t seed = 0;
  bool ok = true;
  double clean_accuracy = 0.0;
  double perturbed_accuracy = 0.0;
  std::map<std::string, double> category_accuracy;  // visual / textual / joint
  double accuracy_drop = 0.0;                       // clean - perturbed
  double repr_jsd = 0.0;
  double mean_cosine = 0.0;
  double emid = 0.0;
};

struct ExperimentReport {
  RunConfig config;
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> datasets;  // suite order
  std::vector<CellResult> cells;      // variant-major, then seed, then dataset
  std::vector<SeedSummary> summaries;

  const SeedSummary& summary(Variant v, std::uint64_t seed) const;
  /// Seed-averaged accuracy of one dataset for a variant (failed cells skipped).
  double mean_accuracy(Variant v, const std::string& dataset) const;
};

struct ExperimentOptions {
  std::size_t threads = 1;
  // Layer for representation statistics; defaults to the bottleneck layer.
  std::optional<std::size_t> repr_layer;
  std::function<void(const std::string&)> log;
};

/// Requires at least one variant and one seed; per-cell failures are recorded
/// instead of aborting the run.
ExperimentReport run_robustness(const RunConfig& config, const std::vector<Variant>& variants,
                                const std::vector<std::uint64_t>& seeds, const ExperimentOptions& options = {});

/// One row per (variant, seed, dataset).
void write_experiment_csv(std::ostream& out, const ExperimentReport& r);
/// One row per (variant, seed) plus per-variant means.
void write_experiment_summary_csv(std::ostream& out, const ExperimentReport& r);

/// Seeds (in report order) on which `better` holds for vittle vs baseline.
std::size_t paired_wins(const ExperimentReport& r, Variant candidate, Variant reference,
                        const std::function<bool(const SeedSummary& cand, const SeedSummary& ref)>& better);

}  // namespace vittle
