// SPDX-License-Identifier: Apache-2.0
#pragma once

// Representation-space diagnostics: clean/shifted pair distances, PCA
// projections and quantized divergences.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vittle/sample.hpp"
#include "vittle/tensor.hpp"

namespace vittle {

class VittleNet;

/// One row per sample: the last instruction token's hidden state at `layer`.
struct ReprSet {
  std::string dataset_id;
  std::size_t layer = 0;
  Tensor vectors;  // n x d

  std::size_t count() const { return vectors.empty() ? 0 : vectors.rows(); }
  std::size_t dim() const { return vectors.empty() ? 0 : vectors.cols(); }
};

ReprSet extract(const VittleNet& net, std::span<const QuerySample> dataset, std::size_t layer,
                const std::string& dataset_id, std::size_t threads = 1);

inline constexpr std::size_t kCosineBins = 50;

struct PairStats {
  std::vector<double> distances;
  double mean = 0.0;
  // kCosineBins equal bins over [0, 2]; distance 2 falls in the last bin.
  std::vector<std::size_t> histogram;
};

/// distance_i = 1 - cos(a_i, b_i).
PairStats pairwise_cosine(const ReprSet& clean, const ReprSet& shifted);

/// Top principal components of a pooled set of row vectors.
struct Pca {
  std::vector<double> mean;                     // d
  std::vector<std::vector<double>> components;  // k vectors of length d, by decreasing eigenvalue
  std::vector<double> eigenvalues;              // k
  double total_variance = 0.0;
  // Each component is oriented so that its largest-magnitude entry is positive.
  std::vector<double> project(std::span<const double> row) const;
};

/// Requires at least 3 rows and non-zero variance; k <= d.
Pca fit_pca(const Tensor& rows, std::size_t k);

struct Pca2Result {
  std::vector<std::array<double, 2>> coords;  // pooled order: set 0 rows, then set 1, ...
  std::array<double, 2> explained{};          // fraction of total variance per component
  std::vector<std::string> labels;            // dataset_id per coordinate
};

Pca2Result pca2(std::span<const ReprSet> sets);

/// Shared product quantizer: the pooled top-`bits` principal directions, each
/// split at its pooled median, giving 2^bits cells.
struct Quantizer {
  Pca pca;
  std::vector<double> medians;
  std::size_t cells() const { return std::size_t{1} << medians.size(); }
  std::size_t cell(std::span<const double> row) const;
};

/// bits in [1, 8]; fewer directions are used when the data has lower rank.
Quantizer fit_quantizer(std::span<const ReprSet> pooled, std::size_t bits);

/// Occupancy distribution of a set's cells.
std::vector<double> cell_distribution(const Quantizer& q, const ReprSet& set);

/// JSD (nats) between quantized occupancy of two sets under a shared quantizer.
double repr_jsd(const ReprSet& clean, const ReprSet& shifted, std::size_t bits);

/// Quantized EMID analogue: X is the representation cell, Y the reference
/// response and Y_theta the model's greedy response. EMI on each set uses its
/// empirical joint; the quantizer is shared.
struct EmidAnalogue {
  double emi_clean = 0.0;
  double emi_shifted = 0.0;
  double emid = 0.0;
};
EmidAnalogue emid_analogue(const ReprSet& clean, std::span<const std::vector<std::size_t>> clean_refs,
                           std::span<const std::vector<std::size_t>> clean_preds, const ReprSet& shifted,
                           std::span<const std::vector<std::size_t>> shifted_refs,
                           std::span<const std::vector<std::size_t>> shifted_preds, std::size_t bits);

void write_distances_csv(std::ostream& out, const std::string& dataset, const PairStats& s);
void write_histogram_csv(std::ostream& out, const std::string& dataset, const PairStats& s);
void write_pca_csv(std::ostream& out, const Pca2Result& r);

}  // namespace vittle
