// SPDX-License-Identifier: Apache-2.0
#include "vittle/repr.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "vittle/discrete_info.hpp"
#include "vittle/trainer.hpp"

namespace vittle {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> as_matrix(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

std::size_t check_dims(std::span<const ReprSet> sets) {
  if (sets.empty()) throw std::invalid_argument("representation analysis needs at least one set");
  const std::size_t d = sets.front().dim();
  for (const auto& s : sets) {
    if (s.dim() != d) {
      throw std::invalid_argument("representation set '" + s.dataset_id + "' has dimension " +
                                  std::to_string(s.dim()) + ", expected " + std::to_string(d));
    }
  }
  return d;
}

// Per-set partial sums are added afterwards, so two sets pool to the same
// bits in either order.
Pca fit_pca_sets(std::span<const ReprSet> sets, std::size_t k, bool strict) {
  const std::size_t d = check_dims(sets);
  std::size_t n = 0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (const auto& s : sets) {
    if (s.count() == 0) continue;
    sum += as_matrix(s.vectors).colwise().sum().transpose();
    n += s.count();
  }
  if (strict && n < 3) throw std::invalid_argument("PCA needs at least 3 vectors, got " + std::to_string(n));
  if (n == 0) throw std::invalid_argument("PCA needs at least one vector");
  if (k > d) throw std::invalid_argument("PCA: asked for " + std::to_string(k) + " components of " + std::to_string(d));
  const Eigen::VectorXd mean = sum / static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (const auto& s : sets) {
    if (s.count() == 0) continue;
    const Eigen::MatrixXd centred = as_matrix(s.vectors).rowwise() - mean.transpose();
    cov += centred.transpose() * centred;
  }
  cov /= static_cast<double>(n);

  Pca p;
  p.mean.assign(mean.data(), mean.data() + d);
  p.total_variance = cov.trace();
  if (!(p.total_variance > 0.0)) {
    if (strict) throw std::invalid_argument("PCA: data has zero variance (rank 0)");
    return p;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("PCA: eigendecomposition failed");
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - i);
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    p.components.emplace_back(v.data(), v.data() + d);
    p.eigenvalues.push_back(std::max(0.0, eig.eigenvalues()(col)));
  }
  return p;
}

}  // namespace

std::vector<double> Pca::project(std::span<const double> row) const {
  if (row.size() != mean.size()) throw std::invalid_argument("PCA projection: row has the wrong dimension");
  std::vector<double> out(components.size(), 0.0);
  for (std::size_t c = 0; c < components.size(); ++c) {
    for (std::size_t j = 0; j < row.size(); ++j) out[c] += (row[j] - mean[j]) * components[c][j];
  }
  return out;
}

Pca fit_pca(const Tensor& rows, std::size_t k) {
  if (rows.rank() != 2) throw std::invalid_argument("fit_pca: expected an n x d matrix");
  ReprSet s{"", 0, rows};
  return fit_pca_sets(std::span<const ReprSet>(&s, 1), k, true);
}

ReprSet extract(const VittleNet& net, std::span<const QuerySample> dataset, std::size_t layer,
                const std::string& dataset_id, std::size_t threads) {
  if (dataset.empty()) throw std::invalid_argument("extract: dataset '" + dataset_id + "' has no samples");
  if (layer >= net.config().layers) {
    throw std::out_of_range("extract: layer " + std::to_string(layer) + " is outside [0, " +
                            std::to_string(net.config().layers) + ")");
  }
  const std::size_t d = net.config().d;
  const std::size_t chunk = 50;
  const std::size_t chunks = (dataset.size() + chunk - 1) / chunk;
  ReprSet out{dataset_id, layer, Tensor({dataset.size(), d})};
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t c = first; c < chunks; c += stride) {
      const std::size_t begin = c * chunk;
      const std::size_t len = std::min(chunk, dataset.size() - begin);
      const Tensor part = net.last_input_representation(dataset.subspan(begin, len), layer);
      std::copy(part.vec().begin(), part.vec().end(), out.vectors.data().begin() + static_cast<std::ptrdiff_t>(begin * d));
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, chunks);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& t : pool) t.join();
  }
  return out;
}

PairStats pairwise_cosine(const ReprSet& clean, const ReprSet& shifted) {
  if (clean.count() != shifted.count()) {
    throw std::invalid_argument("pairwise_cosine: '" + clean.dataset_id + "' has " + std::to_string(clean.count()) +
                                " vectors but '" + shifted.dataset_id + "' has " + std::to_string(shifted.count()));
  }
  const std::array<ReprSet, 2> both{clean, shifted};
  check_dims(both);
  PairStats s;
  s.histogram.assign(kCosineBins, 0);
  const auto a = as_matrix(clean.vectors), b = as_matrix(shifted.vectors);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double na = a.row(i).norm(), nb = b.row(i).norm();
    if (na == 0.0 || nb == 0.0) {
      throw std::invalid_argument("pairwise_cosine: sample " + std::to_string(i) + " of '" +
                                  (na == 0.0 ? clean.dataset_id : shifted.dataset_id) + "' has zero norm");
    }
    const double cos = std::clamp(a.row(i).dot(b.row(i)) / (na * nb), -1.0, 1.0);
    const double dist = 1.0 - cos;
    s.distances.push_back(dist);
    sum += dist;
    const auto bin = std::min(kCosineBins - 1, static_cast<std::size_t>(dist / 2.0 * kCosineBins));
    ++s.histogram[bin];
  }
  s.mean = s.distances.empty() ? 0.0 : sum / static_cast<double>(s.distances.size());
  return s;
}

Pca2Result pca2(std::span<const ReprSet> sets) {
  const std::size_t d = check_dims(sets);
  if (d < 2) throw std::invalid_argument("pca2: vectors need at least 2 dimensions");
  const Pca p = fit_pca_sets(sets, 2, true);
  Pca2Result r;
  r.explained = {p.eigenvalues[0] / p.total_variance, p.eigenvalues[1] / p.total_variance};
  for (const auto& s : sets) {
    for (std::size_t i = 0; i < s.count(); ++i) {
      const auto proj = p.project(s.vectors.data().subspan(i * d, d));
      r.coords.push_back({proj[0], proj[1]});
      r.labels.push_back(s.dataset_id);
    }
  }
  return r;
}

std::size_t Quantizer::cell(std::span<const double> row) const {
  const auto proj = pca.project(row);
  std::size_t c = 0;
  for (std::size_t j = 0; j < medians.size(); ++j) {
    if (proj[j] > medians[j]) c |= std::size_t{1} << j;
  }
  return c;
}

Quantizer fit_quantizer(std::span<const ReprSet> pooled, std::size_t bits) {
  if (bits < 1 || bits > 8) throw std::invalid_argument("quantizer bits must be in [1, 8], got " + std::to_string(bits));
  const std::size_t d = check_dims(pooled);
  Quantizer q;
  q.pca = fit_pca_sets(pooled, std::min(bits, d), false);
  // Directions with (numerically) no variance would split on rounding noise.
  const double floor = q.pca.eigenvalues.empty() ? 0.0 : 1e-12 * q.pca.eigenvalues.front();
  while (!q.pca.components.empty() && !(q.pca.eigenvalues.back() > floor)) {
    q.pca.components.pop_back();
    q.pca.eigenvalues.pop_back();
  }
  std::vector<std::vector<double>> proj(q.pca.components.size());
  for (const auto& s : pooled) {
    for (std::size_t i = 0; i < s.count(); ++i) {
      const auto p = q.pca.project(s.vectors.data().subspan(i * d, d));
      for (std::size_t j = 0; j < p.size(); ++j) proj[j].push_back(p[j]);
    }
  }
  for (auto& v : proj) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    q.medians.push_back(n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
  }
  return q;
}

std::vector<double> cell_distribution(const Quantizer& q, const ReprSet& set) {
  if (set.count() == 0) throw std::invalid_argument("cell_distribution: set '" + set.dataset_id + "' is empty");
  std::vector<double> p(q.cells(), 0.0);
  const std::size_t d = set.dim();
  for (std::size_t i = 0; i < set.count(); ++i) p[q.cell(set.vectors.data().subspan(i * d, d))] += 1.0;
  for (double& x : p) x /= static_cast<double>(set.count());
  return p;
}

double repr_jsd(const ReprSet& clean, const ReprSet& shifted, std::size_t bits) {
  const std::array<ReprSet, 2> both{clean, shifted};
  const Quantizer q = fit_quantizer(both, bits);
  return info::jsd(cell_distribution(q, clean), cell_distribution(q, shifted));
}

EmidAnalogue emid_analogue(const ReprSet& clean, std::span<const std::vector<std::size_t>> clean_refs,
                           std::span<const std::vector<std::size_t>> clean_preds, const ReprSet& shifted,
                           std::span<const std::vector<std::size_t>> shifted_refs,
                           std::span<const std::vector<std::size_t>> shifted_preds, std::size_t bits) {
  if (clean_refs.size() != clean.count() || clean_preds.size() != clean.count() ||
      shifted_refs.size() != shifted.count() || shifted_preds.size() != shifted.count()) {
    throw std::invalid_argument("emid_analogue: response lists must match the representation counts");
  }
  if (clean.count() == 0 || shifted.count() == 0) throw std::invalid_argument("emid_analogue: empty set");
  const std::array<ReprSet, 2> both{clean, shifted};
  const Quantizer q = fit_quantizer(both, bits);
  std::map<std::vector<std::size_t>, std::size_t> ids;
  for (auto list : {clean_refs, clean_preds, shifted_refs, shifted_preds})
    for (const auto& r : list) ids.emplace(r, ids.size());
  const std::size_t cols = ids.size();

  auto emi = [&](const ReprSet& set, std::span<const std::vector<std::size_t>> refs,
                 std::span<const std::vector<std::size_t>> preds) {
    std::vector<double> truth(q.cells() * cols, 0.0), model(q.cells() * cols, 0.0);
    const double w = 1.0 / static_cast<double>(set.count());
    const std::size_t d = set.dim();
    for (std::size_t i = 0; i < set.count(); ++i) {
      const std::size_t c = q.cell(set.vectors.data().subspan(i * d, d));
      truth[c * cols + ids.at(refs[i])] += w;
      model[c * cols + ids.at(preds[i])] += w;
    }
    // Repeated addition of 1/n can drift past the 1e-12 normalisation check.
    auto normalise = [](std::vector<double>& t) {
      double s = 0.0;
      for (double x : t) s += x;
      for (double& x : t) x /= s;
    };
    normalise(truth);
    normalise(model);
    return info::mutual_information(info::DiscreteJoint(q.cells(), cols, model)) -
           info::mutual_information(info::DiscreteJoint(q.cells(), cols, truth));
  };
  EmidAnalogue r;
  r.emi_clean = emi(clean, clean_refs, clean_preds);
  r.emi_shifted = emi(shifted, shifted_refs, shifted_preds);
  r.emid = r.emi_clean - r.emi_shifted;
  return r;
}

void write_distances_csv(std::ostream& out, const std::string& dataset, const PairStats& s) {
  out << "dataset,sample,cosine_distance\n" << std::setprecision(17);
  for (std::size_t i = 0; i < s.distances.size(); ++i) out << dataset << ',' << i << ',' << s.distances[i] << '\n';
}

void write_histogram_csv(std::ostream& out, const std::string& dataset, const PairStats& s) {
  out << "dataset,bin_low,bin_high,count\n" << std::setprecision(17);
  for (std::size_t b = 0; b < s.histogram.size(); ++b) {
    const double w = 2.0 / static_cast<double>(kCosineBins);
    out << dataset << ',' << w * static_cast<double>(b) << ',' << w * static_cast<double>(b + 1) << ','
        << s.histogram[b] << '\n';
  }
}

void write_pca_csv(std::ostream& out, const Pca2Result& r) {
  out << "# explained " << std::setprecision(17) << r.explained[0] << ' ' << r.explained[1] << '\n';
  out << "dataset,pc1,pc2\n";
  for (std::size_t i = 0; i < r.coords.size(); ++i) {
    out << r.labels[i] << ',' << r.coords[i][0] << ',' << r.coords[i][1] << '\n';
  }
}

}  // namespace vittle
