// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "vittle/perturb.hpp"
#include "vittle/repr.hpp"
#include "vittle/task.hpp"
#include "vittle/trainer.hpp"

using namespace vittle;

namespace {

ReprSet make_set(std::vector<std::vector<double>> rows, const std::string& id = "x") {
  const std::size_t n = rows.size(), d = rows.front().size();
  Tensor t({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) t.at(i, j) = rows[i][j];
  return {id, 0, std::move(t)};
}

ReprSet gaussian_set(RngStream& r, std::size_t n, std::size_t d, double shift = 0.0, const std::string& id = "g") {
  Tensor t = gaussian_sample(r, {n, d});
  for (double& x : t.data()) x += shift;
  return {id, 0, std::move(t)};
}

RunConfig tiny_run() {
  RunConfig c;
  c.model.d = 16;
  c.model.heads = 2;
  c.model.steps = 4;
  return c;
}

}  // namespace

TEST_CASE("cosine distance endpoints and histogram") {
  const ReprSet a = make_set({{1, 0}, {1, 0}, {1, 0}, {2, 3}});
  const ReprSet b = make_set({{1, 0}, {0, 5}, {-3, 0}, {2, 3}});
  const PairStats s = pairwise_cosine(a, b);
  CHECK(s.distances[0] == 0.0);
  CHECK(s.distances[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.distances[2] == 2.0);
  CHECK(std::abs(s.distances[3]) < 1e-15);
  CHECK(s.mean == doctest::Approx(0.75).epsilon(1e-12));
  REQUIRE(s.histogram.size() == kCosineBins);
  CHECK(s.histogram.front() == 2);
  CHECK(s.histogram[25] == 1);
  CHECK(s.histogram.back() == 1);

  CHECK_THROWS_WITH_AS(pairwise_cosine(a, make_set({{1, 0}, {0, 0}, {1, 1}, {1, 1}}, "bad")),
                       "pairwise_cosine: sample 1 of 'bad' has zero norm", std::invalid_argument);
  CHECK_THROWS_AS(pairwise_cosine(a, make_set({{1, 0}})), std::invalid_argument);
}

TEST_CASE("cosine distances stay in range") {
  RngStream r(3);
  const PairStats s = pairwise_cosine(gaussian_set(r, 500, 6), gaussian_set(r, 500, 6));
  double sum = 0;
  for (double d : s.distances) {
    CHECK(d >= 0.0);
    CHECK(d <= 2.0);
    sum += d;
  }
  CHECK(std::abs(sum / 500.0 - s.mean) < 1e-12);
}

TEST_CASE("pca on collinear and isotropic data") {
  const ReprSet line = make_set({{0, 0, 0}, {1, 2, 3}, {2, 4, 6}, {-1, -2, -3}});
  const Pca2Result r = pca2(std::span<const ReprSet>(&line, 1));
  CHECK(std::abs(r.explained[0] - 1.0) < 1e-10);
  CHECK(std::abs(r.explained[1]) < 1e-10);

  RngStream g(8);
  const ReprSet iso = gaussian_set(g, 10000, 2);
  const Pca2Result ri = pca2(std::span<const ReprSet>(&iso, 1));
  CHECK(std::abs(ri.explained[0] - 0.5) < 0.03);
  CHECK(std::abs(ri.explained[1] - 0.5) < 0.03);

  const ReprSet same = make_set({{1, 1}, {1, 1}, {1, 1}});
  CHECK_THROWS_AS(pca2(std::span<const ReprSet>(&same, 1)), std::invalid_argument);
  const ReprSet two = make_set({{1, 1}, {0, 1}});
  CHECK_THROWS_AS(pca2(std::span<const ReprSet>(&two, 1)), std::invalid_argument);
}

TEST_CASE("pca components are orthonormal and follow the sign convention") {
  RngStream r(12);
  Tensor x = gaussian_sample(r, {300, 6});
  for (std::size_t i = 0; i < 300; ++i) x.at(i, 2) += 3.0 * x.at(i, 0);
  const Pca p = fit_pca(x, 6);
  for (std::size_t a = 0; a < 6; ++a) {
    double big = 0;
    for (double v : p.components[a]) big = std::abs(v) > std::abs(big) ? v : big;
    CHECK(big > 0.0);
    for (std::size_t b = 0; b < 6; ++b) {
      double dot = 0;
      for (std::size_t j = 0; j < 6; ++j) dot += p.components[a][j] * p.components[b][j];
      CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
    }
    if (a > 0) CHECK(p.eigenvalues[a] <= p.eigenvalues[a - 1]);
  }
  // Reconstruction error with the first k components never grows with k.
  double prev = INFINITY;
  for (std::size_t k = 0; k <= 6; ++k) {
    double err = 0;
    for (std::size_t i = 0; i < 300; ++i) {
      const auto proj = p.project(x.data().subspan(i * 6, 6));
      for (std::size_t j = 0; j < 6; ++j) {
        double rec = p.mean[j];
        for (std::size_t c = 0; c < k; ++c) rec += proj[c] * p.components[c][j];
        err += (x.at(i, j) - rec) * (x.at(i, j) - rec);
      }
    }
    CHECK(err <= prev + 1e-9);
    prev = err;
  }
  CHECK(prev < 1e-18 * 300 + 1e-12);
}

TEST_CASE("pca2 is invariant to input order up to the sign convention") {
  RngStream r(2);
  const ReprSet a = gaussian_set(r, 200, 4, 0.0, "a");
  ReprSet b = a;
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t j = 0; j < 4; ++j) b.vectors.at(i, j) = a.vectors.at(199 - i, j);
  const Pca2Result ra = pca2(std::span<const ReprSet>(&a, 1));
  const Pca2Result rb = pca2(std::span<const ReprSet>(&b, 1));
  for (std::size_t i = 0; i < 200; ++i) {
    CHECK(ra.coords[i][0] == doctest::Approx(rb.coords[199 - i][0]).epsilon(1e-9));
    CHECK(ra.coords[i][1] == doctest::Approx(rb.coords[199 - i][1]).epsilon(1e-9));
  }
}

TEST_CASE("repr_jsd examples and properties") {
  RngStream r(4);
  const ReprSet a = gaussian_set(r, 400, 5, 0.0, "a");
  CHECK(repr_jsd(a, a, 4) == 0.0);

  const ReprSet far = gaussian_set(r, 400, 5, 50.0, "far");
  CHECK(repr_jsd(a, far, 4) == doctest::Approx(std::numbers::ln2).epsilon(1e-12));

  const ReprSet near = gaussian_set(r, 400, 5, 0.3, "near");
  const double j = repr_jsd(a, near, 4);
  CHECK(j > 0.0);
  CHECK(j == repr_jsd(near, a, 4));

  ReprSet a3 = a, n3 = near;
  for (double& x : a3.vectors.data()) x *= 3.0;
  for (double& x : n3.vectors.data()) x *= 3.0;
  CHECK(repr_jsd(a3, n3, 4) == doctest::Approx(j).epsilon(1e-12));

  CHECK_THROWS_AS(repr_jsd(a, near, 0), std::invalid_argument);
  CHECK_THROWS_AS(repr_jsd(a, near, 9), std::invalid_argument);
}

TEST_CASE("quantized emid analogue") {
  RngStream r(6);
  const ReprSet a = gaussian_set(r, 100, 3);
  std::vector<std::vector<std::size_t>> refs(100), preds(100);
  for (std::size_t i = 0; i < 100; ++i) refs[i] = preds[i] = {i % 3, 1};
  // Same set, same answers: nothing differs.
  const EmidAnalogue e = emid_analogue(a, refs, preds, a, refs, preds, 3);
  CHECK(e.emid == 0.0);
  CHECK(e.emi_clean == 0.0);
  auto constant = preds;
  for (auto& p : constant) p = {7, 1};
  const EmidAnalogue c = emid_analogue(a, refs, constant, a, refs, preds, 3);
  CHECK(c.emi_clean <= 0.0);
  CHECK(c.emid < 0.0);
}

TEST_CASE("extraction from a model") {
  const RunConfig c = tiny_run();
  const VittleNet net(c.model, Variant::vittle_fixed, RngStream(1).split("init"));
  const auto data = make_keyed_copy_dataset(c.task, c.model, 60, RngStream(9));
  const ReprSet one = extract(net, std::span(data).first(1), 3, "one");
  CHECK(one.count() == 1);
  CHECK(one.dim() == 16);
  const ReprSet a = extract(net, data, 3, "clean");
  const ReprSet b = extract(net, data, 3, "clean", 3);
  CHECK(a.vectors == b.vectors);

  PerturbationSpec identity = text_spec(PerturbKind::typo, 2, 1);
  identity.rate_override = 0.0;
  const auto same = apply(identity, data, c.task, c.model);
  CHECK(extract(net, same.samples, 3, "id").vectors == a.vectors);
  CHECK_THROWS_AS(extract(net, data, 4, "bad"), std::out_of_range);
}

TEST_CASE("csv exports") {
  const ReprSet a = make_set({{1, 0}, {0, 1}, {1, 1}});
  const PairStats s = pairwise_cosine(a, a);
  std::ostringstream d, h, p;
  write_distances_csv(d, "clean", s);
  write_histogram_csv(h, "clean", s);
  write_pca_csv(p, pca2(std::span<const ReprSet>(&a, 1)));
  CHECK(d.str().rfind("dataset,sample,cosine_distance\nclean,0,0\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : h.str()) lines += ch == '\n';
  CHECK(lines == kCosineBins + 1);
  CHECK(p.str().find("dataset,pc1,pc2\n") != std::string::npos);
}
