// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "vittle/discrete_info.hpp"

using namespace vittle;
using namespace vittle::info;

namespace {

const double kLn2 = std::numbers::ln2;

std::vector<double> random_simplex(RngStream& r, std::size_t n) {
  std::vector<double> v(n);
  double s = 0;
  for (auto& x : v) s += x = r.gamma(1.0);
  for (auto& x : v) x /= s;
  return v;
}

// Hand-built world: one visual and one textual latent bit copied straight
// from the inputs, so f is injective and Z = X.
DiscreteWorld copy_world(std::vector<double> px, std::vector<double> qx) {
  DiscreteWorld w;
  w.xv = w.xt = w.zv = w.zt = 2;
  w.y = 2;
  w.px = std::move(px);
  w.qx = std::move(qx);
  w.enc_v = {0, 0, 1, 1};
  w.enc_t = {0, 1, 0, 1};
  w.channel_p = {0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.3, 0.7};
  w.channel_q = w.channel_p;
  w.theta = w.channel_p;
  return w;
}

}  // namespace

TEST_CASE("entropy examples") {
  CHECK(entropy(std::vector<double>{1.0, 0.0, 0.0}) == 0.0);
  CHECK(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(entropy(std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(1.5 * kLn2).epsilon(1e-15));
}

TEST_CASE("distribution validation") {
  CHECK_NOTHROW(DiscreteDist({0.3, 0.7}));
  CHECK_THROWS_AS(DiscreteDist({0.3, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(DiscreteDist({1.2, -0.2}), std::invalid_argument);
  CHECK_THROWS_AS(DiscreteJoint(2, 2, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("mutual information examples and dual formula") {
  DiscreteJoint product(2, 3, {0.5 * 0.2, 0.5 * 0.3, 0.5 * 0.5, 0.5 * 0.2, 0.5 * 0.3, 0.5 * 0.5});
  CHECK(std::abs(mutual_information(product)) < 1e-15);
  DiscreteJoint identity(2, 2, {0.5, 0.0, 0.0, 0.5});
  CHECK(mutual_information(identity) == doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(mutual_information_entropy_form(identity) == doctest::Approx(kLn2).epsilon(1e-15));

  RngStream r(11);
  for (int i = 0; i < 500; ++i) {
    DiscreteJoint j(4, 4, random_simplex(r, 16));
    CHECK(std::abs(mutual_information(j) - mutual_information_entropy_form(j)) < 1e-10);
  }
}

TEST_CASE("kl handles support") {
  std::vector<double> p{0.5, 0.5, 0.0}, q{0.25, 0.75, 0.0}, z{1.0, 0.0, 0.0};
  CHECK(kl(p, p) == 0.0);
  CHECK(kl(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)));
  CHECK(std::isinf(kl(p, z)));
}

TEST_CASE("jsd examples and properties") {
  std::vector<double> a{1.0, 0.0}, b{0.0, 1.0};
  CHECK(jsd(a, b) == doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(jsd(a, a) == 0.0);
  CHECK_THROWS_AS(jsd(a, std::vector<double>{1.0, 0.0, 0.0}), std::invalid_argument);

  RngStream r(5);
  for (int i = 0; i < 500; ++i) {
    const auto p = random_simplex(r, 5), q = random_simplex(r, 5);
    const double d = jsd(p, q);
    CHECK(d >= 0.0);
    CHECK(d <= kLn2 + 1e-15);
    CHECK(d == jsd(q, p));
    CHECK(jsd(p, p) < 1e-12);
  }
}

TEST_CASE("emi examples") {
  DiscreteWorld w = copy_world({0.1, 0.2, 0.3, 0.4}, {0.4, 0.3, 0.2, 0.1});
  // Model channel equals ground truth through an injective f.
  CHECK(std::abs(emi(w, Side::P)) < 1e-15);
  CHECK(std::abs(emi(w, Side::Q)) < 1e-15);

  w.theta.assign(8, 0.5);
  CHECK(emi(w, Side::P) == doctest::Approx(-mutual_information(xy_joint(w, Side::P))).epsilon(1e-14));
  CHECK(emi(w, Side::P) <= 0.0);
}

TEST_CASE("emid symmetry and antisymmetry") {
  const DiscreteWorld same = copy_world({0.1, 0.2, 0.3, 0.4}, {0.1, 0.2, 0.3, 0.4});
  CHECK(emid(same) == 0.0);

  RngStream r(21);
  for (int i = 0; i < 200; ++i) {
    RngStream s = r.split(static_cast<std::uint64_t>(i));
    const DiscreteWorld w = sample_world(s);
    CHECK(emid(swap_pq(w)) == -emid(w));
    const double direct = (mutual_information(xy_theta_joint(w, Side::P)) - mutual_information(xy_joint(w, Side::P))) -
                          (mutual_information(xy_theta_joint(w, Side::Q)) - mutual_information(xy_joint(w, Side::Q)));
    CHECK(emid(w) == doctest::Approx(direct).epsilon(1e-13));
  }
}

TEST_CASE("assumption checker rejects mismatched channels and conditionals") {
  DiscreteWorld w = copy_world({0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25});
  CHECK_NOTHROW(check_assumptions(w));
  w.channel_q[0] = 0.8;
  w.channel_q[1] = 0.2;
  CHECK_THROWS_AS(check_assumptions(w), AssumptionError);
  CHECK_THROWS_AS(emid_upper_bound(w), AssumptionError);

  // Z_v and Z_t become dependent under Q only.
  DiscreteWorld d = copy_world({0.25, 0.25, 0.25, 0.25}, {0.4, 0.1, 0.1, 0.4});
  CHECK_THROWS_AS(check_assumptions(d), AssumptionError);
}

TEST_CASE("bound with P equal to Q reduces to the entropy gaps") {
  RngStream r(3);
  const DiscreteWorld w = sample_world(r, {}, {true, true});
  CHECK(w.px == w.qx);
  const EmidReport rep = emid_upper_bound(w);
  CHECK(rep.emid == 0.0);
  CHECK(rep.sqrt_jsd_zv == 0.0);
  CHECK(rep.sqrt_jsd_zt == 0.0);
  CHECK(rep.delta == 0.0);
  CHECK(rep.bound == doctest::Approx(rep.gap_p + rep.gap_q).epsilon(1e-15));
  CHECK(rep.slack >= 0.0);
}

TEST_CASE("identical Z marginals with different fibres give positive delta") {
  RngStream root(8);
  int positive = 0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    RngStream r = root.split(i);
    const DiscreteWorld w = sample_world(r, {}, {true, false});
    const EmidReport rep = emid_upper_bound(w);
    CHECK(rep.jsd_z < 1e-12);
    CHECK(rep.emid <= rep.bound);
    positive += rep.delta > 1e-6;
  }
  CHECK(positive > 25);
}

TEST_CASE("worlds from the sampler satisfy invariants") {
  RngStream root(99);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    RngStream r = root.split(i);
    const DiscreteWorld w = sample_world(r);
    CHECK_NOTHROW(check_assumptions(w));
    for (std::size_t x = 0; x < w.nx(); ++x) {
      double s = 0;
      for (std::size_t y = 0; y < w.y; ++y) s += w.channel_p[x * w.y + y];
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  RngStream small(1);
  const DiscreteWorld tiny = sample_world(small, {2, 2, 2, 2, 2});
  CHECK(tiny.nx() == 4);
  CHECK(tiny.nz() == 4);
  RngStream a(4), b(4);
  CHECK(sample_world(a) == sample_world(b));
  CHECK_THROWS_AS(sample_world(a, {1, 2, 2, 2, 2}), std::invalid_argument);
}

TEST_CASE("jsd chain rule and block identities") {
  RngStream root(17);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    RngStream r = root.split(i);
    const DiscreteWorld w = sample_world(r);
    const EmidReport rep = emid_upper_bound(w);
    CHECK(rep.chain_residual < 1e-10);
    CHECK(rep.jsd_x >= 0.0);
    CHECK(rep.jsd_x <= kLn2 + 1e-15);
  }
}

TEST_CASE("bound holds on 1000 default worlds") {
  const VerifySummary s = verify_bound(1000, {}, RngStream(2024));
  CHECK(s.violations == 0);
  CHECK(s.min_slack >= 0.0);
  CHECK(s.max_chain_residual < 1e-10);
  const VerifySummary again = verify_bound(1000, {}, RngStream(2024));
  CHECK(again.min_slack == s.min_slack);
  CHECK(again.corr_bound == s.corr_bound);
  CHECK_THROWS_AS(verify_bound(0, {}, RngStream(1)), std::invalid_argument);
}

TEST_CASE("world text round trip and csv columns") {
  RngStream r(6);
  const DiscreteWorld w = sample_world(r);
  const std::string text = world_to_text(w);
  CHECK(text.rfind("# vittle-world v1\n", 0) == 0);
  CHECK(world_from_text(text) == w);
  CHECK_THROWS_AS(world_from_text("sizes 2 2 2 2 2\n"), std::invalid_argument);
  CHECK_THROWS_AS(world_from_text("# vittle-world v1\nsizes 2 2 2 2 2\npx 0.5 abc\n"), std::invalid_argument);

  const VerifySummary s = verify_bound(3, {}, RngStream(1));
  std::ostringstream csv;
  write_report_csv(csv, s);
  std::string header;
  std::getline(std::istringstream(csv.str()) >> std::ws, header);
  CHECK(header.rfind("instance_id,emid,bound,slack,", 0) == 0);
  std::size_t lines = 0;
  for (char c : csv.str()) lines += c == '\n';
  CHECK(lines == 4);
}
