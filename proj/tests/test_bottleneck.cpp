// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "vittle/bottleneck.hpp"
#include "vittle/gradcheck.hpp"

using namespace vittle;

namespace {

ModelConfig small_config(PriorKind prior = PriorKind::fixed) {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.max_visual = 3;
  c.max_text = 4;
  c.prior = prior;
  return c;
}

HiddenState random_state(const ModelConfig& c, RngStream& r, std::size_t batch, std::size_t seq, double sd = 1.0) {
  Tensor t = gaussian_sample(r, {batch * seq, c.d});
  for (double& x : t.data()) x *= sd;
  return {Var::constant(std::move(t)), batch, seq, c.bottleneck_layer};
}

void zero_all(Bottleneck& bn) {
  for (auto& [_, v] : bn.parameters().items()) v.mutable_value().fill(0.0);
}

}  // namespace

TEST_CASE("alpha schedule endpoints, midpoint and monotonicity") {
  AlphaSchedule s{0.5, 1000};
  CHECK(alpha_at(s, 0) == 0.0);
  CHECK(alpha_at(s, 1000) == 0.5);
  CHECK(alpha_at(s, 500) == doctest::Approx(0.25).epsilon(1e-15));
  double prev = 0.0;
  for (std::size_t t = 0; t <= 1000; ++t) {
    const double a = alpha_at(s, t);
    CHECK(a >= prev);
    prev = a;
  }
  CHECK_THROWS_AS(alpha_at(s, 1001), std::out_of_range);
  AlphaSchedule odd{0.37, 7};
  CHECK(alpha_at(odd, 7) == 0.37);
}

TEST_CASE("interpolate arithmetic and range check") {
  Var z = Var::constant(Tensor::matrix(1, 3, {0.1, -2.0, 3.5}));
  Var zt = Var::constant(Tensor::matrix(1, 3, {7.0, 8.0, 9.0}));
  CHECK(interpolate(z, zt, 0.0).value() == z.value());
  CHECK(interpolate(z, z, 0.5).value() == z.value());
  Var zero = Var::constant(Tensor({2, 2}, 0.0));
  Var two = Var::constant(Tensor({2, 2}, 2.0));
  CHECK(interpolate(zero, two, 0.5).value() == Tensor({2, 2}, 1.0));
  CHECK_THROWS_AS(interpolate(z, zt, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(interpolate(z, zt, 1.5), std::invalid_argument);
}

TEST_CASE("posterior projection layout") {
  const ModelConfig c = small_config();
  Bottleneck bn(c, RngStream(1));
  RngStream r(2);
  HiddenState h = random_state(c, r, 2, 9);
  auto [v, t] = posterior_infer(bn, h);
  CHECK(v.mu.shape() == Shape{6, 8});
  CHECK(v.logvar.shape() == Shape{6, 8});
  CHECK(t.mu.shape() == Shape{12, 8});
  CHECK(v.modality == Modality::visual);
  CHECK(t.modality == Modality::textual);

  zero_all(bn);
  auto [v0, t0] = posterior_infer(bn, h);
  CHECK(v0.mu.value() == Tensor({6, 8}, 0.0));
  CHECK(v0.logvar.value() == Tensor({6, 8}, 0.0));
  CHECK(t0.mu.value() == Tensor({12, 8}, 0.0));
  CHECK(t0.logvar.value() == Tensor({12, 8}, 0.0));
}

TEST_CASE("posterior rows are position-wise") {
  const ModelConfig c = small_config();
  Bottleneck bn(c, RngStream(3));
  RngStream r(4);
  HiddenState h = random_state(c, r, 1, 7);
  HiddenState g = h;
  Tensor changed = h.z.value();
  for (std::size_t j = 0; j < c.d; ++j) changed.at(5, j) += 1.0;
  g.z = Var::constant(changed);
  auto [va, ta] = posterior_infer(bn, h);
  auto [vb, tb] = posterior_infer(bn, g);
  CHECK(va.mu.value() == vb.mu.value());
  // Row 5 of the sequence is textual row 2.
  for (std::size_t i = 0; i < 4; ++i) {
    bool same = true;
    for (std::size_t j = 0; j < c.d; ++j) same = same && ta.mu.value().at(i, j) == tb.mu.value().at(i, j);
    CHECK(same == (i != 2));
  }
}

TEST_CASE("logvar is clamped") {
  const ModelConfig c = small_config();
  Bottleneck bn(c, RngStream(5));
  zero_all(bn);
  Tensor& b2 = const_cast<Var&>(bn.parameters().get("bottleneck.visual.b2")).mutable_value();
  for (std::size_t j = c.d; j < 2 * c.d; ++j) b2[j] = (j % 2) ? 100.0 : -100.0;
  RngStream r(6);
  auto [v, t] = posterior_infer(bn, random_state(c, r, 1, 7));
  for (std::size_t j = 0; j < c.d; ++j) CHECK(std::abs(v.logvar.value().at(0, j)) == kLogvarClamp);
}

TEST_CASE("reparameterize limits, moments and gradients") {
  RngStream r(7);
  PosteriorStats tight{Var::constant(Tensor::matrix(1, 3, {1.0, -2.0, 0.5})), Var::constant(Tensor({1, 3}, -20.0)),
                       Modality::visual};
  Tensor zt = reparameterize(tight, r).value();
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(zt[j] - tight.mu.value()[j]) < 1e-3);

  const std::size_t n = 100000;
  PosteriorStats unit{Var::constant(Tensor({n, 2}, 0.0)), Var::constant(Tensor({n, 2}, 0.0)), Modality::textual};
  Tensor s = reparameterize(unit, r).value();
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0, q = 0;
    for (std::size_t i = 0; i < n; ++i) m += s.at(i, j);
    m /= n;
    for (std::size_t i = 0; i < n; ++i) q += (s.at(i, j) - m) * (s.at(i, j) - m);
    CHECK(std::abs(q / (n - 1) - 1.0) < 0.03);
  }

  Var mu = Var::parameter(Tensor::matrix(2, 2, {0.3, -0.1, 1.2, 0.0}));
  Var lv = Var::parameter(Tensor::matrix(2, 2, {0.2, -1.0, 0.5, 0.1}));
  RngStream frozen(8);
  Var out = sum(reparameterize({mu, lv, Modality::visual}, frozen));
  backward(out);
  for (double g : mu.grad().data()) CHECK(g == 1.0);
  auto res = grad_check_graph(
      [&] {
        RngStream again(8);
        return sum(mul(reparameterize({mu, lv, Modality::visual}, again), reparameterize({mu, lv, Modality::visual}, again)));
      },
      {mu, lv});
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("kld closed form examples") {
  std::vector<double> mu1{1.0}, lv0{0.0}, zero{0.0};
  CHECK(kld_closed_form(mu1, lv0, zero, zero) == doctest::Approx(0.5).epsilon(1e-14));
  std::vector<double> lv4{std::log(4.0)};
  CHECK(kld_closed_form(zero, lv4, zero, zero) == doctest::Approx(1.5 - std::numbers::ln2).epsilon(1e-14));
  CHECK(kld_closed_form(zero, zero, zero, zero) == 0.0);
}

TEST_CASE("kld_gaussian matches the closed form for both prior kinds") {
  RngStream r(9);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor mu = gaussian_sample(r, {5, 4});
    Tensor lv = gaussian_sample(r, {5, 4});
    PosteriorStats q{Var::constant(mu), Var::constant(lv), trial % 2 ? Modality::visual : Modality::textual};

    PriorSpec fixed;
    std::vector<double> z(20, 0.0);
    CHECK(std::abs(kld_gaussian(q, fixed).value().item() - kld_closed_form(mu.data(), lv.data(), z, z)) < 1e-12);

    PriorSpec learn;
    learn.kind = PriorKind::learnable;
    Tensor mp = gaussian_sample(r, {4}), lp = gaussian_sample(r, {4});
    learn.mu_visual = learn.mu_textual = Var::constant(mp);
    learn.logvar_visual = learn.logvar_textual = Var::constant(lp);
    std::vector<double> mp_full, lp_full;
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        mp_full.push_back(mp[j]);
        lp_full.push_back(lp[j]);
      }
    }
    const double k = kld_gaussian(q, learn).value().item();
    CHECK(k >= 0.0);
    CHECK(std::abs(k - kld_closed_form(mu.data(), lv.data(), mp_full, lp_full)) < 1e-12);
  }
}

TEST_CASE("kld is zero when the posterior equals the prior") {
  PriorSpec learn;
  learn.kind = PriorKind::learnable;
  learn.mu_visual = learn.mu_textual = Var::constant(Tensor::matrix(1, 3, {0.4, -1.0, 2.0}).reshaped({3}));
  learn.logvar_visual = learn.logvar_textual = Var::constant(Tensor::matrix(1, 3, {0.2, 0.0, -3.0}).reshaped({3}));
  PosteriorStats q{Var::constant(Tensor::matrix(2, 3, {0.4, -1.0, 2.0, 0.4, -1.0, 2.0})),
                   Var::constant(Tensor::matrix(2, 3, {0.2, 0.0, -3.0, 0.2, 0.0, -3.0})), Modality::textual};
  CHECK(std::abs(kld_gaussian(q, learn).value().item()) < 1e-12);
}

TEST_CASE("kld Monte Carlo agreement") {
  RngStream r(10);
  for (int trial = 0; trial < 3; ++trial) {
    const double mq = r.normal(), lq = 0.5 * r.normal(), mp = r.normal(), lp = 0.5 * r.normal();
    const double sq = std::exp(0.5 * lq), sp = std::exp(0.5 * lp);
    double acc = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double x = mq + sq * r.normal();
      const double lq_x = -0.5 * std::pow((x - mq) / sq, 2) - std::log(sq);
      const double lp_x = -0.5 * std::pow((x - mp) / sp, 2) - std::log(sp);
      acc += lq_x - lp_x;
    }
    const double a[] = {mq}, b[] = {lq}, c[] = {mp}, d[] = {lp};
    CHECK(std::abs(acc / n - kld_closed_form(a, b, c, d)) < 2e-2);
  }
}

TEST_CASE("bottleneck_forward contracts") {
  const ModelConfig c = small_config();
  Bottleneck bn(c, RngStream(11));
  RngStream r(12);
  HiddenState h = random_state(c, r, 2, 8);
  RngStream noise(13);
  auto train0 = bottleneck_forward(bn, h, 0.0, noise, BottleneckMode::train);
  CHECK(train0.state.z.value() == h.z.value());
  CHECK(train0.state.layer == h.layer);

  auto infer1 = bottleneck_forward(bn, h, 0.0, noise, BottleneckMode::infer);
  auto infer2 = bottleneck_forward(bn, h, 0.0, noise, BottleneckMode::infer);
  CHECK(infer1.state.z.value() == infer2.state.z.value());
  CHECK_FALSE(infer1.state.z.value() == h.z.value());

  // Zero weights with the mean bias equal to z: averaging identical values.
  Bottleneck ident(c, RngStream(11));
  zero_all(ident);
  for (const char* m : {"bottleneck.visual.b2", "bottleneck.textual.b2"}) {
    Tensor& b2 = const_cast<Var&>(ident.parameters().get(m)).mutable_value();
    for (std::size_t j = 0; j < c.d; ++j) b2[j] = 0.25 * static_cast<double>(j);
    for (std::size_t j = c.d; j < 2 * c.d; ++j) b2[j] = 3.0;
  }
  Tensor flat({16, c.d});
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < c.d; ++j) flat.at(i, j) = 0.25 * static_cast<double>(j);
  HiddenState hf{Var::constant(flat), 2, 8, c.bottleneck_layer};
  CHECK(bottleneck_forward(ident, hf, 0.3, noise, BottleneckMode::infer).state.z.value() == flat);

  Bottleneck wide(c, RngStream(14));
  for (auto& [_, v] : wide.parameters().items()) {
    for (double& x : v.mutable_value().data()) x *= 50.0;
  }
  for (int trial = 0; trial < 1000; ++trial) {
    HiddenState s = random_state(c, r, 1, 8, 3.0);
    auto o = bottleneck_forward(wide, s, 0.5, noise, BottleneckMode::train);
    REQUIRE(o.kld_visual.value().item() >= 0.0);
    REQUIRE(o.kld_textual.value().item() >= 0.0);
  }
}

TEST_CASE("bottleneck parameter count") {
  for (PriorKind k : {PriorKind::fixed, PriorKind::learnable}) {
    ModelConfig c = small_config(k);
    Bottleneck bn(c, RngStream(1));
    CHECK(bn.parameters().scalar_count() == Bottleneck::expected_size(c.d, k));
  }
  CHECK(Bottleneck::expected_size(8, PriorKind::fixed) == 2 * (8 * 8 + 8 * 16) + 2 * (8 + 16));
  CHECK(Bottleneck::expected_size(8, PriorKind::learnable) == 2 * (8 * 8 + 8 * 16) + 2 * (8 + 16) + 2 * 2 * 8);
}

TEST_CASE("kld gradients through projections and learnable prior") {
  ModelConfig c = small_config(PriorKind::learnable);
  Bottleneck bn(c, RngStream(15));
  for (auto& [_, v] : bn.parameters().items()) {
    RngStream r = RngStream(16).split(_);
    for (double& x : v.mutable_value().data()) x += 0.3 * r.normal();
  }
  RngStream r(17);
  HiddenState h = random_state(c, r, 1, 8);
  std::vector<Var> leaves;
  for (auto& [_, v] : bn.parameters().items()) leaves.push_back(v);
  auto res = grad_check_graph(
      [&] {
        RngStream eps(18);
        auto o = bottleneck_forward(bn, h, 0.5, eps, BottleneckMode::train);
        return add(add(o.kld_visual, o.kld_textual), mean(square(o.state.z)));
      },
      leaves);
  CHECK(res.max_rel_error < 1e-4);
}
