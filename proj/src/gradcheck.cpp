// SPDX-License-Identifier: Apache-2.0
#include "vittle/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vittle {

double relative_error(double analytic, double numeric, double floor) noexcept {
  return std::abs(analytic - numeric) / std::max(floor, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const std::function<double()>& f, std::span<double> point,
                           std::span<const double> analytic, double step,
                           std::optional<std::span<const std::size_t>> coords, double floor) {
  if (analytic.size() != point.size()) {
    throw ShapeError("grad_check", Shape{point.size()}, Shape{analytic.size()});
  }
  GradCheckResult result;
  auto probe = [&](std::size_t i) {
    const double saved = point[i];
    point[i] = saved + step;
    const double up = f();
    point[i] = saved - step;
    const double down = f();
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: non-finite objective at coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric, floor);
    if (result.checked == 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.worst_analytic = analytic[i];
      result.worst_numeric = numeric;
    }
    ++result.checked;
  };
  if (coords) {
    for (std::size_t i : *coords) {
      if (i >= point.size()) throw ShapeError("grad_check", "coordinate " + std::to_string(i) + " out of range");
      probe(i);
    }
  } else {
    for (std::size_t i = 0; i < point.size(); ++i) probe(i);
  }
  return result;
}

GradCheckResult grad_check_graph(const std::function<Var()>& loss, std::vector<Var> leaves, double step) {
  for (auto& leaf : leaves) leaf.zero_grad();
  backward(loss());
  GradCheckResult worst;
  auto value_only = [&] {
    NoGradGuard guard;
    return loss().value().item();
  };
  for (auto& leaf : leaves) {
    const std::vector<double> analytic(leaf.grad().data().begin(), leaf.grad().data().end());
    auto r = grad_check(value_only, leaf.mutable_value().data(), analytic, step);
    if (r.max_rel_error >= worst.max_rel_error) {
      const auto checked = worst.checked;
      worst = r;
      worst.checked += checked;
    } else {
      worst.checked += r.checked;
    }
  }
  return worst;
}

}  // namespace vittle
