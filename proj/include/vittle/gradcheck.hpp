// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vittle/autograd.hpp"

namespace vittle {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(floor, |a| + |n|)
double relative_error(double analytic, double numeric, double floor = 1e-8) noexcept;

/// Compares `analytic` against central differences of `f` at `point`.
/// `point` is perturbed in place and restored. When `coords` is given only
/// those coordinates are probed. Throws NumericError if f is non-finite at a
/// probe point. `floor` bounds the denominator of the relative error.
GradCheckResult grad_check(const std::function<double()>& f, std::span<double> point,
                           std::span<const double> analytic, double step = 1e-5,
                           std::optional<std::span<const std::size_t>> coords = std::nullopt,
                           double floor = 1e-8);

/// Graph-level convenience: rebuilds `loss` for each probe, differentiates
/// it once with backward(), and checks every coordinate of every leaf.
GradCheckResult grad_check_graph(const std::function<Var()>& loss, std::vector<Var> leaves,
                                 double step = 1e-5);

}  // namespace vittle
