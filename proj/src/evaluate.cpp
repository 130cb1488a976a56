// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <iomanip>
#include <ostream>
#include <thread>

#include "vittle/gradcheck.hpp"
#include "vittle/trainer.hpp"

namespace vittle {

EvalResult evaluate(const VittleNet& net, std::span<const QuerySample> dataset, std::size_t threads,
                    std::size_t batch_size) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: dataset has no samples");
  batch_size = std::max<std::size_t>(batch_size, 1);
  EvalResult r;
  r.predictions.resize(dataset.size());
  const std::size_t chunks = (dataset.size() + batch_size - 1) / batch_size;
  auto work = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t c = worker; c < chunks; c += stride) {
      const std::size_t begin = c * batch_size;
      const std::size_t end = std::min(dataset.size(), begin + batch_size);
      auto out = net.generate(dataset.subspan(begin, end - begin), net.config().max_response);
      std::move(out.begin(), out.end(), r.predictions.begin() + static_cast<std::ptrdiff_t>(begin));
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
  std::size_t hits = 0;
  r.correct.resize(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    r.correct[i] = r.predictions[i] == dataset[i].response;
    hits += r.correct[i];
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(dataset.size());
  return r;
}

std::string parameter_group(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

GradcheckReport gradcheck_loss(const VittleNet& net, std::span<const QuerySample> batch, double alpha, double beta,
                               std::uint64_t noise_seed, std::size_t coords_per_array, const RngStream& picker) {
  auto loss = [&] {
    RngStream eps(noise_seed);
    return compute_loss(net, batch, alpha, beta, eps, BottleneckMode::train).total;
  };
  auto params = net.parameters();
  for (auto& [_, p] : params) p.zero_grad();
  backward(loss());

  GradcheckReport report;
  for (auto& [name, p] : params) {
    const Tensor analytic = p.grad();
    const std::size_t n = analytic.size();
    std::vector<std::size_t> coords;
    if (n <= coords_per_array) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      RngStream pick = picker.split(name);
      while (coords.size() < coords_per_array) {
        const std::size_t c = pick.below(n);
        if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
      }
    }
    auto f = [&] {
      NoGradGuard ng;
      return loss().value().item();
    };
    // Central differences of an O(1) loss at step 1e-5 carry ~1e-10 of
    // cancellation error, so gradients below 1e-6 are compared absolutely.
    const GradCheckResult res = grad_check(f, p.mutable_value().data(), analytic.data(), 1e-5,
                                           std::span<const std::size_t>(coords), 1e-6);
    auto& g = report.groups[parameter_group(name)];
    if (g.checked == 0 || res.max_rel_error > g.max_rel_error) {
      const std::size_t checked = g.checked;
      g = res;
      g.checked += checked;
    } else {
      g.checked += res.checked;
    }
  }
  for (const auto& [name, g] : report.groups) {
    if (report.worst_group.empty() || g.max_rel_error > report.max_rel_error) {
      report.max_rel_error = g.max_rel_error;
      report.worst_group = name;
    }
  }
  return report;
}

std::vector<SweepCell> sweep_grid(std::span<const std::size_t> layers, std::span<const double> beta_scales,
                                  std::span<const double> alpha_maxes, std::span<const std::uint64_t> seeds) {
  std::vector<SweepCell> cells;
  for (std::size_t l : layers)
    for (double b : beta_scales)
      for (double a : alpha_maxes)
        for (std::uint64_t s : seeds) cells.push_back({l, b, a, s});
  return cells;
}

std::vector<SweepRow> sweep(const RunConfig& base, Variant variant, std::span<const SweepCell> cells,
                            std::size_t eval_samples) {
  std::vector<SweepRow> rows;
  for (const SweepCell& cell : cells) {
    SweepRow row{cell, "ok", {}, 0.0};
    try {
      RunConfig c = base;
      c.model.bottleneck_layer = c.model.bottleneck_layer_text = cell.layer;
      c.model.beta_scale = cell.beta_scale;
      c.model.alpha_max = cell.alpha_max;
      c.model.allow_alpha_above_half = c.model.allow_alpha_above_half || cell.alpha_max > 0.5;
      c.validate();
      TrainingResult r = run_training(c, variant, cell.seed);
      row.final_loss = r.metrics.back().loss;
      const auto data = eval_dataset(c, cell.seed, eval_samples);
      row.clean_accuracy = evaluate(r.trainer.net(), data).accuracy;
    } catch (const DivergenceError& e) {
      row.status = "diverged";
      row.final_loss = e.loss();
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    std::replace(row.status.begin(), row.status.end(), ',', ';');
    std::replace(row.status.begin(), row.status.end(), '\n', ' ');
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "layer,beta_scale,alpha_max,seed,status,nll,kld_v,kld_t,total,clean_accuracy\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.cell.layer << ',' << r.cell.beta_scale << ',' << r.cell.alpha_max << ',' << r.cell.seed << ','
        << r.status << ',' << r.final_loss.nll << ',' << r.final_loss.kld_v << ',' << r.final_loss.kld_t << ','
        << r.final_loss.total << ',' << r.clean_accuracy << '\n';
  }
}

}  // namespace vittle
