// SPDX-License-Identifier: Apache-2.0
#include "vittle/experiment.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "vittle/perturb.hpp"
#include "vittle/repr.hpp"

namespace vittle {
namespace {

std::string category_of(const ShiftedDataset& m, bool clean) {
  if (clean) return "clean";
  switch (m.spec.modality) {
    case PerturbCategory::visual:
      return "visual";
    case PerturbCategory::textual:
      return "textual";
    case PerturbCategory::joint:
      return "joint";
  }
  return "?";
}

std::string kind_of(const ShiftedDataset& m, bool clean) {
  if (clean) return "clean";
  std::string k;
  if (m.spec.visual_kind) k = to_string(*m.spec.visual_kind);
  if (m.spec.text_kind) k += (k.empty() ? "" : "+") + to_string(*m.spec.text_kind);
  return k;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

const SeedSummary& ExperimentReport::summary(Variant v, std::uint64_t seed) const {
  for (const auto& s : summaries)
    if (s.variant == v && s.seed == seed) return s;
  throw std::out_of_range("no summary for " + to_string(v) + " seed " + std::to_string(seed));
}

double ExperimentReport::mean_accuracy(Variant v, const std::string& dataset) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.variant == v && c.dataset == dataset && c.status == "ok") {
      sum += c.accuracy;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

ExperimentReport run_robustness(const RunConfig& config, const std::vector<Variant>& variants,
                                const std::vector<std::uint64_t>& seeds, const ExperimentOptions& options) {
  if (variants.empty()) throw std::invalid_argument("run_robustness: no variants given");
  if (seeds.empty()) throw std::invalid_argument("run_robustness: no seeds given");
  config.validate();
  auto log = [&](const std::string& m) {
    if (options.log) options.log(m);
  };
  const std::size_t layer = options.repr_layer.value_or(config.model.bottleneck_layer);
  const std::size_t bits = config.experiment.quantizer_bits;

  ExperimentReport report;
  report.config = config;
  report.variants = variants;
  report.seeds = seeds;

  // One suite per seed, shared by every variant so comparisons are paired.
  std::map<std::uint64_t, Suite> suites;
  for (std::uint64_t seed : seeds) {
    const auto base = eval_dataset(config, seed, config.experiment.eval_samples);
    const std::uint64_t perturb_seed = RngStream(seed).split("perturb").next_u64();
    suites.emplace(seed, build_suite(base, config.task, config.model, perturb_seed));
  }
  for (std::size_t i = 0; i < suites.begin()->second.members.size(); ++i) {
    report.datasets.push_back(i == 0 ? "clean" : suites.begin()->second.members[i].spec.name());
  }

  for (Variant v : variants) {
    for (std::uint64_t seed : seeds) {
      const Suite& suite = suites.at(seed);
      SeedSummary sum{v, seed};
      std::vector<CellResult> cells;
      for (std::size_t i = 0; i < suite.members.size(); ++i) {
        CellResult c;
        c.variant = v;
        c.seed = seed;
        c.dataset = report.datasets[i];
        c.category = category_of(suite.members[i], i == 0);
        c.kind = kind_of(suite.members[i], i == 0);
        c.severity = i == 0 ? 0 : suite.members[i].spec.severity;
        cells.push_back(std::move(c));
      }
      try {
        log("train " + to_string(v) + " seed " + std::to_string(seed));
        const TrainingResult trained = run_training(config, v, seed);
        const VittleNet& net = trained.trainer.net();
        const ShiftedDataset& clean = suite.members.front();
        const EvalResult clean_eval = evaluate(net, clean.samples, options.threads);
        const ReprSet clean_repr = extract(net, clean.samples, layer, "clean", options.threads);
        for (std::size_t i = 0; i < suite.members.size(); ++i) {
          CellResult& c = cells[i];
          try {
            const ShiftedDataset& m = suite.members[i];
            const EvalResult e = i == 0 ? clean_eval : evaluate(net, m.samples, options.threads);
            c.accuracy = e.accuracy;
            std::size_t kept = 0, hits = 0;
            for (std::size_t s = 0; s < m.samples.size(); ++s) {
              if (m.samples[s].flags & kFlagKeyTouched) continue;
              ++kept;
              hits += e.correct[s];
            }
            c.accuracy_unflagged = kept ? static_cast<double>(hits) / static_cast<double>(kept) : 0.0;
            const ReprSet repr = i == 0 ? clean_repr : extract(net, m.samples, layer, c.dataset, options.threads);
            c.repr_jsd = repr_jsd(clean_repr, repr, bits);
            c.mean_cosine = pairwise_cosine(clean_repr, repr).mean;
            std::vector<std::vector<std::size_t>> clean_refs, refs;
            for (const auto& s : clean.samples) clean_refs.push_back(s.response);
            for (const auto& s : m.samples) refs.push_back(s.response);
            c.emid = emid_analogue(clean_repr, clean_refs, clean_eval.predictions, repr, refs, e.predictions, bits).emid;
          } catch (const std::exception& e) {
            c.status = one_line(std::string("failed: ") + e.what());
          }
        }
      } catch (const std::exception& e) {
        log("failed " + to_string(v) + " seed " + std::to_string(seed) + ": " + e.what());
        for (auto& c : cells) c.status = one_line(std::string("failed: ") + e.what());
      }

      std::size_t n = 0;
      for (const auto& c : cells) {
        if (c.status != "ok") {
          sum.ok = false;
          continue;
        }
        if (c.category == "clean") {
          sum.clean_accuracy = c.accuracy;
          continue;
        }
        ++n;
        sum.perturbed_accuracy += c.accuracy;
        sum.category_accuracy[c.category] += c.accuracy / 9.0;
        sum.repr_jsd += c.repr_jsd;
        sum.mean_cosine += c.mean_cosine;
        sum.emid += c.emid;
      }
      if (n > 0) {
        const double k = static_cast<double>(n);
        sum.perturbed_accuracy /= k;
        sum.repr_jsd /= k;
        sum.mean_cosine /= k;
        sum.emid /= k;
      }
      sum.accuracy_drop = sum.clean_accuracy - sum.perturbed_accuracy;
      report.summaries.push_back(sum);
      report.cells.insert(report.cells.end(), cells.begin(), cells.end());
    }
  }
  return report;
}

void write_experiment_csv(std::ostream& out, const ExperimentReport& r) {
  out << "variant,seed,dataset,category,kind,severity,status,accuracy,accuracy_unflagged,repr_jsd,"
         "mean_cosine_distance,emid\n"
      << std::setprecision(17);
  for (const auto& c : r.cells) {
    out << to_string(c.variant) << ',' << c.seed << ',' << c.dataset << ',' << c.category << ',' << c.kind << ','
        << c.severity << ',' << c.status << ',' << c.accuracy << ',' << c.accuracy_unflagged << ',' << c.repr_jsd
        << ',' << c.mean_cosine << ',' << c.emid << '\n';
  }
}

void write_experiment_summary_csv(std::ostream& out, const ExperimentReport& r) {
  out << "variant,seed,ok,clean_accuracy,perturbed_accuracy,visual_accuracy,textual_accuracy,joint_accuracy,"
         "accuracy_drop,repr_jsd,mean_cosine_distance,emid\n"
      << std::setprecision(17);
  auto cat = [](const SeedSummary& s, const char* k) {
    auto it = s.category_accuracy.find(k);
    return it == s.category_accuracy.end() ? 0.0 : it->second;
  };
  auto row = [&](const std::string& variant, const std::string& seed, bool ok, const SeedSummary& s) {
    out << variant << ',' << seed << ',' << (ok ? 1 : 0) << ',' << s.clean_accuracy << ',' << s.perturbed_accuracy << ','
        << cat(s, "visual") << ',' << cat(s, "textual") << ',' << cat(s, "joint") << ',' << s.accuracy_drop << ','
        << s.repr_jsd << ',' << s.mean_cosine << ',' << s.emid << '\n';
  };
  for (Variant v : r.variants) {
    SeedSummary mean{v, 0};
    bool all_ok = true;
    for (std::uint64_t seed : r.seeds) {
      const SeedSummary& s = r.summary(v, seed);
      row(to_string(v), std::to_string(seed), s.ok, s);
      all_ok = all_ok && s.ok;
      const double w = 1.0 / static_cast<double>(r.seeds.size());
      mean.clean_accuracy += w * s.clean_accuracy;
      mean.perturbed_accuracy += w * s.perturbed_accuracy;
      for (const auto& [k, a] : s.category_accuracy) mean.category_accuracy[k] += w * a;
      mean.accuracy_drop += w * s.accuracy_drop;
      mean.repr_jsd += w * s.repr_jsd;
      mean.mean_cosine += w * s.mean_cosine;
      mean.emid += w * s.emid;
    }
    row(to_string(v), "mean", all_ok, mean);
  }
}

std::size_t paired_wins(const ExperimentReport& r, Variant candidate, Variant reference,
                        const std::function<bool(const SeedSummary&, const SeedSummary&)>& better) {
  std::size_t wins = 0;
  for (std::uint64_t seed : r.seeds) {
    const SeedSummary& a = r.summary(candidate, seed);
    const SeedSummary& b = r.summary(reference, seed);
    if (a.ok && b.ok && better(a, b)) ++wins;
  }
  return wins;
}

}  // namespace vittle
