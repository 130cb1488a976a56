// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "vittle/bottleneck.hpp"
#include "vittle/cli.hpp"
#include "vittle/discrete_info.hpp"
#include "vittle/experiment.hpp"
#include "vittle/perturb.hpp"
#include "vittle/platform.hpp"
#include "vittle/repr.hpp"
#include "vittle/task.hpp"
#include "vittle/trainer.hpp"

using namespace vittle;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr double kMcTol = 1e-2;
constexpr std::size_t kMcSamples = 1'000'000;
constexpr double kSimplifiedTol = 1e-12;
constexpr std::size_t kBoundWorlds = 1000;
constexpr double kChainTol = 1e-10;
constexpr double kBoundSeconds = 300.0;
constexpr std::size_t kReductionSteps = 200;
constexpr std::size_t kResumeSteps = 50;
constexpr std::size_t kPairedWinsNeeded = 4;
constexpr double kInfoTol = 1e-10;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double x) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << x;
  return s.str();
}

std::string fixed(double x, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

struct Context {
  RunConfig toy;
  std::vector<std::uint64_t> seeds;
  fs::path out;
  std::size_t threads = 1;
  std::optional<ExperimentReport> robustness;
};

Outcome gradient_fidelity(Context& ctx) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_where;
  std::size_t probes = 0;
  for (Variant v : {Variant::baseline, Variant::vittle_fixed, Variant::vittle_learnable}) {
    Trainer t(ctx.toy, v, 1);
    const RngStream root(1);
    const auto batch = make_keyed_copy_dataset(ctx.toy.task, t.config().model, 4, root.split("gradcheck"));
    const double alpha = t.net().has_bottleneck() ? 0.5 : 0.0;
    for (std::size_t phase = 0; phase < 2; ++phase) {
      if (phase == 1) continue_training(t, 100);
      const GradcheckReport r = gradcheck_loss(t.net(), batch, alpha, t.beta(), root.split("noise").next_u64(), 8,
                                               root.split("coords"));
      for (const auto& [_, g] : r.groups) probes += g.checked;
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        worst_where = to_string(v) + " " + r.worst_group + " at step " + std::to_string(t.step());
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < kGradTol && secs < kGradSeconds,
          "max rel. error " + sci(worst) + " (" + worst_where + "), tol " + sci(kGradTol) + "; " +
              std::to_string(probes) + " coordinates at init and after 100 steps; " + fixed(secs, 1) + " s (limit " +
              fixed(kGradSeconds, 0) + " s)"};
}

Var constant_rows(std::vector<double> v, std::size_t rows, std::size_t cols) {
  return Var::constant(Tensor({rows, cols}, std::move(v)));
}

Outcome kld_closed_form_vs_mc(Context&) {
  constexpr std::size_t kDim = 4;
  RngStream r(2);
  double worst_mc = 0.0, worst_simplified = 0.0;
  for (int setting = 0; setting < 20; ++setting) {
    std::vector<double> mq(kDim), lq(kDim), mp(kDim), lp(kDim);
    for (std::size_t j = 0; j < kDim; ++j) {
      mq[j] = r.normal();
      lq[j] = 0.6 * r.normal();
      mp[j] = r.normal();
      lp[j] = 0.6 * r.normal();
    }
    PosteriorStats q{constant_rows(mq, 1, kDim), constant_rows(lq, 1, kDim), Modality::visual};
    PriorSpec prior;
    prior.kind = PriorKind::learnable;
    prior.mu_visual = Var::constant(Tensor({kDim}, mp));
    prior.logvar_visual = Var::constant(Tensor({kDim}, lp));
    prior.mu_textual = prior.mu_visual;
    prior.logvar_textual = prior.logvar_visual;
    const double closed = kld_gaussian(q, prior).value().item();

    // Mean over coordinates of the per-coordinate log ratio, as the op reduces.
    RngStream mc = r.split(static_cast<std::uint64_t>(setting));
    double acc = 0.0;
    for (std::size_t i = 0; i < kMcSamples; ++i) {
      double ratio = 0.0;
      for (std::size_t j = 0; j < kDim; ++j) {
        const double sq = std::exp(0.5 * lq[j]), sp = std::exp(0.5 * lp[j]);
        const double x = mq[j] + sq * mc.normal();
        ratio += (-0.5 * std::pow((x - mq[j]) / sq, 2) - std::log(sq)) -
                 (-0.5 * std::pow((x - mp[j]) / sp, 2) - std::log(sp));
      }
      acc += ratio / kDim;
    }
    worst_mc = std::max(worst_mc, std::abs(closed - acc / static_cast<double>(kMcSamples)));

    PriorSpec fixed_prior;
    const double against_fixed = kld_gaussian(q, fixed_prior).value().item();
    double simplified = 0.0;
    for (std::size_t j = 0; j < kDim; ++j) simplified += 1.0 + lq[j] - mq[j] * mq[j] - std::exp(lq[j]);
    simplified *= -0.5 / kDim;
    worst_simplified = std::max(worst_simplified, std::abs(against_fixed - simplified));
  }
  return {worst_mc < kMcTol && worst_simplified < kSimplifiedTol,
          "20 settings, 1e6 samples each: max |closed - MC| " + sci(worst_mc) + " (tol " + sci(kMcTol) +
              "); fixed-prior simplification max diff " + sci(worst_simplified) + " (tol " + sci(kSimplifiedTol) + ")"};
}

Outcome bound_verification(Context& ctx) {
  const auto t0 = Clock::now();
  const info::VerifySummary s = info::verify_bound(kBoundWorlds, info::WorldCaps{4, 4, 5, 4, 4}, RngStream(2024));
  const double secs = seconds_since(t0);
  std::ofstream csv(ctx.out / "bound.csv");
  info::write_report_csv(csv, s);
  return {s.violations == 0 && s.max_chain_residual <= kChainTol && secs < kBoundSeconds,
          std::to_string(s.instances) + " worlds: " + std::to_string(s.violations) + " violations, min slack " +
              sci(s.min_slack) + ", max chain-rule residual " + sci(s.max_chain_residual) + " (tol " + sci(kChainTol) +
              "); " + fixed(secs, 1) + " s (limit " + fixed(kBoundSeconds, 0) + " s)"};
}

Outcome baseline_reduction(Context& ctx) {
  RunConfig c = ctx.toy;
  c.model.steps = kReductionSteps;
  const TrainingResult base = run_training(c, Variant::baseline, 7);
  c.model.alpha_max = 0.0;
  c.model.beta_scale = 0.0;
  const TrainingResult v = run_training(c, Variant::vittle_fixed, 7);
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < kReductionSteps; ++i) {
    const auto& a = base.metrics[i].loss;
    const auto& b = v.metrics[i].loss;
    mismatched += a.nll != b.nll || a.total != b.total;
  }
  const auto pa = base.trainer.net().parameters(), pb = v.trainer.net().parameters();
  std::size_t params_differ = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) params_differ += pa[i].second.value() != pb[i].second.value();
  return {mismatched == 0 && params_differ == 0 && v.metrics.size() == kReductionSteps,
          std::to_string(kReductionSteps) + " steps: " + std::to_string(mismatched) +
              " steps with differing nll/total bits, " + std::to_string(params_differ) +
              " shared parameter arrays differing at the end"};
}

const ExperimentReport& robustness_report(Context& ctx) {
  if (!ctx.robustness) {
    ExperimentOptions opts;
    opts.threads = ctx.threads;
    opts.log = [](const std::string& line) { std::cerr << "[robustness] " << line << std::endl; };
    ctx.robustness = run_robustness(ctx.toy, {Variant::baseline, Variant::vittle_fixed}, ctx.seeds, opts);
    std::ofstream cells(ctx.out / "robustness_cells.csv");
    write_experiment_csv(cells, *ctx.robustness);
    std::ofstream summary(ctx.out / "robustness_summary.csv");
    write_experiment_summary_csv(summary, *ctx.robustness);
  }
  return *ctx.robustness;
}

Outcome directional_robustness(Context& ctx) {
  const ExperimentReport& r = robustness_report(ctx);
  const std::size_t n = ctx.seeds.size();
  const std::size_t drop = paired_wins(r, Variant::vittle_fixed, Variant::baseline,
                                       [](const SeedSummary& a, const SeedSummary& b) { return a.accuracy_drop <= b.accuracy_drop; });
  const std::size_t jsd = paired_wins(r, Variant::vittle_fixed, Variant::baseline,
                                      [](const SeedSummary& a, const SeedSummary& b) { return a.repr_jsd < b.repr_jsd; });
  const std::size_t cosine = paired_wins(r, Variant::vittle_fixed, Variant::baseline,
                                         [](const SeedSummary& a, const SeedSummary& b) { return a.mean_cosine < b.mean_cosine; });
  auto mean = [&](Variant v, auto field) {
    double s = 0;
    for (std::uint64_t seed : ctx.seeds) s += field(r.summary(v, seed));
    return s / static_cast<double>(n);
  };
  auto drop_of = [](const SeedSummary& s) { return s.accuracy_drop; };
  auto jsd_of = [](const SeedSummary& s) { return s.repr_jsd; };
  auto cos_of = [](const SeedSummary& s) { return s.mean_cosine; };
  auto clean_of = [](const SeedSummary& s) { return s.clean_accuracy; };
  const std::size_t need = std::min(kPairedWinsNeeded, n);
  const bool enough_seeds = n >= 5;
  return {enough_seeds && drop >= need && jsd >= need && cosine >= need,
          std::to_string(n) + " seeds; vittle-f better on drop " + std::to_string(drop) + "/" + std::to_string(n) +
              ", repr_jsd " + std::to_string(jsd) + "/" + std::to_string(n) + ", cosine " + std::to_string(cosine) +
              "/" + std::to_string(n) + " (need " + std::to_string(need) + "); means baseline/vittle-f: clean " +
              fixed(mean(Variant::baseline, clean_of)) + "/" + fixed(mean(Variant::vittle_fixed, clean_of)) + ", drop " +
              fixed(mean(Variant::baseline, drop_of)) + "/" + fixed(mean(Variant::vittle_fixed, drop_of)) + ", jsd " +
              fixed(mean(Variant::baseline, jsd_of), 4) + "/" + fixed(mean(Variant::vittle_fixed, jsd_of), 4) +
              ", cosine " + fixed(mean(Variant::baseline, cos_of), 4) + "/" +
              fixed(mean(Variant::vittle_fixed, cos_of), 4)};
}

Outcome severity_monotonicity(Context& ctx) {
  const ExperimentReport& r = robustness_report(ctx);
  std::size_t checked = 0;
  std::vector<std::string> violations;
  for (Variant v : r.variants) {
    std::map<std::string, std::map<int, std::string>> by_kind;
    for (const auto& cell : r.cells) {
      if (cell.variant == v && cell.severity > 0) by_kind[cell.category + "/" + cell.kind][cell.severity] = cell.dataset;
    }
    for (const auto& [kind, sev] : by_kind) {
      const double a1 = r.mean_accuracy(v, sev.at(1)), a2 = r.mean_accuracy(v, sev.at(2)), a3 = r.mean_accuracy(v, sev.at(3));
      ++checked;
      if (!(a1 >= a2 && a2 >= a3)) {
        violations.push_back(to_string(v) + " " + kind + " " + fixed(a1) + ">" + fixed(a2) + ">" + fixed(a3));
      }
    }
  }
  std::string detail = std::to_string(checked) + " (variant, kind) series, " + std::to_string(violations.size()) +
                       " non-monotone";
  for (const auto& v : violations) detail += "; " + v;
  return {violations.empty() && checked == 18, detail};
}

Outcome schedule_and_inference(Context& ctx) {
  std::size_t bad = 0;
  for (double amax : {0.0, 0.25, 0.5, 1.0 / 3.0}) {
    for (std::size_t total : {1u, 7u, 1000u, 3000u}) {
      const AlphaSchedule s{amax, total};
      bad += alpha_at(s, 0) != 0.0 || alpha_at(s, total) != amax;
    }
  }
  RunConfig c = ctx.toy;
  c.model.steps = 40;
  const TrainingResult tr = run_training(c, Variant::vittle_fixed, 3);
  const TrainingResult tr2 = run_training(c, Variant::vittle_fixed, 3);
  bad += tr.trainer.alpha() != c.model.alpha_max;

  const fs::path dir = ctx.out / "inference";
  fs::create_directories(dir);
  tr.trainer.save_file((dir / "checkpoint.bin").string());
  auto eval_once = [&](const std::string& name) {
    std::ostringstream out, err;
    const int code = cli::run({"vittle", "eval", "--checkpoint", (dir / "checkpoint.bin").string(), "--samples", "100",
                               "--out", (dir / name).string()},
                              out, err);
    std::ifstream in(dir / name / "report.csv", std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return std::make_pair(code, s.str());
  };
  const auto [c1, r1] = eval_once("a");
  const auto [c2, r2] = eval_once("b");
  const auto data = eval_dataset(tr.trainer.config(), 3, 100);
  const bool repr_same = extract(tr.trainer.net(), data, 3, "a").vectors == extract(tr2.trainer.net(), data, 3, "b").vectors;
  const bool identical = c1 == 0 && c2 == 0 && !r1.empty() && r1 == r2 && repr_same;
  return {bad == 0 && identical,
          std::to_string(bad) + " schedule endpoint mismatches over 16 (alpha_max, T) pairs plus the trained run; "
                                "two evaluations of one checkpoint " +
              std::string(identical ? "byte-identical" : "DIFFER") + " (" + std::to_string(r1.size()) +
              " bytes of per-sample records, representations " + (repr_same ? "equal" : "differ") + ")"};
}

Outcome suite_cardinality(Context& ctx) {
  const auto base = eval_dataset(ctx.toy, 1, 20);
  const Suite s = build_suite(base, ctx.toy.task, ctx.toy.model, 99);
  std::map<PerturbCategory, std::size_t> per;
  std::set<std::string> names;
  for (std::size_t i = 1; i < s.members.size(); ++i) {
    ++per[s.members[i].spec.modality];
    names.insert(s.members[i].spec.name());
  }
  const bool clean_first = s.members.front().samples == base && !s.members.front().spec.visual_kind &&
                           !s.members.front().spec.text_kind;
  const bool ok = s.members.size() == 28 && clean_first && per[PerturbCategory::visual] == 9 && per[PerturbCategory::textual] == 9 &&
                  per[PerturbCategory::joint] == 9 && names.size() == 27;
  return {ok, std::to_string(s.members.size()) + " datasets: clean" + (clean_first ? "" : " (NOT first)") + " + visual " +
                  std::to_string(per[PerturbCategory::visual]) + " + textual " + std::to_string(per[PerturbCategory::textual]) + " + joint " +
                  std::to_string(per[PerturbCategory::joint]) + ", " + std::to_string(names.size()) + " distinct perturbed names"};
}

Outcome checkpoint_round_trip(Context& ctx) {
  RunConfig c = ctx.toy;
  c.model.steps = 100;
  const TrainingResult full = run_training(c, Variant::vittle_learnable, 5);
  Trainer part(c, Variant::vittle_learnable, 5);
  continue_training(part, c.model.steps - kResumeSteps);
  const fs::path path = ctx.out / "resume.bin";
  part.save_file(path.string());
  Trainer resumed = Trainer::load_file(path.string());
  const auto rest = continue_training(resumed, kResumeSteps);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < rest.size(); ++i) differ += !(rest[i] == full.metrics[c.model.steps - kResumeSteps + i]);
  std::ostringstream a, b;
  resumed.save(a);
  full.trainer.save(b);
  const bool same_state = a.str() == b.str();
  return {differ == 0 && rest.size() == kResumeSteps && same_state,
          "resumed at step " + std::to_string(c.model.steps - kResumeSteps) + " for " + std::to_string(rest.size()) +
              " steps: " + std::to_string(differ) + " differing metric rows, final checkpoints " +
              (same_state ? "byte-identical" : "DIFFER")};
}

Outcome information_truths(Context&) {
  using namespace info;
  const double ln2 = std::numbers::ln2;
  std::vector<std::pair<std::string, double>> errors{
      {"H(delta)", std::abs(entropy(std::vector<double>{1.0, 0.0, 0.0}))},
      {"H(uniform4)", std::abs(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) - std::log(4.0))},
      {"H(1/2,1/4,1/4)", std::abs(entropy(std::vector<double>{0.5, 0.25, 0.25}) - 1.5 * ln2)},
      {"I(product)", std::abs(mutual_information(DiscreteJoint(2, 2, {0.12, 0.28, 0.18, 0.42})))},
      {"I(identity)", std::abs(mutual_information(DiscreteJoint(2, 2, {0.5, 0.0, 0.0, 0.5})) - ln2)},
      {"JSD(disjoint)", std::abs(jsd(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) - ln2)},
      {"JSD(p,p)", std::abs(jsd(std::vector<double>{0.2, 0.3, 0.5}, std::vector<double>{0.2, 0.3, 0.5}))},
  };
  RngStream r(10);
  double dual = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t rows = 2 + r.below(4), cols = 2 + r.below(4);
    std::vector<double> p(rows * cols);
    double s = 0.0;
    for (double& x : p) s += x = r.gamma(0.7);
    for (double& x : p) x /= s;
    const DiscreteJoint j(rows, cols, p);
    dual = std::max(dual, std::abs(mutual_information(j) - mutual_information_entropy_form(j)));
  }
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : errors) {
    if (e >= worst) {
      worst = e;
      worst_name = name;
    }
  }
  return {worst < kInfoTol && dual < kInfoTol,
          std::to_string(errors.size()) + " example values, worst error " + sci(worst) + " (" + worst_name +
              "); MI dual-formula max diff " + sci(dual) + " on 100 random joints; tol " + sci(kInfoTol)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string config = VITTLE_SOURCE_DIR "/configs/toy.json";
  std::string out = "acceptance_out";
  std::size_t nseeds = 5;
  std::size_t threads = 1;
  app.add_option("--only", only, "comma-separated criterion numbers")->delimiter(',');
  app.add_option("--config", config, "config for the training-based criteria");
  app.add_option("--seeds", nseeds, "seeds for criteria 5 and 6")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "directory for reports");
  app.add_option("--threads", threads, "evaluation threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  try {
    ctx.toy = load_config_file(config);
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << '\n';
    return 2;
  }
  for (std::uint64_t s = 1; s <= nseeds; ++s) ctx.seeds.push_back(s);
  ctx.out = out;
  ctx.threads = threads;
  fs::create_directories(ctx.out);

  const std::vector<Criterion> criteria{
      {1, "gradient fidelity", gradient_fidelity},
      {2, "KLD closed form vs Monte Carlo", kld_closed_form_vs_mc},
      {3, "EMID bound verification", bound_verification},
      {4, "baseline reduction", baseline_reduction},
      {5, "directional robustness", directional_robustness},
      {6, "severity monotonicity", severity_monotonicity},
      {7, "schedule and inference contracts", schedule_and_inference},
      {8, "suite cardinality", suite_cardinality},
      {9, "checkpoint round trip", checkpoint_round_trip},
      {10, "information-metric unit truths", information_truths},
  };
  std::size_t failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << std::setw(2) << c.id << " [" << (o.pass ? "PASS" : "FAIL") << "] " << c.name << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
