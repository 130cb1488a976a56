// SPDX-License-Identifier: Apache-2.0
#include "vittle/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "vittle/config.hpp"
#include "vittle/discrete_info.hpp"
#include "vittle/experiment.hpp"
#include "vittle/perturb.hpp"
#include "vittle/task.hpp"
#include "vittle/trainer.hpp"

namespace vittle::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Run manifest; written once, at the end of the command, via rename.
class Manifest {
 public:
  Manifest(const std::string& command, const RunConfig& config, std::uint64_t seed) {
    j_["tool"] = "vittle";
    j_["version"] = kVersion;
    j_["command"] = command;
    j_["config"] = json::parse(to_canonical_text(config));
    j_["seed"] = seed;
    j_["started"] = utc_now();
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
  }

  void input(const std::string& path) {
    if (!path.empty()) j_["inputs"][path] = file_digest(path);
  }
  void output(const std::string& name) { j_["outputs"].push_back(name); }
  void set(const std::string& key, json value) { j_[key] = std::move(value); }

  void write(const fs::path& dir, const std::string& status) {
    j_["status"] = status;
    j_["finished"] = utc_now();
    const fs::path tmp = dir / "manifest.json.tmp";
    {
      std::ofstream out(tmp);
      out << j_.dump(2) << '\n';
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, dir / "manifest.json");
  }

 private:
  json j_;
};

struct Common {
  std::string config_path;
  std::string variant = "vittle-f";
  std::uint64_t seed = 1;
  std::string out = ".";
  std::size_t threads = 1;
};

RunConfig load_config(const std::string& path) {
  if (path.empty()) {
    RunConfig c;
    c.validate();
    return c;
  }
  return load_config_file(path);
}

fs::path prepare_out(const std::string& out) {
  fs::create_directories(out);
  return fs::path(out);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

std::string join(const std::vector<std::size_t>& tokens) {
  std::string s;
  for (std::size_t t : tokens) s += (s.empty() ? "" : " ") + std::to_string(t);
  return s;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw UsageError(what + " '" + path + "' does not exist");
}

int cmd_train(const Common& c, std::ostream& out, std::ostream& err) {
  const RunConfig config = load_config(c.config_path);
  const Variant variant = variant_from_string(c.variant);
  const fs::path dir = prepare_out(c.out);
  Manifest manifest("train", resolve_variant(config, variant), c.seed);
  manifest.input(c.config_path);
  manifest.set("variant", c.variant);

  std::ofstream metrics = open_out(dir / "metrics.csv");
  write_metrics_header(metrics);
  manifest.output("metrics.csv");
  try {
    TrainingResult r = run_training(config, variant, c.seed, [&](const MetricsRow& row) { write_metrics_row(metrics, row); });
    metrics.close();
    r.trainer.save_file((dir / "checkpoint.bin").string());
    manifest.output("checkpoint.bin");
    manifest.write(dir, "ok");
    const LossBreakdown& last = r.metrics.back().loss;
    out << "trained " << c.variant << " seed " << c.seed << " for " << r.metrics.size() << " steps; final nll "
        << last.nll << ", kld_v " << last.kld_v << ", kld_t " << last.kld_t << '\n';
    return kExitOk;
  } catch (const TrainingError& e) {
    metrics.close();
    manifest.set("error", e.what());
    manifest.write(dir, "failed");
    err << "vittle train: " << e.what() << '\n';
    return kExitRuntime;
  }
}

struct EvalOptions {
  std::string checkpoint;
  std::string dataset;
  std::optional<std::size_t> samples;
};

int cmd_eval(const Common& c, const EvalOptions& o, std::ostream& out, std::ostream& err) {
  require_file(o.checkpoint, "checkpoint");
  if (!o.dataset.empty()) require_file(o.dataset, "dataset");
  const Trainer trainer = Trainer::load_file(o.checkpoint);
  if (!c.config_path.empty()) {
    const RunConfig config = resolve_variant(load_config(c.config_path), trainer.variant());
    const auto diffs = config_differences(to_canonical_text(trainer.config()), to_canonical_text(config));
    if (!diffs.empty()) {
      std::string msg = "checkpoint/config mismatch (checkpoint vs config):";
      for (const auto& d : diffs) msg += "\n  " + d;
      throw UsageError(msg);
    }
  }
  const std::vector<QuerySample> data =
      o.dataset.empty()
          ? eval_dataset(trainer.config(), trainer.seed(), o.samples.value_or(trainer.config().experiment.eval_samples))
          : read_dataset_file(o.dataset);
  if (data.empty()) throw UsageError("dataset has no samples");

  const fs::path dir = prepare_out(c.out);
  Manifest manifest("eval", trainer.config(), trainer.seed());
  manifest.input(o.checkpoint);
  manifest.input(o.dataset);
  manifest.input(c.config_path);

  const EvalResult r = evaluate(trainer.net(), data, c.threads);
  {
    std::ofstream report = open_out(dir / "report.csv");
    report << "sample,correct,flags,reference,prediction\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      report << i << ',' << (r.correct[i] ? 1 : 0) << ',' << data[i].flags << ',' << join(data[i].response) << ','
             << join(r.predictions[i]) << '\n';
    }
  }
  manifest.output("report.csv");
  manifest.set("accuracy", r.accuracy);
  manifest.set("samples", data.size());
  manifest.write(dir, "ok");
  out << "accuracy " << std::setprecision(17) << r.accuracy << " on " << data.size() << " samples\n";
  (void)err;
  return kExitOk;
}

struct RobustnessOptions {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> layer;
};

int cmd_robustness(const Common& c, const RobustnessOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = load_config(c.config_path);
  const std::vector<std::string> names = o.variants.empty() ? config.experiment.variants : o.variants;
  const std::vector<std::uint64_t> seeds = o.seeds.empty() ? config.experiment.seeds : o.seeds;
  std::vector<Variant> variants;
  for (const auto& n : names) variants.push_back(variant_from_string(n));
  if (std::find(variants.begin(), variants.end(), Variant::baseline) == variants.end()) {
    throw UsageError("--variants must include baseline");
  }
  if (seeds.empty()) throw UsageError("--seeds must not be empty");

  const fs::path dir = prepare_out(c.out);
  Manifest manifest("robustness", config, seeds.front());
  manifest.input(c.config_path);
  manifest.set("variants", names);
  manifest.set("seeds", seeds);

  ExperimentOptions opts;
  opts.threads = c.threads;
  opts.repr_layer = o.layer;
  opts.log = [&](const std::string& line) { err << "[robustness] " << line << '\n'; };
  const ExperimentReport report = run_robustness(config, variants, seeds, opts);

  {
    std::ofstream f = open_out(dir / "report.csv");
    write_experiment_csv(f, report);
  }
  {
    std::ofstream f = open_out(dir / "summary.csv");
    write_experiment_summary_csv(f, report);
  }
  manifest.output("report.csv");
  manifest.output("summary.csv");

  std::size_t failed = 0;
  for (const auto& cell : report.cells) failed += cell.status != "ok";
  out << report.cells.size() << " cells, " << failed << " failed\n";
  for (Variant v : variants) {
    double clean = 0, perturbed = 0;
    std::size_t ok = 0;
    for (std::uint64_t s : seeds) {
      const SeedSummary& sum = report.summary(v, s);
      if (!sum.ok) continue;
      clean += sum.clean_accuracy;
      perturbed += sum.perturbed_accuracy;
      ++ok;
    }
    if (ok > 0) {
      out << to_string(v) << ": clean " << clean / ok << ", perturbed " << perturbed / ok << " (" << ok << " seeds)\n";
    }
  }
  if (variants.size() > 1) {
    std::ofstream f = open_out(dir / "comparison.csv");
    f << "variant,reference,metric,wins,seeds\n";
    const std::pair<const char*, std::function<bool(const SeedSummary&, const SeedSummary&)>> metrics[] = {
        {"accuracy_drop", [](const SeedSummary& a, const SeedSummary& b) { return a.accuracy_drop <= b.accuracy_drop; }},
        {"repr_jsd", [](const SeedSummary& a, const SeedSummary& b) { return a.repr_jsd < b.repr_jsd; }},
        {"mean_cosine_distance", [](const SeedSummary& a, const SeedSummary& b) { return a.mean_cosine < b.mean_cosine; }},
    };
    for (Variant v : variants) {
      if (v == Variant::baseline) continue;
      for (const auto& [metric, better] : metrics) {
        const std::size_t wins = paired_wins(report, v, Variant::baseline, better);
        f << to_string(v) << ",baseline," << metric << ',' << wins << ',' << seeds.size() << '\n';
        out << to_string(v) << " vs baseline, " << metric << ": better on " << wins << '/' << seeds.size() << " seeds\n";
      }
    }
    manifest.output("comparison.csv");
  }
  manifest.set("failed_cells", failed);
  manifest.write(dir, failed == 0 ? "ok" : "partial");
  return failed == 0 ? kExitOk : kExitRuntime;
}

struct BoundOptions {
  std::size_t n = 1000;
  std::vector<std::size_t> caps{4, 4, 5, 4, 4};
  std::string replay;
};

int cmd_verify_bound(const Common& c, const BoundOptions& o, std::ostream& out, std::ostream& err) {
  const fs::path dir = prepare_out(c.out);
  RunConfig config;
  Manifest manifest("verify-bound", config, c.seed);

  if (!o.replay.empty()) {
    require_file(o.replay, "world file");
    manifest.input(o.replay);
    std::ifstream in(o.replay);
    std::stringstream text;
    text << in.rdbuf();
    info::DiscreteWorld w;
    try {
      w = info::world_from_text(text.str());
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("cannot parse world file: ") + e.what());
    }
    std::string failure;
    std::optional<info::EmidReport> rep;
    try {
      rep = info::emid_upper_bound(w);
      if (rep->emid > rep->bound) failure = "bound violated: emid " + std::to_string(rep->emid) + " > " + std::to_string(rep->bound);
    } catch (const info::AssumptionError& e) {
      failure = std::string("assumptions do not hold: ") + e.what();
    }
    if (rep) {
      info::VerifySummary s;
      s.instances = 1;
      s.reports.push_back(*rep);
      std::ofstream f = open_out(dir / "bound.csv");
      info::write_report_csv(f, s);
      manifest.output("bound.csv");
    }
    if (failure.empty()) {
      manifest.write(dir, "ok");
      out << "replay: emid " << rep->emid << " <= bound " << rep->bound << '\n';
      return kExitOk;
    }
    fs::create_directories(dir / "violations");
    std::ofstream(dir / "violations" / "replay.txt") << info::world_to_text(w);
    manifest.output("violations/replay.txt");
    manifest.set("error", failure);
    manifest.write(dir, "violation");
    err << "vittle verify-bound: " << failure << '\n';
    return kExitVerification;
  }

  if (o.caps.size() != 5) throw UsageError("--caps takes five sizes: xv,xt,y,zv,zt");
  for (std::size_t s : o.caps) {
    if (s < 2) throw UsageError("--caps: every support needs at least 2 elements");
  }
  if (o.n == 0) throw UsageError("--n must be positive");
  const info::WorldCaps caps{o.caps[0], o.caps[1], o.caps[2], o.caps[3], o.caps[4]};
  const info::VerifySummary s = info::verify_bound(o.n, caps, RngStream(c.seed));
  {
    std::ofstream f = open_out(dir / "bound.csv");
    info::write_report_csv(f, s);
  }
  {
    std::ofstream f = open_out(dir / "summary.txt");
    info::write_summary(f, s);
  }
  manifest.output("bound.csv");
  manifest.output("summary.txt");
  info::write_summary(out, s);

  constexpr double kChainTol = 1e-10;
  std::size_t dumped = 0;
  for (std::size_t i = 0; i < s.instances; ++i) {
    if (s.reports[i].emid <= s.reports[i].bound && s.reports[i].chain_residual <= kChainTol) continue;
    fs::create_directories(dir / "violations");
    const std::string name = "violations/world_" + std::to_string(i) + ".txt";
    std::ofstream(dir / name) << info::world_to_text(s.worlds[i]);
    manifest.output(name);
    ++dumped;
  }
  manifest.set("violations", s.violations);
  manifest.write(dir, dumped == 0 ? "ok" : "violation");
  if (dumped > 0) {
    err << "vittle verify-bound: " << dumped << " world(s) failed; see " << (dir / "violations").string() << '\n';
    return kExitVerification;
  }
  return kExitOk;
}

struct GradcheckOptions {
  std::size_t after_steps = 100;
  std::size_t coords = 6;
  std::size_t batch = 4;
};

int cmd_gradcheck(Common c, const GradcheckOptions& o, std::ostream& out, std::ostream& err) {
  constexpr double kTolerance = 1e-4;
  const RunConfig config = load_config(c.config_path);
  const Variant variant = variant_from_string(c.variant);
  const fs::path dir = prepare_out(c.out);
  Manifest manifest("gradcheck", resolve_variant(config, variant), c.seed);
  manifest.input(c.config_path);
  manifest.set("variant", c.variant);

  Trainer trainer(config, variant, c.seed);
  const RngStream root(c.seed);
  const auto batch = make_keyed_copy_dataset(config.task, trainer.config().model, o.batch, root.split("gradcheck"));
  const std::uint64_t noise = root.split("gradcheck-noise").next_u64();
  const double alpha = trainer.net().has_bottleneck() ? 0.5 : 0.0;

  std::ofstream csv = open_out(dir / "gradcheck.csv");
  csv << "step,group,max_rel_error,checked,worst_analytic,worst_numeric\n" << std::setprecision(17);
  double worst = 0.0;
  auto check = [&] {
    const GradcheckReport r =
        gradcheck_loss(trainer.net(), batch, alpha, trainer.beta(), noise, o.coords, root.split("gradcheck-coords"));
    for (const auto& [group, g] : r.groups) {
      csv << trainer.step() << ',' << group << ',' << g.max_rel_error << ',' << g.checked << ',' << g.worst_analytic
          << ',' << g.worst_numeric << '\n';
      out << "step " << trainer.step() << "  " << std::left << std::setw(20) << group << std::right << ' '
          << std::scientific << std::setprecision(3) << g.max_rel_error << std::defaultfloat << '\n';
    }
    worst = std::max(worst, r.max_rel_error);
  };
  check();
  if (o.after_steps > 0) {
    continue_training(trainer, o.after_steps);
    check();
  }
  csv.close();
  manifest.output("gradcheck.csv");
  manifest.set("max_rel_error", worst);
  manifest.write(dir, worst < kTolerance ? "ok" : "exceeded");
  out << "max relative error " << std::scientific << std::setprecision(3) << worst << std::defaultfloat
      << (worst < kTolerance ? " (ok)" : " (exceeds 1e-4)") << '\n';
  if (worst >= kTolerance) {
    err << "vittle gradcheck: relative error " << worst << " exceeds " << kTolerance << '\n';
    return kExitVerification;
  }
  return kExitOk;
}

struct SweepOptions {
  std::vector<std::size_t> layers;
  std::vector<double> betas{0.01, 0.05, 0.1, 0.2, 1.0};
  std::vector<double> alphas;
  std::vector<std::uint64_t> seeds;
};

int cmd_sweep(const Common& c, const SweepOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = load_config(c.config_path);
  const Variant variant = variant_from_string(c.variant);
  if (variant == Variant::baseline) throw UsageError("sweep needs a vittle variant");
  std::vector<std::size_t> layers = o.layers;
  if (layers.empty()) {
    for (std::size_t l = 1; l < config.model.layers; ++l) layers.push_back(l);
  }
  const std::vector<double> alphas = o.alphas.empty() ? std::vector<double>{config.model.alpha_max} : o.alphas;
  const std::vector<std::uint64_t> seeds = o.seeds.empty() ? std::vector<std::uint64_t>{c.seed} : o.seeds;

  const fs::path dir = prepare_out(c.out);
  Manifest manifest("sweep", config, seeds.front());
  manifest.input(c.config_path);
  manifest.set("variant", c.variant);

  const auto grid = sweep_grid(layers, o.betas, alphas, seeds);
  err << "[sweep] " << grid.size() << " cells\n";
  const auto rows = sweep(config, variant, grid, config.experiment.eval_samples);
  {
    std::ofstream f = open_out(dir / "sweep.csv");
    write_sweep_csv(f, rows);
  }
  manifest.output("sweep.csv");
  std::size_t failed = 0, diverged = 0;
  for (const auto& r : rows) {
    failed += r.status.rfind("failed", 0) == 0;
    diverged += r.status == "diverged";
  }
  out << rows.size() << " cells: " << rows.size() - failed - diverged << " ok, " << diverged << " diverged, " << failed
      << " failed\n";
  manifest.write(dir, failed == 0 ? "ok" : "partial");
  return failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_suite(const Common& c, std::optional<std::size_t> samples, std::ostream& out) {
  const RunConfig config = load_config(c.config_path);
  const fs::path dir = prepare_out(c.out);
  Manifest manifest("suite", config, c.seed);
  manifest.input(c.config_path);
  const auto base = eval_dataset(config, c.seed, samples.value_or(config.experiment.eval_samples));
  const Suite suite =
      build_suite(base, config.task, config.model, RngStream(c.seed).split("perturb").next_u64());
  write_suite((dir / "suite").string(), suite);
  for (const auto& entry : fs::directory_iterator(dir / "suite")) {
    manifest.output("suite/" + entry.path().filename().string());
  }
  manifest.write(dir, "ok");
  out << suite.members.size() << " datasets of " << base.size() << " samples in " << (dir / "suite").string() << '\n';
  return kExitOk;
}

int cmd_check_manifest(const std::string& dir, std::ostream& out, std::ostream& err) {
  const fs::path path = fs::path(dir) / "manifest.json";
  require_file(path.string(), "manifest");
  json j;
  try {
    std::ifstream in(path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("cannot parse " + path.string() + ": " + e.what());
  }
  std::size_t changed = 0;
  const json inputs = j.value("inputs", json::object());
  for (const auto& [input, digest] : inputs.items()) {
    if (!fs::is_regular_file(input)) {
      err << "missing input: " << input << '\n';
      ++changed;
    } else if (file_digest(input) != digest.get<std::string>()) {
      err << "input changed: " << input << '\n';
      ++changed;
    } else {
      out << "ok: " << input << '\n';
    }
  }
  return changed == 0 ? kExitOk : kExitVerification;
}

}  // namespace

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream s;
  s << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::vector<std::string> config_differences(const std::string& a, const std::string& b) {
  const json ja = json::parse(a), jb = json::parse(b);
  std::vector<std::string> out;
  for (const auto& op : json::diff(ja, jb)) {
    const std::string path = op["path"];
    if (path.rfind("/model/", 0) != 0 && path.rfind("/task/", 0) != 0) continue;
    const json::json_pointer ptr(path);
    std::string dotted = path.substr(1);
    std::replace(dotted.begin(), dotted.end(), '/', '.');
    const std::string va = ja.contains(ptr) ? ja.at(ptr).dump() : "<absent>";
    const std::string vb = jb.contains(ptr) ? jb.at(ptr).dump() : "<absent>";
    out.push_back(dotted + " (" + va + " vs " + vb + ")");
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Information-bottleneck instruction tuning on a toy multimodal model"};
  app.name(args.empty() ? "vittle" : fs::path(args.front()).filename().string());
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool variant) {
    sub->add_option("--config", common.config_path, "JSON config file (defaults apply to missing keys)");
    if (variant) {
      sub->add_option("--variant", common.variant, "baseline, vittle-f or vittle-l")
          ->check(CLI::IsMember({"baseline", "vittle-f", "vittle-l"}));
    }
    sub->add_option("--seed", common.seed, "master seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--threads", common.threads, "evaluation threads")->check(CLI::PositiveNumber);
  };

  auto* train = app.add_subcommand("train", "train one variant; writes checkpoint.bin and metrics.csv");
  add_common(train, true);

  EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "exact-match accuracy of a checkpoint; writes report.csv");
  add_common(eval, false);
  eval->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint.bin from train")->required();
  eval->add_option("--dataset", eval_opts.dataset, "dataset file (default: the run's held-out samples)");
  eval->add_option("--samples", eval_opts.samples, "held-out sample count when no dataset is given");

  RobustnessOptions rob_opts;
  auto* rob = app.add_subcommand("robustness", "train variants over seeds and evaluate the perturbation suite");
  add_common(rob, false);
  rob->add_option("--variants", rob_opts.variants, "comma-separated variants, must include baseline")->delimiter(',');
  rob->add_option("--seeds", rob_opts.seeds, "comma-separated seeds")->delimiter(',');
  rob->add_option("--layer", rob_opts.layer, "layer for representation statistics (default: bottleneck layer)");

  BoundOptions bound_opts;
  auto* bound = app.add_subcommand("verify-bound", "check the EMID upper bound on enumerated random worlds");
  add_common(bound, false);
  bound->add_option("--n", bound_opts.n, "number of worlds");
  bound->add_option("--caps", bound_opts.caps, "support caps xv,xt,y,zv,zt")->delimiter(',');
  bound->add_option("--replay", bound_opts.replay, "re-check one world file instead of sampling");

  GradcheckOptions gc_opts;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full loss gradient");
  add_common(gc, true);
  gc->add_option("--after-steps", gc_opts.after_steps, "training steps before the second check (0: init only)");
  gc->add_option("--coords", gc_opts.coords, "coordinates probed per parameter array")->check(CLI::PositiveNumber);
  gc->add_option("--batch", gc_opts.batch, "samples in the probe batch")->check(CLI::PositiveNumber);

  SweepOptions sweep_opts;
  auto* sw = app.add_subcommand("sweep", "ablation grid over bottleneck layer, beta scale and alpha_max");
  add_common(sw, true);
  sw->add_option("--layers", sweep_opts.layers, "comma-separated layers (default: all valid)")->delimiter(',');
  sw->add_option("--betas", sweep_opts.betas, "comma-separated beta scales")->delimiter(',');
  sw->add_option("--alphas", sweep_opts.alphas, "comma-separated alpha_max values")->delimiter(',');
  sw->add_option("--seeds", sweep_opts.seeds, "comma-separated seeds")->delimiter(',');

  std::optional<std::size_t> suite_samples;
  auto* suite = app.add_subcommand("suite", "write the 28 perturbation datasets for a seed");
  add_common(suite, false);
  suite->add_option("--samples", suite_samples, "samples per dataset");

  std::string manifest_dir;
  auto* check = app.add_subcommand("check-manifest", "re-hash the inputs recorded in a run manifest");
  check->add_option("dir", manifest_dir, "run output directory")->required();

  try {
    std::vector<std::string> rest(args.rbegin(), args.rend());
    if (!rest.empty()) rest.pop_back();
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(common, out, err);
    if (eval->parsed()) return cmd_eval(common, eval_opts, out, err);
    if (rob->parsed()) return cmd_robustness(common, rob_opts, out, err);
    if (bound->parsed()) return cmd_verify_bound(common, bound_opts, out, err);
    if (gc->parsed()) return cmd_gradcheck(common, gc_opts, out, err);
    if (sw->parsed()) return cmd_sweep(common, sweep_opts, out, err);
    if (suite->parsed()) return cmd_suite(common, suite_samples, out);
    if (check->parsed()) return cmd_check_manifest(manifest_dir, out, err);
  } catch (const ConfigError& e) {
    err << "vittle: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "vittle: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "vittle: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace vittle::cli
