// SPDX-License-Identifier: Apache-2.0
#include "vittle/perturb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vittle/task.hpp"

namespace vittle {
namespace {

struct KindName {
  PerturbKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {PerturbKind::token_sub, "token_sub"}, {PerturbKind::embed_noise, "embed_noise"},
    {PerturbKind::block_mask, "block_mask"}, {PerturbKind::typo, "typo"},
    {PerturbKind::remove, "delete"},        {PerturbKind::insert, "insert"},
    {PerturbKind::swap, "swap"},            {PerturbKind::shuffle, "shuffle"},
    {PerturbKind::remap, "remap"},
};

const char* category_name(PerturbCategory c) {
  switch (c) {
    case PerturbCategory::visual:
      return "visual";
    case PerturbCategory::textual:
      return "textual";
    case PerturbCategory::joint:
      return "joint";
  }
  return "?";
}

std::vector<std::size_t> permutation(RngStream& r, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[r.below(i)]);
  return p;
}

// Chosen positions for one sample. Severities share `order` and `u`, so the
// set at severity s is a prefix of the set at s + 1. Key positions are only
// taken once the severity-2 budget has been spent on safe ones.
struct Selection {
  std::vector<std::size_t> positions;
  bool key_touched = false;
};

template <class Allowed, class IsKey>
Selection select(const PerturbationSpec& spec, const std::vector<std::size_t>& order, double u, Allowed allowed,
                 IsKey is_key) {
  const std::size_t n = order.size();
  std::size_t safe_budget, total_budget;
  if (spec.rate_override) {
    safe_budget = total_budget = corruption_count(*spec.rate_override, n, u);
  } else if (spec.severity == 3) {
    safe_budget = corruption_count(severity_rate(2), n, u);
    total_budget = corruption_count(severity_rate(3), n, u);
  } else {
    safe_budget = total_budget = corruption_count(severity_rate(spec.severity), n, u);
  }
  Selection s;
  std::vector<bool> taken(n, false);
  for (std::size_t p : order) {
    if (s.positions.size() >= safe_budget) break;
    if (allowed(p) && !is_key(p)) {
      s.positions.push_back(p);
      taken[p] = true;
    }
  }
  for (std::size_t p : order) {
    if (s.positions.size() >= total_budget) break;
    if (!taken[p] && allowed(p)) {
      s.positions.push_back(p);
      taken[p] = true;
      s.key_touched = s.key_touched || is_key(p);
    }
  }
  return s;
}

bool key_allowed(const PerturbationSpec& spec) { return spec.severity == 3 && !spec.rate_override; }

std::size_t draw(const RngStream& tokens, std::size_t position, std::size_t begin, std::size_t end) {
  RngStream r = tokens.split(static_cast<std::uint64_t>(position));
  return begin + r.below(end - begin);
}

std::size_t perturb_visual(PerturbKind kind, const PerturbationSpec& spec, QuerySample& s, const TaskVocab& v,
                           const RngStream& stream) {
  const std::size_t n = s.visual.size();
  if (n == 0) return 0;
  RngStream order_stream = stream.split("order");
  RngStream count_stream = stream.split("count");
  const double u = count_stream.uniform();
  auto is_key = [&](std::size_t p) { return p == s.key_visual; };
  const RngStream tokens = stream.split("tokens");

  if (kind == PerturbKind::embed_noise) {
    const double sigma = spec.rate_override ? *spec.rate_override : severity_sigma(spec.severity);
    if (sigma == 0.0) return 0;
    const bool all = key_allowed(spec);
    std::uint32_t mask = 0;
    std::size_t touched = 0;
    for (std::size_t p = 0; p < n && p < 32; ++p) {
      if (!all && is_key(p)) continue;
      mask |= 1u << p;
      ++touched;
    }
    s.noise_sigma = sigma;
    s.noise_seed = stream.split("noise").next_u64();
    s.noise_mask = mask;
    if (all && s.key_visual < n) s.flags |= kFlagKeyTouched;
    return touched;
  }

  std::vector<std::size_t> order;
  if (kind == PerturbKind::block_mask) {
    // Contiguous run starting at a random offset, wrapping around.
    const std::size_t start = order_stream.below(n);
    for (std::size_t i = 0; i < n; ++i) order.push_back((start + i) % n);
  } else {
    order = permutation(order_stream, n);
  }
  const Selection sel = select(
      spec, order, u, [&](std::size_t p) { return key_allowed(spec) || !is_key(p); }, is_key);
  for (std::size_t p : sel.positions) {
    s.visual[p] = kind == PerturbKind::block_mask ? v.mask : draw(tokens, p, v.visual_foreign_begin, v.visual_foreign_end);
  }
  if (sel.key_touched) s.flags |= kFlagKeyTouched;
  return sel.positions.size();
}

struct Entry {
  std::size_t token;
  std::size_t origin;
};

std::vector<std::size_t> remap_table(const TaskVocab& v, std::uint64_t seed) {
  RngStream r = RngStream(seed).split("remap-table");
  const std::size_t n = v.text_native_end - v.text_native_begin;
  const std::size_t foreign = v.text_foreign_end - v.text_foreign_begin;
  std::vector<std::size_t> targets = permutation(r, foreign);
  std::vector<std::size_t> table(n);
  // With fewer foreign than native ids the map cycles; the task layout keeps them equal.
  for (std::size_t i = 0; i < n; ++i) table[i] = v.text_foreign_begin + targets[i % foreign];
  return table;
}

std::size_t perturb_text(PerturbKind kind, const PerturbationSpec& spec, QuerySample& s, const TaskVocab& v,
                         const RngStream& stream) {
  const std::size_t n = s.text.size();
  if (n == 0) return 0;
  RngStream order_stream = stream.split("order");
  RngStream count_stream = stream.split("count");
  const double u = count_stream.uniform();
  const RngStream tokens = stream.split("tokens");
  const std::size_t kb = s.key_text_begin, ke = s.key_text_end;
  auto in_span = [&](std::size_t origin) { return kb != kNoPosition && origin >= kb && origin < ke; };
  // Only an anchor inside the span (severity 3) may disturb the span; swap
  // partners and shuffle targets of other anchors stay outside it.
  const bool keys_ok = key_allowed(spec);

  auto allowed = [&](std::size_t p) {
    if (!keys_ok && in_span(p)) return false;
    if (kind == PerturbKind::remap) return s.text[p] >= v.text_native_begin && s.text[p] < v.text_native_end;
    return true;
  };
  const Selection sel = select(spec, permutation(order_stream, n), u, allowed, in_span);
  if (sel.positions.empty()) return 0;

  std::vector<Entry> list(n);
  for (std::size_t i = 0; i < n; ++i) list[i] = {s.text[i], i};
  auto index_of = [&](std::size_t origin) {
    return static_cast<std::size_t>(
        std::find_if(list.begin(), list.end(), [&](const Entry& e) { return e.origin == origin; }) - list.begin());
  };

  switch (kind) {
    case PerturbKind::typo:
      for (std::size_t p : sel.positions) list[p].token = draw(tokens, p, v.text_foreign_begin, v.text_foreign_end);
      break;
    case PerturbKind::remap: {
      const auto table = remap_table(v, spec.seed);
      for (std::size_t p : sel.positions) list[p].token = table[list[p].token - v.text_native_begin];
      break;
    }
    case PerturbKind::remove: {
      std::vector<bool> drop(n, false);
      for (std::size_t p : sel.positions) drop[p] = true;
      std::erase_if(list, [&](const Entry& e) { return drop[e.origin]; });
      while (list.size() < n) list.push_back({v.pad, kNoPosition});
      break;
    }
    case PerturbKind::insert: {
      for (std::size_t p : sel.positions) {
        list.insert(list.begin() + static_cast<std::ptrdiff_t>(index_of(p)),
                    {draw(tokens, p, v.text_foreign_begin, v.text_foreign_end), kNoPosition});
      }
      // Trim back to length from the end, never dropping the keyed span.
      for (std::size_t i = list.size(); list.size() > n && i > 0; --i) {
        if (!in_span(list[i - 1].origin)) list.erase(list.begin() + static_cast<std::ptrdiff_t>(i - 1));
      }
      break;
    }
    case PerturbKind::swap:
      for (std::size_t p : sel.positions) {
        std::size_t q = p;
        for (std::size_t step = 1; step < n; ++step) {
          const std::size_t c = (p + step) % n;
          if (in_span(p) || !in_span(c)) {
            q = c;
            break;
          }
        }
        std::swap(list[p], list[q]);
      }
      break;
    case PerturbKind::shuffle:
      for (std::size_t p : sel.positions) {
        const std::size_t from = index_of(p);
        const Entry e = list[from];
        list.erase(list.begin() + static_cast<std::ptrdiff_t>(from));
        // Gap g means "before list[g]"; gaps strictly inside the span are off limits.
        std::vector<std::size_t> gaps;
        for (std::size_t g = 0; g <= list.size(); ++g) {
          if (g == from) continue;
          const bool inside = g > 0 && g < list.size() && in_span(list[g - 1].origin) && in_span(list[g].origin);
          if (in_span(p) || !inside) gaps.push_back(g);
        }
        if (gaps.empty()) gaps.push_back(from);
        RngStream r = tokens.split(static_cast<std::uint64_t>(p));
        const std::size_t g = gaps[r.below(gaps.size())];
        list.insert(list.begin() + static_cast<std::ptrdiff_t>(g), e);
      }
      break;
    default:
      throw std::invalid_argument("perturb: " + to_string(kind) + " is not a textual perturbation");
  }

  for (std::size_t i = 0; i < n; ++i) s.text[i] = list[i].token;
  if (kb != kNoPosition) {
    std::size_t first = kNoPosition, last = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (in_span(list[i].origin)) {
        first = std::min(first, i);
        last = i;
      }
    }
    s.key_text_begin = first;
    s.key_text_end = first == kNoPosition ? kNoPosition : last + 1;
  }
  if (sel.key_touched) s.flags |= kFlagKeyTouched;
  return sel.positions.size();
}

}  // namespace

std::string to_string(PerturbKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "unknown";
}

PerturbKind perturb_kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : kKindNames)
    if (s == name) return kind;
  throw std::invalid_argument("unknown perturbation kind '" + s + "'");
}

bool is_visual(PerturbKind k) {
  return k == PerturbKind::token_sub || k == PerturbKind::embed_noise || k == PerturbKind::block_mask;
}

double severity_rate(int severity) {
  switch (severity) {
    case 1:
      return 0.05;
    case 2:
      return 0.15;
    case 3:
      return 0.30;
  }
  throw std::invalid_argument("severity must be 1, 2 or 3, got " + std::to_string(severity));
}

double severity_sigma(int severity) {
  switch (severity) {
    case 1:
      return 0.1;
    case 2:
      return 0.3;
    case 3:
      return 0.6;
  }
  throw std::invalid_argument("severity must be 1, 2 or 3, got " + std::to_string(severity));
}

std::size_t corruption_count(double rate, std::size_t n, double u) {
  const double x = rate * static_cast<double>(n);
  const auto rounded = static_cast<std::size_t>(std::llround(x));
  const auto stochastic = static_cast<std::size_t>(std::floor(x + u));
  return std::min(n, std::max(rounded, stochastic));
}

void PerturbationSpec::validate() const {
  if (severity < 1 || severity > 3) throw std::invalid_argument("perturbation severity must be 1, 2 or 3");
  if (rate_override && (*rate_override < 0.0 || !std::isfinite(*rate_override))) {
    throw std::invalid_argument("perturbation rate override must be a non-negative number");
  }
  const bool want_v = modality != PerturbCategory::textual;
  const bool want_t = modality != PerturbCategory::visual;
  if (want_v != visual_kind.has_value() || want_t != text_kind.has_value()) {
    throw std::invalid_argument(std::string("perturbation spec for ") + category_name(modality) +
                                " has the wrong set of kinds");
  }
  if (visual_kind && !is_visual(*visual_kind)) {
    throw std::invalid_argument(to_string(*visual_kind) + " is not a visual perturbation");
  }
  if (text_kind && is_visual(*text_kind)) {
    throw std::invalid_argument(to_string(*text_kind) + " is not a textual perturbation");
  }
}

std::string PerturbationSpec::name() const {
  if (!visual_kind && !text_kind) return "clean";
  std::string kinds;
  if (visual_kind) kinds = to_string(*visual_kind);
  if (text_kind) kinds += (kinds.empty() ? "" : "+") + to_string(*text_kind);
  return std::string(category_name(modality)) + "/" + kinds + "/s" + std::to_string(severity);
}

PerturbationSpec visual_spec(PerturbKind k, int severity, std::uint64_t seed) {
  PerturbationSpec s{PerturbCategory::visual, k, std::nullopt, severity, seed, std::nullopt};
  s.validate();
  return s;
}

PerturbationSpec text_spec(PerturbKind k, int severity, std::uint64_t seed) {
  PerturbationSpec s{PerturbCategory::textual, std::nullopt, k, severity, seed, std::nullopt};
  s.validate();
  return s;
}

PerturbationSpec joint_spec(PerturbKind visual, PerturbKind text, int severity, std::uint64_t seed) {
  PerturbationSpec s{PerturbCategory::joint, visual, text, severity, seed, std::nullopt};
  s.validate();
  return s;
}

ShiftedDataset apply(const PerturbationSpec& spec, std::span<const QuerySample> dataset, const TaskSpec& task,
                     const ModelConfig& model, const std::string& base_id) {
  spec.validate();
  if (dataset.empty()) throw std::invalid_argument("perturb: dataset has no samples");
  const TaskVocab v = task_vocab(task, model);
  ShiftedDataset out{base_id, spec, {dataset.begin(), dataset.end()}, std::vector<std::size_t>(dataset.size(), 0)};
  const RngStream root(spec.seed);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    QuerySample& s = out.samples[i];
    const auto idx = static_cast<std::uint64_t>(i);
    if (spec.visual_kind) {
      out.corrupted[i] += perturb_visual(*spec.visual_kind, spec, s, v, root.split(to_string(*spec.visual_kind)).split(idx));
    }
    if (spec.text_kind) {
      out.corrupted[i] += perturb_text(*spec.text_kind, spec, s, v, root.split(to_string(*spec.text_kind)).split(idx));
    }
  }
  return out;
}

const ShiftedDataset& Suite::at(const std::string& name) const {
  for (const auto& m : members) {
    if ((name == "clean" && &m == &members.front()) || m.spec.name() == name) return m;
  }
  throw std::out_of_range("suite has no member '" + name + "'");
}

Suite build_suite(std::span<const QuerySample> base, const TaskSpec& task, const ModelConfig& model,
                  std::uint64_t seed, const std::string& base_id) {
  if (base.empty()) throw std::invalid_argument("build_suite: base dataset has no samples");
  Suite suite;
  ShiftedDataset clean{base_id, {}, {base.begin(), base.end()}, std::vector<std::size_t>(base.size(), 0)};
  suite.members.push_back(std::move(clean));
  const PerturbKind visual[] = {PerturbKind::token_sub, PerturbKind::embed_noise, PerturbKind::block_mask};
  // One kind per textual family: character-level, word-level and "translation".
  const PerturbKind textual[] = {PerturbKind::typo, PerturbKind::swap, PerturbKind::remap};
  for (PerturbKind k : visual)
    for (int s = 1; s <= 3; ++s) suite.members.push_back(apply(visual_spec(k, s, seed), base, task, model, base_id));
  for (PerturbKind k : textual)
    for (int s = 1; s <= 3; ++s) suite.members.push_back(apply(text_spec(k, s, seed), base, task, model, base_id));
  for (PerturbKind k : visual) {
    for (int s = 1; s <= 3; ++s) {
      suite.members.push_back(apply(joint_spec(k, PerturbKind::remap, s, seed), base, task, model, base_id));
    }
  }
  return suite;
}

namespace {

void put_tokens(std::ostream& out, char tag, const std::vector<std::size_t>& t) {
  out << tag;
  for (std::size_t x : t) out << ' ' << x;
}

void put_position(std::ostream& out, std::size_t p) {
  if (p == kNoPosition) {
    out << " -";
  } else {
    out << ' ' << p;
  }
}

template <class T>
T parse_number(const std::string& tok, std::size_t line) {
  T x{};
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw std::invalid_argument("dataset line " + std::to_string(line) + ": bad number '" + tok + "'");
  }
  return x;
}

}  // namespace

void write_dataset(std::ostream& out, std::span<const QuerySample> samples) {
  out << "# vittle-dataset v1\n";
  for (const auto& s : samples) {
    put_tokens(out, 'v', s.visual);
    out << " | ";
    put_tokens(out, 't', s.text);
    out << " | ";
    put_tokens(out, 'r', s.response);
    out << " | k";
    put_position(out, s.key_visual);
    put_position(out, s.key_text_begin);
    put_position(out, s.key_text_end);
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, s.noise_sigma);
    out << " | f " << s.flags << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << ' '
        << s.noise_seed << ' ' << s.noise_mask << '\n';
  }
}

std::vector<QuerySample> read_dataset(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::vector<QuerySample> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (lineno == 1 && line == "# vittle-dataset v1") header = true;
      continue;
    }
    if (!header) throw std::invalid_argument("dataset: missing '# vittle-dataset v1' header");
    QuerySample s;
    std::istringstream fields(line);
    std::string field;
    std::size_t seen = 0;
    while (std::getline(fields, field, '|')) {
      std::istringstream ts(field);
      std::string tag, tok;
      ts >> tag;
      std::vector<std::string> toks;
      while (ts >> tok) toks.push_back(tok);
      auto tokens = [&] {
        std::vector<std::size_t> t;
        for (const auto& x : toks) t.push_back(parse_number<std::size_t>(x, lineno));
        return t;
      };
      if (tag == "v") {
        s.visual = tokens();
      } else if (tag == "t") {
        s.text = tokens();
      } else if (tag == "r") {
        s.response = tokens();
      } else if (tag == "k") {
        if (toks.size() != 3) throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": 'k' needs 3 values");
        std::size_t* dst[] = {&s.key_visual, &s.key_text_begin, &s.key_text_end};
        for (std::size_t j = 0; j < 3; ++j) *dst[j] = toks[j] == "-" ? kNoPosition : parse_number<std::size_t>(toks[j], lineno);
      } else if (tag == "f") {
        if (toks.size() != 4) throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": 'f' needs 4 values");
        s.flags = parse_number<std::uint32_t>(toks[0], lineno);
        s.noise_sigma = parse_number<double>(toks[1], lineno);
        s.noise_seed = parse_number<std::uint64_t>(toks[2], lineno);
        s.noise_mask = parse_number<std::uint32_t>(toks[3], lineno);
      } else {
        throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": unknown field '" + tag + "'");
      }
      ++seen;
    }
    if (seen != 5) throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": expected 5 fields");
    out.push_back(std::move(s));
  }
  if (!header) throw std::invalid_argument("dataset: missing '# vittle-dataset v1' header");
  return out;
}

void write_dataset_file(const std::string& path, std::span<const QuerySample> samples) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(f, samples);
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::vector<QuerySample> read_dataset_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open dataset " + path);
  return read_dataset(f);
}

void write_suite(const std::string& dir, const Suite& suite) {
  std::filesystem::create_directories(dir);
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < suite.members.size(); ++i) {
    const auto& m = suite.members[i];
    const bool clean = i == 0;
    std::string name = clean ? "clean" : m.spec.name();
    std::string file = name;
    std::replace(file.begin(), file.end(), '/', '_');
    file += ".txt";
    write_dataset_file((std::filesystem::path(dir) / file).string(), m.samples);
    nlohmann::json e{{"name", name}, {"file", file}, {"base", m.base_id}, {"samples", m.samples.size()}};
    if (!clean) {
      e["category"] = category_name(m.spec.modality);
      e["visual_kind"] = m.spec.visual_kind ? nlohmann::json(to_string(*m.spec.visual_kind)) : nlohmann::json();
      e["text_kind"] = m.spec.text_kind ? nlohmann::json(to_string(*m.spec.text_kind)) : nlohmann::json();
      e["severity"] = m.spec.severity;
      e["seed"] = m.spec.seed;
    }
    members.push_back(std::move(e));
  }
  std::ofstream f(std::filesystem::path(dir) / "manifest.json");
  f << nlohmann::json{{"format", "vittle-suite v1"}, {"members", members}}.dump(2) << '\n';
  if (!f) throw std::runtime_error("cannot write suite manifest in " + dir);
}

}  // namespace vittle
