// SPDX-License-Identifier: Apache-2.0
#include "vittle/discrete_info.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace vittle::info {
namespace {

constexpr double kSumTol = 1e-12;

void check_distribution(std::span<const double> p, const std::string& what) {
  if (p.empty()) throw std::invalid_argument(what + ": empty support");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(what + ": negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > kSumTol) {
    std::ostringstream m;
    m << what << ": sums to " << std::setprecision(17) << s;
    throw std::invalid_argument(m.str());
  }
}

double plogp(double p) { return p < kZeroProbability ? 0.0 : p * std::log(p); }

std::vector<double> dirichlet(RngStream& r, std::size_t n, double concentration) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) {
    x = r.gamma(concentration);
    s += x;
  }
  if (s <= 0.0) {
    // Every draw underflowed; fall back to a point mass.
    std::fill(v.begin(), v.end(), 0.0);
    v[r.below(n)] = 1.0;
    return v;
  }
  for (auto& x : v) x /= s;
  return v;
}

std::span<const double> row(const std::vector<double>& t, std::size_t r, std::size_t cols) {
  return std::span<const double>(t).subspan(r * cols, cols);
}

}  // namespace

DiscreteDist::DiscreteDist(std::vector<double> p) : p_(std::move(p)) { check_distribution(p_, "DiscreteDist"); }

DiscreteJoint::DiscreteJoint(std::size_t rows, std::size_t cols, std::vector<double> p)
    : rows_(rows), cols_(cols), p_(std::move(p)) {
  if (rows * cols != p_.size()) throw std::invalid_argument("DiscreteJoint: table size does not match rows x cols");
  check_distribution(p_, "DiscreteJoint");
}

DiscreteDist DiscreteJoint::row_marginal() const {
  std::vector<double> m(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) m[r] += at(r, c);
  return DiscreteDist(std::move(m));
}

DiscreteDist DiscreteJoint::col_marginal() const {
  std::vector<double> m(cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) m[c] += at(r, c);
  return DiscreteDist(std::move(m));
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= plogp(v);
  return h;
}

double kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl: support sizes differ");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < kZeroProbability) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

double mutual_information(const DiscreteJoint& j) {
  const DiscreteDist px = j.row_marginal();
  const DiscreteDist py = j.col_marginal();
  double mi = 0.0;
  for (std::size_t r = 0; r < j.rows(); ++r) {
    for (std::size_t c = 0; c < j.cols(); ++c) {
      const double p = j.at(r, c);
      if (p < kZeroProbability) continue;
      mi += p * std::log(p / (px[r] * py[c]));
    }
  }
  return mi;
}

double mutual_information_entropy_form(const DiscreteJoint& j) {
  const DiscreteDist px = j.row_marginal();
  double cond = 0.0;
  std::vector<double> r(j.cols());
  for (std::size_t x = 0; x < j.rows(); ++x) {
    if (px[x] < kZeroProbability) continue;
    for (std::size_t c = 0; c < j.cols(); ++c) r[c] = j.at(x, c) / px[x];
    cond += px[x] * entropy(r);
  }
  return entropy(j.col_marginal()) - cond;
}

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("jsd: support sizes differ (" + std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()) + ")");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    // Summing the two halves first keeps jsd(p, q) == jsd(q, p) bit for bit.
    const double a = p[i] >= kZeroProbability ? p[i] * std::log(p[i] / m) : 0.0;
    const double b = q[i] >= kZeroProbability ? q[i] * std::log(q[i] / m) : 0.0;
    d += 0.5 * (a + b);
  }
  return std::max(0.0, d);
}

void validate_world(const DiscreteWorld& w) {
  if (w.xv == 0 || w.xt == 0 || w.y == 0 || w.zv == 0 || w.zt == 0) {
    throw std::invalid_argument("world: every set must be non-empty");
  }
  const std::size_t nx = w.nx();
  auto size_is = [](const auto& v, std::size_t n, const char* what) {
    if (v.size() != n) {
      throw std::invalid_argument(std::string("world: ") + what + " has " + std::to_string(v.size()) +
                                  " entries, expected " + std::to_string(n));
    }
  };
  size_is(w.px, nx, "px");
  size_is(w.qx, nx, "qx");
  size_is(w.channel_p, nx * w.y, "channel_p");
  size_is(w.channel_q, nx * w.y, "channel_q");
  size_is(w.enc_v, nx, "enc_v");
  size_is(w.enc_t, nx, "enc_t");
  size_is(w.theta, w.nz() * w.y, "theta");
  check_distribution(w.px, "world px");
  check_distribution(w.qx, "world qx");
  for (std::size_t x = 0; x < nx; ++x) {
    check_distribution(row(w.channel_p, x, w.y), "world channel_p row " + std::to_string(x));
    check_distribution(row(w.channel_q, x, w.y), "world channel_q row " + std::to_string(x));
    if (w.enc_v[x] >= w.zv || w.enc_t[x] >= w.zt) {
      throw std::invalid_argument("world: encoder maps x=" + std::to_string(x) + " outside Z");
    }
  }
  for (std::size_t z = 0; z < w.nz(); ++z) check_distribution(row(w.theta, z, w.y), "world theta row " + std::to_string(z));
}

std::vector<double> input_marginal(const DiscreteWorld& w, Side s) { return s == Side::P ? w.px : w.qx; }

std::vector<double> z_marginal(const DiscreteWorld& w, Side s) {
  const auto& p = s == Side::P ? w.px : w.qx;
  std::vector<double> z(w.nz(), 0.0);
  for (std::size_t x = 0; x < w.nx(); ++x) z[w.z_of(x)] += p[x];
  return z;
}

std::vector<double> zv_marginal(const DiscreteWorld& w, Side s) {
  const auto z = z_marginal(w, s);
  std::vector<double> m(w.zv, 0.0);
  for (std::size_t a = 0; a < w.zv; ++a)
    for (std::size_t b = 0; b < w.zt; ++b) m[a] += z[a * w.zt + b];
  return m;
}

std::vector<double> zt_marginal(const DiscreteWorld& w, Side s) {
  const auto z = z_marginal(w, s);
  std::vector<double> m(w.zt, 0.0);
  for (std::size_t a = 0; a < w.zv; ++a)
    for (std::size_t b = 0; b < w.zt; ++b) m[b] += z[a * w.zt + b];
  return m;
}

void check_assumptions(const DiscreteWorld& w, double tol) {
  validate_world(w);
  for (std::size_t i = 0; i < w.channel_p.size(); ++i) {
    if (std::abs(w.channel_p[i] - w.channel_q[i]) > tol) {
      throw AssumptionError("world: Y|X channels differ between P and Q at x=" + std::to_string(i / w.y) +
                            ", y=" + std::to_string(i % w.y));
    }
  }
  const auto pz = z_marginal(w, Side::P), qz = z_marginal(w, Side::Q);
  const auto pv = zv_marginal(w, Side::P), qv = zv_marginal(w, Side::Q);
  const auto pt = zt_marginal(w, Side::P), qt = zt_marginal(w, Side::Q);
  for (std::size_t b = 0; b < w.zt; ++b) {
    if (pt[b] < kZeroProbability || qt[b] < kZeroProbability) continue;
    for (std::size_t a = 0; a < w.zv; ++a) {
      const std::size_t z = a * w.zt + b;
      if (std::abs(pz[z] / pt[b] - qz[z] / qt[b]) > tol) {
        throw AssumptionError("world: Z_v|Z_t conditionals differ at z_v=" + std::to_string(a) +
                              ", z_t=" + std::to_string(b));
      }
    }
  }
  for (std::size_t a = 0; a < w.zv; ++a) {
    if (pv[a] < kZeroProbability || qv[a] < kZeroProbability) continue;
    for (std::size_t b = 0; b < w.zt; ++b) {
      const std::size_t z = a * w.zt + b;
      if (std::abs(pz[z] / pv[a] - qz[z] / qv[a]) > tol) {
        throw AssumptionError("world: Z_t|Z_v conditionals differ at z_v=" + std::to_string(a) +
                              ", z_t=" + std::to_string(b));
      }
    }
  }
}

DiscreteWorld swap_pq(const DiscreteWorld& w) {
  DiscreteWorld s = w;
  std::swap(s.px, s.qx);
  std::swap(s.channel_p, s.channel_q);
  return s;
}

DiscreteJoint xy_joint(const DiscreteWorld& w, Side s) {
  const auto& p = s == Side::P ? w.px : w.qx;
  const auto& k = s == Side::P ? w.channel_p : w.channel_q;
  std::vector<double> t(w.nx() * w.y);
  for (std::size_t x = 0; x < w.nx(); ++x)
    for (std::size_t y = 0; y < w.y; ++y) t[x * w.y + y] = p[x] * k[x * w.y + y];
  return DiscreteJoint(w.nx(), w.y, std::move(t));
}

DiscreteJoint xy_theta_joint(const DiscreteWorld& w, Side s) {
  const auto& p = s == Side::P ? w.px : w.qx;
  std::vector<double> t(w.nx() * w.y);
  for (std::size_t x = 0; x < w.nx(); ++x)
    for (std::size_t y = 0; y < w.y; ++y) t[x * w.y + y] = p[x] * w.theta[w.z_of(x) * w.y + y];
  return DiscreteJoint(w.nx(), w.y, std::move(t));
}

double emi(const DiscreteWorld& w, Side s) {
  return mutual_information(xy_theta_joint(w, s)) - mutual_information(xy_joint(w, s));
}

double emid(const DiscreteWorld& w) { return emi(w, Side::P) - emi(w, Side::Q); }

double delta_x_given_z(const DiscreteWorld& w) {
  const auto pz = z_marginal(w, Side::P), qz = z_marginal(w, Side::Q);
  double d = 0.0;
  for (std::size_t x = 0; x < w.nx(); ++x) {
    const std::size_t z = w.z_of(x);
    const double mx = 0.5 * (w.px[x] + w.qx[x]);
    const double mz = 0.5 * (pz[z] + qz[z]);
    // P_X(x) ln[(P_X(x) / P_Z(z)) / (M_X(x) / M_Z(z))], and the same for Q.
    if (w.px[x] >= kZeroProbability) d += w.px[x] * std::log((w.px[x] / pz[z]) / (mx / mz));
    if (w.qx[x] >= kZeroProbability) d += w.qx[x] * std::log((w.qx[x] / qz[z]) / (mx / mz));
  }
  return std::max(0.0, d);
}

EmidReport emid_upper_bound(const DiscreteWorld& w) {
  check_assumptions(w);
  EmidReport r;
  const DiscreteJoint pxy = xy_joint(w, Side::P), qxy = xy_joint(w, Side::Q);
  const DiscreteJoint pxt = xy_theta_joint(w, Side::P), qxt = xy_theta_joint(w, Side::Q);
  r.emi_p = mutual_information(pxt) - mutual_information(pxy);
  r.emi_q = mutual_information(qxt) - mutual_information(qxy);
  r.emid = r.emi_p - r.emi_q;

  const double h_p_ytheta = entropy(pxt.col_marginal());
  const double h_q_ytheta = entropy(qxt.col_marginal());
  double max_h_channel = 0.0;
  for (std::size_t x = 0; x < w.nx(); ++x) max_h_channel = std::max(max_h_channel, entropy(row(w.channel_q, x, w.y)));
  r.h_hat = max_h_channel + h_p_ytheta;
  for (std::size_t z = 0; z < w.nz(); ++z) r.max_h_theta = std::max(r.max_h_theta, entropy(row(w.theta, z, w.y)));

  r.sqrt_jsd_zv = std::sqrt(jsd(zv_marginal(w, Side::P), zv_marginal(w, Side::Q)));
  r.sqrt_jsd_zt = std::sqrt(jsd(zt_marginal(w, Side::P), zt_marginal(w, Side::Q)));
  r.delta = delta_x_given_z(w);
  r.gap_p = std::abs(h_p_ytheta - entropy(pxy.col_marginal()));
  r.gap_q = std::abs(h_q_ytheta - entropy(qxy.col_marginal()));
  r.bound = r.h_hat * (r.sqrt_jsd_zv + r.sqrt_jsd_zt + std::sqrt(r.delta)) + r.gap_p + r.gap_q;
  r.slack = r.bound - r.emid;
  r.reduced_bound = h_p_ytheta * (r.sqrt_jsd_zv + r.sqrt_jsd_zt) + h_p_ytheta + h_q_ytheta;

  r.jsd_x = jsd(w.px, w.qx);
  r.jsd_z = jsd(z_marginal(w, Side::P), z_marginal(w, Side::Q));
  r.chain_residual = std::abs(r.jsd_x - (r.jsd_z + 0.5 * r.delta));
  return r;
}

DiscreteWorld sample_world(RngStream& r, const WorldCaps& caps, const WorldOptions& options) {
  for (std::size_t c : {caps.xv, caps.xt, caps.y, caps.zv, caps.zt}) {
    if (c < 2) throw std::invalid_argument("sample_world: every cap must be at least 2");
  }
  auto pick = [&](std::size_t cap) { return 2 + r.below(cap - 1); };
  // Concentrations below 1 give near-deterministic tables, above 1 near-uniform ones.
  const double concentrations[] = {0.2, 0.5, 1.0, 3.0};
  auto conc = [&] { return concentrations[r.below(4)]; };

  for (int attempt = 0; attempt < 64; ++attempt) {
    DiscreteWorld w;
    w.xv = pick(caps.xv);
    w.xt = pick(caps.xt);
    w.y = pick(caps.y);
    w.zv = pick(caps.zv);
    w.zt = pick(caps.zt);
    const std::size_t nx = w.nx();

    // Paired blocks: every z_v and z_t index gets a block label; each block
    // owns at least one index on either side.
    const std::size_t blocks = 1 + r.below(std::min(w.zv, w.zt));
    auto label = [&](std::size_t n) {
      std::vector<std::size_t> b(n);
      for (std::size_t i = 0; i < n; ++i) b[i] = i < blocks ? i : r.below(blocks);
      for (std::size_t i = n; i > 1; --i) std::swap(b[i - 1], b[r.below(i)]);
      return b;
    };
    const auto block_v = label(w.zv);
    const auto block_t = label(w.zt);
    std::vector<std::size_t> cells;
    for (std::size_t a = 0; a < w.zv; ++a)
      for (std::size_t b = 0; b < w.zt; ++b)
        if (block_v[a] == block_t[b]) cells.push_back(a * w.zt + b);

    w.enc_v.resize(nx);
    w.enc_t.resize(nx);
    std::vector<std::vector<std::size_t>> fibre(w.nz());
    for (std::size_t x = 0; x < nx; ++x) {
      const std::size_t z = cells[r.below(cells.size())];
      w.enc_v[x] = z / w.zt;
      w.enc_t[x] = z % w.zt;
      fibre[z].push_back(x);
    }

    const auto tmpl = dirichlet(r, w.nz(), conc());
    std::vector<double> template_mass(w.nz(), 0.0), block_mass(blocks, 0.0);
    for (std::size_t z = 0; z < w.nz(); ++z) {
      if (fibre[z].empty()) continue;
      template_mass[z] = tmpl[z];
      block_mass[block_v[z / w.zt]] += tmpl[z];
    }
    const double wc = conc();
    const auto wp = dirichlet(r, blocks, wc);
    const auto wq = options.same_z_marginal ? wp : dirichlet(r, blocks, wc);
    w.px.assign(nx, 0.0);
    w.qx.assign(nx, 0.0);
    auto fill = [&](std::vector<double>& px, const std::vector<double>& weights, std::size_t z,
                    const std::vector<double>& u) {
      const std::size_t b = block_v[z / w.zt];
      // Blocks missed by the encoder carry no mass; their weight is spread
      // over the hit blocks by the final normalisation.
      const double pz = weights[b] * template_mass[z] / block_mass[b];
      for (std::size_t i = 0; i < fibre[z].size(); ++i) px[fibre[z][i]] = pz * u[i];
    };
    const double fc = conc();
    for (std::size_t z = 0; z < w.nz(); ++z) {
      if (fibre[z].empty() || block_mass[block_v[z / w.zt]] <= 0.0) continue;
      const auto up = dirichlet(r, fibre[z].size(), fc);
      const auto uq = options.same_fibres ? up : dirichlet(r, fibre[z].size(), fc);
      fill(w.px, wp, z, up);
      fill(w.qx, wq, z, uq);
    }
    auto normalise = [](std::vector<double>& v) {
      const double s = std::accumulate(v.begin(), v.end(), 0.0);
      if (s <= 0.0) return false;
      for (double& x : v) x /= s;
      return true;
    };
    if (!normalise(w.px) || !normalise(w.qx)) continue;

    const double kc = conc();
    for (std::size_t x = 0; x < nx; ++x) {
      const auto k = dirichlet(r, w.y, kc);
      w.channel_p.insert(w.channel_p.end(), k.begin(), k.end());
    }
    w.channel_q = w.channel_p;
    const double tc = conc();
    for (std::size_t z = 0; z < w.nz(); ++z) {
      const auto t = dirichlet(r, w.y, tc);
      w.theta.insert(w.theta.end(), t.begin(), t.end());
    }
    try {
      check_assumptions(w);
    } catch (const std::invalid_argument&) {
      continue;
    }
    return w;
  }
  throw std::runtime_error("sample_world: could not build a valid world in 64 attempts");
}

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

}  // namespace

VerifySummary verify_bound(std::size_t n, const WorldCaps& caps, const RngStream& stream, const WorldOptions& options) {
  if (n == 0) throw std::invalid_argument("verify_bound: need at least one instance");
  VerifySummary s;
  s.instances = n;
  std::vector<double> e, b, rb;
  double slack_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    RngStream r = stream.split(static_cast<std::uint64_t>(i));
    DiscreteWorld w = sample_world(r, caps, options);
    EmidReport rep = emid_upper_bound(w);
    if (rep.slack < 0.0) {
      if (s.violations == 0) s.first_violation = i;
      ++s.violations;
    }
    s.min_slack = i == 0 ? rep.slack : std::min(s.min_slack, rep.slack);
    slack_sum += rep.slack;
    s.max_chain_residual = std::max(s.max_chain_residual, rep.chain_residual);
    s.max_jsd = std::max({s.max_jsd, rep.jsd_x, rep.jsd_z});
    e.push_back(rep.emid);
    b.push_back(rep.bound);
    rb.push_back(rep.reduced_bound);
    s.reports.push_back(rep);
    s.worlds.push_back(std::move(w));
  }
  s.mean_slack = slack_sum / static_cast<double>(n);
  s.corr_bound = pearson(e, b);
  s.corr_reduced = pearson(e, rb);
  return s;
}

void write_report_csv(std::ostream& out, const VerifySummary& s) {
  out << "instance_id,emid,bound,slack,h_hat,sqrt_jsd_zv,sqrt_jsd_zt,delta_x_given_z,gap_p,gap_q,"
         "reduced_bound,emi_p,emi_q,jsd_x,jsd_z,chain_residual,max_h_theta\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < s.reports.size(); ++i) {
    const auto& r = s.reports[i];
    out << i << ',' << r.emid << ',' << r.bound << ',' << r.slack << ',' << r.h_hat << ',' << r.sqrt_jsd_zv << ','
        << r.sqrt_jsd_zt << ',' << r.delta << ',' << r.gap_p << ',' << r.gap_q << ',' << r.reduced_bound << ','
        << r.emi_p << ',' << r.emi_q << ',' << r.jsd_x << ',' << r.jsd_z << ',' << r.chain_residual << ','
        << r.max_h_theta << '\n';
  }
}

void write_summary(std::ostream& out, const VerifySummary& s) {
  out << std::setprecision(10) << "instances " << s.instances << "\nviolations " << s.violations << "\nmin_slack "
      << s.min_slack << "\nmean_slack " << s.mean_slack << "\nmax_chain_residual " << s.max_chain_residual
      << "\ncorr_emid_bound " << s.corr_bound << "\ncorr_emid_reduced_bound " << s.corr_reduced << '\n';
}

namespace {

std::string number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
void put_line(std::ostringstream& out, const char* key, const std::vector<T>& v) {
  out << key;
  for (const T& x : v) {
    if constexpr (std::is_floating_point_v<T>) {
      out << ' ' << number(x);
    } else {
      out << ' ' << x;
    }
  }
  out << '\n';
}

template <class T>
std::vector<T> parse_values(std::istringstream& line, const std::string& key) {
  std::vector<T> v;
  std::string tok;
  while (line >> tok) {
    T x{};
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw std::invalid_argument("world text: bad value '" + tok + "' in '" + key + "'");
    }
    v.push_back(x);
  }
  return v;
}

}  // namespace

std::string world_to_text(const DiscreteWorld& w) {
  std::ostringstream o;
  o << "# vittle-world v1\n";
  o << "sizes " << w.xv << ' ' << w.xt << ' ' << w.y << ' ' << w.zv << ' ' << w.zt << '\n';
  put_line(o, "px", w.px);
  put_line(o, "qx", w.qx);
  put_line(o, "channel_p", w.channel_p);
  put_line(o, "channel_q", w.channel_q);
  put_line(o, "enc_v", w.enc_v);
  put_line(o, "enc_t", w.enc_t);
  put_line(o, "theta", w.theta);
  return o.str();
}

DiscreteWorld world_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  DiscreteWorld w;
  bool header = false, sizes = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line == "# vittle-world v1") header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "sizes") {
      auto v = parse_values<std::size_t>(ls, key);
      if (v.size() != 5) throw std::invalid_argument("world text: 'sizes' needs 5 values");
      w.xv = v[0], w.xt = v[1], w.y = v[2], w.zv = v[3], w.zt = v[4];
      sizes = true;
    } else if (key == "px") {
      w.px = parse_values<double>(ls, key);
    } else if (key == "qx") {
      w.qx = parse_values<double>(ls, key);
    } else if (key == "channel_p") {
      w.channel_p = parse_values<double>(ls, key);
    } else if (key == "channel_q") {
      w.channel_q = parse_values<double>(ls, key);
    } else if (key == "enc_v") {
      w.enc_v = parse_values<std::size_t>(ls, key);
    } else if (key == "enc_t") {
      w.enc_t = parse_values<std::size_t>(ls, key);
    } else if (key == "theta") {
      w.theta = parse_values<double>(ls, key);
    } else {
      throw std::invalid_argument("world text: unknown key '" + key + "'");
    }
  }
  if (!header) throw std::invalid_argument("world text: missing '# vittle-world v1' header");
  if (!sizes) throw std::invalid_argument("world text: missing 'sizes' line");
  validate_world(w);
  return w;
}

}  // namespace vittle::info
