// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exact information quantities on finite distributions, in nats.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vittle/rng.hpp"

namespace vittle::info {

/// Entries below this are treated as exact zeros in p * ln p terms.
inline constexpr double kZeroProbability = 1e-15;

class AssumptionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-negative weights summing to 1 within 1e-12.
class DiscreteDist {
 public:
  explicit DiscreteDist(std::vector<double> p);
  std::size_t size() const noexcept { return p_.size(); }
  std::span<const double> probs() const noexcept { return p_; }
  double operator[](std::size_t i) const { return p_[i]; }

 private:
  std::vector<double> p_;
};

/// Joint table over rows x columns, row-major, summing to 1.
class DiscreteJoint {
 public:
  DiscreteJoint(std::size_t rows, std::size_t cols, std::vector<double> p);
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double at(std::size_t r, std::size_t c) const { return p_[r * cols_ + c]; }
  std::span<const double> table() const noexcept { return p_; }
  DiscreteDist row_marginal() const;
  DiscreteDist col_marginal() const;

 private:
  std::size_t rows_, cols_;
  std::vector<double> p_;
};

double entropy(std::span<const double> p);
inline double entropy(const DiscreteDist& d) { return entropy(d.probs()); }

/// KL(p || q); +inf when p puts mass where q has none.
double kl(std::span<const double> p, std::span<const double> q);

/// Log-ratio form: sum p(x,y) ln[p(x,y) / (p(x) p(y))].
double mutual_information(const DiscreteJoint& j);
/// Entropy form: H(Y) - E_x H(Y | x).
double mutual_information_entropy_form(const DiscreteJoint& j);

/// 0.5 KL(p || m) + 0.5 KL(q || m) with m the midpoint; supports must match in size.
double jsd(std::span<const double> p, std::span<const double> q);
inline double jsd(const DiscreteDist& p, const DiscreteDist& q) { return jsd(p.probs(), q.probs()); }

/// Finite world: inputs X = X_v x X_t (index xv * |X_t| + xt), outputs Y, a
/// deterministic encoder x -> (z_v, z_t) (index zv * |Z_t| + zt), a model
/// channel Z -> Y, and two input marginals P, Q with their Y|X channels.
struct DiscreteWorld {
  std::size_t xv = 0, xt = 0, y = 0, zv = 0, zt = 0;
  std::vector<double> px, qx;                   // |X|
  std::vector<double> channel_p, channel_q;     // |X| x |Y|
  std::vector<std::size_t> enc_v, enc_t;        // |X|
  std::vector<double> theta;                    // |Z| x |Y|

  std::size_t nx() const noexcept { return xv * xt; }
  std::size_t nz() const noexcept { return zv * zt; }
  std::size_t z_of(std::size_t x) const { return enc_v[x] * zt + enc_t[x]; }

  friend bool operator==(const DiscreteWorld&, const DiscreteWorld&) = default;
};

/// Shape and normalisation checks; throws std::invalid_argument.
void validate_world(const DiscreteWorld& w);
/// Shared Y|X channel and consistent Z_v|Z_t, Z_t|Z_v conditionals between
/// P and Q (within `tol`); throws AssumptionError naming the first failure.
void check_assumptions(const DiscreteWorld& w, double tol = 1e-10);

/// Returns a copy with P and Q exchanged.
DiscreteWorld swap_pq(const DiscreteWorld& w);

enum class Side { P, Q };

std::vector<double> input_marginal(const DiscreteWorld& w, Side s);
std::vector<double> z_marginal(const DiscreteWorld& w, Side s);
std::vector<double> zv_marginal(const DiscreteWorld& w, Side s);
std::vector<double> zt_marginal(const DiscreteWorld& w, Side s);
/// Ground-truth joint over X x Y.
DiscreteJoint xy_joint(const DiscreteWorld& w, Side s);
/// Model joint P_X(x) * theta(y | f(x)).
DiscreteJoint xy_theta_joint(const DiscreteWorld& w, Side s);

/// I(X; Y_theta) - I(X; Y) under the chosen marginal.
double emi(const DiscreteWorld& w, Side s);
/// emi(P) - emi(Q).
double emid(const DiscreteWorld& w);

/// E_{z~P} KL(P_{X|z} || M_{X|z}) + E_{z~Q} KL(Q_{X|z} || M_{X|z}), where
/// M_{X|z} = M_X / M_Z(z) is the conditional of the mixture M = (P + Q) / 2.
double delta_x_given_z(const DiscreteWorld& w);

struct EmidReport {
  double emi_p = 0, emi_q = 0, emid = 0;
  double h_hat = 0;
  double sqrt_jsd_zv = 0, sqrt_jsd_zt = 0;
  double delta = 0;
  double gap_p = 0, gap_q = 0;  // |H(Y_theta) - H(Y)| under P and Q
  double bound = 0;
  double slack = 0;  // bound - emid
  // Bound without the terms that do not depend on the model channel.
  double reduced_bound = 0;
  double jsd_x = 0, jsd_z = 0;
  // |JSD_X - (JSD_Z + delta / 2)|
  double chain_residual = 0;
  double max_h_theta = 0;  // max_z H(theta(. | z)), diagnostic only
};

/// Every term evaluated exactly. Runs check_assumptions first.
EmidReport emid_upper_bound(const DiscreteWorld& w);

struct WorldCaps {
  std::size_t xv = 4, xt = 4, y = 5, zv = 4, zt = 4;
};

struct WorldOptions {
  // Same block weights for P and Q (identical Z marginals).
  bool same_z_marginal = false;
  // Same within-fibre weights for P and Q (with same_z_marginal: P = Q).
  bool same_fibres = false;
};

/// Random world satisfying the bound's assumptions by construction. Z_v and
/// Z_t are split into paired blocks; the encoder only hits cells inside a
/// block, a shared template fixes the within-block Z distribution and P, Q
/// differ through block weights and within-fibre weights.
DiscreteWorld sample_world(RngStream& stream, const WorldCaps& caps = {}, const WorldOptions& options = {});

struct VerifySummary {
  std::size_t instances = 0;
  std::size_t violations = 0;
  std::size_t first_violation = 0;
  double min_slack = 0;
  double mean_slack = 0;
  double max_chain_residual = 0;
  double max_jsd = 0;
  // Pearson correlation of EMID with the full and reduced bound across instances.
  double corr_bound = 0;
  double corr_reduced = 0;
  std::vector<EmidReport> reports;
  std::vector<DiscreteWorld> worlds;
};

/// Instance i is drawn from stream.split(i).
VerifySummary verify_bound(std::size_t n, const WorldCaps& caps, const RngStream& stream,
                           const WorldOptions& options = {});

void write_report_csv(std::ostream& out, const VerifySummary& s);
void write_summary(std::ostream& out, const VerifySummary& s);

/// Canonical text form (shortest round-trip decimal).
std::string world_to_text(const DiscreteWorld& w);
DiscreteWorld world_from_text(const std::string& text);

}  // namespace vittle::info
