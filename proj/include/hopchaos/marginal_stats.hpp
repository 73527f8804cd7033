#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hopchaos/disorder.hpp"
#include "hopchaos/gibbs_exact.hpp"
#include "hopchaos/hs_mixture.hpp"
#include "hopchaos/parallel.hpp"
#include "hopchaos/report.hpp"
#include "hopchaos/rng.hpp"
#include "hopchaos/scalar.hpp"

namespace hopchaos {

class GroupingTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Likelihood ratio L = 2^k mu_N^(k) of the first k spins against the uniform
/// product law, as a ratio of two integrals over the mixing field:
///
///   L(sigma) = int q(u) exp(-sum_{i<=k} log cosh(u.xi_i)) exp(u.v) du / Z,
///   v = sum_{i<=k} sigma_i xi_i.
///
/// Sites are grouped by row class, and L depends on sigma only through the
/// per-group sums t_g = sum_{i in g} sigma_i * orientation_i.
class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(std::shared_ptr<const NormalizedMixing> mix, std::size_t k) : mix_(std::move(mix)), k_(k) {
    if (!mix_) throw std::invalid_argument("LikelihoodEvaluator: mixing measure required");
    if (k_ > mix_->spec.sites()) throw std::invalid_argument("LikelihoodEvaluator: k exceeds N");
    groups_ = classify_rows(mix_->spec.model().patterns(), 0, k_);
    fields_ = detail::class_fields(groups_, mix_->rule);
    const std::size_t nodes = mix_->rule.size();
    log_base_.resize(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
      double lw = mix_->rule.log_weights[j] - mix_->log_normalization;
      for (std::size_t g = 0; g < groups_.size(); ++g)
        lw -= static_cast<double>(groups_.classes[g].count) * log_cosh(fields_(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(j)));
      log_base_[j] = lw;
    }
  }

  std::size_t k() const noexcept { return k_; }
  const NormalizedMixing& mixing() const noexcept { return *mix_; }
  const std::shared_ptr<const NormalizedMixing>& shared_mixing() const noexcept { return mix_; }
  const RowClasses& groups() const noexcept { return groups_; }
  std::size_t group_count() const noexcept { return groups_.size(); }
  /// fields()(g, j) = canonical row of group g dotted with quadrature node j.
  const Eigen::MatrixXd& fields() const noexcept { return fields_; }
  /// log p_j - sum_g c_g log cosh(fields(g, j)), p_j the normalized node mass.
  const std::vector<double>& log_base_weights() const noexcept { return log_base_; }

  std::vector<long> group_sums(std::span<const int> spins) const {
    if (spins.size() != k_) throw std::invalid_argument("group_sums: expected k spins");
    std::vector<long> t(groups_.size(), 0);
    for (std::size_t i = 0; i < k_; ++i) {
      if (spins[i] != 1 && spins[i] != -1) throw std::invalid_argument("group_sums: spins must be +1 or -1");
      t[groups_.site_class[i]] += spins[i] * groups_.orientation[i];
    }
    return t;
  }

  std::vector<long> group_sums(std::uint64_t word) const {
    if (k_ > 64) throw std::invalid_argument("group_sums: word form needs k <= 64");
    std::vector<long> t(groups_.size(), 0);
    for (std::size_t i = 0; i < k_; ++i) t[groups_.site_class[i]] += (((word >> i) & 1u) ? 1 : -1) * groups_.orientation[i];
    return t;
  }

  double likelihood(std::span<const long> sums) const {
    if (sums.size() != groups_.size()) throw std::invalid_argument("likelihood: one sum per group required");
    for (std::size_t g = 0; g < sums.size(); ++g) {
      const long c = static_cast<long>(groups_.classes[g].count);
      if (sums[g] < -c || sums[g] > c || (sums[g] + c) % 2 != 0) throw std::invalid_argument("likelihood: group sum not attainable");
    }
    std::vector<double> terms(log_base_.size());
    for (std::size_t j = 0; j < terms.size(); ++j) {
      double tilt = 0.0;
      for (std::size_t g = 0; g < sums.size(); ++g) tilt += static_cast<double>(sums[g]) * fields_(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(j));
      terms[j] = log_base_[j] + tilt;
    }
    return std::exp(log_sum_exp(terms));
  }

  double likelihood_spins(std::span<const int> spins) const { return likelihood(group_sums(spins)); }
  double likelihood_word(std::uint64_t word) const { return likelihood(group_sums(word)); }

 private:
  std::shared_ptr<const NormalizedMixing> mix_;
  std::size_t k_;
  RowClasses groups_;
  Eigen::MatrixXd fields_;
  std::vector<double> log_base_;
};

namespace detail {
// x * exp(log_scale) without 0 * inf
inline double rescale(double x, double log_scale) noexcept { return x > 0.0 ? std::exp(std::log(x) + log_scale) : 0.0; }
}  // namespace detail

/// The law of L under the uniform product measure, tabulated on the lattice
/// of group sums. Lattice points with probability below the truncation level
/// are dropped; their mass is tracked for the error bar.
struct LatticeDistribution {
  std::vector<double> probability;
  std::vector<double> ratio;
  double pi_truncated = 0.0;  // uniform mass dropped
  double mu_deficit = 0.0;    // 1 - sum P L over kept points

  std::size_t size() const noexcept { return probability.size(); }

  double moment(double p) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += probability[i] * std::pow(ratio[i], p);
    return s;
  }
  double centered_abs_moment(double p) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += probability[i] * std::pow(std::fabs(ratio[i] - 1.0), p);
    return s;
  }
  double error_bar() const noexcept { return 0.5 * (pi_truncated + std::fabs(mu_deficit)); }
};

struct LatticeOptions {
  double truncation = 1e-16;
  std::size_t max_groups = 6;
  std::size_t max_points = 50'000'000;
};

/// Exact law of L over the group-sum lattice. Each group sum is an
/// independent symmetric binomial; L is evaluated with separable exponentials
/// so that the last two groups reduce to one matrix product per prefix.
inline LatticeDistribution lattice_distribution(const LikelihoodEvaluator& ev, const LatticeOptions& options = {}) {
  const RowClasses& groups = ev.groups();
  const std::size_t ng = groups.size();
  LatticeDistribution out;
  if (ng == 0) {
    out.probability = {1.0};
    out.ratio = {1.0};
    return out;
  }
  if (ng > options.max_groups)
    throw GroupingTooLarge("lattice_distribution: " + std::to_string(ng) + " distinct pattern rows among the first k sites (limit " +
                           std::to_string(options.max_groups) + ")");

  const Eigen::Index nodes = static_cast<Eigen::Index>(ev.log_base_weights().size());
  const Eigen::MatrixXd& h = ev.fields();

  struct GroupAxis {
    std::vector<long> t;
    std::vector<double> pmf;
    double scale = 0.0;  // max_j |h_gj|
    Eigen::MatrixXd e;   // nodes x values: exp(t h - |t| scale)
  };
  // log of prod_g cosh(h_gj)^{c_g}: the uniform average of exp(t_g h_gj)
  // over group g, used to bound the mu-mass of a partial assignment.
  Eigen::MatrixXd log_avg(static_cast<Eigen::Index>(ng), nodes);
  for (std::size_t g = 0; g < ng; ++g)
    for (Eigen::Index j = 0; j < nodes; ++j)
      log_avg(static_cast<Eigen::Index>(g), j) = static_cast<double>(groups.classes[g].count) * log_cosh(h(static_cast<Eigen::Index>(g), j));
  const double log_trunc = std::log(options.truncation);

  // A value is dropped only when both its uniform mass and its mu-mass are
  // below the truncation level; L is large exactly where the uniform mass is small.
  std::vector<GroupAxis> axes(ng);
  std::vector<double> terms(static_cast<std::size_t>(nodes));
  double points = 1.0;
  for (std::size_t g = 0; g < ng; ++g) {
    const std::size_t c = groups.classes[g].count;
    auto& ax = axes[g];
    for (std::size_t a = 0; a <= c; ++a) {
      const double log_p = log_symmetric_binomial(c, a);
      const long t = 2 * static_cast<long>(a) - static_cast<long>(c);
      if (log_p < log_trunc) {
        for (Eigen::Index j = 0; j < nodes; ++j) {
          double v = ev.log_base_weights()[static_cast<std::size_t>(j)] + static_cast<double>(t) * h(static_cast<Eigen::Index>(g), j);
          for (std::size_t o = 0; o < ng; ++o)
            if (o != g) v += log_avg(static_cast<Eigen::Index>(o), j);
          terms[static_cast<std::size_t>(j)] = v;
        }
        if (log_p + log_sum_exp(terms) < log_trunc) continue;
      }
      ax.t.push_back(t);
      ax.pmf.push_back(std::exp(log_p));
    }
    ax.scale = h.row(static_cast<Eigen::Index>(g)).cwiseAbs().maxCoeff();
    ax.e.resize(nodes, static_cast<Eigen::Index>(ax.t.size()));
    for (Eigen::Index v = 0; v < ax.e.cols(); ++v) {
      const double t = static_cast<double>(ax.t[static_cast<std::size_t>(v)]);
      for (Eigen::Index j = 0; j < nodes; ++j) ax.e(j, v) = std::exp(t * h(static_cast<Eigen::Index>(g), j) - std::fabs(t) * ax.scale);
    }
    points *= static_cast<double>(ax.t.size());
  }
  if (points > static_cast<double>(options.max_points))
    throw GroupingTooLarge("lattice_distribution: group-sum lattice too large (" + std::to_string(points) + " points)");

  Eigen::VectorXd base(nodes);
  for (Eigen::Index j = 0; j < nodes; ++j) base[j] = std::exp(ev.log_base_weights()[static_cast<std::size_t>(j)]);

  // Prefix combinations over groups 0..ng-3.
  const std::size_t prefix_groups = ng >= 2 ? ng - 2 : 0;
  std::size_t prefix_count = 1;
  for (std::size_t g = 0; g < prefix_groups; ++g) prefix_count *= axes[g].t.size();

  // log of prod over the last two groups of the uniform average, per node
  Eigen::VectorXd log_tail = Eigen::VectorXd::Zero(nodes);
  for (std::size_t g = prefix_groups; g < ng; ++g) log_tail += log_avg.row(static_cast<Eigen::Index>(g)).transpose();
  const double log_tail_max = log_tail.maxCoeff();
  const Eigen::VectorXd tail_scaled = (log_tail.array() - log_tail_max).exp().matrix();

  struct Partial {
    std::vector<double> prob, ratio;
  };
  std::vector<Partial> partial(prefix_count);
  parallel_for(prefix_count, [&](std::size_t combo) {
    double prefix_p = 1.0;
    double prefix_log_scale = 0.0;
    Eigen::VectorXd w = base;
    std::size_t rem = combo;
    for (std::size_t g = prefix_groups; g-- > 0;) {
      const std::size_t v = rem % axes[g].t.size();
      rem /= axes[g].t.size();
      prefix_p *= axes[g].pmf[v];
      prefix_log_scale += std::fabs(static_cast<double>(axes[g].t[v])) * axes[g].scale;
      w.array() *= axes[g].e.col(static_cast<Eigen::Index>(v)).array();
    }
    Partial& part = partial[combo];
    if (prefix_p < options.truncation) {
      const double log_mu = std::log(prefix_p) + prefix_log_scale + log_tail_max + std::log(w.dot(tail_scaled));
      if (!(log_mu >= log_trunc)) return;
    }
    if (ng == 1) {
      const Eigen::VectorXd r = axes[0].e.transpose() * w;
      for (std::size_t a = 0; a < axes[0].t.size(); ++a) {
        part.prob.push_back(axes[0].pmf[a]);
        part.ratio.push_back(detail::rescale(r[static_cast<Eigen::Index>(a)], std::fabs(static_cast<double>(axes[0].t[a])) * axes[0].scale));
      }
      return;
    }
    const GroupAxis& x = axes[ng - 2];
    const GroupAxis& y = axes[ng - 1];
    const Eigen::MatrixXd r = x.e.transpose() * w.asDiagonal() * y.e;
    for (std::size_t a = 0; a < x.t.size(); ++a) {
      for (std::size_t b = 0; b < y.t.size(); ++b) {
        const double p = prefix_p * x.pmf[a] * y.pmf[b];
        const double log_scale = prefix_log_scale + std::fabs(static_cast<double>(x.t[a])) * x.scale + std::fabs(static_cast<double>(y.t[b])) * y.scale;
        const double ratio = detail::rescale(r(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)), log_scale);
        if (p < options.truncation && p * ratio < options.truncation) continue;
        part.prob.push_back(p);
        part.ratio.push_back(ratio);
      }
    }
  });
  double kept = 0.0, mass = 0.0;
  for (auto& part : partial) {
    for (std::size_t i = 0; i < part.prob.size(); ++i) {
      kept += part.prob[i];
      mass += part.prob[i] * part.ratio[i];
    }
    out.probability.insert(out.probability.end(), part.prob.begin(), part.prob.end());
    out.ratio.insert(out.ratio.end(), part.ratio.begin(), part.ratio.end());
  }
  out.pi_truncated = std::max(0.0, 1.0 - kept);
  out.mu_deficit = 1.0 - mass;
  return out;
}

/// TV(mu_N^(k), uniform) = (1/2) E|L - 1| over the exact lattice law, with
/// the truncation error bar reported as stderr.
inline TVReport exact_tv_via_sufficient_stat(const LikelihoodEvaluator& ev, const LatticeOptions& options = {}) {
  const auto dist = lattice_distribution(ev, options);
  return TVReport::make(0.5 * dist.centered_abs_moment(1.0), TVMethod::exact, dist.error_bar());
}

// ---------------------------------------------------------------------------
// Moments

enum class MomentScheme { automatic, lattice, quadrature_replica, mc_replica };

struct MomentOptions {
  MomentScheme scheme = MomentScheme::automatic;
  std::size_t mc_samples = 100'000;  // replica tuples for the MC scheme
  std::uint64_t seed = 0;
  double prune = 1e-20;              // replica quadrature drops nodes below prune * max mass
  double max_replica_nodes = 5e7;
  std::size_t max_quadrature_dim = 6;  // p * M
  LatticeOptions lattice{};
};

/// E[L^p] = E exp(sum_{i<=k} Theta_p(u^1.xi_i, ..., u^p.xi_i)) over p
/// independent copies u^a ~ Q_N, by the tensor rule on (R^M)^p.
inline MomentReport replica_moment_quadrature(const LikelihoodEvaluator& ev, int p, const MomentOptions& options = {}) {
  if (p < 2) throw std::invalid_argument("replica_moment_quadrature: p must be at least 2");
  const NormalizedMixing& mix = ev.mixing();
  if (static_cast<std::size_t>(p) * mix.spec.dim() > options.max_quadrature_dim)
    throw std::invalid_argument("replica_moment_quadrature: p * M exceeds the quadrature limit");
  const auto prob = mix.node_probabilities();
  const double peak = *std::max_element(prob.begin(), prob.end());
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < prob.size(); ++j)
    if (prob[j] >= options.prune * peak) keep.push_back(j);
  if (std::pow(static_cast<double>(keep.size()), p) > options.max_replica_nodes)
    throw std::invalid_argument("replica_moment_quadrature: replica grid exceeds the node budget");

  const std::size_t ng = ev.group_count();
  const std::size_t nk = keep.size();
  std::vector<double> h(ng * nk), lc(nk, 0.0), mass(nk);
  std::vector<double> counts(ng);
  for (std::size_t g = 0; g < ng; ++g) counts[g] = static_cast<double>(ev.groups().classes[g].count);
  for (std::size_t a = 0; a < nk; ++a) {
    mass[a] = prob[keep[a]];
    for (std::size_t g = 0; g < ng; ++g) {
      const double f = ev.fields()(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(keep[a]));
      h[a * ng + g] = f;
      lc[a] += counts[g] * log_cosh(f);
    }
  }
  std::vector<double> partial(nk, 0.0);
  parallel_for(nk, [&](std::size_t first) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(p), 0);
    idx[0] = first;
    std::vector<double> sum(ng);
    double acc = 0.0;
    for (;;) {
      double w = 1.0, sep = 0.0;
      std::fill(sum.begin(), sum.end(), 0.0);
      for (int r = 0; r < p; ++r) {
        const std::size_t a = idx[static_cast<std::size_t>(r)];
        w *= mass[a];
        sep += lc[a];
        for (std::size_t g = 0; g < ng; ++g) sum[g] += h[a * ng + g];
      }
      double joint = 0.0;
      for (std::size_t g = 0; g < ng; ++g) joint += counts[g] * log_cosh(sum[g]);
      acc += w * std::exp(joint - sep);
      int r = p - 1;
      while (r >= 1 && ++idx[static_cast<std::size_t>(r)] == nk) idx[static_cast<std::size_t>(r--)] = 0;
      if (r < 1) break;
    }
    partial[first] = acc;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return {static_cast<double>(p), total, MomentMethod::quadrature_replica, 0.0};
}

/// Replica moment from consecutive p-tuples of mixing-field samples.
inline MomentReport replica_moment_mc(const MixingMeasureSpec& spec, std::size_t k, int p, const MixingSamples& samples) {
  if (p < 2) throw std::invalid_argument("replica_moment_mc: p must be at least 2");
  const std::size_t tuples = samples.count() / static_cast<std::size_t>(p);
  if (tuples < 2) throw SamplerFailure("replica_moment_mc: not enough samples for two replica tuples");
  const RowClasses rc = classify_rows(spec.model().patterns(), 0, k);
  const std::size_t m = spec.dim();
  double sum = 0.0, sum2 = 0.0;
  std::vector<double> xs(static_cast<std::size_t>(p));
  for (std::size_t t = 0; t < tuples; ++t) {
    double log_v = 0.0;
    for (const auto& c : rc.classes) {
      for (int r = 0; r < p; ++r) {
        const auto u = samples.sample(t * static_cast<std::size_t>(p) + static_cast<std::size_t>(r));
        double f = 0.0;
        for (std::size_t nu = 0; nu < m; ++nu) f += c.row[nu] * u[nu];
        xs[static_cast<std::size_t>(r)] = f;
      }
      log_v += static_cast<double>(c.count) * theta_p(xs);
    }
    const double v = std::exp(log_v);
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(tuples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return {static_cast<double>(p), mean, MomentMethod::mc_replica, std::sqrt(var / (n - 1.0))};
}

namespace detail {

inline bool lattice_feasible(const LikelihoodEvaluator& ev, const LatticeOptions& options) {
  if (ev.group_count() > options.max_groups) return false;
  double points = 1.0;
  for (const auto& c : ev.groups().classes) points *= static_cast<double>(c.count + 1);
  return points <= static_cast<double>(options.max_points);
}

}  // namespace detail

/// E[L^p]. The automatic scheme prefers the exact lattice law, then the
/// replica tensor rule (p * M <= 6 within the node budget), then Monte Carlo.
inline MomentReport pth_moment(const LikelihoodEvaluator& ev, int p, const MomentOptions& options = {}) {
  if (p < 1) throw std::invalid_argument("pth_moment: p must be at least 1");
  if (ev.k() == 0) return {static_cast<double>(p), 1.0, MomentMethod::exact_enumeration, 0.0};
  MomentScheme scheme = options.scheme;
  if (scheme == MomentScheme::automatic) {
    if (detail::lattice_feasible(ev, options.lattice)) {
      scheme = MomentScheme::lattice;
    } else if (p == 1) {
      return {1.0, 1.0, MomentMethod::quadrature_replica, 0.0};
    } else {
      scheme = MomentScheme::mc_replica;
      if (static_cast<std::size_t>(p) * ev.mixing().spec.dim() <= options.max_quadrature_dim) {
        try {
          return replica_moment_quadrature(ev, p, options);
        } catch (const std::invalid_argument&) {
        }
      }
    }
  }
  switch (scheme) {
    case MomentScheme::lattice: {
      const auto dist = lattice_distribution(ev, options.lattice);
      return {static_cast<double>(p), dist.moment(p), MomentMethod::exact_enumeration, dist.error_bar()};
    }
    case MomentScheme::quadrature_replica:
      if (p == 1) return {1.0, 1.0, MomentMethod::quadrature_replica, 0.0};
      return replica_moment_quadrature(ev, p, options);
    case MomentScheme::mc_replica: {
      if (p == 1) return {1.0, 1.0, MomentMethod::mc_replica, 0.0};
      const auto samples = sample_mixing(ev.mixing().spec, options.mc_samples * static_cast<std::size_t>(p), options.seed);
      return replica_moment_mc(ev.mixing().spec, ev.k(), p, samples);
    }
    case MomentScheme::automatic: break;
  }
  throw std::logic_error("pth_moment: unresolved scheme");
}

inline MomentReport second_moment(const LikelihoodEvaluator& ev, const MomentOptions& options = {}) { return pth_moment(ev, 2, options); }

/// E[L^{1+eta}] over the exact lattice law.
inline MomentReport uniform_integrability_check(const LikelihoodEvaluator& ev, double eta = 0.5, const LatticeOptions& options = {}) {
  if (!(eta > 0.0)) throw std::invalid_argument("uniform_integrability_check: eta must be positive");
  const auto dist = lattice_distribution(ev, options);
  return {1.0 + eta, dist.moment(1.0 + eta), MomentMethod::exact_enumeration, dist.error_bar()};
}

/// E_uniform[L^p] for L = 2^k * table, straight from a probability table.
inline double likelihood_moment_from_table(const MarginalTable& table, double p) {
  const double scale = std::ldexp(1.0, static_cast<int>(table.k));
  double s = 0.0;
  for (double v : table.probabilities) s += std::pow(scale * v, p);
  return s / scale;
}

inline double likelihood_abs_moment_from_table(const MarginalTable& table, double p) {
  const double scale = std::ldexp(1.0, static_cast<int>(table.k));
  double s = 0.0;
  for (double v : table.probabilities) s += std::pow(std::fabs(scale * v - 1.0), p);
  return s / scale;
}

// ---------------------------------------------------------------------------
// TV bounds

/// (1/2) kappa^{(p-1)/(p-2)} C_p^{-1/(p-2)}, kappa = E[L^2] - 1, C_p >= E|L-1|^p.
inline double hoelder_lower_bound(double kappa, double c_p, double p = 3.0) {
  if (!(p > 2.0)) throw std::invalid_argument("hoelder_lower_bound: p must exceed 2");
  if (kappa <= 0.0) return 0.0;
  if (!(c_p > 0.0)) throw std::invalid_argument("hoelder_lower_bound: C_p must be positive when kappa > 0");
  return 0.5 * std::pow(kappa, (p - 1.0) / (p - 2.0)) * std::pow(c_p, -1.0 / (p - 2.0));
}

inline double chi2_upper_bound(double second_moment_value) { return 0.5 * std::sqrt(std::max(0.0, second_moment_value - 1.0)); }

/// chi2-upper and hoelder-lower (p = 3). On the exact lattice path C_3 is
/// E|L-1|^3 itself; otherwise the bound |L-1|^3 <= L^3 + 1 (L >= 0) is used.
inline std::vector<TVReport> tv_bounds(const LikelihoodEvaluator& ev, const MomentOptions& options = {}) {
  std::optional<std::uint64_t> seed;
  double m2 = 0.0, c3 = 0.0, se2 = 0.0;
  const bool lattice = options.scheme == MomentScheme::lattice ||
                       (options.scheme == MomentScheme::automatic && detail::lattice_feasible(ev, options.lattice));
  if (ev.k() == 0) {
    m2 = 1.0;
  } else if (lattice) {
    const auto dist = lattice_distribution(ev, options.lattice);
    // centered form avoids the cancellation in E[L^2] - 1 when L is near 1
    m2 = 1.0 + dist.centered_abs_moment(2.0);
    c3 = dist.centered_abs_moment(3.0);
    se2 = dist.error_bar();
  } else {
    const auto r2 = pth_moment(ev, 2, options);
    const auto r3 = pth_moment(ev, 3, options);
    m2 = r2.value;
    c3 = r3.value + 1.0;
    se2 = r2.stderr_;
    if (r2.method == MomentMethod::mc_replica) seed = options.seed;
  }
  const double kappa = m2 - 1.0;
  const double upper = chi2_upper_bound(m2);
  const double upper_se = kappa > 0.0 ? 0.25 * se2 / std::sqrt(kappa) : 0.0;
  const double lower = kappa > 0.0 && c3 > 0.0 ? hoelder_lower_bound(kappa, c3) : 0.0;
  return {TVReport::make(upper, TVMethod::chi2_upper, upper_se, seed), TVReport::make(lower, TVMethod::hoelder_lower, 0.0, seed)};
}

// ---------------------------------------------------------------------------
// Gaussian proxy

/// Gaussian limit object: lambda = tau^2 k / N with tau^2 = beta / (1 - beta).
struct GaussianProxy {
  double lambda = 0.0;
  std::size_t patterns = 1;

  static GaussianProxy from_model(double beta, std::size_t n, std::size_t k, std::size_t m) {
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("GaussianProxy: beta must lie in (0, 1)");
    const double tau2 = beta / (1.0 - beta);
    return {tau2 * static_cast<double>(k) / static_cast<double>(n), m};
  }
};

/// (1 + lambda)^{-M/2} exp(lambda ||S||^2 / (2 (1 + lambda))).
inline double gaussian_proxy_likelihood(const GaussianProxy& proxy, double s_norm_sq) {
  if (!(proxy.lambda >= 0.0) || !std::isfinite(proxy.lambda)) throw std::invalid_argument("gaussian_proxy_likelihood: lambda must be finite and >= 0");
  if (proxy.lambda == 0.0) return 1.0;
  const double l = proxy.lambda;
  return std::exp(-0.5 * static_cast<double>(proxy.patterns) * std::log1p(l) + 0.5 * l * s_norm_sq / (1.0 + l));
}

/// TV(N(0, I_M), N(0, (1 + lambda) I_M)) through the crossing radius
/// r*^2 = M (1 + lambda) log(1 + lambda) / lambda.
inline TVReport gaussian_tv(std::size_t m, double lambda) {
  if (m < 1) throw std::invalid_argument("gaussian_tv: M must be at least 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("gaussian_tv: lambda must be finite and >= 0");
  if (lambda == 0.0) return TVReport::make(0.0, TVMethod::gaussian_limit);
  const double md = static_cast<double>(m);
  const double r2 = md * (1.0 + lambda) * std::log1p(lambda) / lambda;
  const double wide = boost::math::gamma_q(0.5 * md, 0.5 * r2 / (1.0 + lambda));
  const double narrow = boost::math::gamma_q(0.5 * md, 0.5 * r2);
  return TVReport::make(wide - narrow, TVMethod::gaussian_limit);
}

// ---------------------------------------------------------------------------
// Diagnostics

struct MeanEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct TaylorRemainderReport {
  MeanEstimate delta_k;  // E|sum_{i<=k} R(u.xi_i)|
  MeanEstimate delta_n;  // E|sum_{i<=N} R(u.xi_i)|
  MeanEstimate b_n;      // E|sum_{i<=k} (Psi(u.xi_i, u'.xi_i) - (u.xi_i)(u'.xi_i))|
  double predicted_k_scale = 0.0;  // k M^2 / N^2
  double predicted_n_scale = 0.0;  // M^2 / N
};

/// Monte Carlo size of the quadratic-approximation remainders, with
/// R(t) = log cosh t - t^2/2. Consecutive sample pairs feed b_n.
inline TaylorRemainderReport taylor_remainder_diagnostic(const MixingMeasureSpec& spec, std::size_t k, const MixingSamples& samples) {
  if (k < 1 || k > spec.sites()) throw std::invalid_argument("taylor_remainder_diagnostic: k must lie in [1, N]");
  if (samples.count() < 4) throw SamplerFailure("taylor_remainder_diagnostic: need at least four samples");
  const RowClasses rk = classify_rows(spec.model().patterns(), 0, k);
  const RowClasses& rn = spec.classes();
  const std::size_t m = spec.dim();
  auto dot = [m](const std::vector<int>& row, std::span<const double> u) {
    double f = 0.0;
    for (std::size_t nu = 0; nu < m; ++nu) f += row[nu] * u[nu];
    return f;
  };
  struct Acc {
    double s = 0, s2 = 0;
    std::size_t n = 0;
    void add(double v) { s += v, s2 += v * v, ++n; }
    MeanEstimate get() const {
      const double mean = s / static_cast<double>(n);
      const double var = std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
      return {mean, n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0};
    }
  } dk, dn, bn;
  for (std::size_t s = 0; s < samples.count(); ++s) {
    const auto u = samples.sample(s);
    double a = 0.0, b = 0.0;
    for (const auto& c : rk.classes) a += static_cast<double>(c.count) * log_cosh_remainder(dot(c.row, u));
    for (const auto& c : rn.classes) b += static_cast<double>(c.count) * log_cosh_remainder(dot(c.row, u));
    dk.add(std::fabs(a));
    dn.add(std::fabs(b));
  }
  for (std::size_t s = 0; s + 1 < samples.count(); s += 2) {
    const auto u = samples.sample(s), v = samples.sample(s + 1);
    double acc = 0.0;
    for (const auto& c : rk.classes) {
      const double x = dot(c.row, u), y = dot(c.row, v);
      acc += static_cast<double>(c.count) * (psi(x, y) - x * y);
    }
    bn.add(std::fabs(acc));
  }
  const double n = static_cast<double>(spec.sites());
  const double md = static_cast<double>(m);
  return {dk.get(), dn.get(), bn.get(), static_cast<double>(k) * md * md / (n * n), md * md / n};
}

struct InequalityCheck {
  std::string name;
  std::size_t points = 0;
  std::size_t violations = 0;
  double max_excess = -std::numeric_limits<double>::infinity();
};

struct InequalityReport {
  std::vector<InequalityCheck> checks;
  double psi_taylor_constant = 0.0;  // fitted C in |Psi - xy| <= C (x^2 y^2 + x^4 + y^4) on [-1,1]^2

  bool passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const InequalityCheck& c) { return c.violations == 0; });
  }
};

/// Dense-grid checks of the scalar facts the bounds rest on; violations are
/// counted beyond `tolerance`, never thrown.
inline InequalityReport scalar_inequality_suite(double tolerance = 1e-12) {
  InequalityReport report;
  report.checks.reserve(11);  // references below must stay valid
  auto check = [&](std::string name) -> InequalityCheck& {
    report.checks.push_back({std::move(name)});
    return report.checks.back();
  };
  auto record = [&](InequalityCheck& c, double excess) {
    ++c.points;
    c.max_excess = std::max(c.max_excess, excess);
    if (excess > tolerance) ++c.violations;
  };

  auto& kl_form = check("kl_closed_form");
  auto& tanh_ineq = check("kl_le_2tanh2");
  auto& kl_quad = check("kl_le_2h2");
  for (int i = -20000; i <= 20000; ++i) {
    const double h = i * 1e-3;  // [-20, 20]
    const double kl = tilted_kl(h);
    if (std::fabs(h) <= 10.0) {
      const double p_plus = 1.0 / (1.0 + std::exp(-2.0 * h));
      const double p_minus = 1.0 / (1.0 + std::exp(2.0 * h));
      double direct = 0.0;
      if (p_plus > 0.0) direct += p_plus * std::log(2.0 * p_plus);
      if (p_minus > 0.0) direct += p_minus * std::log(2.0 * p_minus);
      record(kl_form, std::fabs(kl - direct));
    }
    const double th = std::tanh(h);
    record(tanh_ineq, kl - 2.0 * th * th);
    record(kl_quad, kl - 2.0 * h * h);
  }

  auto& lc = check("logcosh_le_half_square");
  for (int i = -200000; i <= 200000; ++i) {
    const double x = i * 1e-4;
    record(lc, log_cosh(x) - 0.5 * x * x);
  }

  auto& psi_id = check("psi_identity");
  auto& psi_sym = check("psi_symmetry");
  auto& theta2 = check("theta2_equals_psi");
  for (int i = -300; i <= 300; ++i) {
    for (int j = -300; j <= 300; ++j) {
      const double x = i * 0.05, y = j * 0.05;  // [-15, 15]^2
      const double direct = log_cosh(x + y) - log_cosh(x) - log_cosh(y);
      const double p = psi(x, y);
      record(psi_id, std::fabs(direct - p));
      record(psi_sym, std::fabs(p - psi(y, x)));
      const double xs[2] = {x, y};
      record(theta2, std::fabs(theta_p(xs) - p));
    }
  }

  // The signed pair-sum bound is recorded as stated; it fails whenever the
  // pair sum is negative, e.g. (1, 1, -2). The next two checks are the forms
  // that do hold.
  auto& theta_pair = check("theta3_le_pair_sum");
  auto& theta_abs = check("theta3_le_abs_pair_sum");
  auto& theta_nonneg = check("theta3_le_pair_sum_when_nonnegative");
  auto& theta_sq = check("theta3_le_half_p_minus_1_square_sum");
  auto theta3 = [&](const double (&xs)[3]) {
    const double t = theta_p(xs);
    const double pairs = xs[0] * xs[1] + xs[0] * xs[2] + xs[1] * xs[2];
    const double abs_pairs = std::fabs(xs[0] * xs[1]) + std::fabs(xs[0] * xs[2]) + std::fabs(xs[1] * xs[2]);
    const double squares = xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2];
    record(theta_pair, t - pairs);
    record(theta_abs, t - abs_pairs);
    if (pairs >= 0.0) record(theta_nonneg, t - pairs);
    record(theta_sq, std::max(t, pairs) - squares);
  };
  for (int a = -20; a <= 20; ++a)
    for (int b = -20; b <= 20; ++b)
      for (int c = -20; c <= 20; ++c) theta3({a * 0.1, b * 0.1, c * 0.1});  // [-2, 2]^3
  CounterRng rng(derive_seed(0x7e7a, 3));
  for (int s = 0; s < 100000; ++s) theta3({4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0});

  double c_fit = 0.0;
  for (int i = -200; i <= 200; ++i)
    for (int j = -200; j <= 200; ++j) {
      const double x = i * 0.005, y = j * 0.005;
      const double denom = x * x * y * y + x * x * x * x + y * y * y * y;
      if (denom == 0.0) continue;
      c_fit = std::max(c_fit, std::fabs(psi(x, y) - x * y) / denom);
    }
  report.psi_taylor_constant = c_fit;
  return report;
}

// ---------------------------------------------------------------------------
// CSV

struct ReportContext {
  double beta = 0.0;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

inline void write_report_csv_header(std::ostream& out) { out << "beta,N,M,k,seed,method,value,stderr,raw_value\n"; }

inline void write_report_csv_row(std::ostream& out, const ReportContext& ctx, const TVReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%zu,%zu,%zu,%llu,%s,%.17g,%.17g,%.17g\n", ctx.beta, ctx.n, ctx.m, ctx.k,
                static_cast<unsigned long long>(ctx.seed), std::string(to_string(r.method)).c_str(), r.value, r.stderr_, r.raw_value);
  out << buf;
}

inline void write_report_csv_row(std::ostream& out, const ReportContext& ctx, const MomentReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%zu,%zu,%zu,%llu,%s:p=%g,%.17g,%.17g,%.17g\n", ctx.beta, ctx.n, ctx.m, ctx.k,
                static_cast<unsigned long long>(ctx.seed), std::string(to_string(r.method)).c_str(), r.order, r.value, r.stderr_,
                r.value);
  out << buf;
}

}  // namespace hopchaos
