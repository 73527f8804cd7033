#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hopchaos/disorder.hpp"
#include "hopchaos/gibbs_exact.hpp"
#include "hopchaos/parallel.hpp"
#include "hopchaos/report.hpp"
#include "hopchaos/rng.hpp"
#include "hopchaos/scalar.hpp"

namespace hopchaos {

// standard: exp(-N|u|^2/(2 beta)) prod_i 2 cosh(u.xi_i)
// critical: exp(-N|u|^2/2) prod_i cosh(u.xi_i), beta fixed to 1
enum class MixingVariant { standard, critical };

class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SamplerFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unnormalized density of the mixing field u in R^M. Sites enter only
/// through their row class (see RowClasses), so evaluation costs
/// O(#classes * M) independent of N.
class MixingMeasureSpec {
 public:
  explicit MixingMeasureSpec(GibbsModel model, MixingVariant variant = MixingVariant::standard)
      : model_(std::move(model)), variant_(variant) {
    if (!(model_.beta() > 0.0)) throw std::invalid_argument("MixingMeasureSpec: beta must be positive");
    if (variant_ == MixingVariant::critical && model_.beta() != 1.0)
      throw std::invalid_argument("MixingMeasureSpec: the critical variant requires beta = 1");
    classes_ = classify_rows(model_.patterns(), 0, model_.sites());
    const std::size_t m = dim();
    rows_.resize(static_cast<Eigen::Index>(classes_.size()), static_cast<Eigen::Index>(m));
    counts_.resize(static_cast<Eigen::Index>(classes_.size()));
    for (std::size_t g = 0; g < classes_.size(); ++g) {
      for (std::size_t nu = 0; nu < m; ++nu) rows_(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(nu)) = classes_.classes[g].row[nu];
      counts_[static_cast<Eigen::Index>(g)] = static_cast<double>(classes_.classes[g].count);
    }
  }

  const GibbsModel& model() const noexcept { return model_; }
  MixingVariant variant() const noexcept { return variant_; }
  double beta() const noexcept { return model_.beta(); }
  std::size_t dim() const noexcept { return model_.pattern_count(); }
  std::size_t sites() const noexcept { return model_.sites(); }
  const RowClasses& classes() const noexcept { return classes_; }
  const Eigen::MatrixXd& class_rows() const noexcept { return rows_; }
  const Eigen::VectorXd& class_counts() const noexcept { return counts_; }

  /// sum_i log cosh(u.xi_i)
  double sum_log_cosh(std::span<const double> u) const {
    double total = 0.0;
    const std::size_t m = dim();
    for (Eigen::Index g = 0; g < rows_.rows(); ++g) {
      double h = 0.0;
      for (std::size_t nu = 0; nu < m; ++nu) h += rows_(g, static_cast<Eigen::Index>(nu)) * u[nu];
      total += counts_[g] * log_cosh(h);
    }
    return total;
  }

  double log_unnormalized_density(std::span<const double> u) const {
    if (u.size() != dim()) throw std::invalid_argument("log_unnormalized_density: u has wrong dimension");
    double norm2 = 0.0;
    for (double v : u) norm2 += v * v;
    const double n = static_cast<double>(sites());
    double out = -0.5 * n * norm2 / beta() + sum_log_cosh(u);
    if (variant_ == MixingVariant::standard) out += n * std::numbers::ln2;
    return out;
  }

  double log_unnormalized_density(const Eigen::VectorXd& u) const {
    return log_unnormalized_density(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())));
  }

 private:
  GibbsModel model_;
  MixingVariant variant_;
  RowClasses classes_;
  Eigen::MatrixXd rows_;
  Eigen::VectorXd counts_;
};

/// Equispaced tensor grid on a box. For integrands that are analytic and
/// decay like a Gaussian the trapezoid rule converges geometrically and the
/// grids nest under points -> 2 points - 1.
struct TensorRule {
  std::size_t dim = 0;
  std::size_t points = 0;
  std::vector<double> half_width;
  std::vector<double> nodes;        // size() * dim, row-major
  std::vector<double> log_weights;  // log density + log cell volume

  std::size_t size() const noexcept { return log_weights.size(); }
  std::span<const double> node(std::size_t j) const { return {nodes.data() + j * dim, dim}; }
};

struct QuadratureOptions {
  double cutoff = 80.0;  // nats below the peak that the box must enclose
  double tolerance = 1e-11;
  std::size_t initial_points = 33;
  int max_levels = 5;
  std::size_t max_nodes = 4'500'000;
  std::size_t max_dim = 3;
};

struct QuadratureStep {
  int level = 0;
  std::size_t points = 0;
  double log_norm = 0.0;
  double delta = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

template <class F>
void for_each_grid_node(std::size_t dim, std::size_t points, std::span<const double> half_width, F&& f) {
  std::vector<std::size_t> idx(dim, 0);
  std::vector<double> u(dim);
  std::size_t total = 1;
  for (std::size_t d = 0; d < dim; ++d) total *= points;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t d = dim; d-- > 0;) {
      idx[d] = rem % points;
      rem /= points;
      u[d] = -half_width[d] + 2.0 * half_width[d] * static_cast<double>(idx[d]) / static_cast<double>(points - 1);
    }
    f(flat, std::span<const double>(u));
  }
}

inline double initial_scale(const MixingMeasureSpec& spec) {
  const double n = static_cast<double>(spec.sites());
  const double beta = spec.beta();
  const double quartic = std::pow(12.0 / n, 0.25);
  const double gauss = beta < 1.0 ? std::sqrt(beta / (n * (1.0 - beta))) : std::numeric_limits<double>::infinity();
  return std::min(gauss, quartic);
}

}  // namespace detail

/// Symmetric box [-h_d, h_d] enclosing every point whose log density is within
/// `cutoff` of the peak, found on coarse grids with doubling / shrinking.
inline std::vector<double> find_integration_box(const MixingMeasureSpec& spec, double cutoff) {
  const std::size_t m = spec.dim();
  std::vector<double> h(m, 12.0 * detail::initial_scale(spec));
  constexpr std::size_t coarse = 25;
  for (int iter = 0; iter < 80; ++iter) {
    std::vector<double> logq;
    std::vector<double> nodes;
    detail::for_each_grid_node(m, coarse, h, [&](std::size_t, std::span<const double> u) {
      logq.push_back(spec.log_unnormalized_density(u));
      nodes.insert(nodes.end(), u.begin(), u.end());
    });
    const double peak = *std::max_element(logq.begin(), logq.end());
    std::vector<double> extent(m, 0.0);
    for (std::size_t j = 0; j < logq.size(); ++j)
      if (logq[j] >= peak - cutoff)
        for (std::size_t d = 0; d < m; ++d) extent[d] = std::max(extent[d], std::fabs(nodes[j * m + d]));
    bool changed = false;
    for (std::size_t d = 0; d < m; ++d) {
      const double cell = 2.0 * h[d] / (coarse - 1);
      if (extent[d] >= h[d] - 1.5 * cell) {
        h[d] *= 2.0;
        changed = true;
      } else if (extent[d] < 4.0 * cell) {
        h[d] /= 4.0;
        changed = true;
      }
    }
    if (!changed) {
      for (std::size_t d = 0; d < m; ++d) h[d] = std::min(h[d], extent[d] + 2.0 * (2.0 * h[d] / (coarse - 1)));
      return h;
    }
  }
  throw NonConvergence("find_integration_box: could not bracket the mixing density");
}

inline TensorRule build_rule(const MixingMeasureSpec& spec, std::span<const double> half_width, std::size_t points) {
  TensorRule rule;
  rule.dim = spec.dim();
  rule.points = points;
  rule.half_width.assign(half_width.begin(), half_width.end());
  std::size_t total = 1;
  double log_cell = 0.0;
  for (std::size_t d = 0; d < rule.dim; ++d) {
    total *= points;
    log_cell += std::log(2.0 * half_width[d] / static_cast<double>(points - 1));
  }
  rule.nodes.resize(total * rule.dim);
  rule.log_weights.resize(total);
  detail::for_each_grid_node(rule.dim, points, half_width, [&](std::size_t j, std::span<const double> u) {
    std::copy(u.begin(), u.end(), rule.nodes.begin() + static_cast<std::ptrdiff_t>(j * rule.dim));
  });
  constexpr std::size_t block = 4096;
  parallel_for((total + block - 1) / block, [&](std::size_t b) {
    const std::size_t end = std::min(total, (b + 1) * block);
    for (std::size_t j = b * block; j < end; ++j) rule.log_weights[j] = spec.log_unnormalized_density(rule.node(j)) + log_cell;
  });
  return rule;
}

/// A mixing measure together with its quadrature rule and log normalization.
/// Immutable once built; share through shared_ptr.
struct NormalizedMixing {
  MixingMeasureSpec spec;
  TensorRule rule;
  double log_normalization = 0.0;
  std::vector<QuadratureStep> trace;

  /// Normalized node masses exp(log_weight - log_normalization).
  std::vector<double> node_probabilities() const {
    std::vector<double> p(rule.size());
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::exp(rule.log_weights[j] - log_normalization);
    return p;
  }
};

/// log of the normalizing constant by adaptive tensor quadrature (M <= 3).
/// The resolution doubles until successive estimates agree to `tolerance`.
inline std::shared_ptr<const NormalizedMixing> normalize(const MixingMeasureSpec& spec, const QuadratureOptions& options = {}) {
  const std::size_t m = spec.dim();
  if (m > options.max_dim)
    throw std::invalid_argument("normalize: tensor quadrature supports M <= " + std::to_string(options.max_dim) +
                                "; use the importance-mc scheme");
  const auto box = find_integration_box(spec, options.cutoff);
  std::vector<QuadratureStep> trace;
  std::size_t points = options.initial_points;
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int level = 0; level <= options.max_levels; ++level) {
    std::size_t total = 1;
    for (std::size_t d = 0; d < m; ++d) total *= points;
    if (total > options.max_nodes) break;
    TensorRule rule = build_rule(spec, box, points);
    const double log_norm = log_sum_exp(rule.log_weights);
    QuadratureStep step{level, points, log_norm, std::numeric_limits<double>::quiet_NaN()};
    if (level > 0) step.delta = std::fabs(log_norm - previous);
    trace.push_back(step);
    if (level > 0 && step.delta < options.tolerance)
      return std::make_shared<const NormalizedMixing>(NormalizedMixing{spec, std::move(rule), log_norm, std::move(trace)});
    previous = log_norm;
    points = 2 * points - 1;
  }
  throw NonConvergence("normalize: quadrature did not reach tolerance before the node budget");
}

/// log Z_N recovered from the mixture normalization via
/// Z_N = (N / (2 pi beta))^{M/2} * normalization (standard variant).
inline double log_partition_from_mixture(const NormalizedMixing& mix) {
  const double n = static_cast<double>(mix.spec.sites());
  const double m = static_cast<double>(mix.spec.dim());
  double log_norm = mix.log_normalization;
  if (mix.spec.variant() == MixingVariant::critical) log_norm += n * std::numbers::ln2;
  return 0.5 * m * std::log(n / (2.0 * std::numbers::pi * mix.spec.beta())) + log_norm;
}

inline void write_quadrature_trace_csv(std::ostream& out, std::span<const QuadratureStep> trace) {
  out << "level,log_norm,delta\n";
  char buf[128];
  for (const auto& s : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", s.level, s.log_norm, s.delta);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Gaussian domination

/// On ||Sigma_hat_N||_op <= 1 + epsilon the unnormalized density is bounded by
/// 2^N exp(-alpha N |u|^2), alpha = (1/beta - (1 + epsilon)) / 2. log_c0 is
/// log(Z_G / Z_Q): envelope mass over mixing mass.
struct DominationEnvelope {
  double epsilon = 0.0;
  double alpha = 0.0;
  double log_c0 = std::numeric_limits<double>::quiet_NaN();
};

inline DominationEnvelope domination_envelope(const MixingMeasureSpec& spec, double epsilon,
                                              double log_normalization = std::numeric_limits<double>::quiet_NaN()) {
  if (spec.variant() != MixingVariant::standard)
    throw std::invalid_argument("domination_envelope: only defined for the standard variant with beta < 1");
  const double alpha = 0.5 * (1.0 / spec.beta() - (1.0 + epsilon));
  if (!(epsilon > 0.0) || !(alpha > 0.0))
    throw std::invalid_argument("domination_envelope: requires epsilon > 0 and beta (1 + epsilon) < 1");
  const double n = static_cast<double>(spec.sites());
  const double m = static_cast<double>(spec.dim());
  const double log_envelope_mass = n * std::numbers::ln2 + 0.5 * m * std::log(std::numbers::pi / (alpha * n));
  return {epsilon, alpha, log_envelope_mass - log_normalization};
}

/// Envelope chosen from the measured top eigenvalue of Sigma_hat_N: the
/// smallest admissible epsilon plus a tenth of the remaining gap to 1/beta.
inline DominationEnvelope auto_envelope(const MixingMeasureSpec& spec,
                                        double log_normalization = std::numeric_limits<double>::quiet_NaN()) {
  const auto cov = empirical_covariance(spec.model().patterns(), spec.sites());
  const double gap = 1.0 / spec.beta() - cov.lambda_max;
  if (!(gap > 0.0)) throw std::invalid_argument("auto_envelope: beta * lambda_max >= 1, no Gaussian envelope exists");
  const double epsilon = std::max(cov.lambda_max - 1.0, 0.0) + 0.1 * gap;
  return domination_envelope(spec, epsilon, log_normalization);
}

inline double log_envelope_kernel(const MixingMeasureSpec& spec, const DominationEnvelope& env, std::span<const double> u) {
  double norm2 = 0.0;
  for (double v : u) norm2 += v * v;
  const double n = static_cast<double>(spec.sites());
  return n * std::numbers::ln2 - env.alpha * n * norm2;
}

struct DominationAudit {
  bool holds = true;
  double max_excess = -std::numeric_limits<double>::infinity();
  std::size_t points = 0;
  std::size_t violations = 0;
};

/// Checks log q(u) <= N log 2 - alpha N |u|^2 on every point (flat, dim-major).
/// Violations are reported, not thrown: they falsify the disorder event.
inline DominationAudit domination_audit(const MixingMeasureSpec& spec, const DominationEnvelope& env,
                                        std::span<const double> points, double tolerance = 1e-9) {
  const std::size_t m = spec.dim();
  if (points.size() % m != 0) throw std::invalid_argument("domination_audit: point buffer not a multiple of M");
  DominationAudit audit;
  for (std::size_t j = 0; j * m < points.size(); ++j) {
    const auto u = points.subspan(j * m, m);
    const double excess = spec.log_unnormalized_density(u) - log_envelope_kernel(spec, env, u);
    audit.max_excess = std::max(audit.max_excess, excess);
    if (excess > tolerance) {
      audit.holds = false;
      ++audit.violations;
    }
    ++audit.points;
  }
  return audit;
}

/// Equispaced audit grid on [-radius, radius]^dim.
inline std::vector<double> audit_grid(std::size_t dim, double radius, std::size_t points_per_dim) {
  std::vector<double> out;
  std::vector<double> h(dim, radius);
  detail::for_each_grid_node(dim, points_per_dim, h, [&](std::size_t, std::span<const double> u) { out.insert(out.end(), u.begin(), u.end()); });
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

struct SamplerTraceRow {
  std::size_t index = 0;
  std::vector<double> u;
  bool accepted = false;
};

struct MixingSamples {
  std::size_t dim = 0;
  std::vector<double> values;  // count() * dim
  std::string method;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  double acceptance_rate = 0.0;
  double autocorrelation_time = 1.0;  // in units of retained samples' source steps
  std::size_t thinning = 1;
  std::size_t burn_in = 0;
  std::vector<SamplerTraceRow> trace;

  std::size_t count() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> sample(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

struct SamplerOptions {
  double acceptance_floor = 1e-3;
  bool record_trace = false;
  std::size_t burn_in = 1000;
  std::size_t thinning = 0;   // 0: from the estimated autocorrelation time
  double step_scale = 0.0;    // 0: default scale
  std::size_t pilot_steps = 4000;
};

/// Integrated autocorrelation time with Sokal's adaptive window (c = 5).
inline double integrated_autocorrelation_time(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 4) return 1.0;
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (var <= 0.0) return 1.0;
  double tau = 1.0;
  for (std::size_t lag = 1; lag < n / 2; ++lag) {
    double c = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) c += (series[t] - mean) * (series[t + lag] - mean);
    c /= static_cast<double>(n - lag) * var;
    tau += 2.0 * c;
    if (static_cast<double>(lag) >= 5.0 * tau) break;
  }
  return std::max(tau, 1.0);
}

/// Exact samples from Q_N by rejection from gamma_alpha = N(0, (2 alpha N)^{-1} I).
/// Throws if the envelope is violated at a proposal (the disorder event fails)
/// or the acceptance rate falls below the floor.
inline MixingSamples sample_rejection(const MixingMeasureSpec& spec, const DominationEnvelope& env, std::size_t count,
                                      std::uint64_t seed, const SamplerOptions& options = {}) {
  const std::size_t m = spec.dim();
  const double n = static_cast<double>(spec.sites());
  const double sd = 1.0 / std::sqrt(2.0 * env.alpha * n);
  CounterRng rng(derive_seed(seed, 0x52454a));
  MixingSamples out;
  out.dim = m;
  out.method = "rejection";
  std::vector<double> u(m);
  while (out.count() < count) {
    for (double& v : u) v = sd * rng.normal();
    const double log_ratio = spec.log_unnormalized_density(u) - log_envelope_kernel(spec, env, u);
    if (log_ratio > 1e-9) throw SamplerFailure("sample_rejection: envelope violated; the covariance event does not hold");
    ++out.proposals;
    const bool accept = std::log(rng.open_uniform()) < log_ratio;
    if (accept) {
      ++out.accepted;
      out.values.insert(out.values.end(), u.begin(), u.end());
    }
    if (options.record_trace) out.trace.push_back({out.proposals - 1, u, accept});
    if (out.proposals % 10000 == 0 &&
        static_cast<double>(out.accepted) < options.acceptance_floor * static_cast<double>(out.proposals))
      throw SamplerFailure("sample_rejection: acceptance rate " +
                           std::to_string(static_cast<double>(out.accepted) / static_cast<double>(out.proposals)) +
                           " below floor");
  }
  out.acceptance_rate = static_cast<double>(out.accepted) / static_cast<double>(out.proposals);
  return out;
}

/// Random-walk Metropolis with Gaussian steps of size ~ N^{-1/4} (the
/// critical fluctuation scale). Burn-in, then thinning by the integrated
/// autocorrelation time of |u|^2 measured on a pilot run.
inline MixingSamples sample_metropolis(const MixingMeasureSpec& spec, std::size_t count, std::uint64_t seed,
                                       const SamplerOptions& options = {}) {
  const std::size_t m = spec.dim();
  const double n = static_cast<double>(spec.sites());
  double step = options.step_scale;
  if (step <= 0.0) {
    step = 1.4 / std::sqrt(static_cast<double>(m)) * std::pow(12.0 / n, 0.25);
    if (spec.beta() < 1.0)
      step = std::min(step, 2.4 / std::sqrt(static_cast<double>(m)) * std::sqrt(spec.beta() / (n * (1.0 - spec.beta()))));
  }
  CounterRng rng(derive_seed(seed, 0x4d4554));
  std::vector<double> u(m, 0.0), proposal(m);
  double logq = spec.log_unnormalized_density(u);
  std::size_t proposals = 0, accepted = 0;
  auto advance = [&] {
    for (std::size_t d = 0; d < m; ++d) proposal[d] = u[d] + step * rng.normal();
    const double lp = spec.log_unnormalized_density(proposal);
    ++proposals;
    const bool accept = std::log(rng.open_uniform()) < lp - logq;
    if (accept) {
      u.swap(proposal);
      logq = lp;
      ++accepted;
    }
    return accept;
  };
  for (std::size_t t = 0; t < options.burn_in; ++t) advance();

  MixingSamples out;
  out.dim = m;
  out.method = "metropolis";
  out.burn_in = options.burn_in;
  std::vector<double> pilot;
  pilot.reserve(options.pilot_steps);
  for (std::size_t t = 0; t < options.pilot_steps; ++t) {
    advance();
    double r2 = 0.0;
    for (double v : u) r2 += v * v;
    pilot.push_back(r2);
  }
  out.autocorrelation_time = integrated_autocorrelation_time(pilot);
  out.thinning = options.thinning > 0 ? options.thinning : static_cast<std::size_t>(std::ceil(out.autocorrelation_time));
  std::size_t index = 0;
  while (out.count() < count) {
    bool last = false;
    for (std::size_t t = 0; t < out.thinning; ++t) last = advance();
    out.values.insert(out.values.end(), u.begin(), u.end());
    if (options.record_trace) out.trace.push_back({index, u, last});
    ++index;
  }
  out.proposals = proposals;
  out.accepted = accepted;
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(proposals);
  if (out.acceptance_rate < options.acceptance_floor)
    throw SamplerFailure("sample_metropolis: acceptance rate " + std::to_string(out.acceptance_rate) + " below floor");
  return out;
}

/// Rejection sampling whenever a Gaussian envelope exists (standard variant,
/// beta * lambda_max(Sigma_hat_N) < 1); Metropolis otherwise.
inline MixingSamples sample_mixing(const MixingMeasureSpec& spec, std::size_t count, std::uint64_t seed,
                                   const SamplerOptions& options = {}) {
  if (spec.variant() == MixingVariant::standard && spec.beta() < 1.0) {
    const auto cov = empirical_covariance(spec.model().patterns(), spec.sites());
    if (spec.beta() * cov.lambda_max < 1.0) return sample_rejection(spec, auto_envelope(spec), count, seed, options);
  }
  return sample_metropolis(spec, count, seed, options);
}

/// CSV "sample_index,u_1..u_M,accepted". Uses the recorded trace when present,
/// otherwise one row per retained sample.
inline void write_sampler_csv(std::ostream& out, const MixingSamples& samples) {
  out << "sample_index";
  for (std::size_t d = 0; d < samples.dim; ++d) out << ",u_" << d + 1;
  out << ",accepted\n";
  char buf[64];
  auto row = [&](std::size_t idx, std::span<const double> u, bool acc) {
    out << idx;
    for (double v : u) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << ',' << (acc ? 1 : 0) << '\n';
  };
  if (!samples.trace.empty()) {
    for (const auto& r : samples.trace) row(r.index, r.u, r.accepted);
  } else {
    for (std::size_t i = 0; i < samples.count(); ++i) row(i, samples.sample(i), true);
  }
}

// ---------------------------------------------------------------------------
// Importance-sampling normalization (any M)

/// Quartic profile of the log density along the coordinate axes in the
/// critical scaling x = N^{1/4} u: log q(0) - log q(x e_d / N^{1/4}) ~ c1 x^4 - c2 x^2.
struct QuarticProfile {
  double c1 = 0.0;
  double c2 = 0.0;
};

inline QuarticProfile fit_quartic_profile(const MixingMeasureSpec& spec) {
  const std::size_t m = spec.dim();
  const double n4 = std::pow(static_cast<double>(spec.sites()), 0.25);
  const std::vector<double> zero(m, 0.0);
  const double f0 = spec.log_unnormalized_density(zero);
  // least squares of drop = c1 x^4 - c2 x^2 over points with drop in [0.5, 30]
  double s44 = 0, s42 = 0, s22 = 0, sy4 = 0, sy2 = 0;
  std::vector<double> u(m, 0.0);
  for (std::size_t d = 0; d < m; ++d) {
    for (double x = 0.05; x < 50.0; x *= 1.08) {
      std::fill(u.begin(), u.end(), 0.0);
      u[d] = x / n4;
      const double drop = f0 - spec.log_unnormalized_density(u);
      if (drop > 30.0) break;
      if (drop < 0.5) continue;
      const double x2 = x * x, x4 = x2 * x2;
      s44 += x4 * x4;
      s42 += x4 * x2;
      s22 += x2 * x2;
      sy4 += drop * x4;
      sy2 += drop * x2;
    }
  }
  const double det = s44 * s22 - s42 * s42;
  QuarticProfile p;
  if (std::fabs(det) > 0.0) {
    p.c1 = (sy4 * s22 - sy2 * s42) / det;
    p.c2 = -(s44 * sy2 - s42 * sy4) / det;
  }
  return p;
}

struct McNormalization {
  double log_normalization = 0.0;
  double stderr_ = 0.0;  // standard error of the log estimate (delta method)
  std::size_t samples = 0;
  std::string proposal;
  double proposal_scale = 0.0;
};

/// Importance estimate of log normalization. Proposal: gamma_alpha when a
/// Gaussian envelope exists, otherwise a radial law with density
/// proportional to exp(-c |u|^4), c fitted to the axis profile and halved so
/// that proposal tails dominate.
inline McNormalization normalize_importance(const MixingMeasureSpec& spec, std::size_t count, std::uint64_t seed) {
  if (count < 2) throw std::invalid_argument("normalize_importance: need at least two samples");
  const std::size_t m = spec.dim();
  const double md = static_cast<double>(m);
  const double n = static_cast<double>(spec.sites());
  CounterRng rng(derive_seed(seed, 0x494d50));
  McNormalization out;
  out.samples = count;

  bool gaussian = false;
  double alpha = 0.0;
  if (spec.variant() == MixingVariant::standard && spec.beta() < 1.0) {
    const auto cov = empirical_covariance(spec.model().patterns(), spec.sites());
    if (spec.beta() * cov.lambda_max < 1.0) {
      gaussian = true;
      alpha = auto_envelope(spec).alpha;
    }
  }
  std::vector<double> log_w(count);
  std::vector<double> u(m);
  if (gaussian) {
    out.proposal = "gaussian";
    const double sd = 1.0 / std::sqrt(2.0 * alpha * n);
    out.proposal_scale = sd;
    const double log_norm_const = -0.5 * md * std::log(2.0 * std::numbers::pi * sd * sd);
    for (std::size_t s = 0; s < count; ++s) {
      double r2 = 0.0;
      for (double& v : u) {
        v = sd * rng.normal();
        r2 += v * v;
      }
      log_w[s] = spec.log_unnormalized_density(u) - (log_norm_const - 0.5 * r2 / (sd * sd));
    }
  } else {
    out.proposal = "quartic-radial";
    const auto prof = fit_quartic_profile(spec);
    double c = 0.5 * prof.c1 * n;
    if (!(c > 0.0)) c = 0.5 * n / 12.0;
    out.proposal_scale = c;
    // density exp(-c r^4) / Zc with Zc = S_{M-1} Gamma(M/4) / (4 c^{M/4})
    const double log_zc = std::log(2.0) + 0.5 * md * std::log(std::numbers::pi) - std::lgamma(0.5 * md) +
                          std::lgamma(0.25 * md) - std::log(4.0) - 0.25 * md * std::log(c);
    std::gamma_distribution<double> radial(0.25 * md, 1.0);
    for (std::size_t s = 0; s < count; ++s) {
      double z2 = 0.0;
      for (double& v : u) {
        v = rng.normal();
        z2 += v * v;
      }
      const double r = std::pow(radial(rng) / c, 0.25);
      const double scale = r / std::sqrt(z2);
      for (double& v : u) v *= scale;
      log_w[s] = spec.log_unnormalized_density(u) - (-c * r * r * r * r - log_zc);
    }
  }
  const double peak = *std::max_element(log_w.begin(), log_w.end());
  double sum = 0.0, sum2 = 0.0;
  for (double lw : log_w) {
    const double w = std::exp(lw - peak);
    sum += w;
    sum2 += w * w;
  }
  const double mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sum2 / static_cast<double>(count) - mean * mean);
  out.log_normalization = peak + std::log(mean);
  out.stderr_ = std::sqrt(var / static_cast<double>(count - 1)) / mean;
  return out;
}

// ---------------------------------------------------------------------------
// k-marginals as mixtures of tilted Bernoulli products

/// Single-spin law with mean tanh(h).
struct TiltedBernoulli {
  double field = 0.0;
  double mean() const noexcept { return std::tanh(field); }
  /// log P(sigma) = sigma h - log 2 - log cosh h
  double log_probability(int sigma) const noexcept { return sigma * field - std::numbers::ln2 - log_cosh(field); }
};

namespace detail {

// Marginal words grouped by their per-class sufficient statistic
// (number of sites in class g with sigma_i * orientation_i = +1).
struct WordClasses {
  std::vector<std::vector<std::size_t>> plus_counts;
  std::vector<std::size_t> word_to_stat;
};

inline WordClasses group_words(const RowClasses& rc, std::size_t k) {
  WordClasses out;
  std::map<std::vector<std::size_t>, std::size_t> index;
  const std::size_t words = std::size_t{1} << k;
  out.word_to_stat.resize(words);
  std::vector<std::size_t> plus(rc.size());
  for (std::size_t w = 0; w < words; ++w) {
    std::fill(plus.begin(), plus.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
      const int sigma = ((w >> i) & 1u) ? 1 : -1;
      if (sigma * rc.orientation[i] > 0) ++plus[rc.site_class[i]];
    }
    auto [it, inserted] = index.try_emplace(plus, out.plus_counts.size());
    if (inserted) out.plus_counts.push_back(plus);
    out.word_to_stat[w] = it->second;
  }
  return out;
}

inline Eigen::MatrixXd class_fields(const RowClasses& rc, const TensorRule& rule) {
  // fields(g, j) = canonical_row_g . u_j
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rc.size()), static_cast<Eigen::Index>(rule.size()));
  for (std::size_t j = 0; j < rule.size(); ++j) {
    const auto u = rule.node(j);
    for (std::size_t g = 0; g < rc.size(); ++g) {
      double h = 0.0;
      for (std::size_t nu = 0; nu < rule.dim; ++nu) h += rc.classes[g].row[nu] * u[nu];
      out(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(j)) = h;
    }
  }
  return out;
}

}  // namespace detail

/// mu_N^(k)(w) = int Q_N(du) prod_{i<=k} (1 + sigma_i tanh(u.xi_i)) / 2 by the
/// normalized quadrature rule.
inline MarginalTable mixture_marginal(const NormalizedMixing& mix, std::size_t k) {
  if (k < 1 || k > 20 || k > mix.spec.sites()) throw std::invalid_argument("mixture_marginal: k must lie in [1, min(N, 20)]");
  const RowClasses rc = classify_rows(mix.spec.model().patterns(), 0, k);
  const auto words = detail::group_words(rc, k);
  const Eigen::MatrixXd fields = detail::class_fields(rc, mix.rule);
  const auto prob = mix.node_probabilities();
  std::vector<double> stat_value(words.plus_counts.size(), 0.0);
  parallel_for(words.plus_counts.size(), [&](std::size_t s) {
    const auto& plus = words.plus_counts[s];
    double acc = 0.0;
    for (std::size_t j = 0; j < mix.rule.size(); ++j) {
      if (prob[j] == 0.0) continue;
      double log_prod = 0.0;
      for (std::size_t g = 0; g < rc.size(); ++g) {
        const TiltedBernoulli b{fields(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(j))};
        const double a = static_cast<double>(plus[g]);
        const double c = static_cast<double>(rc.classes[g].count);
        log_prod += a * b.log_probability(1) + (c - a) * b.log_probability(-1);
      }
      acc += prob[j] * std::exp(log_prod);
    }
    stat_value[s] = acc;
  });
  MarginalTable table{k, std::vector<double>(std::size_t{1} << k)};
  for (std::size_t w = 0; w < table.size(); ++w) table.probabilities[w] = stat_value[words.word_to_stat[w]];
  return table;
}

/// The same representation averaged over samples of the mixing field.
inline MarginalTable mixture_marginal(const MixingMeasureSpec& spec, std::size_t k, const MixingSamples& samples) {
  if (k < 1 || k > 20 || k > spec.sites()) throw std::invalid_argument("mixture_marginal: k must lie in [1, min(N, 20)]");
  if (samples.count() == 0) throw std::invalid_argument("mixture_marginal: no samples");
  const auto& xi = spec.model().patterns();
  MarginalTable table{k, std::vector<double>(std::size_t{1} << k, 0.0)};
  std::vector<double> h(k);
  for (std::size_t s = 0; s < samples.count(); ++s) {
    const auto u = samples.sample(s);
    for (std::size_t i = 0; i < k; ++i) {
      double f = 0.0;
      for (std::size_t nu = 0; nu < spec.dim(); ++nu) f += xi(i, nu) * u[nu];
      h[i] = f;
    }
    for (std::size_t w = 0; w < table.size(); ++w) {
      double lp = 0.0;
      for (std::size_t i = 0; i < k; ++i) lp += TiltedBernoulli{h[i]}.log_probability(((w >> i) & 1u) ? 1 : -1);
      table.probabilities[w] += std::exp(lp);
    }
  }
  for (double& p : table.probabilities) p /= static_cast<double>(samples.count());
  return table;
}

/// E_Q[ sqrt(sum_{i<=k} (u.xi_i)^2) ], an upper bound on the k-marginal TV
/// (Pinsker applied conditionally on u). Quadrature version.
inline TVReport pinsker_tv_bound(const NormalizedMixing& mix, std::size_t k) {
  if (k < 1 || k > mix.spec.sites()) throw std::invalid_argument("pinsker_tv_bound: k must lie in [1, N]");
  const RowClasses rc = classify_rows(mix.spec.model().patterns(), 0, k);
  const Eigen::MatrixXd fields = detail::class_fields(rc, mix.rule);
  const auto prob = mix.node_probabilities();
  double acc = 0.0;
  for (std::size_t j = 0; j < mix.rule.size(); ++j) {
    double s = 0.0;
    for (std::size_t g = 0; g < rc.size(); ++g) {
      const double h = fields(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(j));
      s += static_cast<double>(rc.classes[g].count) * h * h;
    }
    acc += prob[j] * std::sqrt(s);
  }
  return TVReport::make(acc, TVMethod::pinsker);
}

/// Monte Carlo version over samples of the mixing field, with standard error.
inline TVReport pinsker_tv_bound(const MixingMeasureSpec& spec, std::size_t k, const MixingSamples& samples,
                                 std::optional<std::uint64_t> seed = std::nullopt) {
  if (k < 1 || k > spec.sites()) throw std::invalid_argument("pinsker_tv_bound: k must lie in [1, N]");
  if (samples.count() < 2) throw SamplerFailure("pinsker_tv_bound: need at least two samples");
  const RowClasses rc = classify_rows(spec.model().patterns(), 0, k);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t s = 0; s < samples.count(); ++s) {
    const auto u = samples.sample(s);
    double acc = 0.0;
    for (const auto& c : rc.classes) {
      double h = 0.0;
      for (std::size_t nu = 0; nu < spec.dim(); ++nu) h += c.row[nu] * u[nu];
      acc += static_cast<double>(c.count) * h * h;
    }
    const double v = std::sqrt(acc);
    sum += v;
    sum2 += v * v;
  }
  const double cnt = static_cast<double>(samples.count());
  const double mean = sum / cnt;
  const double var = std::max(0.0, sum2 / cnt - mean * mean);
  return TVReport::make(mean, TVMethod::pinsker, std::sqrt(var / (cnt - 1.0)), seed);
}

}  // namespace hopchaos
