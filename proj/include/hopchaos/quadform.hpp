#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "hopchaos/disorder.hpp"
#include "hopchaos/parallel.hpp"
#include "hopchaos/rng.hpp"

namespace hopchaos {

/// Real symmetric k x k matrix with its Frobenius norm, operator norm and trace.
class QuadFormSpec {
 public:
  explicit QuadFormSpec(Eigen::MatrixXd a, double symmetry_tolerance = 1e-12) : a_(std::move(a)) {
    if (a_.rows() != a_.cols()) throw std::invalid_argument("QuadFormSpec: matrix must be square");
    if (a_.rows() == 0) throw std::invalid_argument("QuadFormSpec: matrix must be non-empty");
    if (!a_.allFinite()) throw std::invalid_argument("QuadFormSpec: entries must be finite");
    const double scale = std::max(1.0, a_.cwiseAbs().maxCoeff());
    if ((a_ - a_.transpose()).cwiseAbs().maxCoeff() > symmetry_tolerance * scale)
      throw std::invalid_argument("QuadFormSpec: matrix must be symmetric");
    frobenius_ = a_.norm();
    trace_ = a_.trace();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a_, Eigen::EigenvaluesOnly);
    operator_ = eig.eigenvalues().cwiseAbs().maxCoeff();
  }

  const Eigen::MatrixXd& matrix() const noexcept { return a_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(a_.rows()); }
  double frobenius_norm() const noexcept { return frobenius_; }
  double operator_norm() const noexcept { return operator_; }
  double trace() const noexcept { return trace_; }
  /// t0 = ||A||_F^2 / ||A||_op, where the two regimes of the tail bound meet.
  double crossover() const noexcept { return operator_ > 0.0 ? frobenius_ * frobenius_ / operator_ : 0.0; }

 private:
  Eigen::MatrixXd a_;
  double frobenius_ = 0.0;
  double operator_ = 0.0;
  double trace_ = 0.0;
};

/// Symmetric matrix with i.i.d. standard normal entries on and above the diagonal.
inline QuadFormSpec random_symmetric(std::size_t k, std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, 0x5359));
  Eigen::MatrixXd a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i; j < a.cols(); ++j) a(i, j) = a(j, i) = rng.normal();
  return QuadFormSpec(std::move(a));
}

/// X = sigma^T A sigma - tr(A).
inline double centered_quadform(const QuadFormSpec& a, std::span<const int> sigma) {
  if (sigma.size() != a.size()) throw std::invalid_argument("centered_quadform: sigma length does not match A");
  Eigen::VectorXd s(static_cast<Eigen::Index>(sigma.size()));
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] != 1 && sigma[i] != -1) throw std::invalid_argument("centered_quadform: spins must be +1 or -1");
    s[static_cast<Eigen::Index>(i)] = sigma[i];
  }
  return s.dot(a.matrix() * s) - a.trace();
}

/// Var(X) = 2 (||A||_F^2 - sum_i A_ii^2) under Rademacher sigma.
inline double quadform_variance(const QuadFormSpec& a) {
  return 2.0 * (a.frobenius_norm() * a.frobenius_norm() - a.matrix().diagonal().squaredNorm());
}

/// All 2^k values of X, indexed by spin word (bit i set means sigma_{i+1} = +1).
struct QuadFormDistribution {
  std::vector<double> values;

  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  double variance() const {
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return s / static_cast<double>(values.size());
  }
  double tail(double t) const {
    std::size_t c = 0;
    for (double v : values)
      if (std::fabs(v) >= t) ++c;
    return static_cast<double>(c) / static_cast<double>(values.size());
  }
  /// E exp(s X), accumulated around the largest exponent.
  double mgf(double s) const {
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : values) peak = std::max(peak, s * v);
    double acc = 0.0;
    for (double v : values) acc += std::exp(s * v - peak);
    return std::exp(peak) * acc / static_cast<double>(values.size());
  }
};

/// Exact law of X by Gray-code enumeration: y = A sigma is updated in O(k)
/// per flip, and every block of 1024 codes restarts from a fresh product to
/// keep rounding from accumulating.
inline QuadFormDistribution exact_quadform_distribution(const QuadFormSpec& a, std::size_t max_k = 20) {
  const std::size_t k = a.size();
  if (k > max_k) throw std::invalid_argument("exact_quadform_distribution: k exceeds the enumeration cap");
  const std::uint64_t total = std::uint64_t{1} << k;
  const std::uint64_t block = std::min<std::uint64_t>(total, 1024);
  const Eigen::MatrixXd& m = a.matrix();
  QuadFormDistribution out;
  out.values.resize(total);
  parallel_for(total / block, [&](std::size_t b) {
    const std::uint64_t begin = b * block;
    std::uint64_t code = begin ^ (begin >> 1);
    Eigen::VectorXd s(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) s[static_cast<Eigen::Index>(i)] = ((code >> i) & 1u) ? 1.0 : -1.0;
    Eigen::VectorXd y = m * s;
    double q = s.dot(y);
    for (std::uint64_t idx = begin;;) {
      out.values[code] = q - a.trace();
      if (++idx == begin + block) break;
      const int j = std::countr_zero(idx);
      code ^= std::uint64_t{1} << j;
      const double delta = -2.0 * s[j];
      q += 2.0 * delta * y[j] + delta * delta * m(j, j);
      y += delta * m.col(j);
      s[j] += delta;
    }
  });
  return out;
}

struct TailEstimate {
  double t = 0.0;
  double probability = 0.0;
  double stderr_ = 0.0;
  bool exact = false;
  double bound = 0.0;  // 2 exp(-c0 min(t^2 / ||A||_F^2, t / ||A||_op))
};

inline double hanson_wright_bound(const QuadFormSpec& a, double t, double c0) {
  if (t < 0.0) throw std::invalid_argument("hanson_wright_bound: t must be >= 0");
  const double f2 = a.frobenius_norm() * a.frobenius_norm();
  if (f2 == 0.0) return t > 0.0 ? 0.0 : 2.0;
  return 2.0 * std::exp(-c0 * std::min(t * t / f2, t / a.operator_norm()));
}

/// P(|X| >= t): exact for k <= exact_cap, otherwise Monte Carlo.
inline TailEstimate empirical_tail(const QuadFormSpec& a, double t, double c0, std::size_t samples, std::uint64_t seed,
                                   std::size_t exact_cap = 20) {
  if (t < 0.0) throw std::invalid_argument("empirical_tail: t must be >= 0");
  TailEstimate out{t, 0.0, 0.0, false, hanson_wright_bound(a, t, c0)};
  if (a.size() <= exact_cap) {
    out.probability = exact_quadform_distribution(a, exact_cap).tail(t);
    out.exact = true;
    return out;
  }
  if (samples < 2) throw std::invalid_argument("empirical_tail: need at least two samples");
  CounterRng rng(derive_seed(seed, 0x5441));
  std::vector<int> sigma(a.size());
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (int& v : sigma) v = (rng() & 1u) ? 1 : -1;
    if (std::fabs(centered_quadform(a, sigma)) >= t) ++hits;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(samples);
  out.probability = p;
  out.stderr_ = std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
  return out;
}

struct MgfCheck {
  double s = 0.0;
  double value = 1.0;      // E exp(sX)
  double value_neg = 1.0;  // E exp(-sX)
  double stderr_ = 0.0;
  bool exact = false;
  double bound = 1.0;  // exp(C s^2 ||A||_F^2)
  bool holds = true;
  bool symmetric = true;
};

/// E exp(sX) against exp(C s^2 ||A||_F^2); exact for k <= exact_cap.
inline MgfCheck mgf_check(const QuadFormSpec& a, double s, double c = 2.0, std::size_t samples = 100000, std::uint64_t seed = 0,
                          std::size_t exact_cap = 20) {
  MgfCheck out;
  out.s = s;
  out.bound = std::exp(c * s * s * a.frobenius_norm() * a.frobenius_norm());
  if (a.size() <= exact_cap) {
    const auto dist = exact_quadform_distribution(a, exact_cap);
    out.value = dist.mgf(s);
    out.value_neg = dist.mgf(-s);
    out.exact = true;
    out.symmetric = std::fabs(out.value - out.value_neg) <= 1e-9 * std::max(1.0, out.value);
    out.holds = out.value <= out.bound * (1.0 + 1e-12);
    return out;
  }
  if (samples < 2) throw std::invalid_argument("mgf_check: need at least two samples");
  CounterRng rng(derive_seed(seed, 0x4d47));
  std::vector<int> sigma(a.size());
  double sp = 0, sp2 = 0, sn = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    for (int& v : sigma) v = (rng() & 1u) ? 1 : -1;
    const double x = centered_quadform(a, sigma);
    const double e = std::exp(s * x);
    sp += e;
    sp2 += e * e;
    sn += std::exp(-s * x);
  }
  const double n = static_cast<double>(samples);
  out.value = sp / n;
  out.value_neg = sn / n;
  out.stderr_ = std::sqrt(std::max(0.0, sp2 / n - out.value * out.value) / (n - 1.0));
  out.symmetric = std::fabs(out.value - out.value_neg) <= 4.0 * std::sqrt(2.0) * out.stderr_ + 1e-12;
  out.holds = out.value <= out.bound + 4.0 * out.stderr_;
  return out;
}

struct DeviationProbability {
  double delta = 0.0;
  double probability = 0.0;
  double stderr_ = 0.0;
};

struct ConcentrationReport {
  std::size_t k = 0;
  std::size_t patterns = 0;
  std::size_t samples = 0;
  double mean = 0.0;  // of ||S_{N,k}||^2 / M
  double stderr_ = 0.0;
  double exact_mean = 1.0;  // tr(Sigma_hat_k) / M
  double exact_sd = 0.0;
  std::vector<DeviationProbability> deviations;
};

/// Law of ||S_{N,k}||^2 / M, S_{N,k} = k^{-1/2} sum_{i<=k} sigma_i xi_i, under
/// uniform spins. Overlaps use popcounts on the packed pattern columns.
inline ConcentrationReport overlap_norm_concentration(const PatternMatrix& xi, std::size_t k, std::size_t samples, std::uint64_t seed,
                                                      std::span<const double> deltas) {
  if (k < 1 || k > xi.sites()) throw std::invalid_argument("overlap_norm_concentration: k must lie in [1, N]");
  if (samples < 2) throw std::invalid_argument("overlap_norm_concentration: need at least two samples");
  const std::size_t m = xi.patterns();
  const double kd = static_cast<double>(k);
  const double md = static_cast<double>(m);

  ConcentrationReport out;
  out.k = k;
  out.patterns = m;
  out.samples = samples;
  const auto cov = empirical_covariance(xi, k);
  out.exact_mean = cov.matrix.trace() / md;
  // Var ||S||^2 = 2 (||Xi^T Xi||_F^2 - k M^2) / k^2
  const double gram_f2 = (cov.matrix * kd).squaredNorm();
  out.exact_sd = std::sqrt(std::max(0.0, 2.0 * (gram_f2 - kd * md * md))) / (kd * md);

  std::vector<double> values(samples);
  const std::size_t words = (k + 63) / 64;
  constexpr std::size_t block = 256;
  parallel_for((samples + block - 1) / block, [&](std::size_t b) {
    CounterRng rng(derive_seed(seed, 0x434f, b));
    std::vector<std::uint64_t> spins(words);
    const std::size_t end = std::min(samples, (b + 1) * block);
    for (std::size_t s = b * block; s < end; ++s) {
      for (auto& w : spins) w = rng();
      double norm2 = 0.0;
      for (std::size_t nu = 0; nu < m; ++nu) {
        const double v = static_cast<double>(xi.column_overlap(nu, spins, k));
        norm2 += v * v;
      }
      values[s] = norm2 / (kd * md);
    }
  });
  double s1 = 0.0, s2 = 0.0;
  for (double v : values) {
    s1 += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(samples);
  out.mean = s1 / n;
  out.stderr_ = std::sqrt(std::max(0.0, s2 / n - out.mean * out.mean) / (n - 1.0));
  for (double d : deltas) {
    std::size_t hits = 0;
    for (double v : values)
      if (std::fabs(v - 1.0) >= d) ++hits;
    const double p = static_cast<double>(hits) / n;
    out.deviations.push_back({d, p, std::sqrt(p * (1.0 - p) / n)});
  }
  return out;
}

}  // namespace hopchaos
