#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hopchaos/rng.hpp"

namespace hopchaos {

/// Quenched patterns xi in {-1,+1}^{N x M}. Stored column-major as packed bits
/// (bit set means +1) so that a pattern column is a contiguous bit string.
/// Immutable after construction and safe to share between threads.
class PatternMatrix {
 public:
  PatternMatrix() = default;

  PatternMatrix(std::size_t sites, std::size_t patterns, std::uint64_t seed, std::vector<std::uint64_t> column_bits)
      : sites_(sites), patterns_(patterns), words_((sites + 63) / 64), seed_(seed), bits_(std::move(column_bits)) {
    if (sites == 0 || patterns == 0) throw std::invalid_argument("PatternMatrix: N and M must be at least 1");
    if (bits_.size() != words_ * patterns_) throw std::invalid_argument("PatternMatrix: packed storage has wrong size");
    const std::size_t tail = sites_ % 64;
    if (tail != 0) {
      const std::uint64_t mask = (std::uint64_t{1} << tail) - 1;
      for (std::size_t nu = 0; nu < patterns_; ++nu) bits_[nu * words_ + words_ - 1] &= mask;
    }
  }

  /// Builds a matrix from row-major signs; every entry must be exactly +1 or -1.
  static PatternMatrix from_signs(std::size_t sites, std::size_t patterns, std::span<const int> row_major,
                                  std::uint64_t seed = 0) {
    if (row_major.size() != sites * patterns) throw std::invalid_argument("PatternMatrix: sign count mismatch");
    const std::size_t words = (sites + 63) / 64;
    std::vector<std::uint64_t> bits(words * patterns, 0);
    for (std::size_t i = 0; i < sites; ++i) {
      for (std::size_t nu = 0; nu < patterns; ++nu) {
        const int s = row_major[i * patterns + nu];
        if (s != 1 && s != -1) throw std::invalid_argument("PatternMatrix: entries must be +1 or -1");
        if (s == 1) bits[nu * words + i / 64] |= std::uint64_t{1} << (i % 64);
      }
    }
    return PatternMatrix(sites, patterns, seed, std::move(bits));
  }

  std::size_t sites() const noexcept { return sites_; }
  std::size_t patterns() const noexcept { return patterns_; }
  std::uint64_t seed() const noexcept { return seed_; }

  int operator()(std::size_t i, std::size_t nu) const noexcept {
    return ((bits_[nu * words_ + i / 64] >> (i % 64)) & 1u) ? 1 : -1;
  }

  std::span<const std::uint64_t> column_bits(std::size_t nu) const noexcept {
    return {bits_.data() + nu * words_, words_};
  }

  std::vector<int> row(std::size_t i) const {
    std::vector<int> out(patterns_);
    for (std::size_t nu = 0; nu < patterns_; ++nu) out[nu] = (*this)(i, nu);
    return out;
  }

  Eigen::VectorXd row_vector(std::size_t i) const {
    Eigen::VectorXd out(patterns_);
    for (std::size_t nu = 0; nu < patterns_; ++nu) out[nu] = (*this)(i, nu);
    return out;
  }

  /// Copy with pattern column nu negated.
  PatternMatrix with_column_negated(std::size_t nu) const {
    std::vector<std::uint64_t> bits = bits_;
    for (std::size_t w = 0; w < words_; ++w) bits[nu * words_ + w] = ~bits[nu * words_ + w];
    return PatternMatrix(sites_, patterns_, seed_, std::move(bits));
  }

  /// Sum over sites [begin, end) of sigma_i * xi_i^nu, using popcounts on the
  /// packed column. spin_bits uses the same bit convention (bit set = +1).
  long long column_overlap(std::size_t nu, std::span<const std::uint64_t> spin_bits, std::size_t count) const {
    long long agree = 0;
    const std::size_t full = count / 64;
    for (std::size_t w = 0; w < full; ++w) agree += std::popcount(~(bits_[nu * words_ + w] ^ spin_bits[w]));
    if (count % 64 != 0) {
      const std::uint64_t mask = (std::uint64_t{1} << (count % 64)) - 1;
      agree += std::popcount(~(bits_[nu * words_ + full] ^ spin_bits[full]) & mask);
    }
    return 2 * agree - static_cast<long long>(count);
  }

  friend bool operator==(const PatternMatrix& a, const PatternMatrix& b) {
    return a.sites_ == b.sites_ && a.patterns_ == b.patterns_ && a.bits_ == b.bits_;
  }

 private:
  std::size_t sites_ = 0;
  std::size_t patterns_ = 0;
  std::size_t words_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// I.i.d. uniform signs, reproducible from the seed. Each packed word is an
/// independent counter-based draw, so any sub-block can be regenerated alone.
inline PatternMatrix sample_patterns(std::size_t sites, std::size_t patterns, std::uint64_t seed) {
  if (sites == 0 || patterns == 0) throw std::invalid_argument("sample_patterns: N and M must be at least 1");
  const std::size_t words = (sites + 63) / 64;
  std::vector<std::uint64_t> bits(words * patterns);
  for (std::size_t nu = 0; nu < patterns; ++nu)
    for (std::size_t w = 0; w < words; ++w) bits[nu * words + w] = splitmix64(derive_seed(seed, nu, w));
  return PatternMatrix(sites, patterns, seed, std::move(bits));
}

// Rows grouped up to a global sign. Every quantity in the model depends on a
// row only through u.xi_i inside an even function, or through sigma_i * xi_i
// with sigma_i uniform, so xi_i and -xi_i are interchangeable after flipping
// the spin. A class stores its canonical row (first entry +1).
struct RowClass {
  std::vector<int> row;
  std::size_t count = 0;
};

struct RowClasses {
  std::size_t patterns = 0;
  std::vector<RowClass> classes;
  std::vector<std::uint32_t> site_class;  // indexed by site - begin
  std::vector<int> orientation;           // xi_i = orientation * canonical row

  std::size_t size() const noexcept { return classes.size(); }
};

inline RowClasses classify_rows(const PatternMatrix& xi, std::size_t begin, std::size_t end) {
  if (begin > end || end > xi.sites()) throw std::out_of_range("classify_rows: site range out of bounds");
  if (xi.patterns() > 64) throw std::invalid_argument("classify_rows: at most 64 patterns supported");
  RowClasses out;
  out.patterns = xi.patterns();
  const std::size_t m = xi.patterns();
  std::vector<std::uint64_t> keys(end - begin);
  std::map<std::uint64_t, std::size_t> counts;
  for (std::size_t i = begin; i < end; ++i) {
    std::uint64_t key = 0;
    const bool flip = xi(i, 0) < 0;
    for (std::size_t nu = 0; nu < m; ++nu) {
      const bool plus = (xi(i, nu) > 0) != flip;
      if (plus) key |= std::uint64_t{1} << nu;
    }
    keys[i - begin] = key;
    out.orientation.push_back(flip ? -1 : 1);
    ++counts[key];
  }
  std::map<std::uint64_t, std::uint32_t> index;
  for (const auto& [key, count] : counts) {
    RowClass c;
    c.count = count;
    c.row.resize(m);
    for (std::size_t nu = 0; nu < m; ++nu) c.row[nu] = ((key >> nu) & 1u) ? 1 : -1;
    index[key] = static_cast<std::uint32_t>(out.classes.size());
    out.classes.push_back(std::move(c));
  }
  out.site_class.reserve(keys.size());
  for (std::uint64_t key : keys) out.site_class.push_back(index[key]);
  return out;
}

struct CovarianceReport {
  std::size_t subset_size = 0;
  Eigen::MatrixXd matrix;
  double op_norm_deviation = 0.0;  // ||Sigma_hat - I||_op
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double event_epsilon = 0.0;
  bool event_holds = false;
};

/// (1/n) sum_{i<n} xi_i xi_i^T over the first n sites, with its operator-norm
/// distance to the identity from the extreme eigenvalues.
inline CovarianceReport empirical_covariance(const PatternMatrix& xi, std::size_t subset_size, double epsilon = 0.5) {
  if (subset_size < 1 || subset_size > xi.sites())
    throw std::out_of_range("empirical_covariance: subset size must lie in [1, N]");
  if (!(epsilon > 0.0)) throw std::invalid_argument("empirical_covariance: epsilon must be positive");
  const std::size_t m = xi.patterns();
  const RowClasses rc = classify_rows(xi, 0, subset_size);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(m, m);
  for (const RowClass& c : rc.classes) {
    Eigen::VectorXd r(m);
    for (std::size_t nu = 0; nu < m; ++nu) r[nu] = c.row[nu];
    sigma.noalias() += static_cast<double>(c.count) * r * r.transpose();
  }
  sigma /= static_cast<double>(subset_size);
  sigma.diagonal().setOnes();  // (xi_i^nu)^2 = 1 exactly

  CovarianceReport report;
  report.subset_size = subset_size;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  report.lambda_min = eig.eigenvalues().minCoeff();
  report.lambda_max = eig.eigenvalues().maxCoeff();
  report.op_norm_deviation = std::max(std::fabs(report.lambda_max - 1.0), std::fabs(report.lambda_min - 1.0));
  report.matrix = std::move(sigma);
  report.event_epsilon = epsilon;
  report.event_holds = report.op_norm_deviation <= epsilon;
  return report;
}

struct DisorderEvents {
  CovarianceReport full;    // Sigma_hat_N
  CovarianceReport subset;  // Sigma_hat_k
  bool holds() const noexcept { return full.event_holds && subset.event_holds; }
};

inline DisorderEvents check_disorder_events(const PatternMatrix& xi, double epsilon, std::size_t k) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("check_disorder_events: epsilon must be positive");
  if (k < 1 || k > xi.sites()) throw std::out_of_range("check_disorder_events: k must lie in [1, N]");
  return {empirical_covariance(xi, xi.sites(), epsilon), empirical_covariance(xi, k, epsilon)};
}

// Text format: header "N M seed", then N lines of M characters '+'/'-'.
inline void write_patterns(std::ostream& out, const PatternMatrix& xi) {
  out << xi.sites() << ' ' << xi.patterns() << ' ' << xi.seed() << '\n';
  std::string line(xi.patterns(), '+');
  for (std::size_t i = 0; i < xi.sites(); ++i) {
    for (std::size_t nu = 0; nu < xi.patterns(); ++nu) line[nu] = xi(i, nu) > 0 ? '+' : '-';
    out << line << '\n';
  }
}

inline PatternMatrix read_patterns(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("read_patterns: missing header");
  std::istringstream hs(header);
  long long n = 0, m = 0;
  std::uint64_t seed = 0;
  if (!(hs >> n >> m >> seed) || n < 1 || m < 1) throw std::runtime_error("read_patterns: malformed header '" + header + "'");
  std::vector<int> signs;
  signs.reserve(static_cast<std::size_t>(n * m));
  std::string line;
  for (long long i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("read_patterns: expected " + std::to_string(n) + " rows");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (static_cast<long long>(line.size()) != m)
      throw std::runtime_error("read_patterns: row " + std::to_string(i + 1) + " has wrong length");
    for (char c : line) {
      if (c == '+') signs.push_back(1);
      else if (c == '-') signs.push_back(-1);
      else throw std::runtime_error("read_patterns: invalid sign character");
    }
  }
  return PatternMatrix::from_signs(static_cast<std::size_t>(n), static_cast<std::size_t>(m), signs, seed);
}

}  // namespace hopchaos
