#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hopchaos/disorder.hpp"
#include "hopchaos/parallel.hpp"
#include "hopchaos/report.hpp"

namespace hopchaos {

/// One quenched Hopfield system: inverse temperature and patterns.
/// beta = 0 is accepted and gives the uniform measure.
class GibbsModel {
 public:
  GibbsModel(double beta, std::shared_ptr<const PatternMatrix> patterns) : beta_(beta), patterns_(std::move(patterns)) {
    if (!std::isfinite(beta_) || beta_ < 0.0) throw std::invalid_argument("GibbsModel: beta must be finite and >= 0");
    if (!patterns_) throw std::invalid_argument("GibbsModel: patterns required");
  }
  GibbsModel(double beta, PatternMatrix patterns)
      : GibbsModel(beta, std::make_shared<const PatternMatrix>(std::move(patterns))) {}

  double beta() const noexcept { return beta_; }
  const PatternMatrix& patterns() const noexcept { return *patterns_; }
  const std::shared_ptr<const PatternMatrix>& shared_patterns() const noexcept { return patterns_; }
  std::size_t sites() const noexcept { return patterns_->sites(); }
  std::size_t pattern_count() const noexcept { return patterns_->patterns(); }

 private:
  double beta_;
  std::shared_ptr<const PatternMatrix> patterns_;
};

/// Spins sigma_i in {-1,+1}.
using SpinConfig = std::vector<int>;

/// Word convention shared by every table: bit j-1 is (sigma_j + 1) / 2, so
/// site 1 is the least significant bit.
inline SpinConfig spins_from_word(std::uint64_t word, std::size_t k) {
  SpinConfig s(k);
  for (std::size_t j = 0; j < k; ++j) s[j] = ((word >> j) & 1u) ? 1 : -1;
  return s;
}

inline std::uint64_t word_from_spins(std::span<const int> spins) {
  std::uint64_t w = 0;
  for (std::size_t j = 0; j < spins.size(); ++j)
    if (spins[j] > 0) w |= std::uint64_t{1} << j;
  return w;
}

struct EnumerationLimits {
  std::size_t max_sites = 24;
  std::size_t max_marginal_sites = 20;
};

class CapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void validate_spins(std::span<const int> config, std::size_t n) {
  if (config.size() != n) throw std::invalid_argument("spin configuration length does not match N");
  for (int s : config)
    if (s != 1 && s != -1) throw std::invalid_argument("spins must be +1 or -1");
}

/// m^nu = (1/N) sum_i sigma_i xi_i^nu.
inline std::vector<double> overlap(std::span<const int> config, const PatternMatrix& xi) {
  validate_spins(config, xi.sites());
  std::vector<double> m(xi.patterns(), 0.0);
  for (std::size_t i = 0; i < xi.sites(); ++i)
    for (std::size_t nu = 0; nu < xi.patterns(); ++nu) m[nu] += config[i] * xi(i, nu);
  for (double& v : m) v /= static_cast<double>(xi.sites());
  return m;
}

/// log of the unnormalized Gibbs weight, (beta N / 2) ||m_N(sigma)||^2.
inline double gibbs_log_weight(const GibbsModel& model, std::span<const int> config) {
  const auto m = overlap(config, model.patterns());
  double norm2 = 0.0;
  for (double v : m) norm2 += v * v;
  return 0.5 * model.beta() * static_cast<double>(model.sites()) * norm2;
}

/// Probability table of a k-spin marginal, indexed by spin word.
struct MarginalTable {
  std::size_t k = 0;
  std::vector<double> probabilities;

  static MarginalTable uniform(std::size_t k) {
    return {k, std::vector<double>(std::size_t{1} << k, std::ldexp(1.0, -static_cast<int>(k)))};
  }

  double operator[](std::uint64_t word) const { return probabilities[word]; }
  std::size_t size() const noexcept { return probabilities.size(); }
};

namespace detail {

// Walks Gray-code indices [begin, end): consecutive configurations differ in
// one site, so S = sum_i sigma_i xi_i is updated in O(M) per step.
template <class Visit>
void gray_segment(std::size_t n, std::size_t m, std::span<const int> rows, std::uint64_t begin, std::uint64_t end,
                  Visit&& visit) {
  std::uint64_t config = begin ^ (begin >> 1);
  std::vector<long long> s(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int sigma = ((config >> i) & 1u) ? 1 : -1;
    for (std::size_t nu = 0; nu < m; ++nu) s[nu] += sigma * rows[i * m + nu];
  }
  long long s2 = 0;
  for (long long v : s) s2 += v * v;
  for (std::uint64_t idx = begin;;) {
    visit(config, s2);
    if (++idx == end) break;
    const int j = std::countr_zero(idx);
    config ^= std::uint64_t{1} << j;
    const int sigma = ((config >> j) & 1u) ? 1 : -1;
    s2 = 0;
    for (std::size_t nu = 0; nu < m; ++nu) {
      s[nu] += 2 * sigma * rows[static_cast<std::size_t>(j) * m + nu];
      s2 += s[nu] * s[nu];
    }
  }
}

struct Enumeration {
  double log_z = 0.0;
  std::vector<double> table;  // unnormalized, scaled by exp(-max log weight)
  double max_log_weight = 0.0;
};

inline Enumeration enumerate(const GibbsModel& model, std::size_t k, const EnumerationLimits& limits) {
  const std::size_t n = model.sites();
  const std::size_t m = model.pattern_count();
  if (n > limits.max_sites)
    throw CapExceeded("exact enumeration refused: N=" + std::to_string(n) + " exceeds the cap of " +
                      std::to_string(limits.max_sites) + " sites; use the mixture (hs_mixture) path instead");
  if (k > limits.max_marginal_sites)
    throw CapExceeded("exact enumeration refused: marginal of " + std::to_string(k) + " sites exceeds the table cap of " +
                      std::to_string(limits.max_marginal_sites));
  if (k > n) throw std::invalid_argument("marginal size exceeds N");

  std::vector<int> rows(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t nu = 0; nu < m; ++nu) rows[i * m + nu] = model.patterns()(i, nu);

  const std::uint64_t total = std::uint64_t{1} << n;
  int chunk_bits = n >= 10 ? std::min<int>(6, static_cast<int>(n) - 10) : 0;
  chunk_bits = std::min(chunk_bits, std::max(0, 24 - static_cast<int>(k)));
  const std::size_t chunks = std::size_t{1} << chunk_bits;
  const std::uint64_t span_len = total >> chunk_bits;

  std::vector<long long> chunk_max(chunks, 0);
  parallel_for(chunks, [&](std::size_t c) {
    long long best = 0;
    gray_segment(n, m, rows, c * span_len, (c + 1) * span_len, [&](std::uint64_t, long long s2) { best = std::max(best, s2); });
    chunk_max[c] = best;
  });
  const long long max_s2 = *std::max_element(chunk_max.begin(), chunk_max.end());
  const double scale = 0.5 * model.beta() / static_cast<double>(n);

  // Weights only depend on the integer ||S||^2, so tabulate exp once.
  std::vector<double> weight(static_cast<std::size_t>(max_s2) + 1);
  for (long long s2 = 0; s2 <= max_s2; ++s2) weight[static_cast<std::size_t>(s2)] = std::exp(scale * static_cast<double>(s2 - max_s2));

  const std::size_t table_size = std::size_t{1} << k;
  const std::uint64_t mask = table_size - 1;
  std::vector<std::vector<double>> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<double> acc(table_size, 0.0);
    gray_segment(n, m, rows, c * span_len, (c + 1) * span_len,
                 [&](std::uint64_t config, long long s2) { acc[config & mask] += weight[static_cast<std::size_t>(s2)]; });
    partial[c] = std::move(acc);
  });

  Enumeration out;
  out.table.assign(table_size, 0.0);
  for (const auto& acc : partial)
    for (std::size_t w = 0; w < table_size; ++w) out.table[w] += acc[w];
  double sum = 0.0;
  for (double v : out.table) sum += v;
  out.max_log_weight = scale * static_cast<double>(max_s2);
  out.log_z = out.max_log_weight + std::log(sum);
  return out;
}

}  // namespace detail

/// log Z_N by full enumeration of the 2^N configurations.
inline double log_partition_function(const GibbsModel& model, const EnumerationLimits& limits = {}) {
  return detail::enumerate(model, 0, limits).log_z;
}

/// Exact k-spin marginal mu_N^(k) by summing Gibbs weights over sites k+1..N.
inline MarginalTable exact_marginal(const GibbsModel& model, std::size_t k, const EnumerationLimits& limits = {}) {
  if (k < 1) throw std::invalid_argument("exact_marginal: k must be at least 1");
  auto e = detail::enumerate(model, k, limits);
  double sum = 0.0;
  for (double v : e.table) sum += v;
  for (double& v : e.table) v /= sum;
  return {k, std::move(e.table)};
}

/// Marginal of the first k sites of a larger table.
inline MarginalTable marginalize(const MarginalTable& table, std::size_t k) {
  if (k > table.k) throw std::invalid_argument("marginalize: k exceeds table size");
  MarginalTable out{k, std::vector<double>(std::size_t{1} << k, 0.0)};
  const std::uint64_t mask = (std::uint64_t{1} << k) - 1;
  for (std::size_t w = 0; w < table.size(); ++w) out.probabilities[w & mask] += table.probabilities[w];
  return out;
}

inline TVReport tv_distance(const MarginalTable& p, const MarginalTable& q) {
  if (p.k != q.k || p.size() != q.size()) throw std::invalid_argument("tv_distance: tables have different k");
  double sum = 0.0;
  for (std::size_t w = 0; w < p.size(); ++w) sum += std::fabs(p.probabilities[w] - q.probabilities[w]);
  return TVReport::make(0.5 * sum, TVMethod::exact);
}

/// CSV with header "word,probability", words ascending, probabilities in %.17g.
inline void write_marginal_csv(std::ostream& out, const MarginalTable& table) {
  out << "word,probability\n";
  char buf[64];
  for (std::size_t w = 0; w < table.size(); ++w) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", w, table.probabilities[w]);
    out << buf;
  }
}

}  // namespace hopchaos
