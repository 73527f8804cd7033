#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hopchaos/gibbs_exact.hpp"
#include "hopchaos/hs_mixture.hpp"
#include "hopchaos/marginal_stats.hpp"

using namespace hopchaos;

namespace {

PatternMatrix parse(const std::string& text) {
  std::istringstream in(text);
  return read_patterns(in);
}

// Frozen brute-force values (independent enumeration, double precision).
const char* kInstanceA = "12 2 0\n++\n+-\n-+\n++\n--\n+-\n++\n-+\n+-\n++\n-+\n--\n";  // beta 0.7
constexpr double kA_M15 = 1.0275416559478994, kA_M2 = 1.0741024289969481, kA_M3 = 1.2302522997290322,
                 kA_C3 = 0.028548152823071153, kA_TV = 0.10447695816965032;
const char* kInstanceB = "12 1 0\n+\n-\n+\n+\n-\n+\n-\n-\n+\n-\n+\n+\n";  // beta 0.6
constexpr double kB_M15 = 1.0182009213950363, kB_M2 = 1.0515136367502151, kB_M3 = 1.1765059941194407,
                 kB_C3 = 0.02530380404629886, kB_TV = 0.071744476620738018;

LikelihoodEvaluator evaluator(const GibbsModel& model, std::size_t k) { return LikelihoodEvaluator(normalize(MixingMeasureSpec(model)), k); }

std::uint64_t seed_on_event(std::size_t n, std::size_t m, double eps) {
  for (std::uint64_t s = 1;; ++s)
    if (check_disorder_events(sample_patterns(n, m, s), eps, n).holds()) return s;
}

}  // namespace

TEST(LogCosh, Values) {
  EXPECT_EQ(log_cosh(0.0), 0.0);
  EXPECT_NEAR(log_cosh(50.0), 50.0 - std::numbers::ln2, 50.0 * 1e-15);
  EXPECT_EQ(log_cosh(-3.25), log_cosh(3.25));
  for (double x = -20.0; x <= 20.0; x += 1e-3) {
    EXPECT_GE(log_cosh(x), 0.0);
    EXPECT_LE(log_cosh(x), 0.5 * x * x);
  }
  EXPECT_TRUE(std::isfinite(log_cosh(1e6)));
}

TEST(TiltedKl, ClosedFormAgainstTwoPointSum) {
  EXPECT_EQ(tilted_kl(0.0), 0.0);
  const double p = 1.0 / (1.0 + std::exp(-2.0)), q = 1.0 - p;
  const double direct = p * std::log(2 * p) + q * std::log(2 * q);
  EXPECT_NEAR(tilted_kl(1.0), std::tanh(1.0) - log_cosh(1.0), 1e-15);
  EXPECT_NEAR(tilted_kl(1.0), direct, 1e-14);
  EXPECT_NEAR(tilted_kl(1.0), 0.32781332547273773, 1e-15);
}

TEST(Psi, IdentitySymmetryAndZero) {
  for (double x = -15.0; x <= 15.0; x += 0.37) {
    EXPECT_EQ(psi(x, 0.0), 0.0);
    for (double y = -15.0; y <= 15.0; y += 0.41) {
      EXPECT_EQ(psi(x, y), psi(y, x));
      EXPECT_NEAR(psi(x, y), log_cosh(x + y) - log_cosh(x) - log_cosh(y), 1e-12);
    }
  }
}

TEST(Psi, CornerAccuracy) {
  // tanh x tanh y close to -1, where a naive log1p loses all digits.
  EXPECT_NEAR(psi(15.0, -15.0), -2.0 * log_cosh(15.0), 1e-12);
  EXPECT_NEAR(psi(-14.95, 15.0), log_cosh(0.05) - log_cosh(14.95) - log_cosh(15.0), 1e-12);
}

TEST(ThetaP, ZerosPsiAndQuadraticBound) {
  const double zeros[3] = {0, 0, 0};
  EXPECT_EQ(theta_p(zeros), 0.0);
  CounterRng rng(5);
  for (int s = 0; s < 2000; ++s) {
    const double x = 6 * rng.uniform() - 3, y = 6 * rng.uniform() - 3;
    const double two[2] = {x, y};
    EXPECT_NEAR(theta_p(two), psi(x, y), 1e-14);
    const double three[3] = {4 * rng.uniform() - 2, 4 * rng.uniform() - 2, 4 * rng.uniform() - 2};
    const double pairs = three[0] * three[1] + three[0] * three[2] + three[1] * three[2];
    const double abs_pairs = std::fabs(three[0] * three[1]) + std::fabs(three[0] * three[2]) + std::fabs(three[1] * three[2]);
    const double squares = three[0] * three[0] + three[1] * three[1] + three[2] * three[2];
    EXPECT_LE(theta_p(three), abs_pairs + 1e-12);
    if (pairs >= 0.0) EXPECT_LE(theta_p(three), pairs + 1e-12);
    EXPECT_LE(theta_p(three), squares + 1e-12);
    EXPECT_LE(pairs, squares);
  }
  const double one[1] = {1.0};
  EXPECT_THROW(theta_p(one), std::invalid_argument);
}

TEST(ThetaP, SignedPairBoundFailsForMixedSigns) {
  const double xs[3] = {1.0, 1.0, -2.0};
  EXPECT_NEAR(theta_p(xs), -2.0 * log_cosh(1.0) - log_cosh(2.0), 1e-14);
  EXPECT_GT(theta_p(xs), -3.0 + 0.5);  // pair sum is -3
}

TEST(InequalitySuite, ValidChecksPassSignedPairBoundDoesNot) {
  const auto rep = scalar_inequality_suite();
  EXPECT_FALSE(rep.passed());
  ASSERT_EQ(rep.checks.size(), 11u);
  for (const auto& c : rep.checks) {
    EXPECT_GT(c.points, 0u) << c.name;
    if (c.name == "theta3_le_pair_sum") {
      EXPECT_GT(c.violations, c.points / 3) << "mixed-sign points should violate";
      EXPECT_GT(c.max_excess, 0.5);
    } else {
      EXPECT_EQ(c.violations, 0u) << c.name << " max excess " << c.max_excess;
    }
  }
  EXPECT_GT(rep.psi_taylor_constant, 0.0);
  EXPECT_LT(rep.psi_taylor_constant, 1.0);
  // Fitted constant actually bounds the remainder on a shifted grid.
  for (double x = -0.997; x <= 1.0; x += 0.0311)
    for (double y = -0.993; y <= 1.0; y += 0.0297)
      EXPECT_LE(std::fabs(psi(x, y) - x * y), rep.psi_taylor_constant * (x * x * y * y + x * x * x * x + y * y * y * y) * 1.01 + 1e-15);
}

TEST(Likelihood, SmallBetaIsOne) {
  const auto ev = evaluator(GibbsModel(1e-9, sample_patterns(50, 2, 1)), 8);
  for (std::uint64_t w = 0; w < 256; w += 5) EXPECT_NEAR(ev.likelihood_word(w), 1.0, 1e-6);
}

TEST(Likelihood, EqualsScaledEnumerationTable) {
  const GibbsModel model(0.6, parse(kInstanceB));
  const auto table = exact_marginal(model, 4);
  const auto ev = evaluator(model, 4);
  for (std::uint64_t w = 0; w < 16; ++w) {
    EXPECT_NEAR(ev.likelihood_word(w), 16.0 * table[w], 1e-8);
    EXPECT_GT(ev.likelihood_word(w), 0.0);
  }
}

TEST(Likelihood, FlipAndPermutationInvariance) {
  const auto xi = sample_patterns(30, 2, 4);
  const auto ev = evaluator(GibbsModel(0.9, xi), 10);
  for (std::uint64_t w = 0; w < 1024; w += 3) EXPECT_NEAR(ev.likelihood_word(w), ev.likelihood_word(~w & 1023u), 1e-12);
  // swap two sites from the same pattern row: L unchanged
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = i + 1; j < 10; ++j) {
      if (xi.row(i) != xi.row(j)) continue;
      for (std::uint64_t w = 0; w < 1024; w += 7) {
        auto s = spins_from_word(w, 10);
        const double before = ev.likelihood_spins(s);
        std::swap(s[i], s[j]);
        EXPECT_NEAR(ev.likelihood_spins(s), before, 1e-13);
      }
    }
}

TEST(Likelihood, GroupCountsSumToK) {
  const auto ev = evaluator(GibbsModel(0.5, sample_patterns(100, 3, 2)), 37);
  std::size_t total = 0;
  for (const auto& c : ev.groups().classes) total += c.count;
  EXPECT_EQ(total, 37u);
  EXPECT_LE(ev.group_count(), 4u);
}

TEST(Likelihood, RejectsBadInput) {
  const auto ev = evaluator(GibbsModel(0.5, sample_patterns(20, 1, 2)), 4);
  EXPECT_THROW(ev.likelihood_spins(std::vector<int>{1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(ev.likelihood_spins(std::vector<int>{1, 1, 0, 1}), std::invalid_argument);
  EXPECT_THROW(ev.likelihood(std::vector<long>{3}), std::invalid_argument);
  EXPECT_THROW(LikelihoodEvaluator(nullptr, 2), std::invalid_argument);
  EXPECT_THROW(evaluator(GibbsModel(0.5, sample_patterns(20, 1, 2)), 21), std::invalid_argument);
}

TEST(Lattice, MeanIsOne) {
  for (std::uint64_t s = 0; s < 8; ++s) {
    const std::size_t n = 200 + 300 * s, m = 1 + s % 2;
    const auto ev = evaluator(GibbsModel(0.3 + 0.1 * static_cast<double>(s), sample_patterns(n, m, s)), n / 4);
    const auto dist = lattice_distribution(ev);
    EXPECT_NEAR(dist.moment(1.0), 1.0, 1e-8);
    EXPECT_LT(dist.error_bar(), 1e-8);
  }
  const auto crit = LikelihoodEvaluator(normalize(MixingMeasureSpec(GibbsModel(1.0, sample_patterns(900, 1, 1)), MixingVariant::critical)), 30);
  EXPECT_NEAR(lattice_distribution(crit).moment(1.0), 1.0, 1e-8);
}

TEST(Lattice, FrozenMomentsAndTv) {
  const auto a = lattice_distribution(evaluator(GibbsModel(0.7, parse(kInstanceA)), 4));
  EXPECT_NEAR(a.moment(1.5), kA_M15, 1e-8);
  EXPECT_NEAR(a.moment(2.0), kA_M2, 1e-8);
  EXPECT_NEAR(a.moment(3.0), kA_M3, 1e-8);
  EXPECT_NEAR(a.centered_abs_moment(3.0), kA_C3, 1e-8);
  EXPECT_NEAR(0.5 * a.centered_abs_moment(1.0), kA_TV, 1e-8);
  const auto evb = evaluator(GibbsModel(0.6, parse(kInstanceB)), 4);
  const auto b = lattice_distribution(evb);
  EXPECT_NEAR(b.moment(1.5), kB_M15, 1e-8);
  EXPECT_NEAR(b.moment(2.0), kB_M2, 1e-8);
  EXPECT_NEAR(b.moment(3.0), kB_M3, 1e-8);
  EXPECT_NEAR(b.centered_abs_moment(3.0), kB_C3, 1e-8);
  EXPECT_NEAR(exact_tv_via_sufficient_stat(evb).value, kB_TV, 1e-8);
  EXPECT_NEAR(uniform_integrability_check(evb, 0.5).value, kB_M15, 1e-6);
}

TEST(Lattice, ExactTvMatchesEnumeration) {
  int checked = 0;
  for (std::size_t n : {6u, 10u, 14u, 18u, 20u})
    for (std::size_t m : {1u, 2u})
      for (std::size_t k : {1u, 3u, 5u, 8u}) {
        if (k > n) continue;
        const GibbsModel model(0.25 + 0.05 * static_cast<double>(n), sample_patterns(n, m, 7 * n + m + k));
        const double exact = tv_distance(exact_marginal(model, k), MarginalTable::uniform(k)).value;
        const auto rep = exact_tv_via_sufficient_stat(evaluator(model, k));
        EXPECT_EQ(rep.method, TVMethod::exact);
        EXPECT_NEAR(rep.value, exact, 1e-8) << n << ' ' << m << ' ' << k;
        ++checked;
      }
  EXPECT_EQ(checked, 38);  // k = 8 skipped at n = 6
}

TEST(Lattice, SmallBetaTvVanishes) {
  EXPECT_LT(exact_tv_via_sufficient_stat(evaluator(GibbsModel(1e-9, sample_patterns(300, 2, 3)), 40)).value, 1e-6);
}

TEST(Lattice, HighTemperatureTvDecreasesWithN) {
  auto tv_at = [](std::size_t n) {
    const auto k = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), 0.4)));
    return exact_tv_via_sufficient_stat(evaluator(GibbsModel(0.5, sample_patterns(n, 1, 12)), k)).value;
  };
  EXPECT_LT(tv_at(4096), tv_at(256));
}

TEST(Lattice, LargeKWithTwoPatterns) {
  const auto ev = evaluator(GibbsModel(0.5, sample_patterns(10000, 2, 3)), 2000);
  const auto dist = lattice_distribution(ev);
  EXPECT_NEAR(dist.moment(1.0), 1.0, 1e-8);
  EXPECT_LT(dist.error_bar(), 1e-8);
}

TEST(Lattice, GroupingLimit) {
  const auto ev = evaluator(GibbsModel(0.5, sample_patterns(200, 3, 2)), 50);
  EXPECT_EQ(ev.group_count(), 4u);
  LatticeOptions opts;
  opts.max_groups = 3;
  EXPECT_THROW(lattice_distribution(ev, opts), GroupingTooLarge);
}

TEST(Moments, KZeroIsOne) {
  const auto ev = evaluator(GibbsModel(0.8, sample_patterns(20, 2, 1)), 0);
  EXPECT_EQ(second_moment(ev).value, 1.0);
  EXPECT_EQ(pth_moment(ev, 3).value, 1.0);
}

TEST(Moments, PEqualOneIsOne) {
  const auto ev = evaluator(GibbsModel(0.8, sample_patterns(40, 1, 1)), 10);
  EXPECT_NEAR(pth_moment(ev, 1).value, 1.0, 1e-8);
  MomentOptions q;
  q.scheme = MomentScheme::quadrature_replica;
  EXPECT_EQ(pth_moment(ev, 1, q).value, 1.0);
}

TEST(Moments, SecondMomentMatchesTableOnSmallInstances) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const std::size_t n = 9 + s, m = 1 + s % 2, k = 2 + s % 6;
    const GibbsModel model(0.3 + 0.08 * static_cast<double>(s), sample_patterns(n, m, 40 + s));
    const double brute = likelihood_moment_from_table(exact_marginal(model, k), 2.0);
    const auto ev = evaluator(model, k);
    const auto r = second_moment(ev);
    EXPECT_EQ(r.method, MomentMethod::exact_enumeration);
    EXPECT_NEAR(r.value, brute, 1e-6);
    EXPECT_GE(r.value, 1.0 - 1e-12);
    EXPECT_NEAR(pth_moment(ev, 2).value, r.value, 0.0);
  }
}

TEST(Moments, ThirdMomentMatchesTable) {
  const GibbsModel model(0.6, parse(kInstanceB));
  const double brute = likelihood_moment_from_table(exact_marginal(model, 4), 3.0);
  EXPECT_NEAR(brute, kB_M3, 1e-12);
  EXPECT_NEAR(pth_moment(evaluator(model, 4), 3).value, brute, 1e-5);
}

TEST(Moments, ReplicaQuadratureAgreesWithLattice) {
  for (std::size_t m : {1u, 2u}) {
    const auto ev = evaluator(GibbsModel(0.7, sample_patterns(60, m, 3)), 12);
    MomentOptions q;
    q.scheme = MomentScheme::quadrature_replica;
    const double lat2 = lattice_distribution(ev).moment(2.0);
    const auto r2 = pth_moment(ev, 2, q);
    EXPECT_EQ(r2.method, MomentMethod::quadrature_replica);
    EXPECT_NEAR(r2.value, lat2, 1e-7);
    if (m == 1) EXPECT_NEAR(pth_moment(ev, 3, q).value, lattice_distribution(ev).moment(3.0), 1e-7);
  }
}

TEST(Moments, ReplicaMonteCarloWithinError) {
  const MixingMeasureSpec spec(GibbsModel(0.6, sample_patterns(300, 2, seed_on_event(300, 2, 0.3))));
  const LikelihoodEvaluator ev(normalize(spec), 60);
  MomentOptions mc;
  mc.scheme = MomentScheme::mc_replica;
  mc.mc_samples = 50000;
  mc.seed = 21;
  const auto r = pth_moment(ev, 2, mc);
  EXPECT_EQ(r.method, MomentMethod::mc_replica);
  EXPECT_GT(r.stderr_, 0.0);
  EXPECT_LT(std::fabs(r.value - lattice_distribution(ev).moment(2.0)), 5.0 * r.stderr_);
}

TEST(Moments, CriticalSecondMomentGapStable) {
  std::vector<double> gap;
  for (std::size_t n : {1000u, 10000u}) {
    const auto k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    const auto ev = LikelihoodEvaluator(normalize(MixingMeasureSpec(GibbsModel(1.0, sample_patterns(n, 1, 2)), MixingVariant::critical)), k);
    gap.push_back(second_moment(ev).value - 1.0);
  }
  EXPECT_GT(gap[0], 0.05);
  EXPECT_GT(gap[1], 0.05);
  EXPECT_LT(std::max(gap[0], gap[1]) / std::min(gap[0], gap[1]), 2.0);
}

TEST(Moments, UniformIntegrabilityBoundedAlongSweep) {
  std::vector<double> values;
  for (std::size_t n : {256u, 1024u, 4096u})
    values.push_back(uniform_integrability_check(evaluator(GibbsModel(0.5, sample_patterns(n, 1, 5)), n / 2), 0.5).value);
  for (double v : values) {
    EXPECT_GT(v, 1.0);
    EXPECT_LT(v, 2.0);
  }
  EXPECT_LT(*std::max_element(values.begin(), values.end()) / *std::min_element(values.begin(), values.end()), 1.2);
  const auto ev = evaluator(GibbsModel(0.5, sample_patterns(400, 1, 5)), 200);
  EXPECT_NEAR(uniform_integrability_check(ev, 1e-6).value, 1.0, 1e-5);
  EXPECT_THROW(uniform_integrability_check(ev, 0.0), std::invalid_argument);
}

TEST(Bounds, HoelderFormula) {
  EXPECT_DOUBLE_EQ(hoelder_lower_bound(0.5, 4.0), 0.03125);
  EXPECT_EQ(hoelder_lower_bound(0.0, 4.0), 0.0);
  EXPECT_THROW(hoelder_lower_bound(0.5, 4.0, 2.0), std::invalid_argument);
  EXPECT_DOUBLE_EQ(chi2_upper_bound(1.16), 0.2);
}

TEST(Bounds, OrderingOnSmallInstances) {
  int checked = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const std::size_t n = 6 + s % 13, m = 1 + s % 2, k = 1 + s % std::min<std::size_t>(n, 7);
    const double beta = 0.15 + 0.1 * static_cast<double>(s % 12);
    const GibbsModel model(beta, sample_patterns(n, m, 900 + s));
    const double exact = tv_distance(exact_marginal(model, k), MarginalTable::uniform(k)).value;
    const auto mix = normalize(MixingMeasureSpec(model));
    const LikelihoodEvaluator ev(mix, k);
    const auto b = tv_bounds(ev);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0].method, TVMethod::chi2_upper);
    EXPECT_EQ(b[1].method, TVMethod::hoelder_lower);
    EXPECT_LE(b[1].raw_value, exact + 1e-10) << s;
    EXPECT_LE(exact, b[0].raw_value + 1e-10) << s;
    EXPECT_LE(exact, pinsker_tv_bound(*mix, k).raw_value + 1e-10) << s;
    EXPECT_LE(b[1].value, b[0].value + 1e-12);  // equal when |L - 1| is constant (k = 1)
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(Bounds, OffLatticeUsesThirdMomentBound) {
  const auto ev = evaluator(GibbsModel(0.6, parse(kInstanceB)), 4);
  MomentOptions q;
  q.scheme = MomentScheme::quadrature_replica;
  const auto b = tv_bounds(ev, q);
  EXPECT_NEAR(b[0].raw_value, 0.5 * std::sqrt(kB_M2 - 1.0), 1e-6);
  EXPECT_NEAR(b[1].raw_value, hoelder_lower_bound(kB_M2 - 1.0, kB_M3 + 1.0), 1e-6);
  EXPECT_LE(b[1].raw_value, kB_TV);
}

TEST(GaussianProxy, Values) {
  EXPECT_EQ(gaussian_proxy_likelihood({0.0, 3}, 17.0), 1.0);
  EXPECT_NEAR(gaussian_proxy_likelihood({1.0, 2}, 2.0), 0.5 * std::exp(0.5), 1e-15);
  EXPECT_NEAR(gaussian_proxy_likelihood({1.0, 2}, 2.0), 0.8243606353500641, 1e-15);
  EXPECT_THROW(gaussian_proxy_likelihood({-1.0, 2}, 2.0), std::invalid_argument);
  const auto p = GaussianProxy::from_model(0.5, 1000, 100, 3);
  EXPECT_DOUBLE_EQ(p.lambda, 0.1);
  EXPECT_THROW(GaussianProxy::from_model(1.0, 10, 1, 1), std::invalid_argument);
}

TEST(GaussianProxy, MeanOneUnderChiSquare) {
  for (std::size_t m : {1u, 2u, 5u}) {
    for (double lambda : {0.1, 0.7, 2.0}) {
      boost::math::chi_squared chi(static_cast<double>(m));
      // substitution x = t^2 removes the x^{-1/2} endpoint singularity at M = 1
      const int steps = 400000;
      const double tmax = 40.0, h = tmax / steps;
      // t -> 0 limit of the integrand is nonzero only for M = 1
      double acc = m == 1 ? 0.5 * 2.0 / std::sqrt(2.0 * std::numbers::pi) * gaussian_proxy_likelihood({lambda, m}, 0.0) : 0.0;
      for (int i = 1; i < steps; ++i) {
        const double t = i * h, x = t * t;
        acc += boost::math::pdf(chi, x) * 2.0 * t * gaussian_proxy_likelihood({lambda, m}, x);
      }
      EXPECT_NEAR(acc * h, 1.0, 1e-6) << m << ' ' << lambda;
    }
  }
}

TEST(GaussianTv, ClosedFormValues) {
  EXPECT_EQ(gaussian_tv(3, 0.0).value, 0.0);
  EXPECT_LT(gaussian_tv(3, 1e-8).value, 1e-6);
  EXPECT_EQ(gaussian_tv(1, 1.0).method, TVMethod::gaussian_limit);
  EXPECT_NEAR(gaussian_tv(1, 1.0).value, 0.16606407498351627, 1e-13);
  EXPECT_NEAR(gaussian_tv(2, 1.0).value, 0.25, 1e-14);
  EXPECT_NEAR(gaussian_tv(2, 0.5).value, 0.14814814814814831, 1e-14);
}

TEST(GaussianTv, MonteCarloCrossCheck) {
  CounterRng rng(77);
  const double r2 = 2.0 * std::numbers::ln2;
  const int draws = 1000000;
  int narrow = 0, wide = 0;
  for (int i = 0; i < draws; ++i) {
    const double z = rng.normal();
    narrow += z * z >= r2;
    wide += 2.0 * z * z >= r2;
  }
  EXPECT_NEAR(static_cast<double>(wide - narrow) / draws, gaussian_tv(1, 1.0).value, 1e-3);
}

TEST(GaussianTv, MonotoneAndSaturating) {
  for (std::size_t m : {1u, 4u, 16u}) {
    double prev = 0.0;
    for (double l = 0.05; l < 10.0; l *= 1.3) {
      const double v = gaussian_tv(m, l).value;
      EXPECT_GT(v, prev);
      prev = v;
    }
  }
  double prev = 0.0;
  for (std::size_t m = 1; m <= 400; ++m) {
    const double v = gaussian_tv(m, 1.0).value;
    EXPECT_GT(v, prev);
    prev = v;
  }
  EXPECT_GT(gaussian_tv(400, 1.0).value, 0.99);
  EXPECT_THROW(gaussian_tv(0, 1.0), std::invalid_argument);
}

TEST(TaylorRemainder, SmallBetaVanishes) {
  const MixingMeasureSpec spec(GibbsModel(1e-6, sample_patterns(200, 2, 1)));
  const auto rep = taylor_remainder_diagnostic(spec, 10, sample_mixing(spec, 2000, 1));
  EXPECT_LT(rep.delta_n.mean, 1e-9);
  EXPECT_LT(rep.delta_k.mean, 1e-9);
  EXPECT_LT(rep.b_n.mean, 1e-9);
}

TEST(TaylorRemainder, DecayAndConstantTracking) {
  std::vector<double> dn, ratio;
  for (std::size_t n : {500u, 2000u, 8000u}) {
    const MixingMeasureSpec spec(GibbsModel(0.5, sample_patterns(n, 2, seed_on_event(n, 2, 0.5))));
    const auto rep = taylor_remainder_diagnostic(spec, 20, sample_mixing(spec, 20000, n));
    dn.push_back(rep.delta_n.mean);
    ratio.push_back(rep.delta_k.mean / rep.predicted_k_scale);
    EXPECT_DOUBLE_EQ(rep.predicted_n_scale, 4.0 / static_cast<double>(n));
  }
  EXPECT_GT(dn[0], dn[1]);
  EXPECT_GT(dn[1], dn[2]);
  const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
  EXPECT_LT(*hi / *lo, 5.0);
}

TEST(ReportCsv, RowsAndHeader) {
  std::ostringstream out;
  write_report_csv_header(out);
  const ReportContext ctx{0.5, 100, 2, 10, 7};
  write_report_csv_row(out, ctx, TVReport::make(1.25, TVMethod::chi2_upper, 0.5));
  write_report_csv_row(out, ctx, MomentReport{2.0, 1.5, MomentMethod::exact_enumeration, 0.0});
  EXPECT_EQ(out.str(),
            "beta,N,M,k,seed,method,value,stderr,raw_value\n"
            "0.5,100,2,10,7,chi2-upper,1,0.5,1.25\n"
            "0.5,100,2,10,7,exact-enumeration:p=2,1.5,0,1.5\n");
}
