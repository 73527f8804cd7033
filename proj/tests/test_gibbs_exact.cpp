#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "hopchaos/gibbs_exact.hpp"

using namespace hopchaos;

namespace {

PatternMatrix parse(const std::string& text) {
  std::istringstream in(text);
  return read_patterns(in);
}

// Twelve sites, two patterns; frozen values below come from an independent
// brute-force enumeration in double precision.
const char* kInstanceA = "12 2 0\n++\n+-\n-+\n++\n--\n+-\n++\n-+\n+-\n++\n-+\n--\n";
constexpr double kLogZA = 9.3028107451538489;  // beta = 0.7
constexpr double kTableA[16] = {0.060225679368523619, 0.040929401720540347, 0.088619239542412631, 0.060225679368523556,
                                0.088619239542412701, 0.060225679368523632, 0.060225679368523619, 0.040929401720540347,
                                0.040929401720540347, 0.060225679368523612, 0.060225679368523556, 0.088619239542412756,
                                0.060225679368523632, 0.088619239542412756, 0.040929401720540347, 0.060225679368523612};
constexpr double kTvA = 0.10447695816965032;

}  // namespace

TEST(Overlap, AllPlusSinglePattern) {
  const auto xi = parse("3 1 0\n+\n+\n+\n");
  EXPECT_EQ(overlap(std::vector<int>{1, 1, 1}, xi), std::vector<double>{1.0});
}

TEST(Overlap, OrthogonalDesignGivesZero) {
  const auto xi = parse("4 2 0\n++\n+-\n-+\n--\n");
  const auto m = overlap(std::vector<int>{1, 1, 1, 1}, xi);
  EXPECT_EQ(m[0], 0.0);
  EXPECT_EQ(m[1], 0.0);
}

TEST(Overlap, OddAndBounded) {
  const auto xi = sample_patterns(9, 3, 2);
  for (std::uint64_t w = 0; w < 512; w += 7) {
    auto s = spins_from_word(w, 9);
    const auto m = overlap(s, xi);
    for (int& v : s) v = -v;
    const auto mneg = overlap(s, xi);
    for (std::size_t nu = 0; nu < 3; ++nu) {
      EXPECT_EQ(m[nu], -mneg[nu]);
      EXPECT_LE(std::fabs(m[nu]), 1.0);
    }
  }
}

TEST(Overlap, RejectsInvalidConfig) {
  const auto xi = sample_patterns(3, 1, 1);
  EXPECT_THROW(overlap(std::vector<int>{1, 1}, xi), std::invalid_argument);
  EXPECT_THROW(overlap(std::vector<int>{1, 0, 1}, xi), std::invalid_argument);
}

TEST(GibbsWeight, HandEvaluation) {
  const GibbsModel model(1.0, parse("2 1 0\n+\n+\n"));
  EXPECT_DOUBLE_EQ(gibbs_log_weight(model, std::vector<int>{1, 1}), 1.0);
}

TEST(GibbsWeight, ZeroBetaAndFlipInvariance) {
  const auto xi = sample_patterns(8, 2, 3);
  const GibbsModel zero(0.0, xi), model(0.8, xi);
  for (std::uint64_t w = 0; w < 256; ++w) {
    const auto s = spins_from_word(w, 8);
    EXPECT_EQ(gibbs_log_weight(zero, s), 0.0);
    EXPECT_DOUBLE_EQ(gibbs_log_weight(model, s), gibbs_log_weight(model, spins_from_word(~w & 0xffu, 8)));
  }
}

TEST(GibbsModel, RejectsNegativeOrNonFiniteBeta) {
  const auto xi = sample_patterns(3, 1, 1);
  EXPECT_THROW(GibbsModel(-0.1, xi), std::invalid_argument);
  EXPECT_THROW(GibbsModel(std::nan(""), xi), std::invalid_argument);
}

TEST(PartitionFunction, ZeroBeta) {
  const GibbsModel model(0.0, sample_patterns(11, 2, 4));
  EXPECT_NEAR(log_partition_function(model), 11 * std::numbers::ln2, 1e-12);
}

TEST(PartitionFunction, TwoSiteHandSum) {
  const GibbsModel model(1.0, parse("2 1 0\n+\n+\n"));
  EXPECT_NEAR(log_partition_function(model), std::log(2.0 * std::exp(1.0) + 2.0), 1e-14);
}

TEST(PartitionFunction, FrozenEnumerationValue) {
  const GibbsModel model(0.7, parse(kInstanceA));
  EXPECT_NEAR(log_partition_function(model), kLogZA, 1e-12);
}

TEST(PartitionFunction, ExcessGrowsWithBeta) {
  const auto xi = sample_patterns(14, 2, 5);
  double previous = 0.0;
  for (double beta : {0.1, 0.2, 0.4, 0.8, 1.6}) {
    const double excess = log_partition_function(GibbsModel(beta, xi)) - 14 * std::numbers::ln2;
    EXPECT_GE(excess, previous);
    previous = excess;
  }
}

TEST(PartitionFunction, RefusesAboveCap) {
  const GibbsModel model(0.5, sample_patterns(25, 1, 1));
  try {
    log_partition_function(model);
    FAIL() << "expected refusal";
  } catch (const CapExceeded& e) {
    EXPECT_NE(std::string(e.what()).find("hs_mixture"), std::string::npos);
  }
  EXPECT_NO_THROW(log_partition_function(model, EnumerationLimits{26, 20}));
}

TEST(ExactMarginal, FrozenTableAndTv) {
  const GibbsModel model(0.7, parse(kInstanceA));
  const auto table = exact_marginal(model, 4);
  ASSERT_EQ(table.size(), 16u);
  for (std::size_t w = 0; w < 16; ++w) EXPECT_NEAR(table[w], kTableA[w], 1e-14);
  EXPECT_NEAR(tv_distance(table, MarginalTable::uniform(4)).value, kTvA, 1e-14);
}

TEST(ExactMarginal, SingleSiteIsUniform) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto t = exact_marginal(GibbsModel(0.9, sample_patterns(10, 2, s)), 1);
    EXPECT_NEAR(t[0], 0.5, 1e-15);
    EXPECT_NEAR(t[1], 0.5, 1e-15);
  }
}

TEST(ExactMarginal, ZeroBetaIsUniform) {
  const auto t = exact_marginal(GibbsModel(0.0, sample_patterns(10, 3, 1)), 5);
  for (double p : t.probabilities) EXPECT_NEAR(p, 1.0 / 32.0, 1e-16);
}

TEST(ExactMarginal, InvariantsOnRandomModels) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto xi = sample_patterns(11 + s % 4, 1 + s % 3, s);
    const GibbsModel model(0.3 + 0.1 * static_cast<double>(s), xi);
    const auto t5 = exact_marginal(model, 5);
    const auto t4 = exact_marginal(model, 4);
    double sum = 0.0;
    for (std::size_t w = 0; w < t5.size(); ++w) {
      EXPECT_GE(t5[w], 0.0);
      sum += t5[w];
      EXPECT_NEAR(t5[w], t5[~w & 31u], 1e-15);  // spin flip
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    const auto m = marginalize(t5, 4);
    for (std::size_t w = 0; w < 16; ++w) EXPECT_NEAR(m[w], t4[w], 1e-15);
    const GibbsModel flipped(model.beta(), xi.with_column_negated(0));
    EXPECT_NEAR(log_partition_function(flipped), log_partition_function(model), 1e-12);
    const auto tf = exact_marginal(flipped, 4);
    for (std::size_t w = 0; w < 16; ++w) EXPECT_NEAR(tf[w], t4[w], 1e-15);
  }
}

TEST(ExactMarginal, GrayCodeMatchesDirectSum) {
  const auto xi = sample_patterns(9, 2, 77);
  const GibbsModel model(0.9, xi);
  std::vector<double> direct(8, 0.0);
  double z = 0.0;
  for (std::uint64_t w = 0; w < 512; ++w) {
    const double weight = std::exp(gibbs_log_weight(model, spins_from_word(w, 9)));
    direct[w & 7u] += weight;
    z += weight;
  }
  const auto t = exact_marginal(model, 3);
  for (std::size_t w = 0; w < 8; ++w) EXPECT_NEAR(t[w], direct[w] / z, 1e-14);
  EXPECT_NEAR(log_partition_function(model), std::log(z), 1e-12);
}

TEST(ExactMarginal, ChunkedEnumerationMatchesSingleThread) {
  const GibbsModel model(1.0, sample_patterns(18, 2, 3));
  const auto a = exact_marginal(model, 3);
  const unsigned prev = default_thread_count();
  set_default_thread_count(4);
  const auto b = exact_marginal(model, 3);
  set_default_thread_count(prev);
  for (std::size_t w = 0; w < 8; ++w) EXPECT_EQ(a[w], b[w]);
}

TEST(ExactMarginal, RejectsBadK) {
  const GibbsModel model(0.5, sample_patterns(10, 1, 1));
  EXPECT_THROW(exact_marginal(model, 0), std::invalid_argument);
  EXPECT_THROW(exact_marginal(model, 11), std::invalid_argument);
  const GibbsModel big(0.5, sample_patterns(22, 1, 1));
  EXPECT_THROW(exact_marginal(big, 21), CapExceeded);
}

TEST(TvDistance, Basics) {
  const MarginalTable p{2, {0.4, 0.1, 0.1, 0.4}};
  EXPECT_NEAR(tv_distance(p, MarginalTable::uniform(2)).value, 0.3, 1e-15);
  EXPECT_EQ(tv_distance(p, p).value, 0.0);
  const MarginalTable a{2, {1, 0, 0, 0}}, b{2, {0, 0, 1, 0}};
  EXPECT_EQ(tv_distance(a, b).value, 1.0);
  EXPECT_EQ(tv_distance(a, b).method, TVMethod::exact);
  EXPECT_THROW(tv_distance(p, MarginalTable::uniform(3)), std::invalid_argument);
}

TEST(TvDistance, SymmetricAndTriangle) {
  const auto xi = sample_patterns(12, 2, 9);
  const auto p = exact_marginal(GibbsModel(0.4, xi), 4);
  const auto q = exact_marginal(GibbsModel(0.9, xi), 4);
  const auto r = MarginalTable::uniform(4);
  EXPECT_DOUBLE_EQ(tv_distance(p, q).value, tv_distance(q, p).value);
  EXPECT_LE(tv_distance(p, r).value, tv_distance(p, q).value + tv_distance(q, r).value + 1e-15);
}

TEST(MarginalCsv, FixedFormat) {
  std::ostringstream out;
  write_marginal_csv(out, MarginalTable{1, {0.25, 0.75}});
  EXPECT_EQ(out.str(), "word,probability\n0,0.25\n1,0.75\n");
}

TEST(SpinWords, RoundTrip) {
  for (std::uint64_t w = 0; w < 64; ++w) EXPECT_EQ(word_from_spins(spins_from_word(w, 6)), w);
  EXPECT_EQ(spins_from_word(1, 3), (SpinConfig{1, -1, -1}));
}
