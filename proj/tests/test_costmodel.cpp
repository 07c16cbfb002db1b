#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cdsgd/costmodel.hpp"
#include "cdsgd/error.hpp"

namespace cdsgd::cost {
namespace {

CostParams params(double tau, double phi, double psi, double delta, std::uint32_t k) {
  return CostParams{tau, phi, psi, delta, k};
}

// The running example: tau=0.5, delta=0.3, psi=0.5, phi=2, k=4.
const CostParams kExample = params(0.5, 2.0, 0.5, 0.3, 4);

TEST(IterationTimes, Baselines) {
  EXPECT_EQ(t_ssgd(params(2, 3, 0, 0, 1)), 5.0);
  EXPECT_EQ(t_ssgd(params(0, 0, 0, 0, 1)), 0.0);
  EXPECT_EQ(t_ssgd(params(1.5, 0, 0, 0, 1)), 1.5);
  EXPECT_EQ(t_loc(params(2, 3, 0, 0, 1)), 3.0);
  EXPECT_EQ(t_loc(params(3, 2, 0, 0, 1)), 3.0);
  EXPECT_EQ(t_loc(params(2, 2, 0, 0, 1)), 2.0);
  EXPECT_EQ(t_bit(params(2, 0, 1, 0.5, 1)), 3.5);
  EXPECT_EQ(t_bit(params(2, 7, 0, 0, 1)), t_ssgd(params(2, 0, 0, 0, 1)));
  EXPECT_EQ(t_bit(params(0, 0, 0, 0, 1)), 0.0);
}

TEST(IterationTimes, CdsgdCommunicationAndIterationTime) {
  EXPECT_DOUBLE_EQ(comm_cd(1, kExample), 0.8);
  EXPECT_EQ(comm_cd(4, kExample), 2.0);
  EXPECT_EQ(comm_cd(8, kExample), 2.0);
  for (std::uint64_t i = 1; i < 10; ++i) EXPECT_EQ(comm_cd(i, params(1, 3, 1, 1, 1)), 3.0);
  EXPECT_THROW(comm_cd(0, kExample), ConfigError);

  EXPECT_DOUBLE_EQ(t_cd(1, kExample), 0.8);
  EXPECT_DOUBLE_EQ(t_cd(3, kExample), 0.8);
  EXPECT_EQ(t_cd(4, kExample), 2.0);
  const CostParams heavy = params(100, 2, 0.5, 0.3, 4);
  for (std::uint64_t i = 1; i <= 8; ++i) EXPECT_EQ(t_cd(i, heavy), 100.0);
  for (double tau : {0.5, 2.0, 3.0}) {
    const CostParams k1 = params(tau, 2.0, 0.5, 0.3, 1);
    for (std::uint64_t i = 1; i <= 5; ++i) EXPECT_EQ(t_cd(i, k1), t_loc(k1));
  }
}

TEST(AverageTime, Examples) {
  EXPECT_DOUBLE_EQ(avg_cd(kExample), 1.1);
  EXPECT_DOUBLE_EQ(avg_cd(params(0.5, 2.0, 0.5, 0.3, 1)), 2.0);
  EXPECT_DOUBLE_EQ(avg_cd(params(5, 2, 0.5, 0.3, 4)), 5.0);
  // Outside the comm-bound regime the period mean is used.
  EXPECT_DOUBLE_EQ(avg_cd(params(1.0, 2.0, 0.5, 0.3, 4)), (3 * 1.0 + 2.0) / 4);
}

TEST(Savings, BitCases) {
  EXPECT_DOUBLE_EQ(saving_vs_bit(1, kExample), 0.5);            // compressed, comm-bound
  EXPECT_DOUBLE_EQ(saving_vs_bit(4, kExample), 0.5 + 0.8 - 2);  // correction, negative
  EXPECT_LT(saving_vs_bit(4, kExample), 0.0);
  const CostParams compute = params(10, 2, 0.5, 0.3, 4);
  for (std::uint64_t i = 1; i <= 4; ++i) EXPECT_DOUBLE_EQ(saving_vs_bit(i, compute), 0.8);
}

TEST(Savings, LocCases) {
  EXPECT_EQ(saving_vs_loc(1, params(3, 2, 0.5, 0.3, 4)), 0.0);      // tau > phi
  EXPECT_EQ(saving_vs_loc(1, params(1, 2, 0.5, 0.3, 4)), 1.0);      // phi - tau
  EXPECT_DOUBLE_EQ(saving_vs_loc(1, kExample), 2.0 - 0.8);         // phi - delta - psi
  EXPECT_EQ(saving_vs_loc(4, kExample), 0.0);                       // correction, comm-bound
  EXPECT_EQ(saving_vs_loc(4, params(1, 2, 0.5, 0.3, 4)), 0.0);
}

TEST(Savings, CompressionSlowerThanFullPrecision) {
  // delta + psi > tau > phi: compute hides under phi for the local-update
  // baseline but not under the compressed exchange.
  const CostParams p = params(2.0, 1.0, 1.5, 1.0, 4);
  EXPECT_DOUBLE_EQ(saving_vs_loc(1, p), 2.0 - 2.5);
  EXPECT_DOUBLE_EQ(saving_vs_loc(1, p), saving_vs_loc_identity(1, p));
  EXPECT_EQ(saving_vs_loc(4, p), 0.0);
}

TEST(Regime, Classification) {
  EXPECT_EQ(classify_regime(params(3, 2, 0.5, 0.3, 4)), Regime::compute_bound);
  EXPECT_EQ(classify_regime(params(1, 2, 0.5, 0.3, 4)), Regime::comm_bound_compressed);
  EXPECT_EQ(classify_regime(kExample), Regime::comm_bound_always);
  EXPECT_EQ(classify_regime(params(0.8, 2, 0.5, 0.3, 4)), Regime::comm_bound_always);  // tie
  EXPECT_EQ(classify_regime(params(2, 2, 0.5, 0.3, 4)), Regime::comm_bound_compressed);
}

TEST(Validation, RejectsNegativeTimesAndZeroK) {
  EXPECT_THROW(params(-1, 0, 0, 0, 1).validate(), ConfigError);
  EXPECT_THROW(params(0, 0, 0, 0, 0).validate(), ConfigError);
  EXPECT_THROW(params(0, std::nan(""), 0, 0, 1).validate(), ConfigError);
  EXPECT_TRUE(kExample.warnings().empty());
  EXPECT_FALSE(params(1, 1, 2, 0, 1).warnings().empty());
}

// Times on a 1/1024 grid keep every sum and difference exact in binary
// floating point, so case tables and subtraction identities must agree bit
// for bit.
CostParams dyadic(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> units(0, 8 * 1024);
  std::uniform_int_distribution<std::uint32_t> kd(1, 12);
  auto t = [&] { return units(rng) / 1024.0; };
  return params(t(), t(), t(), t(), kd(rng));
}

TEST(Identities, CaseTablesEqualSubtractionOnExactGrid) {
  std::mt19937_64 rng(123);
  for (int n = 0; n < 100000; ++n) {
    const CostParams p = dyadic(rng);
    for (std::uint64_t i = 1; i <= 3ull * p.k; ++i) {
      ASSERT_EQ(saving_vs_bit(i, p), saving_vs_bit_identity(i, p));
      ASSERT_EQ(saving_vs_loc(i, p), saving_vs_loc_identity(i, p));
    }
  }
}

TEST(Identities, CaseTablesAgreeForGeneralDoubles) {
  std::mt19937_64 rng(321);
  std::uniform_real_distribution<double> t(0.0, 10.0);
  std::uniform_int_distribution<std::uint32_t> kd(1, 30);
  for (int n = 0; n < 20000; ++n) {
    const CostParams p = params(t(rng), t(rng), t(rng), t(rng), kd(rng));
    const double scale = std::max({p.tau, p.phi, p.psi + p.delta, 1.0});
    for (std::uint64_t i = 1; i <= 3ull * p.k; ++i) {
      ASSERT_NEAR(saving_vs_bit(i, p), saving_vs_bit_identity(i, p), 1e-12 * scale);
      ASSERT_NEAR(saving_vs_loc(i, p), saving_vs_loc_identity(i, p), 1e-12 * scale);
    }
  }
}

TEST(Identities, CdsgdNeverSlowerThanLocalUpdateWhenCompressionPays) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> t(0.0, 10.0);
  std::uniform_int_distribution<std::uint32_t> kd(1, 30);
  for (int n = 0; n < 50000; ++n) {
    CostParams p = params(t(rng), t(rng), t(rng), t(rng), kd(rng));
    if (p.delta + p.psi > p.phi) std::swap(p.phi, p.psi);
    if (p.delta + p.psi > p.phi) continue;
    for (std::uint64_t i = 1; i <= 2ull * p.k; ++i) ASSERT_GE(saving_vs_loc(i, p), 0.0);
  }
}

TEST(Identities, AverageMatchesClosedFormAndPeriodMean) {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> t(0.0, 10.0);
  std::uniform_int_distribution<std::uint32_t> kd(1, 40);
  int checked = 0;
  for (int n = 0; n < 100000; ++n) {
    const CostParams p = params(t(rng), t(rng), t(rng), t(rng), kd(rng));
    double period = 0.0;
    for (std::uint64_t i = 1; i <= p.k; ++i) period += t_cd(i, p);
    period /= p.k;
    const double avg = avg_cd(p);
    EXPECT_NEAR(avg, period, 1e-12 * std::max(1.0, period));
    if (p.delta + p.psi >= p.tau && p.phi >= p.tau) {
      const double closed = ((p.k - 1) * (p.delta + p.psi) + p.phi) / p.k;
      EXPECT_NEAR(avg, closed, 1e-12 * closed);
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(Identities, AverageNonIncreasingInKWhenCompressionPays) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> t(0.0, 10.0);
  for (int n = 0; n < 5000; ++n) {
    CostParams p = params(t(rng), t(rng), t(rng), t(rng), 1);
    if (!(p.delta + p.psi < p.phi && p.delta + p.psi >= p.tau)) continue;
    double prev = avg_cd(p);
    for (std::uint32_t k = 2; k <= 40; ++k) {
      p.k = k;
      const double cur = avg_cd(p);
      ASSERT_LE(cur, prev + 1e-12 * prev);
      prev = cur;
    }
  }
}

TEST(Timeline, RowsAndCumulativeSums) {
  const auto rows = timeline(kExample, 4);
  ASSERT_EQ(rows.size(), 16u);
  EXPECT_EQ(rows[0].algo, CostAlgo::ssgd);
  EXPECT_EQ(rows[15].algo, CostAlgo::cdsgd);
  EXPECT_DOUBLE_EQ(rows[15].cumulative, 4 * 1.1);
  std::ostringstream csv;
  write_timeline_csv(csv, rows);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "iter,algo,time,cumulative");
}

}  // namespace
}  // namespace cdsgd::cost
