#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace agestd;

namespace {

SchedulePtr three_groups() { return make_schedule(AgeSchedule({"0-29", "30-59", "60+"})); }

Population toy(const std::string& id, std::vector<double> m, std::vector<double> n) {
  const auto s = three_groups();
  return Population(id, RateVector(s, std::move(m)), PopulationStructure::from_proportions(s, std::move(n)));
}

}  // namespace

TEST(AgeSchedule, StandardHas18AscendingGroups) {
  const auto s = AgeSchedule::standard18();
  ASSERT_EQ(s.size(), 18u);
  EXPECT_EQ(s.label(0), "1-4");
  EXPECT_EQ(s.label(17), "85+");
  EXPECT_EQ(s.index_of("40-44"), 8u);
  EXPECT_THROW(s.index_of("0"), RangeError);
}

TEST(AgeSchedule, RejectsUnorderedOrMalformedLabels) {
  EXPECT_THROW(AgeSchedule({"5-9", "1-4"}), DomainError);
  EXPECT_THROW(AgeSchedule({"1-4", "1-4"}), DomainError);
  EXPECT_THROW(AgeSchedule({"young"}), DomainError);
  EXPECT_THROW(AgeSchedule({"10-5"}), DomainError);
}

TEST(AgeWindow, DefaultCoversEightGroups) {
  const auto b = AgeWindow{}.resolve(AgeSchedule::standard18());
  EXPECT_EQ(b.end - b.begin, 8u);
  EXPECT_THROW((AgeWindow{"75-79", "40-44"}.resolve(AgeSchedule::standard18())), RangeError);
}

TEST(Structure, ProportionsOutsideBandRejected) {
  const auto s = three_groups();
  EXPECT_THROW(PopulationStructure::from_proportions(s, {0.5, 0.3, 0.17}), DomainError);
  EXPECT_THROW(PopulationStructure::from_proportions(s, {0.5, -0.1, 0.6}), DomainError);
  EXPECT_THROW(PopulationStructure::from_proportions(s, {0.5, 0.5}), AlignmentError);
  const auto n = PopulationStructure::from_proportions(s, {0.502, 0.3, 0.2});
  EXPECT_NEAR(n[0] + n[1] + n[2], 1.0, 1e-15);
}

TEST(Structure, NormalizationIsIdempotent) {
  const auto s = three_groups();
  const auto n = PopulationStructure::from_counts(s, {3.0, 7.0, 11.0});
  const auto again = PopulationStructure::from_proportions(s, {n[0], n[1], n[2]});
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(n[a], again[a]);
}

TEST(Structure, AllZeroCountsRejected) {
  EXPECT_THROW(PopulationStructure::from_counts(three_groups(), {0, 0, 0}), DomainError);
}

TEST(Rates, NegativeOrNonFiniteRatesRejected) {
  const auto s = three_groups();
  EXPECT_THROW(RateVector(s, {1, -1, 2}), DomainError);
  EXPECT_THROW(RateVector(s, {1, NAN, 2}), DomainError);
  EXPECT_THROW(RateVector(s, {1, 2}), AlignmentError);
}

TEST(Rates, AdjustedRateToyExample) {
  const auto s = three_groups();
  const RateVector m(s, {10, 20, 30});
  EXPECT_DOUBLE_EQ(age_adjusted_rate(m, PopulationStructure::from_proportions(s, {0.5, 0.3, 0.2})), 17.0);
  EXPECT_DOUBLE_EQ(age_adjusted_rate(m, PopulationStructure::from_weights(s, {1.0 / 3, 1.0 / 3, 1.0 / 3})),
                   20.0);
}

TEST(Rates, ScheduleMismatchIsAlignmentError) {
  const auto other = make_schedule(AgeSchedule({"0-9", "10-59", "60+"}));
  const RateVector m(three_groups(), {1, 2, 3});
  EXPECT_THROW(age_adjusted_rate(m, PopulationStructure::from_counts(other, {1, 1, 1})), AlignmentError);
}

TEST(Rates, CrudeEqualsOwnAdjustment) {
  const auto p = toy("a", {5, 40, 300}, {0.6, 0.3, 0.1});
  EXPECT_DOUBLE_EQ(crude_rate(p), age_adjusted_rate(p.rates(), p.structure()));
  EXPECT_DOUBLE_EQ(crude_rate(p), 5 * 0.6 + 40 * 0.3 + 300 * 0.1);
}

TEST(Rates, LinearityInRatesAndWeights) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 100);
  const auto s = make_schedule(AgeSchedule::standard18());
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> m1(18), m2(18), w(18), sum(18);
    for (std::size_t a = 0; a < 18; ++a) {
      m1[a] = u(rng), m2[a] = u(rng), w[a] = u(rng);
      sum[a] = 2.5 * m1[a] + m2[a];
    }
    const double lhs = weighted_rate(RateVector(s, sum), w);
    const double rhs = 2.5 * weighted_rate(RateVector(s, m1), w) + weighted_rate(RateVector(s, m2), w);
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(rhs));
  }
}

TEST(Rates, AdjustedRateBoundedByExtremeRates) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  const auto s = make_schedule(AgeSchedule::standard18());
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> m(18), n(18);
    for (std::size_t a = 0; a < 18; ++a) m[a] = 1000 * u(rng), n[a] = u(rng);
    const auto ref = PopulationStructure::from_counts(s, n);
    const double r = age_adjusted_rate(RateVector(s, m), ref);
    EXPECT_GE(r, *std::min_element(m.begin(), m.end()) - 1e-9);
    EXPECT_LE(r, *std::max_element(m.begin(), m.end()) + 1e-9);
  }
}

TEST(Rates, CumulativeSumsDefaultWindow) {
  const auto s = make_schedule(AgeSchedule::standard18());
  std::vector<double> m(18);
  for (std::size_t a = 0; a < 18; ++a) m[a] = static_cast<double>(a);
  // groups 40-44 .. 75-79 are indices 8..15
  EXPECT_DOUBLE_EQ(cumulative_rate(RateVector(s, m)), 8 + 9 + 10 + 11 + 12 + 13 + 14 + 15);
  EXPECT_DOUBLE_EQ(cumulative_rate(RateVector(s, m), AgeWindow{"85+", "85+"}), 17.0);
  EXPECT_THROW(cumulative_rate(RateVector(s, m), AgeWindow{"40-44", "90-94"}), RangeError);
}

TEST(Rates, ExpectedDeathsAndExposure) {
  EXPECT_DOUBLE_EQ(expected_deaths(15.54, 1e5), 15.54);
  EXPECT_DOUBLE_EQ(expected_deaths(0.0, 123.0), 0.0);
  EXPECT_THROW(expected_deaths(-1.0, 1.0), DomainError);
  EXPECT_NEAR(exposure_from_observed(7760, 15.54), 7760 / 15.54 * 1e5, 1e-6);
  EXPECT_DOUBLE_EQ(exposure_from_observed(0, 0), 0.0);
  EXPECT_THROW(exposure_from_observed(5, 0), DomainError);
}

TEST(Rates, RelativeDeviation) {
  EXPECT_DOUBLE_EQ(*relative_deviation(29.66, 15.54), 100.0 * (29.66 - 15.54) / 15.54);
  EXPECT_DOUBLE_EQ(*relative_deviation(3.0, 3.0), 0.0);
  EXPECT_FALSE(relative_deviation(1.0, 0.0).has_value());
  EXPECT_THROW(relative_deviation(1.0, -1.0), DomainError);
}

TEST(Rates, MeanDeviationIsRootMeanSquare) {
  const StudyMatrix s({toy("a", {1, 2, 3}, {0.5, 0.3, 0.2}), toy("b", {4, 1, 10}, {0.2, 0.2, 0.6})});
  const std::vector<double> w{0.3, 0.3, 0.4};
  const double b1 = (0.3 + 0.6 + 1.2) - (0.5 + 0.6 + 0.6);
  const double b2 = (1.2 + 0.3 + 4.0) - (0.8 + 0.2 + 6.0);
  EXPECT_NEAR(mean_deviation(s, w), std::sqrt((b1 * b1 + b2 * b2) / 2), 1e-12);
  const auto rep = deviation_report(s, w);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_NEAR(rep.rows[1].absolute_deviation, b2, 1e-12);
  EXPECT_DOUBLE_EQ(rep.mean_deviation, mean_deviation(s, w));
}

TEST(Rates, OwnReferenceGivesZeroDeviationForSinglePopulation) {
  const StudyMatrix s({toy("a", {1, 2, 3}, {0.5, 0.3, 0.2})});
  EXPECT_EQ(mean_deviation(s, s[0].structure()), 0.0);
}

TEST(Rates, EqualFootingIdenticalRatesGiveIdenticalAdjustedRates) {
  // Same age-specific rates, very different structures: crude rates differ,
  // adjusted rates under a common reference do not.
  const auto a = toy("a", {1, 10, 100}, {0.7, 0.2, 0.1});
  const auto b = toy("b", {1, 10, 100}, {0.1, 0.2, 0.7});
  EXPECT_NE(crude_rate(a), crude_rate(b));
  const auto ref = PopulationStructure::from_proportions(three_groups(), {0.4, 0.4, 0.2});
  EXPECT_EQ(age_adjusted_rate(a.rates(), ref), age_adjusted_rate(b.rates(), ref));
}

TEST(Rates, UnbiasednessFromRawCounts) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  const auto s = make_schedule(AgeSchedule::standard18());
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> d(18), e(18);
    for (std::size_t a = 0; a < 18; ++a) {
      e[a] = std::floor(1e6 * u(rng)) + (u(rng) < 0.1 ? 0 : 1);
      d[a] = std::floor(e[a] * 0.01 * u(rng));
    }
    const auto p = Population::from_counts("x", s, d, e);
    double total_d = 0, total_e = 0;
    for (std::size_t a = 0; a < 18; ++a) total_d += d[a], total_e += e[a];
    EXPECT_NEAR(expected_deaths(crude_rate(p), total_e), total_d, 1e-9 * std::max(1.0, total_d));
  }
}

TEST(Population, ValidatesCountsAndSchedules) {
  const auto s = three_groups();
  const auto other = make_schedule(AgeSchedule({"0-9", "10-59", "60+"}));
  EXPECT_THROW(Population("x", RateVector(s, {1, 1, 1}), PopulationStructure::from_counts(other, {1, 1, 1})),
               AlignmentError);
  EXPECT_THROW(Population("x", RateVector(s, {1, 1, 1}), PopulationStructure::from_counts(s, {1, 1, 1}), 10.0, 20.0),
               DomainError);
  EXPECT_THROW(StudyMatrix({}), DomainError);
}

TEST(Fixtures, Us2000FirstProportion) {
  const auto n = fixtures::us2000();
  // Independent sum of the published US 2000 counts (thousands).
  const double counts[] = {15191.6, 19919.8, 20056.8, 19819.5, 18257.2, 17722.0, 19511.4, 22180.0, 22479.2,
                           19805.8, 17224.4, 13307.2, 10654.2, 9409.9,  8725.6,  7414.6, 4900.2, 4259.2};
  double sum = 0;
  for (double c : counts) sum += c;
  EXPECT_NEAR(n[0], 15191.6 / sum, 1e-12);
}
