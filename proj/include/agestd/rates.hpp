#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agestd/age_schedule.hpp"
#include "agestd/errors.hpp"

namespace agestd {

/// Every rate in this library is expressed per 10^5 person-years.
inline constexpr double kRateUnit = 1.0e5;

/// Proportion columns whose sum lies in this band are renormalized to 1;
/// anything outside is rejected. Published proportions are rounded to three
/// decimals, which moves the column sums by up to about 0.005.
inline constexpr double kProportionSumBand = 0.01;

using SchedulePtr = std::shared_ptr<const AgeSchedule>;

inline SchedulePtr make_schedule(AgeSchedule schedule) {
  return std::make_shared<const AgeSchedule>(std::move(schedule));
}

namespace detail {

inline constexpr double kRenormalizeSlack = 1e-14;

inline bool same_schedule(const SchedulePtr& a, const SchedulePtr& b) {
  return a == b || (a && b && *a == *b);
}

inline void require_same_schedule(const SchedulePtr& a, const SchedulePtr& b,
                                  const std::string& what) {
  if (!same_schedule(a, b)) throw AlignmentError(what + ": age schedules differ");
}

inline void require_length(const SchedulePtr& schedule, std::size_t n, const char* what) {
  if (!schedule) throw AlignmentError(std::string(what) + ": missing age schedule");
  if (n != schedule->size())
    throw AlignmentError(std::string(what) + ": expected " + std::to_string(schedule->size()) +
                         " age groups, got " + std::to_string(n));
}

inline void require_nonnegative_finite(std::span<const double> values, const char* what) {
  for (std::size_t a = 0; a < values.size(); ++a) {
    if (!std::isfinite(values[a]) || values[a] < 0.0)
      throw DomainError(std::string(what) + ": entry " + std::to_string(a + 1) +
                        " is negative or not finite");
  }
}

}  // namespace detail

/// Age-specific rates m_1..m_A of one population.
class RateVector {
 public:
  RateVector(SchedulePtr schedule, std::vector<double> rates)
      : schedule_(std::move(schedule)), rates_(std::move(rates)) {
    detail::require_length(schedule_, rates_.size(), "rate vector");
    detail::require_nonnegative_finite(rates_, "rate vector");
  }

  const SchedulePtr& schedule() const noexcept { return schedule_; }
  std::span<const double> values() const noexcept { return rates_; }
  std::size_t size() const noexcept { return rates_.size(); }
  double operator[](std::size_t a) const { return rates_[a]; }

 private:
  SchedulePtr schedule_;
  std::vector<double> rates_;
};

/// Age-group proportions n_1..n_A of one population (nonnegative, summing to 1).
class PopulationStructure {
 public:
  /// Proportions as published: the sum must lie within 1 +- kProportionSumBand
  /// and is then renormalized to 1. Columns already summing to 1 within
  /// rounding are kept as-is so that normalization is idempotent.
  static PopulationStructure from_proportions(SchedulePtr schedule, std::vector<double> values) {
    detail::require_length(schedule, values.size(), "population structure");
    detail::require_nonnegative_finite(values, "population structure");
    const double sum = std::accumulate(values.begin(), values.end(), 0.0);
    if (std::abs(sum - 1.0) > kProportionSumBand)
      throw DomainError("population structure sums to " + std::to_string(sum) +
                        ", outside 1 +- " + std::to_string(kProportionSumBand));
    if (std::abs(sum - 1.0) > detail::kRenormalizeSlack)
      for (auto& v : values) v /= sum;
    return PopulationStructure(std::move(schedule), std::move(values));
  }

  /// Head counts or person-years: divided by their total.
  static PopulationStructure from_counts(SchedulePtr schedule, std::vector<double> counts) {
    detail::require_length(schedule, counts.size(), "population counts");
    detail::require_nonnegative_finite(counts, "population counts");
    const double sum = std::accumulate(counts.begin(), counts.end(), 0.0);
    if (!(sum > 0.0)) throw DomainError("population counts are all zero");
    if (std::abs(sum - 1.0) > detail::kRenormalizeSlack)
      for (auto& v : counts) v /= sum;
    return PopulationStructure(std::move(schedule), std::move(counts));
  }

  /// Weights taken as-is, without renormalization. Used for convex
  /// combinations, whose sum is 1 up to `sum_tolerance`.
  static PopulationStructure from_weights(SchedulePtr schedule, std::vector<double> weights,
                                          double sum_tolerance = 1e-6) {
    detail::require_length(schedule, weights.size(), "population structure");
    detail::require_nonnegative_finite(weights, "population structure");
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(sum - 1.0) > sum_tolerance)
      throw DomainError("population structure sums to " + std::to_string(sum));
    return PopulationStructure(std::move(schedule), std::move(weights));
  }

  const SchedulePtr& schedule() const noexcept { return schedule_; }
  std::span<const double> values() const noexcept { return proportions_; }
  std::size_t size() const noexcept { return proportions_.size(); }
  double operator[](std::size_t a) const { return proportions_[a]; }

 private:
  PopulationStructure(SchedulePtr schedule, std::vector<double> proportions)
      : schedule_(std::move(schedule)), proportions_(std::move(proportions)) {}

  SchedulePtr schedule_;
  std::vector<double> proportions_;
};

/// One population of a study: its rates m_i and its own structure n_i.
class Population {
 public:
  Population(std::string id, RateVector rates, PopulationStructure structure,
             std::optional<double> total_exposure = std::nullopt,
             std::optional<double> observed_deaths = std::nullopt)
      : id_(std::move(id)),
        rates_(std::move(rates)),
        structure_(std::move(structure)),
        total_exposure_(total_exposure),
        observed_deaths_(observed_deaths) {
    detail::require_same_schedule(rates_.schedule(), structure_.schedule(),
                                  "population '" + id_ + "'");
    if (total_exposure_ && !(*total_exposure_ >= 0.0))
      throw DomainError("population '" + id_ + "': negative exposure");
    if (observed_deaths_ && !(*observed_deaths_ >= 0.0))
      throw DomainError("population '" + id_ + "': negative death count");
    if (total_exposure_ && observed_deaths_ && *observed_deaths_ > *total_exposure_)
      throw DomainError("population '" + id_ + "': more deaths than person-years");
  }

  /// Builds rates and structure from raw deaths and person-years per age group.
  /// Groups with zero exposure get rate 0.
  static Population from_counts(std::string id, SchedulePtr schedule,
                                std::span<const double> deaths,
                                std::span<const double> exposure) {
    detail::require_length(schedule, deaths.size(), "death counts");
    detail::require_length(schedule, exposure.size(), "exposures");
    detail::require_nonnegative_finite(deaths, "death counts");
    detail::require_nonnegative_finite(exposure, "exposures");
    std::vector<double> rates(deaths.size());
    for (std::size_t a = 0; a < deaths.size(); ++a)
      rates[a] = exposure[a] > 0.0 ? deaths[a] / exposure[a] * kRateUnit : 0.0;
    const double total = std::accumulate(exposure.begin(), exposure.end(), 0.0);
    const double dead = std::accumulate(deaths.begin(), deaths.end(), 0.0);
    auto structure =
        PopulationStructure::from_counts(schedule, std::vector<double>(exposure.begin(), exposure.end()));
    return Population(std::move(id), RateVector(schedule, std::move(rates)), std::move(structure),
                      total, dead);
  }

  const std::string& id() const noexcept { return id_; }
  const RateVector& rates() const noexcept { return rates_; }
  const PopulationStructure& structure() const noexcept { return structure_; }
  const SchedulePtr& schedule() const noexcept { return rates_.schedule(); }
  std::optional<double> total_exposure() const noexcept { return total_exposure_; }
  std::optional<double> observed_deaths() const noexcept { return observed_deaths_; }

 private:
  std::string id_;
  RateVector rates_;
  PopulationStructure structure_;
  std::optional<double> total_exposure_;
  std::optional<double> observed_deaths_;
};

/// p populations on one age schedule; the columns of the rate matrix M and
/// the structure matrix N.
class StudyMatrix {
 public:
  explicit StudyMatrix(std::vector<Population> populations)
      : populations_(std::move(populations)) {
    if (populations_.empty()) throw DomainError("study needs at least one population");
    for (const auto& pop : populations_)
      detail::require_same_schedule(populations_.front().schedule(), pop.schedule(), "study");
  }

  std::size_t size() const noexcept { return populations_.size(); }
  std::size_t age_groups() const noexcept { return schedule()->size(); }
  const SchedulePtr& schedule() const noexcept { return populations_.front().schedule(); }
  const Population& operator[](std::size_t i) const { return populations_[i]; }
  const std::vector<Population>& populations() const noexcept { return populations_; }
  auto begin() const noexcept { return populations_.begin(); }
  auto end() const noexcept { return populations_.end(); }

 private:
  std::vector<Population> populations_;
};

// --- rate arithmetic --------------------------------------------------------

/// sum_a m_a w_a for arbitrary weights (a proportion vector, an indicator
/// window, an unnormalized combination).
inline double weighted_rate(const RateVector& rates, std::span<const double> weights) {
  if (weights.size() != rates.size())
    throw AlignmentError("weights have " + std::to_string(weights.size()) + " entries, rates " +
                         std::to_string(rates.size()));
  double sum = 0.0;
  for (std::size_t a = 0; a < weights.size(); ++a) sum += rates[a] * weights[a];
  return sum;
}

inline double age_adjusted_rate(const RateVector& rates, const PopulationStructure& reference) {
  detail::require_same_schedule(rates.schedule(), reference.schedule(), "age-adjusted rate");
  return weighted_rate(rates, reference.values());
}

/// The population's rates weighted by its own structure.
inline double crude_rate(const Population& pop) {
  return age_adjusted_rate(pop.rates(), pop.structure());
}

/// Unweighted sum of age-specific rates over a contiguous window
/// (40-44 through 75-79 by default). Not a weighted average.
inline double cumulative_rate(const RateVector& rates, const AgeWindow& window = {}) {
  const auto [b, e] = window.resolve(*rates.schedule());
  double sum = 0.0;
  for (std::size_t a = b; a < e; ++a) sum += rates[a];
  return sum;
}

inline double expected_deaths(double rate, double total_exposure) {
  if (!(rate >= 0.0) || !(total_exposure >= 0.0))
    throw DomainError("expected deaths need a nonnegative rate and exposure");
  return rate * total_exposure / kRateUnit;
}

/// Person-years implied by an observed death count and the rate that
/// produced it.
inline double exposure_from_observed(double observed_deaths, double crude) {
  if (!(observed_deaths >= 0.0)) throw DomainError("observed deaths must be nonnegative");
  if (!(crude > 0.0)) {
    if (observed_deaths == 0.0) return 0.0;
    throw DomainError("cannot reconstruct exposure from a zero crude rate");
  }
  return observed_deaths / crude * kRateUnit;
}

/// 100 (adjusted - crude) / crude. Missing when the crude rate is zero.
inline std::optional<double> relative_deviation(double adjusted, double crude) {
  if (crude < 0.0 || !std::isfinite(crude)) throw DomainError("crude rate must be nonnegative");
  if (crude == 0.0) return std::nullopt;
  return 100.0 * (adjusted - crude) / crude;
}

inline std::vector<double> crude_rates(const StudyMatrix& study) {
  std::vector<double> out;
  out.reserve(study.size());
  for (const auto& pop : study) out.push_back(crude_rate(pop));
  return out;
}

/// Root-mean-square of (adjusted - crude) over the study, for a raw weight
/// vector over age groups.
inline double mean_deviation(const StudyMatrix& study, std::span<const double> reference_weights) {
  double ss = 0.0;
  for (const auto& pop : study) {
    const double b = weighted_rate(pop.rates(), reference_weights) - crude_rate(pop);
    ss += b * b;
  }
  return std::sqrt(ss / static_cast<double>(study.size()));
}

inline double mean_deviation(const StudyMatrix& study, const PopulationStructure& reference) {
  detail::require_same_schedule(study.schedule(), reference.schedule(), "mean deviation");
  return mean_deviation(study, reference.values());
}

struct DeviationRow {
  std::string id;
  double adjusted_rate = 0.0;
  double crude_rate = 0.0;
  double absolute_deviation = 0.0;
  std::optional<double> relative_deviation_pct;
};

struct DeviationReport {
  std::vector<DeviationRow> rows;
  double mean_deviation = 0.0;
};

inline DeviationReport deviation_report(const StudyMatrix& study,
                                        std::span<const double> reference_weights) {
  DeviationReport report;
  report.rows.reserve(study.size());
  double ss = 0.0;
  for (const auto& pop : study) {
    DeviationRow row;
    row.id = pop.id();
    row.adjusted_rate = weighted_rate(pop.rates(), reference_weights);
    row.crude_rate = crude_rate(pop);
    row.absolute_deviation = row.adjusted_rate - row.crude_rate;
    row.relative_deviation_pct = relative_deviation(row.adjusted_rate, row.crude_rate);
    ss += row.absolute_deviation * row.absolute_deviation;
    report.rows.push_back(std::move(row));
  }
  report.mean_deviation = std::sqrt(ss / static_cast<double>(study.size()));
  return report;
}

inline DeviationReport deviation_report(const StudyMatrix& study,
                                        const PopulationStructure& reference) {
  detail::require_same_schedule(study.schedule(), reference.schedule(), "deviation report");
  return deviation_report(study, reference.values());
}

}  // namespace agestd
