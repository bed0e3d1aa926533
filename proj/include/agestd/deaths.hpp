#pragma once

// Expected death counts under a summary rate, with exposure reconstructed
// from observed deaths (exposures themselves are rarely published).

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agestd/errors.hpp"
#include "agestd/rates.hpp"

namespace agestd {

struct ObservedDeaths {
  std::string population;
  double observed = 0.0;
  std::optional<double> crude;  // published crude rate, if given
};

struct DeathsRow {
  std::string id;
  double observed = 0.0;
  double crude_rate = 0.0;  // the crude rate used to reconstruct exposure
  double exposure = 0.0;    // person-years
  double expected_by_crude = 0.0;
  double adjusted_rate = 0.0;
  double expected_by_reference = 0.0;
  std::optional<double> relative_deviation_pct;  // vs observed
};

/// One row per study population, matched to `observed` by id, given each
/// population's summary rate under the reference. Exposure is
/// observed / crude * 10^5, using the published crude rate when the record
/// has one and the recomputed crude rate otherwise.
inline std::vector<DeathsRow> expected_deaths_table(const StudyMatrix& study,
                                                    std::span<const double> adjusted_rates,
                                                    std::span<const ObservedDeaths> observed) {
  if (adjusted_rates.size() != study.size())
    throw AlignmentError("need one adjusted rate per population");
  if (observed.size() != study.size())
    throw AlignmentError("observed deaths list " + std::to_string(observed.size()) +
                         " populations, study has " + std::to_string(study.size()));
  std::vector<DeathsRow> rows;
  rows.reserve(study.size());
  for (std::size_t i = 0; i < study.size(); ++i) {
    const auto& pop = study[i];
    const ObservedDeaths* rec = nullptr;
    for (const auto& o : observed)
      if (o.population == pop.id()) rec = &o;
    if (!rec) throw AlignmentError("no observed deaths for population '" + pop.id() + "'");
    DeathsRow row;
    row.id = pop.id();
    row.observed = rec->observed;
    row.crude_rate = rec->crude ? *rec->crude : crude_rate(pop);
    row.exposure = exposure_from_observed(row.observed, row.crude_rate);
    row.expected_by_crude = expected_deaths(row.crude_rate, row.exposure);
    row.adjusted_rate = adjusted_rates[i];
    row.expected_by_reference = expected_deaths(row.adjusted_rate, row.exposure);
    row.relative_deviation_pct = relative_deviation(row.expected_by_reference, row.observed);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Same, with every population adjusted to one reference structure.
inline std::vector<DeathsRow> expected_deaths_table(const StudyMatrix& study,
                                                    const PopulationStructure& reference,
                                                    std::span<const ObservedDeaths> observed) {
  detail::require_same_schedule(study.schedule(), reference.schedule(), "expected deaths");
  std::vector<double> adjusted;
  for (const auto& pop : study) adjusted.push_back(age_adjusted_rate(pop.rates(), reference));
  return expected_deaths_table(study, adjusted, observed);
}

}  // namespace agestd
