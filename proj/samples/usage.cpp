// Three populations on a four-group age schedule: compare crude rates with
// rates adjusted to a fixed standard and to the study's mean reference.

#include <cstdio>

#include "agestd.hpp"

int main() {
  using namespace agestd;
  const auto ages = make_schedule(AgeSchedule({"0-19", "20-44", "45-64", "65+"}));

  auto pop = [&](const char* id, std::vector<double> deaths, std::vector<double> person_years) {
    return Population::from_counts(id, ages, deaths, person_years);
  };
  const StudyMatrix study({
      pop("young-town", {4, 20, 60, 90}, {40000, 52000, 21000, 6000}),
      pop("mid-city", {3, 18, 95, 210}, {25000, 41000, 30000, 14000}),
      pop("retire-ville", {1, 6, 70, 400}, {8000, 15000, 22000, 26000}),
  });
  const auto standard = PopulationStructure::from_proportions(ages, {0.27, 0.37, 0.23, 0.13});

  const auto t = solve_qp(study);
  const auto meanref = compose_reference(study, t);

  std::printf("%-14s %10s %10s %10s %8s\n", "population", "crude", "standard", "meanref", "weight");
  for (std::size_t i = 0; i < study.size(); ++i) {
    const auto& p = study[i];
    std::printf("%-14s %10.2f %10.2f %10.2f %8.4f\n", p.id().c_str(), crude_rate(p),
                age_adjusted_rate(p.rates(), standard), age_adjusted_rate(p.rates(), meanref),
                t.weights[i]);
  }
  std::printf("mean deviation: standard %.2f, meanref %.2f\n", mean_deviation(study, standard),
              mean_deviation(study, meanref));
  std::printf("uniqueness: %s\n", verify_uniqueness(study).strictly_convex ? "strictly convex"
                                                                            : "flat directions");
}
