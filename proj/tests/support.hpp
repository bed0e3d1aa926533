#pragma once

// Fixture access and independent reference computations shared by the unit
// and acceptance suites. Oracles here deliberately avoid the library's own
// arithmetic helpers.

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "agestd.hpp"

namespace fixtures {

inline std::string data(const std::string& file) { return std::string(AGESTD_DATA_DIR) + "/" + file; }
inline std::string golden(const std::string& file) { return std::string(AGESTD_GOLDEN_DIR) + "/" + file; }

inline const std::array<std::string, 6> kStates{"ca", "ma", "mi", "mo", "nj", "ny"};

inline agestd::StudyMatrix state_study(const std::string& state) {
  return agestd::load_study(data(state + "_rates.csv"), data(state + "_structures.csv"));
}

// Case-fatality rates paired with the patient person-year exposures.
inline agestd::StudyMatrix cancer_study() {
  agestd::StudyLoadOptions o;
  o.units = agestd::StructureUnits::counts;
  return agestd::load_study(data("table_s2_case_fatality.csv"), data("table_s1_exposure.csv"), o);
}

inline agestd::PopulationStructure us2000() {
  return agestd::load_standard(data("table_s1_exposure.csv"), "us2000");
}

// Golden table: first two columns are keys, the rest numeric ("" -> NaN).
struct Golden {
  std::vector<std::string> columns;
  std::map<std::string, std::vector<double>> rows;  // key "a/b" or "a"

  const std::vector<double>& at(const std::string& key) const { return rows.at(key); }
};

inline Golden read_golden(const std::string& file, int key_columns) {
  std::ifstream in(golden(file));
  if (!in) throw std::runtime_error("missing golden file " + file);
  Golden g;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (header) {
      g.columns.assign(f.begin() + key_columns, f.end());
      header = false;
      continue;
    }
    std::string key = f[0];
    for (int k = 1; k < key_columns; ++k) key += "/" + f[k];
    std::vector<double> v;
    for (std::size_t c = key_columns; c < f.size(); ++c) v.push_back(f[c].empty() ? NAN : std::stod(f[c]));
    g.rows[key] = v;
  }
  return g;
}

// --- oracles -----------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

// f(t) = sum_i (m_i' (sum_j t_j n_j) - m_i' n_i)^2, by direct expansion.
inline double total_deviation(const agestd::StudyMatrix& s, std::span<const double> t) {
  const std::size_t A = s.age_groups();
  std::vector<long double> n(A, 0);
  for (std::size_t j = 0; j < s.size(); ++j)
    for (std::size_t a = 0; a < A; ++a) n[a] += static_cast<long double>(t[j]) * s[j].structure()[a];
  long double f = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    long double adj = 0, crude = 0;
    for (std::size_t a = 0; a < A; ++a) {
      adj += s[i].rates()[a] * n[a];
      crude += static_cast<long double>(s[i].rates()[a]) * s[i].structure()[a];
    }
    f += (adj - crude) * (adj - crude);
  }
  return static_cast<double>(f);
}

// Gradient of f: g_j = 2 sum_i b_i m_i' n_j with b_i the deviation.
inline std::vector<double> gradient(const agestd::StudyMatrix& s, std::span<const double> t) {
  const std::size_t p = s.size(), A = s.age_groups();
  std::vector<double> n(A, 0.0), b(p), g(p, 0.0);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t a = 0; a < A; ++a) n[a] += t[j] * s[j].structure()[a];
  for (std::size_t i = 0; i < p; ++i)
    b[i] = dot(s[i].rates().values(), n) - dot(s[i].rates().values(), s[i].structure().values());
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t i = 0; i < p; ++i) g[j] += 2.0 * b[i] * dot(s[i].rates().values(), s[j].structure().values());
  return g;
}

// Dense grid over t_1 in [0, 1] for p = 2. The four inner products m_i' n_j
// are formed once; each grid point then costs O(1).
inline double grid_minimum(const agestd::StudyMatrix& s, double step = 1e-6) {
  double g[2][2];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) g[i][j] = dot(s[i].rates().values(), s[j].structure().values());
  double best = INFINITY;
  const auto steps = static_cast<long>(std::llround(1.0 / step));
  for (long k = 0; k <= steps; ++k) {
    const double t1 = static_cast<double>(k) / static_cast<double>(steps), t2 = 1.0 - t1;
    const double b1 = t1 * g[0][0] + t2 * g[0][1] - g[0][0];
    const double b2 = t1 * g[1][0] + t2 * g[1][1] - g[1][1];
    best = std::min(best, b1 * b1 + b2 * b2);
  }
  return best;
}

inline std::vector<double> random_simplex_point(std::mt19937_64& rng, std::size_t p) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> t(p);
  double sum = 0;
  for (auto& v : t) sum += (v = e(rng));
  for (auto& v : t) v /= sum;
  return t;
}

// Random study with p populations over A age groups; rates grow with age
// like real mortality, structures are random positive compositions.
inline agestd::StudyMatrix random_study(std::mt19937_64& rng, std::size_t p, std::size_t A) {
  std::vector<std::string> labels;
  for (std::size_t a = 0; a < A; ++a) labels.push_back(std::to_string(5 * a) + "-" + std::to_string(5 * a + 4));
  const auto sched = agestd::make_schedule(agestd::AgeSchedule(labels));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<agestd::Population> pops;
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<double> m(A), n(A);
    const double growth = 0.05 + 0.3 * u(rng);
    for (std::size_t a = 0; a < A; ++a) {
      m[a] = std::exp(growth * static_cast<double>(a)) * (0.5 + u(rng)) * (u(rng) < 0.1 ? 0.0 : 1.0);
      n[a] = std::pow(u(rng), 2.0) + 1e-3;
    }
    pops.emplace_back("p" + std::to_string(i), agestd::RateVector(sched, m),
                      agestd::PopulationStructure::from_counts(sched, n));
  }
  return agestd::StudyMatrix(std::move(pops));
}

}  // namespace fixtures
