#pragma once

// CSV fixtures: one row per age group, first column the age label, one
// numeric column per population. Header row mandatory, period decimal
// separator, no thousands separators, no quoting.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "agestd/age_schedule.hpp"
#include "agestd/deaths.hpp"
#include "agestd/errors.hpp"
#include "agestd/rates.hpp"

namespace agestd {

/// Parsed numeric table. Rows and columns in file order; `cells[c][r]` is
/// column c (after the label column), row r (after the header).
struct LabeledTable {
  std::string path;
  std::string label_header;
  std::vector<std::string> column_ids;
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> cells;

  std::size_t column_index(std::string_view id) const {
    for (std::size_t c = 0; c < column_ids.size(); ++c)
      if (column_ids[c] == id) return c;
    throw ParseError("no column named '" + std::string(id) + "'", path, 1);
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Plain decimal: optional '-', digits, optional '.digits', optional exponent.
// Rejects inf/nan, thousands separators, hex and locale variants.
inline std::optional<double> parse_decimal(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  for (char ch : cell) {
    const bool ok = (ch >= '0' && ch <= '9') || ch == '.' || ch == '-' || ch == '+' || ch == 'e' ||
                    ch == 'E';
    if (!ok) return std::nullopt;
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value, std::chars_format::general);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Parses CSV text into a LabeledTable. `path` is only used in messages.
inline LabeledTable parse_labeled_table(std::string_view text, const std::string& path) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  LabeledTable t;
  t.path = path;

  std::size_t row = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++row;
    if (line.empty()) {
      if (pos > text.size()) break;
      continue;
    }
    if (line.find('"') != std::string_view::npos)
      throw ParseError("quoted fields are not supported", path, row);
    const auto fields = detail::split_fields(line);

    if (!have_header) {
      if (fields.size() < 2) throw ParseError("header needs a label column and at least one data column", path, row);
      t.label_header = std::string(fields[0]);
      for (std::size_t c = 1; c < fields.size(); ++c) {
        if (fields[c].empty()) throw ParseError("empty column identifier", path, row, c + 1);
        if (detail::parse_decimal(fields[c]))
          throw ParseError("header row is missing (numeric column identifier '" +
                               std::string(fields[c]) + "')",
                           path, row, c + 1);
        for (const auto& seen : t.column_ids)
          if (seen == fields[c])
            throw ParseError("duplicate column '" + std::string(fields[c]) + "'", path, row, c + 1);
        t.column_ids.emplace_back(fields[c]);
      }
      t.cells.assign(t.column_ids.size(), {});
      have_header = true;
      continue;
    }

    if (fields.size() != t.column_ids.size() + 1)
      throw ParseError("expected " + std::to_string(t.column_ids.size() + 1) + " fields, found " +
                           std::to_string(fields.size()),
                       path, row);
    if (fields[0].empty()) throw ParseError("missing age label", path, row, 1);
    t.row_labels.emplace_back(fields[0]);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const auto v = detail::parse_decimal(fields[c]);
      if (!v)
        throw ParseError("'" + std::string(fields[c]) + "' is not a plain decimal number", path,
                         row, c + 1);
      if (*v < 0.0) throw ParseError("negative value " + std::string(fields[c]), path, row, c + 1);
      t.cells[c - 1].push_back(*v);
    }
  }
  if (!have_header) throw ParseError("file is empty", path);
  if (t.row_labels.empty()) throw ParseError("no data rows", path);
  return t;
}

inline LabeledTable read_labeled_table(const std::string& path) {
  return parse_labeled_table(detail::read_file(path), path);
}

enum class StructureUnits { proportions, counts };

struct StudyLoadOptions {
  StructureUnits units = StructureUnits::proportions;
  // Require the 18 groups 1-4, 5-9, ..., 85+ in that order.
  bool require_standard_schedule = true;
};

namespace detail {

inline SchedulePtr schedule_of(const LabeledTable& t, bool require_standard) {
  if (require_standard) {
    const auto standard = AgeSchedule::standard18();
    if (t.row_labels.size() != standard.size())
      throw ParseError("expected " + std::to_string(standard.size()) + " age groups, found " +
                           std::to_string(t.row_labels.size()),
                       t.path);
    for (std::size_t r = 0; r < standard.size(); ++r)
      if (t.row_labels[r] != standard.label(r))
        throw ParseError("age label '" + t.row_labels[r] + "', expected '" + standard.label(r) + "'",
                         t.path, r + 2, 1);
    return make_schedule(standard);
  }
  try {
    return make_schedule(AgeSchedule(t.row_labels));
  } catch (const DomainError& e) {
    throw ParseError(e.what(), t.path);
  }
}

inline PopulationStructure structure_column(const LabeledTable& t, std::size_t c,
                                            const SchedulePtr& schedule, StructureUnits units) {
  try {
    return units == StructureUnits::counts
               ? PopulationStructure::from_counts(schedule, t.cells[c])
               : PopulationStructure::from_proportions(schedule, t.cells[c]);
  } catch (const DomainError& e) {
    throw ParseError("column '" + t.column_ids[c] + "': " + e.what(), t.path, 0, c + 2);
  }
}

}  // namespace detail

/// One population per rate column, paired by identifier with the structure
/// file. The structure file may carry extra columns; the paired ones must
/// appear in the same relative order.
inline StudyMatrix load_study(const std::string& rates_path, const std::string& structures_path,
                              const StudyLoadOptions& options = {}) {
  const auto rates = read_labeled_table(rates_path);
  const auto structs = read_labeled_table(structures_path);
  const auto schedule = detail::schedule_of(rates, options.require_standard_schedule);
  detail::schedule_of(structs, options.require_standard_schedule);
  for (std::size_t r = 0; r < rates.row_labels.size(); ++r) {
    if (r >= structs.row_labels.size() || structs.row_labels[r] != rates.row_labels[r])
      throw ParseError("age label mismatch with '" + rates_path + "' ('" + rates.row_labels[r] + "')",
                       structures_path, r + 2, 1);
  }
  if (structs.row_labels.size() != rates.row_labels.size())
    throw ParseError("row count differs from '" + rates_path + "'", structures_path);

  std::vector<Population> pops;
  std::size_t next = 0;
  for (std::size_t c = 0; c < rates.column_ids.size(); ++c) {
    const auto& id = rates.column_ids[c];
    std::size_t s = next;
    while (s < structs.column_ids.size() && structs.column_ids[s] != id) ++s;
    if (s == structs.column_ids.size())
      throw ParseError("rate column '" + id + "' has no matching structure column (in order)",
                       structures_path, 1);
    next = s + 1;
    pops.emplace_back(id, RateVector(schedule, rates.cells[c]),
                      detail::structure_column(structs, s, schedule, options.units));
  }
  return StudyMatrix(std::move(pops));
}

/// Structures only, for decomposition: the selected columns (all when
/// `columns` is empty) become populations with zero rates.
inline StudyMatrix load_structures(const std::string& structures_path,
                                   const std::vector<std::string>& columns = {},
                                   const StudyLoadOptions& options = {}) {
  const auto structs = read_labeled_table(structures_path);
  const auto schedule = detail::schedule_of(structs, options.require_standard_schedule);
  std::vector<std::size_t> picked;
  if (columns.empty()) {
    for (std::size_t c = 0; c < structs.column_ids.size(); ++c) picked.push_back(c);
  } else {
    for (const auto& id : columns) picked.push_back(structs.column_index(id));
  }
  std::vector<Population> pops;
  for (std::size_t c : picked)
    pops.emplace_back(structs.column_ids[c],
                      RateVector(schedule, std::vector<double>(schedule->size(), 0.0)),
                      detail::structure_column(structs, c, schedule, options.units));
  return StudyMatrix(std::move(pops));
}

/// A counts column (e.g. the US 2000 standard in thousands) normalized to
/// proportions.
inline PopulationStructure load_standard(const std::string& path, const std::string& column,
                                         bool require_standard_schedule = true) {
  const auto t = read_labeled_table(path);
  const auto schedule = detail::schedule_of(t, require_standard_schedule);
  const std::size_t c = t.column_index(column);
  try {
    return PopulationStructure::from_counts(schedule, t.cells[c]);
  } catch (const DomainError& e) {
    throw DomainError(path + ": column '" + column + "': " + e.what());
  }
}

/// Reference standard for a study loaded separately; the schedules must agree.
inline PopulationStructure load_standard_for(const StudyMatrix& study, const std::string& path,
                                             const std::string& column) {
  const auto t = read_labeled_table(path);
  if (t.row_labels != study.schedule()->labels())
    throw ParseError("age labels differ from the study's", path);
  const std::size_t c = t.column_index(column);
  try {
    return PopulationStructure::from_counts(study.schedule(), t.cells[c]);
  } catch (const DomainError& e) {
    throw DomainError(path + ": column '" + column + "': " + e.what());
  }
}

/// CSV with header `population,observed[,crude]`, one row per population.
inline std::vector<ObservedDeaths> load_observed(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  std::string line;
  std::vector<ObservedDeaths> out;
  std::size_t row = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto f = detail::split_fields(trimmed);
    if (width == 0) {
      if (f.size() < 2 || f[0] != "population" || f[1] != "observed" ||
          (f.size() == 3 && f[2] != "crude") || f.size() > 3)
        throw ParseError("header must be population,observed[,crude]", path, row);
      width = f.size();
      continue;
    }
    if (f.size() != width)
      throw ParseError("expected " + std::to_string(width) + " fields", path, row);
    ObservedDeaths d;
    d.population = std::string(f[0]);
    const auto obs = detail::parse_decimal(f[1]);
    if (!obs || *obs < 0.0) throw ParseError("bad observed count '" + std::string(f[1]) + "'", path, row, 2);
    d.observed = *obs;
    if (width == 3 && !f[2].empty()) {
      const auto cr = detail::parse_decimal(f[2]);
      if (!cr || *cr < 0.0) throw ParseError("bad crude rate '" + std::string(f[2]) + "'", path, row, 3);
      d.crude = *cr;
    }
    out.push_back(std::move(d));
  }
  if (width == 0) throw ParseError("file is empty", path);
  return out;
}

/// Case-fatality rates from population mortality and prevalence:
/// m_c = m_p / Prev, set to 0 where Prev = 0 or fewer than 5 deaths.
inline RateVector case_fatality_rates(const RateVector& mortality, std::span<const double> prevalence,
                                      std::span<const double> deaths) {
  if (prevalence.size() != mortality.size() || deaths.size() != mortality.size())
    throw AlignmentError("mortality, prevalence and deaths must have one entry per age group");
  std::vector<double> out(mortality.size(), 0.0);
  for (std::size_t a = 0; a < out.size(); ++a) {
    if (!(prevalence[a] >= 0.0) || !std::isfinite(prevalence[a]))
      throw DomainError("prevalence must be nonnegative (age group " +
                        mortality.schedule()->label(a) + ")");
    if (!(deaths[a] >= 0.0) || !std::isfinite(deaths[a]))
      throw DomainError("death counts must be nonnegative (age group " +
                        mortality.schedule()->label(a) + ")");
    if (prevalence[a] == 0.0 || deaths[a] < 5.0) continue;
    out[a] = mortality[a] / prevalence[a];
  }
  return RateVector(mortality.schedule(), std::move(out));
}

namespace detail {

// Shortest representation that reads back to the same double.
inline std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline void write_table(const std::string& path, const StudyMatrix& study, bool structures) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write file", path);
  out << "age";
  for (const auto& pop : study) out << ',' << pop.id();
  out << '\n';
  for (std::size_t a = 0; a < study.age_groups(); ++a) {
    out << study.schedule()->label(a);
    for (const auto& pop : study)
      out << ',' << shortest(structures ? pop.structure()[a] : pop.rates()[a]);
    out << '\n';
  }
  if (!out) throw ParseError("write failed", path);
}

}  // namespace detail

/// Writes rates and (normalized) structures so that load_study with
/// proportions reads back identical doubles.
inline void write_study(const StudyMatrix& study, const std::string& rates_path,
                        const std::string& structures_path) {
  detail::write_table(rates_path, study, false);
  detail::write_table(structures_path, study, true);
}

}  // namespace agestd
