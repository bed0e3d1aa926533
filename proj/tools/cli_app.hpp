#pragma once

// Command implementations behind the `agestd` executable. Kept in a header so
// the integration tests can drive them in-process with string streams.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "agestd.hpp"

namespace agestd::cli {

enum class Format { text, csv };
enum class Profile { table1, table3, full };

// Bad flag values or flag combinations; exit code 2 like other input errors.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  bool titled = true;
};

// --- number formatting -------------------------------------------------------

inline std::string strip_negative_zero(std::string s) {
  if (!s.empty() && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

inline std::string fixed(double v, int decimals) {
  return strip_negative_zero(fmt::format("{:.{}f}", v, decimals));
}

inline std::string shortest(double v) { return fmt::format("{}", v); }

struct Numbers {
  Profile profile;

  std::string rate(double v) const {
    switch (profile) {
      case Profile::table1: return fixed(v, 2);
      case Profile::table3: return fixed(v, 1);
      default: return shortest(v);
    }
  }
  std::string percent(std::optional<double> v) const {
    if (!v) return "NA";
    switch (profile) {
      case Profile::table1: return fixed(*v, 0);
      case Profile::table3: return fixed(*v, 2);
      default: return shortest(*v);
    }
  }
  std::string count(double v) const { return profile == Profile::full ? shortest(v) : fixed(v, 0); }
  std::string weight(double v) const { return profile == Profile::full ? shortest(v) : fixed(v, 4); }
  std::string general(double v) const {
    return profile == Profile::full ? shortest(v) : fmt::format("{:.6g}", v);
  }
};

// --- rendering -----------------------------------------------------------------

inline void render_text(const Table& t, std::ostream& os) {
  std::vector<std::size_t> width(t.header.size(), 0);
  auto grow = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  };
  grow(t.header);
  for (const auto& r : t.rows) grow(r);
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) s += "  ";
      s += c == 0 ? fmt::format("{:<{}}", r[c], width[c]) : fmt::format("{:>{}}", r[c], width[c]);
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    os << s << '\n';
  };
  if (t.titled) os << t.title << '\n';
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

inline void render_csv(const Table& t, std::ostream& os) {
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << r[c];
    os << '\n';
  };
  if (t.titled) os << "# " << t.title << '\n';
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

inline void render(const std::vector<Table>& tables, Format f, std::ostream& os) {
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (i) os << '\n';
    f == Format::csv ? render_csv(tables[i], os) : render_text(tables[i], os);
  }
}

// --- reference handling ----------------------------------------------------------

struct ReferenceSpec {
  enum class Kind { own, standard, meanref } kind = Kind::own;
  std::string path;
  std::string column;
};

/// "own", "meanref" or "standard:PATH:COLUMN" (PATH may itself contain ':').
inline ReferenceSpec parse_reference(const std::string& s) {
  if (s == "own") return {ReferenceSpec::Kind::own, {}, {}};
  if (s == "meanref") return {ReferenceSpec::Kind::meanref, {}, {}};
  const std::string prefix = "standard:";
  if (s.rfind(prefix, 0) == 0) {
    const auto rest = s.substr(prefix.size());
    const auto colon = rest.rfind(':');
    if (colon != std::string::npos && colon > 0 && colon + 1 < rest.size())
      return {ReferenceSpec::Kind::standard, rest.substr(0, colon), rest.substr(colon + 1)};
  }
  throw UsageError("--reference must be own, meanref or standard:PATH:COLUMN (got '" + s + "')");
}

struct Args {
  std::string rates;
  std::string structures;
  std::string structure_units = "proportions";
  std::string reference = "own";
  std::string observed;
  std::string target;
  std::vector<std::string> populations;
  std::string method = "qp";
  std::uint64_t seed = 42;
  std::uint64_t samples = 1'000'000;
  unsigned shrink_rounds = 5;
  double shrink_factor = 0.2;
  unsigned restarts = 1;
  unsigned threads = 1;
  std::string window_first = "40-44";
  std::string window_last = "75-79";
  std::string format;
  std::string profile = "full";
  std::string out;
  std::string layout = "periods";
};

inline StudyLoadOptions load_options(const Args& a) {
  StudyLoadOptions o;
  if (a.structure_units == "counts") o.units = StructureUnits::counts;
  else if (a.structure_units != "proportions")
    throw UsageError("--structure-units must be proportions or counts");
  return o;
}

inline StudyMatrix load(const Args& a) {
  if (a.rates.empty() || a.structures.empty())
    throw UsageError("--rates and --structures are required");
  return load_study(a.rates, a.structures, load_options(a));
}

inline SamplingConfig sampling_config(const Args& a) {
  SamplingConfig c;
  c.seed = a.seed;
  c.max_samples = a.samples;
  c.shrink_rounds = a.shrink_rounds;
  c.shrink_factor = a.shrink_factor;
  c.validate();
  return c;
}

inline SimplexWeights run_sampling(const StudyMatrix& study, const Args& a) {
  const auto config = sampling_config(a);
  if (a.restarts <= 1) return solve_sampling(study, config);
  std::vector<std::uint64_t> seeds(a.restarts);
  for (unsigned i = 0; i < a.restarts; ++i) seeds[i] = a.seed + i;
  return solve_sampling_restarts(study, config, seeds, a.threads);
}

/// A reference resolved against a loaded study: proportions to weight with,
/// or none for "own" (each population its own structure).
struct Reference {
  std::string label;
  std::optional<PopulationStructure> structure;
  std::optional<SimplexWeights> weights;  // set for meanref
};

inline Reference resolve_reference(const StudyMatrix& study, const ReferenceSpec& spec) {
  switch (spec.kind) {
    case ReferenceSpec::Kind::own: return {"own", std::nullopt, std::nullopt};
    case ReferenceSpec::Kind::standard:
      return {spec.column, load_standard_for(study, spec.path, spec.column), std::nullopt};
    case ReferenceSpec::Kind::meanref: {
      auto t = solve_qp(study);
      auto n = compose_reference(study, t);
      return {"meanref", std::move(n), std::move(t)};
    }
  }
  return {};
}

inline double adjusted(const Population& pop, const Reference& ref) {
  return ref.structure ? weighted_rate(pop.rates(), ref.structure->values()) : crude_rate(pop);
}

inline Table weights_table(const StudyMatrix& study, const SimplexWeights& t, const Numbers& num) {
  Table tab{"mean reference weights", {"population", "weight"}, {}};
  for (std::size_t i = 0; i < study.size(); ++i) tab.rows.push_back({study[i].id(), num.weight(t.weights[i])});
  return tab;
}

// --- commands -------------------------------------------------------------------

inline std::vector<Table> cmd_rates(const Args& a, const Numbers& num) {
  const auto study = load(a);
  const auto ref = resolve_reference(study, parse_reference(a.reference));
  const AgeWindow window{a.window_first, a.window_last};

  std::vector<Table> out;
  if (ref.weights) out.push_back(weights_table(study, *ref.weights, num));

  Table rates{"rates per 100000 (reference: " + ref.label + ")",
              {"population", "crude", "adjusted", "deviation", "pct_dev", "cumulative", "cumulative_pct_dev"},
              {}};
  double ss_adj = 0.0, ss_cum = 0.0;
  for (const auto& pop : study) {
    const double crude = crude_rate(pop);
    const double adj = adjusted(pop, ref);
    const double cum = cumulative_rate(pop.rates(), window);
    ss_adj += (adj - crude) * (adj - crude);
    ss_cum += (cum - crude) * (cum - crude);
    rates.rows.push_back({pop.id(), num.rate(crude), num.rate(adj), num.rate(adj - crude),
                          num.percent(relative_deviation(adj, crude)), num.rate(cum),
                          num.percent(relative_deviation(cum, crude))});
  }
  out.push_back(std::move(rates));

  const double p = static_cast<double>(study.size());
  out.push_back(Table{"mean deviation from crude",
                      {"rate", "mean_deviation"},
                      {{ref.label, num.rate(std::sqrt(ss_adj / p))},
                       {"cumulative", num.rate(std::sqrt(ss_cum / p))}}});
  return out;
}

inline std::vector<Table> cmd_deaths(const Args& a, const Numbers& num) {
  if (a.observed.empty()) throw UsageError("--observed is required");
  const auto study = load(a);
  const auto ref = resolve_reference(study, parse_reference(a.reference));
  const auto observed = load_observed(a.observed);

  std::vector<Table> out;
  if (ref.weights) out.push_back(weights_table(study, *ref.weights, num));
  Table tab{"expected deaths (reference: " + ref.label + ")",
            {"population", "observed", "exposure", "expected_crude", "expected_reference", "pct_dev"},
            {}};
  std::vector<double> rates;
  for (const auto& pop : study) rates.push_back(adjusted(pop, ref));
  const auto rows = expected_deaths_table(study, rates, observed);
  for (const auto& r : rows)
    tab.rows.push_back({r.id, num.count(r.observed), num.count(r.exposure), num.count(r.expected_by_crude),
                        num.count(r.expected_by_reference), num.percent(r.relative_deviation_pct)});
  out.push_back(std::move(tab));
  return out;
}

inline std::string diagnosis_text(const UniquenessDiagnosis& d) {
  return d.strictly_convex ? "strictly-convex" : fmt::format("flat-directions({})", d.flat_directions);
}

struct PartialResult : std::runtime_error {
  PartialResult(std::vector<Table> t, const std::string& what, int code)
      : std::runtime_error(what), tables(std::move(t)), exit_code(code) {}
  std::vector<Table> tables;
  int exit_code;
};

inline std::vector<Table> cmd_meanref(const Args& a, const Numbers& num) {
  const auto study = load(a);
  const bool want_qp = a.method == "qp" || a.method == "both";
  const bool want_sampling = a.method == "sampling" || a.method == "both";
  if (!want_qp && !want_sampling) throw UsageError("--method must be qp, sampling or both");
  if (want_sampling) sampling_config(a);

  std::optional<SimplexWeights> qp, smp;
  if (want_qp) {
    try {
      qp = solve_qp(study);
    } catch (const ConvergenceError& e) {
      Table best{"best iterate (not converged)", {"population", "weight"}, {}};
      for (std::size_t i = 0; i < study.size(); ++i)
        best.rows.push_back({study[i].id(), num.weight(e.best_weights()[i])});
      best.rows.push_back({"objective", num.general(e.best_objective())});
      throw PartialResult({best}, e.what(), 3);
    }
  }
  if (want_sampling) smp = run_sampling(study, a);

  std::vector<const SimplexWeights*> runs;
  std::vector<std::string> names{"population"};
  if (qp) runs.push_back(&*qp), names.emplace_back("qp");
  if (smp) runs.push_back(&*smp), names.emplace_back("sampling");

  std::vector<Table> out;
  Table w{"mean reference weights", names, {}};
  for (std::size_t i = 0; i < study.size(); ++i) {
    std::vector<std::string> row{study[i].id()};
    for (auto* r : runs) row.push_back(num.weight(r->weights[i]));
    w.rows.push_back(std::move(row));
  }
  out.push_back(std::move(w));

  names[0] = "metric";
  Table d{"solver diagnostics", names, {}};
  const double p = static_cast<double>(study.size());
  auto metric = [&](const std::string& name, auto fn) {
    std::vector<std::string> row{name};
    for (auto* r : runs) row.push_back(fn(*r));
    d.rows.push_back(std::move(row));
  };
  metric("objective", [&](const SimplexWeights& r) { return num.general(r.objective); });
  metric("mean_deviation", [&](const SimplexWeights& r) { return num.rate(std::sqrt(r.objective / p)); });
  metric("kkt_residual", [&](const SimplexWeights& r) { return fmt::format("{:.3g}", r.kkt_residual); });
  metric("iterations", [&](const SimplexWeights& r) { return std::to_string(r.iterations); });
  out.push_back(std::move(d));

  Table info{"problem", {"property", "value"}, {}};
  info.rows.push_back({"uniqueness", diagnosis_text(verify_uniqueness(study))});
  if (qp && smp) {
    const double gap = qp->objective > 0.0 ? std::abs(smp->objective - qp->objective) / qp->objective
                                           : std::abs(smp->objective - qp->objective);
    info.rows.push_back({"relative_gap", fmt::format("{:.3g}", gap)});
  }
  out.push_back(std::move(info));

  const auto n = compose_reference(study, qp ? *qp : *smp);
  Table s{"mean reference structure", {"age", "proportion"}, {}};
  for (std::size_t k = 0; k < n.size(); ++k)
    s.rows.push_back({study.schedule()->label(k), num.general(n[k])});
  out.push_back(std::move(s));
  return out;
}

inline std::vector<Table> cmd_decompose(const Args& a, const Numbers& num) {
  if (a.structures.empty()) throw UsageError("--structures is required");
  if (a.target.empty()) throw UsageError("--target is required");
  const auto opts = load_options(a);

  std::vector<std::string> columns = a.populations;
  std::optional<PopulationStructure> target;
  std::string target_population;
  if (a.target.rfind("population:", 0) == 0) {
    target_population = a.target.substr(11);
  } else {
    const auto spec = parse_reference(a.target);
    if (spec.kind != ReferenceSpec::Kind::standard)
      throw UsageError("--target must be standard:PATH:COLUMN or population:ID");
    // Decomposing a column onto the other columns of the same file.
    if (columns.empty() && std::filesystem::equivalent(spec.path, a.structures)) {
      for (const auto& id : read_labeled_table(a.structures).column_ids)
        if (id != spec.column) columns.push_back(id);
    }
    target = load_standard(spec.path, spec.column, opts.require_standard_schedule);
  }
  const auto study = a.rates.empty() ? load_structures(a.structures, columns, opts) : load(a);
  if (!target_population.empty()) {
    bool found = false;
    for (const auto& pop : study)
      if (pop.id() == target_population) target = pop.structure(), found = true;
    if (!found) throw UsageError("no population '" + target_population + "' in the study");
  }

  const auto r = decompose_reference(study, *target);
  Table c{"decomposition coefficients", {"population", "coefficient"}, {}};
  for (std::size_t i = 0; i < study.size(); ++i) c.rows.push_back({study[i].id(), fixed(r.coefficients[i], 4)});
  Table s{"fit", {"metric", "value"},
          {{"residual_norm", num.general(r.residual_norm)},
           {"abs_coefficient_sum", num.profile == Profile::full ? shortest(r.abs_coefficient_sum)
                                                                : fixed(r.abs_coefficient_sum, 2)}}};
  return {c, s};
}

inline std::vector<Table> cmd_plotdata(const Args& a, const Numbers& num) {
  const auto study = load(a);
  const auto spec = parse_reference(a.reference);
  std::optional<Reference> standard;
  if (spec.kind == ReferenceSpec::Kind::standard) standard = resolve_reference(study, spec);
  const auto meanref = resolve_reference(study, {ReferenceSpec::Kind::meanref, {}, {}});

  Table t{"plot data", {"series", "x", "value"}, {}, false};
  if (a.layout == "periods") {
    auto series = [&](const std::string& name, auto fn) {
      for (const auto& pop : study) t.rows.push_back({name, pop.id(), num.rate(fn(pop))});
    };
    series("crude", [](const Population& pop) { return crude_rate(pop); });
    if (standard) series(standard->label, [&](const Population& pop) { return adjusted(pop, *standard); });
    series("meanref", [&](const Population& pop) { return adjusted(pop, meanref); });
  } else if (a.layout == "age-profile") {
    const auto& labels = study.schedule()->labels();
    auto series = [&](const std::string& name, const PopulationStructure& n) {
      for (std::size_t k = 0; k < labels.size(); ++k) t.rows.push_back({name, labels[k], num.general(n[k])});
    };
    for (const auto& pop : study) series(pop.id(), pop.structure());
    if (standard) series(standard->label, *standard->structure);
    series("meanref", *meanref.structure);
  } else {
    throw UsageError("--layout must be periods or age-profile");
  }
  return {t};
}

// --- entry point ------------------------------------------------------------------

inline Profile parse_profile(const std::string& s) {
  if (s == "table1") return Profile::table1;
  if (s == "table3") return Profile::table3;
  if (s == "full") return Profile::full;
  throw UsageError("--profile must be table1, table3 or full");
}

inline Format parse_format(const std::string& s, const std::string& command) {
  if (s.empty()) return command == "plotdata" ? Format::csv : Format::text;
  if (s == "text") return Format::text;
  if (s == "csv") return Format::csv;
  throw UsageError("--format must be text or csv");
}

/// Runs one invocation. Results go to `out` (or --out), diagnostics to `err`.
/// Returns 0 on success, 2 on input errors, 3 on numerical failures.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Direct age standardization with study-specific mean reference populations"};
  app.name("agestd");
  app.require_subcommand(1);
  Args a;

  auto common = [&](CLI::App* sub, bool needs_rates) {
    auto* r = sub->add_option("--rates", a.rates, "age-specific rate table (CSV)");
    if (needs_rates) r->required();
    sub->add_option("--structures", a.structures, "population structure table (CSV)")->required();
    sub->add_option("--structure-units", a.structure_units, "proportions or counts");
    sub->add_option("--format", a.format, "text or csv");
    sub->add_option("--profile", a.profile, "rounding: table1, table3 or full");
    sub->add_option("--out", a.out, "write results to this file instead of stdout");
  };
  auto reference = [&](CLI::App* sub) {
    sub->add_option("--reference", a.reference, "own, meanref or standard:PATH:COLUMN");
  };

  auto* rates = app.add_subcommand("rates", "crude, adjusted and cumulative rates");
  common(rates, true);
  reference(rates);
  rates->add_option("--window-first", a.window_first, "first age group of the cumulative rate");
  rates->add_option("--window-last", a.window_last, "last age group of the cumulative rate");

  auto* deaths = app.add_subcommand("deaths", "expected vs observed deaths");
  common(deaths, true);
  reference(deaths);
  deaths->add_option("--observed", a.observed, "CSV population,observed[,crude]")->required();

  auto* meanref = app.add_subcommand("meanref", "mean reference population weights");
  common(meanref, true);
  meanref->add_option("--method", a.method, "qp, sampling or both");
  meanref->add_option("--seed", a.seed, "sampling seed");
  meanref->add_option("--samples", a.samples, "sampling draws");
  meanref->add_option("--shrink-rounds", a.shrink_rounds, "sampling shrink rounds");
  meanref->add_option("--shrink-factor", a.shrink_factor, "sampling box shrink per round");
  meanref->add_option("--restarts", a.restarts, "independent sampling runs (seeds seed, seed+1, ...)");
  meanref->add_option("--threads", a.threads, "worker threads for restarts");

  auto* decompose = app.add_subcommand("decompose", "least-squares decomposition of a reference");
  common(decompose, false);
  decompose->add_option("--target", a.target, "standard:PATH:COLUMN or population:ID")->required();
  decompose->add_option("--populations", a.populations, "structure columns to use")->delimiter(',');

  auto* plot = app.add_subcommand("plotdata", "long-format series for plotting");
  common(plot, true);
  reference(plot);
  plot->add_option("--layout", a.layout, "periods or age-profile");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::vector<Table> tables;
  int code = 0;
  Format format = Format::text;
  try {
    format = parse_format(a.format, command);
    const Numbers num{parse_profile(a.profile)};
    try {
      if (command == "rates") tables = cmd_rates(a, num);
      else if (command == "deaths") tables = cmd_deaths(a, num);
      else if (command == "meanref") tables = cmd_meanref(a, num);
      else if (command == "decompose") tables = cmd_decompose(a, num);
      else tables = cmd_plotdata(a, num);
    } catch (const PartialResult& e) {
      tables = e.tables;
      code = e.exit_code;
      err << "agestd: error: " << e.what() << '\n';
    }
  } catch (const UsageError& e) {
    err << "agestd: error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    err << "agestd: error: " << e.what() << '\n';
    return 2;
  } catch (const AlignmentError& e) {
    err << "agestd: error: " << e.what() << '\n';
    return 2;
  } catch (const RangeError& e) {
    err << "agestd: error: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    err << "agestd: error: " << e.what() << '\n';
    return 2;
  } catch (const IllPosedDecompositionError& e) {
    err << "agestd: error: " << e.what() << '\n';
    return 3;
  } catch (const SamplingStarvationError& e) {
    err << "agestd: error: " << e.what() << '\n';
    return 3;
  } catch (const ConvergenceError& e) {
    err << "agestd: error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "agestd: error: " << e.what() << '\n';
    return 2;
  }

  std::ostringstream buffer;
  render(tables, format, buffer);
  if (a.out.empty()) {
    out << buffer.str();
  } else {
    std::ofstream f(a.out, std::ios::binary);
    f << buffer.str();
    if (!f) {
      err << "agestd: error: cannot write " << a.out << '\n';
      return 2;
    }
  }
  return code;
}

}  // namespace agestd::cli
