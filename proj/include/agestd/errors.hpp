#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace agestd {

// Vectors that should share an age schedule (or a population count) do not.
class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input outside the mathematical domain of an operation (negative rates,
// empty studies, weights off the simplex, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A requested age label or window does not exist in the schedule.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Malformed fixture file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::string file, std::size_t row = 0,
             std::size_t column = 0)
      : std::runtime_error(format(what, file, row, column)),
        file_(std::move(file)),
        row_(row),
        column_(column) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, const std::string& file,
                            std::size_t row, std::size_t column) {
    std::string out = file.empty() ? std::string("<input>") : file;
    if (row > 0) {
      out += ":" + std::to_string(row);
      if (column > 0) out += ":" + std::to_string(column);
    } else if (column > 0) {
      out += ": column " + std::to_string(column);
    }
    return out + ": " + what;
  }

  std::string file_;
  std::size_t row_;
  std::size_t column_;
};

// The active-set solver exceeded its iteration cap. The best feasible
// iterate seen so far is attached.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> best_weights,
                   double best_objective)
      : std::runtime_error(what),
        best_weights_(std::move(best_weights)),
        best_objective_(best_objective) {}

  const std::vector<double>& best_weights() const noexcept { return best_weights_; }
  double best_objective() const noexcept { return best_objective_; }

 private:
  std::vector<double> best_weights_;
  double best_objective_;
};

class SamplingStarvationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No-intercept regression design matrix lacks full column rank.
class IllPosedDecompositionError : public std::runtime_error {
 public:
  IllPosedDecompositionError(const std::string& what,
                             std::vector<std::string> dependent_columns)
      : std::runtime_error(what), dependent_columns_(std::move(dependent_columns)) {}

  const std::vector<std::string>& dependent_columns() const noexcept {
    return dependent_columns_;
  }

 private:
  std::vector<std::string> dependent_columns_;
};

}  // namespace agestd
