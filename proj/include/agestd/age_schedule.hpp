#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "agestd/errors.hpp"

namespace agestd {

/// Ordered age groups shared by every vector of a study.
///
/// Labels look like "40-44" or "85+". They must be unique and strictly
/// increasing by lower age bound. The age-0 group is never part of the
/// fixtures used here, but nothing stops a caller from including it.
class AgeSchedule {
 public:
  AgeSchedule() = default;

  explicit AgeSchedule(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw DomainError("age schedule must contain at least one group");
    lower_.reserve(labels_.size());
    for (const auto& label : labels_) lower_.push_back(lower_bound_of(label));
    for (std::size_t i = 1; i < labels_.size(); ++i) {
      if (lower_[i] <= lower_[i - 1])
        throw DomainError("age groups must be unique and ascending: '" + labels_[i - 1] +
                          "' then '" + labels_[i] + "'");
    }
  }

  /// The 18 five-year groups "1-4", "5-9", ..., "80-84", "85+".
  static AgeSchedule standard18() {
    std::vector<std::string> labels{"1-4"};
    for (int lo = 5; lo < 85; lo += 5)
      labels.push_back(std::to_string(lo) + "-" + std::to_string(lo + 4));
    labels.emplace_back("85+");
    return AgeSchedule(std::move(labels));
  }

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  int lower_bound(std::size_t i) const { return lower_.at(i); }

  std::size_t index_of(std::string_view label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end())
      throw RangeError("age group '" + std::string(label) + "' not in schedule");
    return static_cast<std::size_t>(it - labels_.begin());
  }

  bool contains(std::string_view label) const {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
  }

  friend bool operator==(const AgeSchedule& a, const AgeSchedule& b) {
    return a.labels_ == b.labels_;
  }

  static int lower_bound_of(std::string_view label) {
    int value = 0;
    const char* first = label.data();
    const char* last = label.data() + label.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr == first)
      throw DomainError("age label '" + std::string(label) + "' has no numeric lower bound");
    std::string_view rest(ptr, static_cast<std::size_t>(last - ptr));
    if (rest == "+" || rest.empty()) return value;
    if (rest.front() == '-') {
      int upper = 0;
      auto [p2, ec2] = std::from_chars(ptr + 1, last, upper);
      if (ec2 == std::errc() && p2 == last && upper >= value) return value;
    }
    throw DomainError("malformed age label '" + std::string(label) + "'");
  }

 private:
  std::vector<std::string> labels_;
  std::vector<int> lower_;
};

/// Contiguous block of age groups, identified by first and last label.
struct AgeWindow {
  std::string first = "40-44";
  std::string last = "75-79";

  struct Bounds {
    std::size_t begin;  // inclusive
    std::size_t end;    // exclusive
  };

  Bounds resolve(const AgeSchedule& schedule) const {
    const std::size_t b = schedule.index_of(first);
    const std::size_t e = schedule.index_of(last);
    if (e < b)
      throw RangeError("age window '" + first + "'..'" + last + "' is reversed");
    return {b, e + 1};
  }
};

}  // namespace agestd
