#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace depotcast {

// Naive local time of the depot site; no time-zone handling.
using Timestamp = std::chrono::local_seconds;
using Date = std::chrono::year_month_day;

struct IsoWeek {
  int year = 0;
  unsigned week = 0;

  auto operator<=>(const IsoWeek&) const = default;
};

std::string to_string(const IsoWeek& week);

/// Parses "YYYY-MM-DD HH:MM:SS". Returns nullopt on malformed or out-of-range input.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

/// Parses "YYYY-MM-DD".
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& d);

Timestamp make_timestamp(const Date& d, int hour, int minute = 0, int second = 0);
Date date_of(Timestamp t);
int hour_of(Timestamp t);
Timestamp floor_hour(Timestamp t);

/// Whole hours since the epoch; a compact key for hour buckets.
std::int64_t hour_index(Timestamp t);

/// Monday = 0 ... Sunday = 6.
int day_of_week(const Date& d);

IsoWeek iso_week(const Date& d);

Date add_days(const Date& d, int n);
int days_between(const Date& from, const Date& to);

/// The depot's operating grid: an inclusive hour range and a set of weekdays.
struct WorkCalendar {
  int first_hour = 5;
  int last_hour = 20;
  // Indexed Monday = 0.
  std::array<bool, 7> working_days{true, true, true, true, true, false, false};

  void validate() const;
  [[nodiscard]] int hours_per_day() const { return last_hour - first_hour + 1; }
  [[nodiscard]] bool is_working_day(const Date& d) const;
  [[nodiscard]] bool is_working_hour(Timestamp t) const;
  /// First working day strictly after d.
  [[nodiscard]] Date next_working_day(const Date& d) const;
};

}  // namespace depotcast
