#include "depotcast/calendar.hpp"

#include <charconv>
#include <stdexcept>

#include <fmt/format.h>

namespace depotcast {

using namespace std::chrono;

namespace {

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

std::string to_string(const IsoWeek& week) {
  return fmt::format("{:04d}-W{:02d}", week.year, week.week);
}

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) ||
      !parse_int(text.substr(8, 2), d)) {
    return std::nullopt;
  }
  Date date{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  if (text.size() != 19 || text[10] != ' ' || text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  auto date = parse_date(text.substr(0, 10));
  if (!date) return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  if (!parse_int(text.substr(11, 2), hh) || !parse_int(text.substr(14, 2), mm) ||
      !parse_int(text.substr(17, 2), ss)) {
    return std::nullopt;
  }
  if (hh < 0 || hh > 23 || mm < 0 || mm > 59 || ss < 0 || ss > 59) return std::nullopt;
  return make_timestamp(*date, hh, mm, ss);
}

std::string format_date(const Date& d) {
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(d.year()),
                     static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
}

std::string format_timestamp(Timestamp t) {
  const auto day_start = floor<days>(t);
  const hh_mm_ss<seconds> tod{t - day_start};
  return fmt::format("{} {:02d}:{:02d}:{:02d}", format_date(Date{day_start}),
                     tod.hours().count(), tod.minutes().count(), tod.seconds().count());
}

Timestamp make_timestamp(const Date& d, int hour, int minute, int second) {
  return local_days{d} + hours{hour} + minutes{minute} + seconds{second};
}

Date date_of(Timestamp t) { return Date{floor<days>(t)}; }

int hour_of(Timestamp t) {
  return static_cast<int>(duration_cast<hours>(t - floor<days>(t)).count());
}

Timestamp floor_hour(Timestamp t) { return floor<hours>(t); }

std::int64_t hour_index(Timestamp t) {
  return floor<hours>(t).time_since_epoch().count();
}

int day_of_week(const Date& d) {
  return static_cast<int>(weekday{local_days{d}}.iso_encoding()) - 1;
}

IsoWeek iso_week(const Date& d) {
  // The ISO year is the year of the Thursday in the same Monday-based week.
  const local_days ld{d};
  const local_days thursday = ld - days{day_of_week(d)} + days{3};
  const year iso_year = Date{thursday}.year();
  const local_days jan1{iso_year / January / 1};
  const auto week = static_cast<unsigned>((thursday - jan1).count() / 7 + 1);
  return {static_cast<int>(iso_year), week};
}

Date add_days(const Date& d, int n) { return Date{local_days{d} + days{n}}; }

int days_between(const Date& from, const Date& to) {
  return static_cast<int>((local_days{to} - local_days{from}).count());
}

void WorkCalendar::validate() const {
  if (first_hour < 0 || last_hour > 23 || first_hour > last_hour) {
    throw std::invalid_argument(
        fmt::format("empty or invalid working-hour range {}..{}", first_hour, last_hour));
  }
  bool any_day = false;
  for (bool b : working_days) any_day = any_day || b;
  if (!any_day) throw std::invalid_argument("no working days configured");
}

bool WorkCalendar::is_working_day(const Date& d) const {
  return working_days[static_cast<std::size_t>(day_of_week(d))];
}

bool WorkCalendar::is_working_hour(Timestamp t) const {
  const int h = hour_of(t);
  return h >= first_hour && h <= last_hour && is_working_day(date_of(t));
}

Date WorkCalendar::next_working_day(const Date& d) const {
  Date next = add_days(d, 1);
  while (!is_working_day(next)) next = add_days(next, 1);
  return next;
}

}  // namespace depotcast
