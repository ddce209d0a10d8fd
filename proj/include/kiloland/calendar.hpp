#pragma once

#include <chrono>
#include <cstdint>
#include <string>

namespace kiloland {

/// Gregorian calendar date. Simulation time is counted in hours from 00:00 of a start date.
struct Date {
  int year = 2000;
  int month = 1;
  int day = 1;

  friend bool operator==(const Date&, const Date&) = default;
  friend auto operator<=>(const Date&, const Date&) = default;
};

inline std::chrono::sys_days to_sys(const Date& d) {
  return std::chrono::sys_days{std::chrono::year{d.year} / std::chrono::month{static_cast<unsigned>(d.month)} /
                               std::chrono::day{static_cast<unsigned>(d.day)}};
}

inline Date from_sys(std::chrono::sys_days s) {
  const std::chrono::year_month_day ymd{s};
  return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
          static_cast<int>(static_cast<unsigned>(ymd.day()))};
}

inline Date add_days(const Date& d, std::int64_t n) { return from_sys(to_sys(d) + std::chrono::days{n}); }

inline std::int64_t days_between(const Date& a, const Date& b) { return (to_sys(b) - to_sys(a)).count(); }

inline int days_in_month(int year, int month) {
  using namespace std::chrono;
  return static_cast<int>(static_cast<unsigned>(
      year_month_day_last{std::chrono::year{year}, month_day_last{std::chrono::month{static_cast<unsigned>(month)}}}
          .day()));
}

inline int day_of_year(const Date& d) { return static_cast<int>(days_between({d.year, 1, 1}, d)) + 1; }

/// Throws ValidationError on malformed text or an invalid date. Format YYYY-MM-DD.
Date parse_date(const std::string& text);
std::string format_date(const Date& d);
/// YYYY-MM-DD-SSSSS for the instant `hours` after 00:00 of `start`.
std::string time_stamp(const Date& start, std::int64_t hours);

}  // namespace kiloland
