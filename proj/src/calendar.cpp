#include "kiloland/calendar.hpp"

#include <fmt/format.h>

#include <cstdio>

#include "kiloland/error.hpp"

namespace kiloland {

Date parse_date(const std::string& text) {
  Date d;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d-%d-%d%c", &d.year, &d.month, &d.day, &tail) != 3) {
    throw ValidationError("bad date '" + text + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{d.year}, std::chrono::month{static_cast<unsigned>(d.month)},
                                        std::chrono::day{static_cast<unsigned>(d.day)}};
  if (!ymd.ok() || d.month < 1 || d.day < 1) throw ValidationError("invalid date '" + text + "'");
  return d;
}

std::string format_date(const Date& d) { return fmt::format("{:04d}-{:02d}-{:02d}", d.year, d.month, d.day); }

std::string time_stamp(const Date& start, std::int64_t hours) {
  const auto day = add_days(start, hours / 24);
  return fmt::format("{}-{:05d}", format_date(day), (hours % 24) * 3600);
}

}  // namespace kiloland
