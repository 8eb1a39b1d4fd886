#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aqbias {

/// Hours since 1970-01-01T00:00 in local civil time (no DST shifts).
using Hour = std::int64_t;

struct CivilTime {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
  int hour = 0;
};

Hour to_hour(const CivilTime& t);
CivilTime to_civil(Hour h);

/// 0 = Sunday ... 6 = Saturday.
int weekday(Hour h);
int hour_of_day(Hour h);

/// Accepts "YYYY-MM-DDTHH:MM", "YYYY-MM-DD HH:MM" or "YYYY-MM-DDTHH". Minutes
/// must be zero: every record sits on the hourly lattice.
Hour parse_hour(std::string_view text);

/// "YYYY-MM-DDTHH:00"
std::string format_hour(Hour h);

/// Hours of the week that count as traffic hours. Default: Monday to
/// Friday, 06-10 and 16-20 (end hour exclusive).
struct TrafficWindow {
  std::vector<int> weekdays{1, 2, 3, 4, 5};
  std::vector<std::pair<int, int>> hours{{6, 10}, {16, 20}};

  bool contains(Hour h) const;
  void validate() const;
  bool operator==(const TrafficWindow&) const = default;
};

}  // namespace aqbias
