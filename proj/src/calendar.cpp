#include "aqbias/calendar.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "aqbias/error.hpp"

namespace aqbias {

namespace {

constexpr Hour floor_div(Hour a, Hour b) {
  Hour q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("malformed timestamp '" + std::string(whole) + "'");
  return v;
}

}  // namespace

Hour to_hour(const CivilTime& t) {
  using namespace std::chrono;
  const year_month_day ymd{year{t.year}, month{t.month}, day{t.day}};
  if (!ymd.ok() || t.hour < 0 || t.hour > 23)
    throw FormatError("invalid civil time " + std::to_string(t.year) + "-" +
                      std::to_string(t.month) + "-" + std::to_string(t.day) +
                      " " + std::to_string(t.hour) + "h");
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Hour>(days) * 24 + t.hour;
}

CivilTime to_civil(Hour h) {
  using namespace std::chrono;
  const Hour d = floor_div(h, 24);
  const year_month_day ymd{sys_days{days{d}}};
  return CivilTime{static_cast<int>(ymd.year()),
                   static_cast<unsigned>(ymd.month()),
                   static_cast<unsigned>(ymd.day()),
                   static_cast<int>(h - d * 24)};
}

int weekday(Hour h) {
  using namespace std::chrono;
  return static_cast<int>(
      std::chrono::weekday{sys_days{days{floor_div(h, 24)}}}.c_encoding());
}

int hour_of_day(Hour h) { return static_cast<int>(h - floor_div(h, 24) * 24); }

Hour parse_hour(std::string_view text) {
  // YYYY-MM-DD[T| ]HH[:MM]
  if (text.size() != 13 && text.size() != 16)
    throw FormatError("malformed timestamp '" + std::string(text) + "'");
  if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' '))
    throw FormatError("malformed timestamp '" + std::string(text) + "'");
  CivilTime t;
  t.year = parse_int(text.substr(0, 4), text);
  t.month = static_cast<unsigned>(parse_int(text.substr(5, 2), text));
  t.day = static_cast<unsigned>(parse_int(text.substr(8, 2), text));
  t.hour = parse_int(text.substr(11, 2), text);
  if (text.size() == 16) {
    if (text[13] != ':')
      throw FormatError("malformed timestamp '" + std::string(text) + "'");
    if (parse_int(text.substr(14, 2), text) != 0)
      throw FormatError("timestamp '" + std::string(text) +
                        "' is off the hourly lattice");
  }
  return to_hour(t);
}

std::string format_hour(Hour h) {
  const CivilTime t = to_civil(h);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00", t.year, t.month,
                t.day, t.hour);
  return buf;
}

bool TrafficWindow::contains(Hour h) const {
  const int wd = weekday(h);
  bool day_ok = false;
  for (int d : weekdays) day_ok = day_ok || d == wd;
  if (!day_ok) return false;
  const int hod = hour_of_day(h);
  for (const auto& [b, e] : hours)
    if (hod >= b && hod < e) return true;
  return false;
}

void TrafficWindow::validate() const {
  for (int d : weekdays)
    if (d < 0 || d > 6) throw ConfigError("traffic window weekday out of range 0-6");
  for (const auto& [b, e] : hours)
    if (b < 0 || e > 24 || b >= e) throw ConfigError("traffic window hours must satisfy 0 <= begin < end <= 24");
}

}  // namespace aqbias
