#include "dspo/date.hpp"

#include <charconv>
#include <cstdio>

#include "dspo/error.hpp"

namespace dspo {
namespace {

// Howard Hinnant's civil-calendar algorithms.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

int parse_int(std::string_view text, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorKind::Data, "malformed date/time '" + std::string(whole) + "'");
  }
  return value;
}

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int month_days(int y, int m) {
  static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && leap(y) ? 29 : days[m - 1];
}

}  // namespace

std::int64_t Date::serial() const {
  return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
}

Date Date::from_serial(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

Date Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    fail(ErrorKind::Data, "malformed date '" + std::string(text) + "', expected YYYY-MM-DD");
  }
  Date d{parse_int(text.substr(0, 4), text), parse_int(text.substr(5, 2), text),
         parse_int(text.substr(8, 2), text)};
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > month_days(d.year, d.month)) {
    fail(ErrorKind::Data, "invalid calendar date '" + std::string(text) + "'");
  }
  return d;
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

int Date::weekday() const {
  const std::int64_t s = serial();
  // 1970-01-01 was a Thursday (3)
  return static_cast<int>(((s % 7) + 7 + 3) % 7);
}

Date Date::next_weekday() const {
  Date d = from_serial(serial() + 1);
  while (d.weekday() >= 5) d = from_serial(d.serial() + 1);
  return d;
}

std::string format_timestamp(std::int64_t minutes) {
  const Date d = timestamp_date(minutes);
  const std::int64_t in_day = minutes - d.serial() * 1440;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:00", d.to_string().c_str(), static_cast<int>(in_day / 60),
                static_cast<int>(in_day % 60));
  return buf;
}

std::int64_t parse_timestamp(std::string_view text) {
  // YYYY-MM-DDTHH:MM[:SS]
  if (text.size() != 16 && text.size() != 19) {
    fail(ErrorKind::Data, "malformed timestamp '" + std::string(text) + "'");
  }
  if (text[10] != 'T' && text[10] != ' ') fail(ErrorKind::Data, "malformed timestamp '" + std::string(text) + "'");
  const Date d = Date::parse(text.substr(0, 10));
  if (text[13] != ':') fail(ErrorKind::Data, "malformed timestamp '" + std::string(text) + "'");
  const int hh = parse_int(text.substr(11, 2), text);
  const int mm = parse_int(text.substr(14, 2), text);
  int ss = 0;
  if (text.size() == 19) {
    if (text[16] != ':') fail(ErrorKind::Data, "malformed timestamp '" + std::string(text) + "'");
    ss = parse_int(text.substr(17, 2), text);
  }
  if (hh > 23 || mm > 59 || ss != 0) {
    fail(ErrorKind::Data, "unsupported timestamp '" + std::string(text) + "' (minute resolution)");
  }
  return d.serial() * 1440 + hh * 60 + mm;
}

}  // namespace dspo
