#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace dspo {

// Proleptic Gregorian calendar date.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  // Days since 1970-01-01.
  std::int64_t serial() const;
  static Date from_serial(std::int64_t days);
  // Strict YYYY-MM-DD; throws Error(Data) otherwise.
  static Date parse(std::string_view text);
  std::string to_string() const;
  // 0 = Monday ... 6 = Sunday
  int weekday() const;
  Date next_weekday() const;

  friend auto operator<=>(const Date&, const Date&) = default;
};

// Minutes since the epoch <-> "YYYY-MM-DDTHH:MM:SS" (seconds must be 00).
std::string format_timestamp(std::int64_t minutes);
std::int64_t parse_timestamp(std::string_view text);
inline Date timestamp_date(std::int64_t minutes) {
  return Date::from_serial(minutes >= 0 ? minutes / 1440 : -((-minutes + 1439) / 1440));
}

}  // namespace dspo
