#include "dspo/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <system_error>

#include "dspo/error.hpp"

namespace dspo::csv {

Reader::Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
  if (!in_) fail(ErrorKind::Io, "cannot open " + path_);
}

void Reader::error(const std::string& message) const {
  fail(ErrorKind::Data, path_ + ":" + std::to_string(record_line_) + ": " + message);
}

bool Reader::next(Row& row) {
  row.clear();
  std::string line;
  while (true) {
    if (!std::getline(in_, line)) return false;
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    break;
  }
  record_line_ = line_;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  while (true) {
    if (i == line.size()) {
      if (!quoted) break;
      // quoted field spanning a line break
      std::string more;
      if (!std::getline(in_, more)) error("unterminated quoted field");
      ++line_;
      if (!more.empty() && more.back() == '\r') more.pop_back();
      field += '\n';
      line = std::move(more);
      i = 0;
      continue;
    }
    const char c = line[i++];
    if (quoted) {
      if (c == '"') {
        if (i < line.size() && line[i] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  row.push_back(std::move(field));
  return true;
}

Row Reader::header() {
  Row row;
  if (!next(row)) error("missing header");
  if (!row.empty() && row[0].size() >= 3 && row[0].compare(0, 3, "\xEF\xBB\xBF") == 0) row[0].erase(0, 3);
  return row;
}

std::size_t require_column(const Row& header, std::string_view name, const std::string& file) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  fail(ErrorKind::Data, file + ": missing mandatory column '" + std::string(name) + "'");
}

double parse_double(std::string_view text, const Reader& reader) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    reader.error("malformed number '" + std::string(text) + "'");
  }
  return value;
}

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) fail(ErrorKind::Io, "cannot format number");
  return std::string(buf, ptr);
}

Writer::Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path.string()) {
  if (!out_) fail(ErrorKind::Io, "cannot write " + path_);
}

void Writer::row(const Row& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n\r") != std::string::npos || (i == 0 && !f.empty() && f.front() == '#')) {
      out_ << '"';
      for (char c : f) {
        if (c == '"') out_ << '"';
        out_ << c;
      }
      out_ << '"';
    } else {
      out_ << f;
    }
  }
  out_ << '\n';
}

void Writer::comment(std::string_view text) { out_ << '#' << ' ' << text << '\n'; }

void Writer::close() {
  out_.close();
  if (!out_) fail(ErrorKind::Io, "failed writing " + path_);
}

}  // namespace dspo::csv
