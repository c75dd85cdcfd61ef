#pragma once
// Minimal RFC-4180 reader/writer. Lines beginning with '#' outside quotes are
// treated as comments so generated files may carry a provenance header.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace dspo::csv {

using Row = std::vector<std::string>;

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  // False at end of file. Throws Error(Data) on unterminated quotes.
  bool next(Row& row);
  // Line on which the last returned record started (1-based).
  std::size_t line() const noexcept { return record_line_; }
  const std::string& path() const noexcept { return path_; }

  // Reads the header record and checks that it matches `expected` exactly.
  Row header();
  [[noreturn]] void error(const std::string& message) const;

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
};

// Column index of `name` in `header`; throws Error(Data) naming the file.
std::size_t require_column(const Row& header, std::string_view name, const std::string& file);

double parse_double(std::string_view text, const Reader& reader);

// Shortest round-trip decimal representation.
std::string format_double(double value);

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  void row(const Row& fields);
  void comment(std::string_view text);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace dspo::csv
