#pragma once

// Minimal RFC-4180 CSV support. Numbers are written with 17 significant
// digits so every double round-trips bit-exactly.

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace mvlab::csv {

std::string format_double(double v);
double parse_double(std::string_view s);

/// Quotes a field if it contains a comma, quote, CR or LF.
std::string quote(std::string_view field);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void header(const std::vector<std::string>& names);
  void row(const std::vector<double>& values);
  /// Row with a leading text column (e.g. a series name).
  void row(std::string_view label, const std::vector<double>& values);
  void raw_row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

/// Opens `path` for writing (creating parent directories), throwing IoError on failure.
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace mvlab::csv
