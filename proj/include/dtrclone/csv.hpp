#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Minimal delimiter-separated value reading and writing.
namespace dtrclone::csv {

std::vector<std::string> split_line(std::string_view line, char delim);

// Quotes a field only when it contains the delimiter, a quote or a newline.
std::string quote(std::string_view field, char delim);

// Shortest text that parses back to exactly the same double.
std::string format_double(double value);
std::string format_fixed(double value, int digits);
std::string format_optional(const std::optional<double>& value);

bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
  std::vector<std::string> comments;      // comment lines without the leading "# "

  // Index of a header column, or npos.
  std::size_t column(std::string_view name) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Skips empty lines and lines starting with '#'. The first remaining line is
// the header.
Table read(std::istream& in, char delim = ',');
Table read_file(const std::string& path, char delim = ',');

class Writer {
 public:
  Writer(std::ostream& out, char delim = ',') : out_(out), delim_(delim) {}

  // Writes "# columns: a,b,c" followed by the header row.
  void schema(const std::vector<std::string>& columns);
  void header(const std::vector<std::string>& columns);
  void comment(std::string_view text);
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
  char delim_;
};

}  // namespace dtrclone::csv
