#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace prism {

// RFC-4180 CSV, UTF-8, '.' decimal point. Doubles are rendered with
// std::to_chars (shortest round-trip form) so that parse -> rewrite is
// byte-identical.
std::string csv_escape(const std::string& field);
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

class CsvWriter {
 public:
  void row(const std::vector<std::string>& fields);
  const std::string& str() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::string buf_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // DataError if absent
  bool has_column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& context);
CsvTable load_csv(const std::filesystem::path& path);

}  // namespace prism
