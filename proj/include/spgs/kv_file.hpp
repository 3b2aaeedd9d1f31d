#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spgs {

/// Plain-text `key = value` file. `#` starts a comment line; blank lines are
/// ignored; keys are unique. Parse errors carry the 1-based line number.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text);
  static KeyValueFile read(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  const std::string& require(const std::string& key) const;
  int line_of(const std::string& key) const;

  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  int integer(const std::string& key) const;
  int integer_or(const std::string& key, int fallback) const;
  std::vector<double> numbers(const std::string& key) const;

  /// Keys in file order.
  const std::vector<std::string>& keys() const { return order_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

/// Shortest round-trip decimal representation ("inf" for infinity).
std::string format_number(double x);
std::string format_numbers(const std::vector<double>& xs);

/// Strict decimal parse of the full string; throws ValidationError with `what`.
double parse_double(const std::string& text, const std::string& what);
std::vector<double> parse_double_list(const std::string& text, const std::string& what);

}  // namespace spgs
