#ifndef MERGENET_CSV_HPP
#define MERGENET_CSV_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mergenet {

/// Shortest round-tripping text for a double ("%.17g").
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

/// Splits one CSV line on commas. Fields are never quoted in our files.
std::vector<std::string> split_csv_line(std::string_view line);
/// Splits text into lines, dropping a trailing empty line and any '\r'.
std::vector<std::string> split_lines(std::string_view text);

/// Strict numeric parse of a whole field; nullopt if it is not a number.
std::optional<double> parse_number(const std::string& field);

}  // namespace mergenet

#endif  // MERGENET_CSV_HPP
