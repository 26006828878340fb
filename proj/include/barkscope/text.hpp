#ifndef BARKSCOPE_TEXT_HPP
#define BARKSCOPE_TEXT_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace barkscope {

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
double parse_double(std::string_view s);

// Shortest-round-trip-safe representation (%.17g).
std::string format_exact(double v);
// Fixed-point with `decimals` digits.
std::string format_fixed(double v, int decimals);
// Scientific notation with `digits` significant digits after the point.
std::string format_sci(double v, int digits = 2);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace barkscope

#endif  // BARKSCOPE_TEXT_HPP
