#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace m2io::text {

std::string_view trim(std::string_view s);
bool is_space(char c);
/// Collapses whitespace runs to one space and trims both ends.
std::string normalize_whitespace(std::string_view s);
std::string to_lower(std::string_view s);
/// Lowercased alphanumeric runs. Bytes >= 0x80 count as word characters so
/// UTF-8 words stay intact.
std::vector<std::string> word_tokens(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Natural order: "image2" < "image10".
bool natural_less(std::string_view a, std::string_view b);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);
/// Value scaled by 100 and printed with one decimal, e.g. 0.4444 -> "44.4".
std::string format_percent(double fraction);

std::uint64_t fnv1a64(std::string_view data);
std::string sha256_hex(std::string_view data);
std::string hex64(std::uint64_t value);

}  // namespace m2io::text
