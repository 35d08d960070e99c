#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace stress {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// 9 significant digits; round-trips every float exactly.
std::string format_float(float v);

// Fixed-point with the given number of decimals ("%.*f").
std::string format_fixed(double v, int decimals);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace stress
