#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace optrack {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes to `path.tmp` and renames over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

std::uint64_t fnv1a64(std::string_view bytes);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double x);

/// Numeric CSV with a header line; blank lines and lines starting with '#' are skipped.
std::vector<std::vector<double>> read_numeric_csv(const std::string& path, bool has_header);

}  // namespace optrack
