#pragma once

#include <stdexcept>
#include <string>

namespace hybridgait {

// Malformed text input or output failure (profiles, gait files, traces).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

// Writes through a temporary file in the same directory, then renames, so a
// crash never leaves a half-written file at the destination.
void write_file_atomic(const std::string& path, const std::string& content);

// Reads a whole file; throws FormatError when it cannot be opened.
std::string read_file(const std::string& path);

}  // namespace hybridgait
