#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace reachsos {

// Formats a double with 17 significant digits ("%.17g"), enough to round-trip
// through parsing exactly. All user-visible floats go through this so that
// outputs are byte-reproducible.
std::string fmt17(double v);

// Hex-encoded SHA-256 of a byte string. Used for spec fingerprints in
// certificates and run manifests.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace reachsos
