#pragma once

// Scanpath files: JSON lines {"path_id", "t", "phi", "theta"}, numbers
// printed with 17 significant digits so values round-trip exactly.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "panoscan/generator.hpp"

namespace panoscan {

std::string encode_scanpaths(std::span<const Scanpath> paths);
void write_scanpaths(std::span<const Scanpath> paths, const std::filesystem::path& file);

/// Paths ordered by path_id. Each path's records must be sorted by t with
/// uniform spacing; the rate is taken from that spacing (5 Hz for single points).
/// Throws FormatError naming the offending line.
std::vector<Scanpath> decode_scanpaths(std::istream& in, const std::string& source = "<stream>");
std::vector<Scanpath> read_scanpaths(const std::filesystem::path& file);

/// "%.17g" formatting.
std::string format_double(double x);

}  // namespace panoscan
