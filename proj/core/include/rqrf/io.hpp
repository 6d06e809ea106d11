#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rqrf::io {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

/// Splits on a single delimiter; empty fields are kept.
std::vector<std::string_view> split(std::string_view text, char delim);

/// Splits on runs of ASCII whitespace; empty fields are dropped.
std::vector<std::string_view> split_whitespace(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never see partial files.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// FNV-1a 64-bit; used to fingerprint artifacts.
std::uint64_t fingerprint(std::string_view bytes);

}  // namespace rqrf::io
