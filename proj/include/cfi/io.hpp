#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfi/common.hpp"

namespace cfi {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// FNV-1a 64-bit content hash, hex-encoded. Used in run manifests to fingerprint artifacts.
std::string fnv1a_hex(const std::string& bytes);

// Split one CSV line on commas. No quoting support: none of the formats here need it.
std::vector<std::string> csv_split(const std::string& line);

double parse_num(const std::string& s, const std::string& file, long line);

// ISO-8601 timestamps, UTC, second resolution: "2013-01-01T00:00:00".
int64_t parse_iso8601(const std::string& s);          // throws DataError on malformed input
std::string format_iso8601(int64_t epoch_seconds);
int hour_of_day(int64_t epoch_seconds);
int day_of_year(int64_t epoch_seconds);               // 1-based, 1..366

}  // namespace cfi
