#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saferoad {

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

// Appends one line (a trailing newline is added) and flushes.
void append_line(const std::filesystem::path& path, std::string_view line);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
Bytes base64_decode(std::string_view text);

// Formats a double with a fixed number of decimals ("%.{decimals}f").
std::string format_fixed(double value, int decimals);

}  // namespace saferoad
