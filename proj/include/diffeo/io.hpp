#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace diffeo::io {

/// Raw little-endian float32 arrays, independent of host byte order.
void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path);

void append_f64_le(std::string& out, std::span<const double> values);
void read_f64_le(std::span<const char> bytes, std::span<double> out);

std::uint32_t crc32(std::span<const char> bytes);
std::uint32_t crc32_file(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace diffeo::io
