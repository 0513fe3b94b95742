#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace aggvae {

// Binary layout shared by decoder and draw files:
//   8-byte magic | u64 LE header length | JSON header | f64 LE body
struct Container {
  std::string header_json;
  std::vector<double> body;
};

void write_u64_le(std::ostream& out, std::uint64_t value);
std::uint64_t read_u64_le(std::istream& in);
void write_f64_le(std::ostream& out, std::span<const double> values);
void read_f64_le(std::istream& in, std::span<double> values);

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const std::string& header_json,
                     std::span<const double> body);
Container read_container(const std::filesystem::path& path,
                         std::string_view magic);

/// Writes `contents` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path,
                     const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace aggvae
