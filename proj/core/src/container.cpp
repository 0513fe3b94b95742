#include "aggvae/container.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <sstream>

#include "aggvae/error.hpp"

namespace aggvae {

void write_u64_le(std::ostream& out, std::uint64_t value) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xffU);
  }
  out.write(bytes.data(), bytes.size());
}

std::uint64_t read_u64_le(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw Error("unexpected end of file while reading integer");
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) {
    value |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  }
  return value;
}

void write_f64_le(std::ostream& out, std::span<const double> values) {
  for (double v : values) write_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

void read_f64_le(std::istream& in, std::span<double> values) {
  for (double& v : values) v = std::bit_cast<double>(read_u64_le(in));
}

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const std::string& header_json,
                     std::span<const double> body) {
  if (magic.size() != 8) throw Error("container magic must be 8 bytes");
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_u64_le(out, header_json.size());
  out.write(header_json.data(), static_cast<std::streamsize>(header_json.size()));
  write_f64_le(out, body);
  if (!out) throw Error("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path,
                         std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) {
    throw Error(path.string() + ": bad magic, expected " + std::string(magic));
  }
  const std::uint64_t header_size = read_u64_le(in);
  if (header_size > (1ULL << 32)) throw Error(path.string() + ": corrupt header");
  Container c;
  c.header_json.resize(header_size);
  in.read(c.header_json.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw Error(path.string() + ": truncated header");

  const auto body_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto body_bytes = static_cast<std::uint64_t>(in.tellg() - body_start);
  in.seekg(body_start);
  if (body_bytes % 8 != 0) throw Error(path.string() + ": body is not f64-aligned");
  c.body.resize(body_bytes / 8);
  read_f64_le(in, c.body);
  return c;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& contents) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << contents;
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace aggvae
