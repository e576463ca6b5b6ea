#pragma once
// Field dump format: one line of UTF-8 JSON {"dimension","M","L","h","name"}
// terminated by '\n', then 2*M^N little-endian IEEE-754 doubles (re, im per
// node, row-major node order). Round trips are bit-exact.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "magnls/grid.hpp"

namespace magnls {

struct NamedField {
  ComplexField field;
  std::string name;
};

namespace detail {

inline void put_le_double(std::ostream& os, double x) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_le_double(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (is.gcount() != 8) throw std::runtime_error("field dump truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write_field(std::ostream& os, const ComplexField& u, const std::string& name) {
  const GridSpec& g = u.grid();
  nlohmann::json header = {
      {"dimension", g.dimension()}, {"M", g.points()}, {"L", g.half_width()}, {"h", g.spacing()}, {"name", name}};
  os << header.dump() << '\n';
  for (const Complex& z : u.values()) {
    detail::put_le_double(os, z.real());
    detail::put_le_double(os, z.imag());
  }
  if (!os) throw std::runtime_error("failed writing field dump '" + name + "'");
}

inline NamedField read_field(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("field dump has no header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("field dump header is not JSON: ") + e.what());
  }
  const GridSpec g(header.at("dimension").get<int>(), header.at("L").get<double>(), header.at("M").get<int>());
  std::vector<Complex> v(g.size());
  for (auto& z : v) {
    const double re = detail::get_le_double(is);
    const double im = detail::get_le_double(is);
    z = Complex(re, im);
  }
  return NamedField{ComplexField(g, std::move(v)), header.value("name", std::string{})};
}

inline void save_field(const std::filesystem::path& path, const ComplexField& u, const std::string& name) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_field(os, u, name);
}

inline NamedField load_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_field(is);
}

}  // namespace magnls
