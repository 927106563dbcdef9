#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "urbancd/eval/metrics.hpp"
#include "urbancd/io/file.hpp"

namespace urbancd::io {

// Binary PGM (P5, maxval 255): changed pixels 255, others 0.
inline std::string serialize_mask(const Mask& m) {
  std::string out = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n255\n";
  out.reserve(out.size() + m.pixels.size());
  for (auto p : m.pixels) out.push_back(p ? static_cast<char>(255) : '\0');
  return out;
}

// Any nonzero pixel reads as changed.
inline Mask parse_mask(std::string_view data) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (data[pos] == ' ' || data[pos] == '\n' || data[pos] == '\r' || data[pos] == '\t') {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && data[pos] != ' ' && data[pos] != '\n' && data[pos] != '\r' && data[pos] != '\t') ++pos;
    return std::pair{data.substr(start, pos - start), start};
  };
  const auto [magic, at0] = token();
  if (magic != "P5") throw ParseError("pgm: expected P5 magic", at0);
  int w = 0, h = 0, maxval = 0;
  const auto [ws, at1] = token();
  if (!parse_int(ws, w) || w < 1) throw ParseError("pgm: bad width", at1);
  const auto [hs, at2] = token();
  if (!parse_int(hs, h) || h < 1) throw ParseError("pgm: bad height", at2);
  const auto [ms, at3] = token();
  if (!parse_int(ms, maxval) || maxval < 1 || maxval > 255) throw ParseError("pgm: only 8-bit maxval supported", at3);
  ++pos;  // single whitespace before the raster
  Mask m(w, h);
  if (data.size() < pos + m.pixels.size()) throw ParseError("pgm: truncated raster", data.size());
  for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = data[pos + i] != '\0';
  return m;
}

inline Mask read_mask(const std::filesystem::path& path) { return parse_mask(read_file(path)); }

inline void write_mask(const Mask& m, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_mask(m));
}

}  // namespace urbancd::io
