#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "urbancd/change/change_map.hpp"
#include "urbancd/core/point_cloud.hpp"
#include "urbancd/io/file.hpp"

namespace urbancd::io {

enum class PlyType : std::uint8_t { i8, u8, i16, u16, i32, u32, f32, f64 };

inline std::size_t size_of(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

inline const char* type_name(PlyType t) {
  constexpr const char* names[] = {"char", "uchar", "short", "ushort", "int", "uint", "float", "double"};
  return names[static_cast<int>(t)];
}

inline bool parse_type(std::string_view s, PlyType& out) {
  struct Alias {
    std::string_view name;
    PlyType type;
  };
  static constexpr Alias aliases[] = {
      {"char", PlyType::i8},    {"int8", PlyType::i8},     {"uchar", PlyType::u8},   {"uint8", PlyType::u8},
      {"short", PlyType::i16},  {"int16", PlyType::i16},   {"ushort", PlyType::u16}, {"uint16", PlyType::u16},
      {"int", PlyType::i32},    {"int32", PlyType::i32},   {"uint", PlyType::u32},   {"uint32", PlyType::u32},
      {"float", PlyType::f32},  {"float32", PlyType::f32}, {"double", PlyType::f64}, {"float64", PlyType::f64},
  };
  for (const auto& a : aliases)
    if (a.name == s) {
      out = a.type;
      return true;
    }
  return false;
}

struct PlyProperty {
  std::string name;
  PlyType type;
};

// Vertex table held column-wise as doubles; every supported scalar type
// converts to double exactly.
struct PlyTable {
  std::vector<PlyProperty> properties;
  std::vector<std::vector<double>> columns;
  std::size_t rows = 0;

  int find(std::string_view name) const {
    for (std::size_t i = 0; i < properties.size(); ++i)
      if (properties[i].name == name) return static_cast<int>(i);
    return -1;
  }
  const std::vector<double>* column(std::string_view name) const {
    const int i = find(name);
    return i < 0 ? nullptr : &columns[static_cast<std::size_t>(i)];
  }
};

namespace detail {

template <class T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof v);
  }
  return v;
}

template <class T>
void store_le(std::string& out, T v) {
  char buf[sizeof v];
  std::memcpy(buf, &v, sizeof v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof v);
  out.append(buf, sizeof v);
}

inline double load_value(const char* p, PlyType t) {
  switch (t) {
    case PlyType::i8: return load_le<std::int8_t>(p);
    case PlyType::u8: return load_le<std::uint8_t>(p);
    case PlyType::i16: return load_le<std::int16_t>(p);
    case PlyType::u16: return load_le<std::uint16_t>(p);
    case PlyType::i32: return load_le<std::int32_t>(p);
    case PlyType::u32: return load_le<std::uint32_t>(p);
    case PlyType::f32: return load_le<float>(p);
    case PlyType::f64: return load_le<double>(p);
  }
  return 0.0;
}

inline void store_value(std::string& out, double v, PlyType t) {
  switch (t) {
    case PlyType::i8: store_le(out, static_cast<std::int8_t>(v)); break;
    case PlyType::u8: store_le(out, static_cast<std::uint8_t>(v)); break;
    case PlyType::i16: store_le(out, static_cast<std::int16_t>(v)); break;
    case PlyType::u16: store_le(out, static_cast<std::uint16_t>(v)); break;
    case PlyType::i32: store_le(out, static_cast<std::int32_t>(v)); break;
    case PlyType::u32: store_le(out, static_cast<std::uint32_t>(v)); break;
    case PlyType::f32: store_le(out, static_cast<float>(v)); break;
    case PlyType::f64: store_le(out, v); break;
  }
}

inline std::vector<std::string_view> split_words(std::string_view line) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) words.push_back(line.substr(start, i - start));
  }
  return words;
}

}  // namespace detail

inline PlyTable parse_ply(std::string_view data) {
  PlyTable table;
  std::size_t pos = 0;
  bool have_format = false, have_vertex = false, done = false;
  bool first = true;
  while (!done) {
    const std::size_t line_start = pos;
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string_view::npos) throw ParseError("ply: header is not terminated by end_header", line_start);
    const auto words = detail::split_words(data.substr(pos, nl - pos));
    pos = nl + 1;
    if (first) {
      if (words.size() != 1 || words[0] != "ply") throw ParseError("ply: missing 'ply' magic", line_start);
      first = false;
      continue;
    }
    if (words.empty() || words[0] == "comment" || words[0] == "obj_info") continue;
    if (words[0] == "format") {
      if (words.size() != 3 || words[1] != "binary_little_endian")
        throw ParseError("ply: only 'format binary_little_endian 1.0' is supported", line_start);
      have_format = true;
    } else if (words[0] == "element") {
      if (have_vertex) throw ParseError("ply: only a single 'vertex' element is supported", line_start);
      if (words.size() != 3 || words[1] != "vertex") throw ParseError("ply: expected 'element vertex <count>'", line_start);
      if (!parse_int(words[2], table.rows)) throw ParseError("ply: bad vertex count", line_start);
      have_vertex = true;
    } else if (words[0] == "property") {
      if (!have_vertex) throw ParseError("ply: property before element", line_start);
      if (words.size() >= 2 && words[1] == "list") throw ParseError("ply: list properties are not supported", line_start);
      PlyType t;
      if (words.size() != 3 || !parse_type(words[1], t)) throw ParseError("ply: bad property declaration", line_start);
      if (table.find(words[2]) >= 0) throw ParseError("ply: duplicate property " + std::string(words[2]), line_start);
      table.properties.push_back({std::string(words[2]), t});
    } else if (words[0] == "end_header") {
      done = true;
    } else {
      throw ParseError("ply: unknown header keyword '" + std::string(words[0]) + "'", line_start);
    }
  }
  if (!have_format) throw ParseError("ply: missing format line", 0);
  if (!have_vertex) throw ParseError("ply: missing vertex element", 0);

  std::size_t stride = 0;
  for (const auto& p : table.properties) stride += size_of(p.type);
  const std::size_t payload = data.size() - pos;
  if (stride == 0 && table.rows > 0) throw ParseError("ply: vertex element has no properties", pos);
  if (stride > 0 && payload / stride < table.rows)
    throw ParseError("ply: truncated payload, expected " + std::to_string(table.rows) + " records of " +
                         std::to_string(stride) + " bytes",
                     pos + (payload / stride) * stride);
  if (payload != table.rows * stride)
    throw ParseError("ply: trailing bytes after the last record", pos + table.rows * stride);

  table.columns.assign(table.properties.size(), std::vector<double>(table.rows));
  const char* base = data.data() + pos;
  for (std::size_t r = 0; r < table.rows; ++r) {
    const char* rec = base + r * stride;
    for (std::size_t c = 0; c < table.properties.size(); ++c) {
      table.columns[c][r] = detail::load_value(rec, table.properties[c].type);
      rec += size_of(table.properties[c].type);
    }
  }
  return table;
}

inline std::string serialize_ply(const PlyTable& table) {
  std::string out = "ply\nformat binary_little_endian 1.0\ncomment urbancd\nelement vertex " +
                    std::to_string(table.rows) + "\n";
  for (const auto& p : table.properties) out += "property " + std::string(type_name(p.type)) + " " + p.name + "\n";
  out += "end_header\n";
  std::size_t stride = 0;
  for (const auto& p : table.properties) stride += size_of(p.type);
  out.reserve(out.size() + stride * table.rows);
  for (std::size_t r = 0; r < table.rows; ++r)
    for (std::size_t c = 0; c < table.properties.size(); ++c)
      detail::store_value(out, table.columns[c][r], table.properties[c].type);
  return out;
}

namespace detail {

inline void add_column(PlyTable& t, std::string name, PlyType type, std::vector<double> values) {
  t.properties.push_back({std::move(name), type});
  t.columns.push_back(std::move(values));
}

inline bool ids_are_record_order(std::span<const PointId> ids) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != i) return false;
  return true;
}

inline std::vector<PointId> read_ids(const PlyTable& t) {
  std::vector<PointId> ids(t.rows);
  if (const auto* col = t.column("point_id"))
    for (std::size_t i = 0; i < t.rows; ++i) ids[i] = static_cast<PointId>((*col)[i]);
  else
    std::iota(ids.begin(), ids.end(), PointId{0});
  return ids;
}

inline std::vector<Vec3> read_positions(const PlyTable& t) {
  const auto* x = t.column("x");
  const auto* y = t.column("y");
  const auto* z = t.column("z");
  if (!x || !y || !z) throw ParseError("ply: x, y and z properties are required", 0);
  std::vector<Vec3> pts(t.rows);
  for (std::size_t i = 0; i < t.rows; ++i) pts[i] = Vec3((*x)[i], (*y)[i], (*z)[i]);
  return pts;
}

}  // namespace detail

inline PlyTable to_ply(const PointCloud& cloud) {
  validate(cloud);
  PlyTable t;
  t.rows = cloud.size();
  for (int d = 0; d < 3; ++d) {
    std::vector<double> col(t.rows);
    for (std::size_t i = 0; i < t.rows; ++i) col[i] = cloud.points[i][d];
    detail::add_column(t, std::string(1, "xyz"[d]), PlyType::f64, std::move(col));
  }
  if (cloud.track_lengths)
    detail::add_column(t, "track_len", PlyType::u16, {cloud.track_lengths->begin(), cloud.track_lengths->end()});
  if (cloud.normals)
    for (int d = 0; d < 3; ++d) {
      std::vector<double> col(t.rows);
      for (std::size_t i = 0; i < t.rows; ++i) col[i] = (*cloud.normals)[i][d];
      detail::add_column(t, std::string("n") + "xyz"[d], PlyType::f32, std::move(col));
    }
  if (!detail::ids_are_record_order(cloud.ids))
    detail::add_column(t, "point_id", PlyType::u32, {cloud.ids.begin(), cloud.ids.end()});
  return t;
}

inline PointCloud from_ply(const PlyTable& t) {
  PointCloud cloud;
  cloud.points = detail::read_positions(t);
  cloud.ids = detail::read_ids(t);
  if (const auto* tl = t.column("track_len")) {
    auto& out = cloud.track_lengths.emplace(t.rows);
    for (std::size_t i = 0; i < t.rows; ++i) out[i] = static_cast<std::uint16_t>((*tl)[i]);
  }
  const auto* nx = t.column("nx");
  const auto* ny = t.column("ny");
  const auto* nz = t.column("nz");
  if (nx || ny || nz) {
    if (!(nx && ny && nz)) throw ParseError("ply: normals need all of nx, ny, nz", 0);
    auto& out = cloud.normals.emplace(t.rows);
    for (std::size_t i = 0; i < t.rows; ++i) out[i] = Vec3((*nx)[i], (*ny)[i], (*nz)[i]);
  }
  try {
    validate(cloud);
  } catch (const InvalidParamsError& e) {
    throw ParseError(std::string("ply: ") + e.what(), 0);
  }
  return cloud;
}

inline PointCloud read_cloud(const std::filesystem::path& path) { return from_ply(parse_ply(read_file(path))); }

inline void write_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_ply(to_ply(cloud)));
}

// Cloud with a per-point ground-truth label column.
inline void write_cloud(const PointCloud& cloud, std::span<const ChangeLabel> labels,
                        const std::filesystem::path& path) {
  if (labels.size() != cloud.size()) throw ShapeMismatchError("write_cloud: one label per point required");
  PlyTable t = to_ply(cloud);
  std::vector<double> col(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) col[i] = static_cast<double>(labels[i]);
  detail::add_column(t, "label", PlyType::u8, std::move(col));
  write_file_atomic(path, serialize_ply(t));
}

// Labels indexed by point id.
inline std::vector<ChangeLabel> read_labels(const std::filesystem::path& path) {
  const PlyTable t = parse_ply(read_file(path));
  const auto* label = t.column("label");
  if (!label) throw ParseError("ply: " + path.string() + " has no label property", 0);
  const auto ids = detail::read_ids(t);
  std::vector<ChangeLabel> out(t.rows == 0 ? 0 : *std::max_element(ids.begin(), ids.end()) + std::size_t{1},
                               ChangeLabel::unchanged);
  for (std::size_t i = 0; i < t.rows; ++i) {
    if ((*label)[i] > 2) throw ParseError("ply: bad label in record " + std::to_string(i), 0);
    out[ids[i]] = static_cast<ChangeLabel>((*label)[i]);
  }
  return out;
}

// Labels if the file carries a label column, else nullopt.
inline std::optional<std::vector<ChangeLabel>> try_read_labels(const std::filesystem::path& path) {
  if (parse_ply(read_file(path)).find("label") < 0) return std::nullopt;
  return read_labels(path);
}

inline PlyTable to_ply(const ChangeMap& map) {
  PlyTable t;
  t.rows = map.size();
  for (int d = 0; d < 3; ++d) {
    std::vector<double> col(t.rows);
    for (std::size_t i = 0; i < t.rows; ++i) col[i] = map.entries[i].position[d];
    detail::add_column(t, std::string(1, "xyz"[d]), PlyType::f64, std::move(col));
  }
  std::vector<double> response(t.rows), label(t.rows), origin(t.rows), id(t.rows);
  for (std::size_t i = 0; i < t.rows; ++i) {
    const auto& e = map.entries[i];
    response[i] = e.response;
    label[i] = static_cast<double>(e.label);
    origin[i] = static_cast<double>(e.origin);
    id[i] = e.id;
  }
  detail::add_column(t, "response", PlyType::f32, std::move(response));
  detail::add_column(t, "label", PlyType::u8, std::move(label));
  detail::add_column(t, "origin", PlyType::u8, std::move(origin));
  detail::add_column(t, "point_id", PlyType::u32, std::move(id));
  return t;
}

inline ChangeMap changes_from_ply(const PlyTable& t) {
  const auto* response = t.column("response");
  const auto* label = t.column("label");
  const auto* origin = t.column("origin");
  if (!response || !label || !origin || !t.column("point_id"))
    throw ParseError("ply: change file needs response, label, origin and point_id", 0);
  const auto pts = detail::read_positions(t);
  const auto ids = detail::read_ids(t);
  ChangeMap map;
  map.entries.resize(t.rows);
  for (std::size_t i = 0; i < t.rows; ++i) {
    if ((*label)[i] > 2 || (*origin)[i] > 1) throw ParseError("ply: bad label or origin in record " + std::to_string(i), 0);
    map.entries[i] = ChangeEntry{static_cast<Origin>((*origin)[i]), ids[i], pts[i], (*response)[i],
                                 static_cast<ChangeLabel>((*label)[i])};
  }
  return map;
}

inline ChangeMap read_changes(const std::filesystem::path& path) {
  return changes_from_ply(parse_ply(read_file(path)));
}

inline void write_changes(const ChangeMap& map, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_ply(to_ply(map)));
}

}  // namespace urbancd::io
