#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rematch/errors.hpp"
#include "rematch/log.hpp"
#include "rematch/mesh.hpp"

namespace rematch {

enum class MeshFormat { off, obj, ply };

inline MeshFormat format_from_path(const std::filesystem::path &path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".off") return MeshFormat::off;
  if (ext == ".obj") return MeshFormat::obj;
  if (ext == ".ply") return MeshFormat::ply;
  throw UsageError("cannot infer mesh format from extension '" + ext + "'");
}

namespace detail {

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Whitespace tokenizer over a text buffer that understands '#' comments.
class Tokens {
public:
  explicit Tokens(std::string_view text) : s_(text) {}

  std::optional<std::string_view> next() {
    for (;;) {
      while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ < s_.size() && s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    if (pos_ >= s_.size()) return std::nullopt;
    std::size_t b = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    return s_.substr(b, pos_ - b);
  }

  std::string_view expect(const char *what) {
    auto t = next();
    if (!t) throw IoError(std::string("unexpected end of file while reading ") + what);
    return *t;
  }

  std::size_t position() const { return pos_; }

private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

template <class T> T parse_number(std::string_view tok, const char *what) {
  T value{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw IoError(std::string("malformed ") + what + " '" + std::string(tok) + "'");
  return value;
}

inline std::string format_double(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

/// Drops vertices referenced by no triangle (with a warning), preserving the
/// order of the rest.
inline TriMesh assemble(std::vector<Vec3> verts, std::vector<Tri> tris, const std::string &name) {
  const int n = static_cast<int>(verts.size());
  for (std::size_t t = 0; t < tris.size(); ++t)
    for (int c : tris[t])
      if (c < 0 || c >= n)
        throw IoError(name + ": face " + std::to_string(t) + " has out-of-range index " + std::to_string(c));
  std::vector<char> used(n, 0);
  for (const Tri &f : tris)
    for (int c : f) used[c] = 1;
  const auto isolated = static_cast<int>(std::count(used.begin(), used.end(), 0));
  if (isolated > 0) {
    log::warn(name + ": dropping " + std::to_string(isolated) + " isolated vertices");
    std::vector<int> remap(n, -1);
    std::vector<Vec3> kept;
    for (int v = 0; v < n; ++v)
      if (used[v]) {
        remap[v] = static_cast<int>(kept.size());
        kept.push_back(verts[v]);
      }
    for (Tri &f : tris)
      for (int &c : f) c = remap[c];
    verts = std::move(kept);
  }
  try {
    return TriMesh(std::move(verts), std::move(tris));
  } catch (const TopologyError &e) {
    throw IoError(name + ": " + e.what());
  }
}

inline TriMesh parse_off(std::string_view text, const std::string &name) {
  Tokens tok(text);
  std::string_view head = tok.expect("OFF header");
  if (head != "OFF") throw IoError(name + ": missing OFF header");
  const auto nv = parse_number<long long>(tok.expect("vertex count"), "vertex count");
  const auto nf = parse_number<long long>(tok.expect("face count"), "face count");
  parse_number<long long>(tok.expect("edge count"), "edge count");
  if (nv < 0 || nf < 0) throw IoError(name + ": negative element count");
  std::vector<Vec3> verts(static_cast<std::size_t>(nv));
  for (auto &p : verts)
    for (int i = 0; i < 3; ++i) p[i] = parse_number<double>(tok.expect("coordinate"), "coordinate");
  std::vector<Tri> tris(static_cast<std::size_t>(nf));
  for (auto &f : tris) {
    const auto k = parse_number<int>(tok.expect("face size"), "face size");
    if (k != 3) throw IoError(name + ": non-triangular face (" + std::to_string(k) + " vertices)");
    for (int &c : f) c = parse_number<int>(tok.expect("face index"), "face index");
  }
  return assemble(std::move(verts), std::move(tris), name);
}

inline TriMesh parse_obj(std::string_view text, const std::string &name) {
  std::vector<Vec3> verts;
  std::vector<Tri> tris;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    Tokens tok(line);
    auto kw = tok.next();
    if (!kw) continue;
    if (*kw == "v") {
      Vec3 p;
      for (int i = 0; i < 3; ++i) p[i] = parse_number<double>(tok.expect("coordinate"), "coordinate");
      verts.push_back(p);
    } else if (*kw == "f") {
      std::vector<int> idx;
      while (auto t = tok.next()) {
        std::string_view first = t->substr(0, t->find('/'));
        long long i = parse_number<long long>(first, "face index");
        if (i < 0) i += static_cast<long long>(verts.size()) + 1;
        idx.push_back(static_cast<int>(i - 1));
      }
      if (idx.size() != 3)
        throw IoError(name + ": non-triangular face (" + std::to_string(idx.size()) + " vertices)");
      tris.push_back({idx[0], idx[1], idx[2]});
    }
  }
  return assemble(std::move(verts), std::move(tris), name);
}

struct PlyProperty {
  std::string name;
  std::string type;       // scalar type, or list item type
  std::string count_type; // non-empty for list properties
};

struct PlyElement {
  std::string name;
  long long count = 0;
  std::vector<PlyProperty> props;
};

inline int ply_type_size(const std::string &t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw IoError("unknown PLY type '" + t + "'");
}

inline double ply_read_binary(const char *p, const std::string &t) {
  auto get = [p]<class T>(T) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return get(std::int8_t{});
  if (t == "uchar" || t == "uint8") return get(std::uint8_t{});
  if (t == "short" || t == "int16") return get(std::int16_t{});
  if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
  if (t == "int" || t == "int32") return get(std::int32_t{});
  if (t == "uint" || t == "uint32") return get(std::uint32_t{});
  if (t == "float" || t == "float32") return get(float{});
  return get(double{});
}

inline TriMesh parse_ply(const std::string &data, const std::string &name) {
  static_assert(std::endian::native == std::endian::little, "PLY reader assumes a little-endian host");
  std::size_t header_end = data.find("end_header");
  if (data.rfind("ply", 0) != 0 || header_end == std::string::npos)
    throw IoError(name + ": malformed PLY header");
  std::size_t body = data.find('\n', header_end);
  if (body == std::string::npos) throw IoError(name + ": malformed PLY header");
  ++body;

  std::istringstream header(data.substr(0, header_end));
  std::string line, format;
  std::vector<PlyElement> elements;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      ls >> format;
    } else if (kw == "element") {
      PlyElement el;
      ls >> el.name >> el.count;
      elements.push_back(el);
    } else if (kw == "property") {
      if (elements.empty()) throw IoError(name + ": PLY property before element");
      PlyProperty pr;
      std::string t;
      ls >> t;
      if (t == "list") {
        ls >> pr.count_type >> pr.type >> pr.name;
      } else {
        pr.type = t;
        ls >> pr.name;
      }
      elements.back().props.push_back(pr);
    }
  }
  const bool binary = format == "binary_little_endian";
  if (!binary && format != "ascii") throw IoError(name + ": unsupported PLY format '" + format + "'");

  std::vector<Vec3> verts;
  std::vector<Tri> tris;
  std::size_t cursor = body;
  Tokens text(std::string_view(data).substr(body));

  auto scalar = [&](const std::string &type) -> double {
    if (!binary) return parse_number<double>(text.expect("PLY value"), "PLY value");
    const int sz = ply_type_size(type);
    if (cursor + sz > data.size()) throw IoError(name + ": truncated PLY body");
    double v = ply_read_binary(data.data() + cursor, type);
    cursor += sz;
    return v;
  };

  for (const PlyElement &el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    if (is_vertex) verts.resize(static_cast<std::size_t>(el.count));
    for (long long i = 0; i < el.count; ++i) {
      for (const PlyProperty &pr : el.props) {
        if (pr.count_type.empty()) {
          double v = scalar(pr.type);
          if (is_vertex) {
            if (pr.name == "x") verts[i][0] = v;
            else if (pr.name == "y") verts[i][1] = v;
            else if (pr.name == "z") verts[i][2] = v;
          }
          continue;
        }
        const auto k = static_cast<long long>(scalar(pr.count_type));
        const bool indices = is_face && (pr.name == "vertex_indices" || pr.name == "vertex_index");
        if (indices && k != 3)
          throw IoError(name + ": non-triangular face (" + std::to_string(k) + " vertices)");
        Tri f{};
        for (long long j = 0; j < k; ++j) {
          double v = scalar(pr.type);
          if (indices) f[j] = static_cast<int>(v);
        }
        if (indices) tris.push_back(f);
      }
    }
  }
  return assemble(std::move(verts), std::move(tris), name);
}

} // namespace detail

inline TriMesh load_mesh(const std::filesystem::path &path, std::optional<MeshFormat> format = std::nullopt) {
  const MeshFormat fmt = format ? *format : format_from_path(path);
  const std::string data = detail::read_file(path);
  const std::string name = path.string();
  switch (fmt) {
  case MeshFormat::off: return detail::parse_off(data, name);
  case MeshFormat::obj: return detail::parse_obj(data, name);
  case MeshFormat::ply: return detail::parse_ply(data, name);
  }
  throw UsageError("unknown mesh format");
}

/// Deterministic text/binary writers. Text formats use shortest round-trip
/// decimal representations; PLY defaults to binary little-endian doubles.
inline void save_mesh(const std::filesystem::path &path, const TriMesh &mesh,
                      std::optional<MeshFormat> format = std::nullopt, bool ply_binary = true) {
  const MeshFormat fmt = format ? *format : format_from_path(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  using detail::format_double;
  auto xyz = [](const Vec3 &p) {
    return format_double(p[0]) + ' ' + format_double(p[1]) + ' ' + format_double(p[2]);
  };
  switch (fmt) {
  case MeshFormat::off:
    out << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_triangles() << " 0\n";
    for (const Vec3 &p : mesh.vertices()) out << xyz(p) << '\n';
    for (const Tri &f : mesh.triangles()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    break;
  case MeshFormat::obj:
    for (const Vec3 &p : mesh.vertices()) out << "v " << xyz(p) << '\n';
    for (const Tri &f : mesh.triangles()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    break;
  case MeshFormat::ply: {
    out << "ply\nformat " << (ply_binary ? "binary_little_endian" : "ascii") << " 1.0\n"
        << "element vertex " << mesh.num_vertices() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "element face " << mesh.num_triangles() << "\n"
        << "property list uchar int vertex_indices\nend_header\n";
    if (ply_binary) {
      for (const Vec3 &p : mesh.vertices())
        for (int i = 0; i < 3; ++i) {
          double v = p[i];
          out.write(reinterpret_cast<const char *>(&v), sizeof v);
        }
      for (const Tri &f : mesh.triangles()) {
        const unsigned char k = 3;
        out.write(reinterpret_cast<const char *>(&k), 1);
        for (int c : f) {
          std::int32_t v = c;
          out.write(reinterpret_cast<const char *>(&v), sizeof v);
        }
      }
    } else {
      for (const Vec3 &p : mesh.vertices()) out << xyz(p) << '\n';
      for (const Tri &f : mesh.triangles()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
    break;
  }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

} // namespace rematch
