#pragma once

// Point/camera ingestion, mesh output, hypothesis checkpoints, config echo.

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "octomesh/config.hpp"
#include "octomesh/dataset.hpp"
#include "octomesh/fuse.hpp"
#include "octomesh/geometry.hpp"

namespace octomesh {

static_assert(std::endian::native == std::endian::little, "binary io assumes a little-endian host");

/// Writes through a sibling temp file and renames it over `path`, so the final path
/// holds either the old content or the complete new one.
inline void atomic_write(const std::string& path, const std::function<void(std::ostream&)>& body) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.parent_path() / ("." + target.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    try {
      body(out);
    } catch (...) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw;
    }
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error("write failed for " + path);
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot move output into place at " + path);
  }
}

namespace ply {

enum class Type : std::uint8_t { I8, U8, I16, U16, I32, U32, F32, F64 };

inline std::size_t size_of(Type t) {
  switch (t) {
    case Type::I8:
    case Type::U8: return 1;
    case Type::I16:
    case Type::U16: return 2;
    case Type::I32:
    case Type::U32:
    case Type::F32: return 4;
    case Type::F64: return 8;
  }
  return 0;
}

inline bool parse_type(const std::string& s, Type& t) {
  static const std::pair<const char*, Type> names[] = {
      {"char", Type::I8},    {"int8", Type::I8},     {"uchar", Type::U8},    {"uint8", Type::U8},
      {"short", Type::I16},  {"int16", Type::I16},   {"ushort", Type::U16},  {"uint16", Type::U16},
      {"int", Type::I32},    {"int32", Type::I32},   {"uint", Type::U32},    {"uint32", Type::U32},
      {"float", Type::F32},  {"float32", Type::F32}, {"double", Type::F64},  {"float64", Type::F64}};
  for (const auto& [n, v] : names)
    if (s == n) {
      t = v;
      return true;
    }
  return false;
}

struct Property {
  std::string name;
  Type type = Type::F64;
  bool list = false;
  Type count_type = Type::U8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;

  int find(const std::string& n) const {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i].name == n) return static_cast<int>(i);
    return -1;
  }
};

struct Header {
  std::vector<Element> elements;
  std::vector<std::string> comments;
  std::size_t data_offset = 0;
};

inline Header read_header(std::istream& in, const std::string& path) {
  Header h;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) { throw Error(path + ":" + std::to_string(lineno) + ": " + msg); };
  auto next = [&]() {
    if (!std::getline(in, line)) fail("unexpected end of header");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next();
  if (line != "ply") fail("not a ply file");
  next();
  if (line != "format binary_little_endian 1.0") fail("unsupported format '" + line + "', need binary_little_endian 1.0");
  for (;;) {
    next();
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info") {
      h.comments.push_back(line.size() > kw.size() + 1 ? line.substr(kw.size() + 1) : "");
    } else if (kw == "element") {
      Element e;
      long long n = -1;
      if (!(ss >> e.name >> n) || n < 0) fail("malformed element line");
      e.count = static_cast<std::size_t>(n);
      h.elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (h.elements.empty()) fail("property before any element");
      Property p;
      std::string t;
      if (!(ss >> t)) fail("malformed property line");
      if (t == "list") {
        std::string ct, vt;
        if (!(ss >> ct >> vt >> p.name)) fail("malformed list property");
        if (!parse_type(ct, p.count_type) || !parse_type(vt, p.type)) fail("unknown type in list property " + p.name);
        if (p.count_type == Type::F32 || p.count_type == Type::F64) fail("list count type must be an integer");
        p.list = true;
      } else {
        if (!(ss >> p.name)) fail("malformed property line");
        if (!parse_type(t, p.type)) fail("unknown property type '" + t + "'");
      }
      h.elements.back().props.push_back(std::move(p));
    } else if (!kw.empty()) {
      fail("unexpected header keyword '" + kw + "'");
    }
  }
  h.data_offset = static_cast<std::size_t>(in.tellg());
  return h;
}

/// What is being read, for error messages.
struct Where {
  const std::string& element;
  std::size_t index;
  const std::string& property;
  std::string str() const { return element + " " + std::to_string(index) + " property " + property; }
};

/// Bounds-checked little-endian reader over the body bytes.
class Cursor {
public:
  Cursor(std::vector<char> data, std::size_t base, std::string path)
      : data_(std::move(data)), base_(base), path_(std::move(path)) {}

  double read(Type t, const Where& what) {
    need(size_of(t), what);
    const char* p = data_.data() + pos_;
    pos_ += size_of(t);
    switch (t) {
      case Type::I8: return static_cast<std::int8_t>(*p);
      case Type::U8: return static_cast<std::uint8_t>(*p);
      case Type::I16: return load<std::int16_t>(p);
      case Type::U16: return load<std::uint16_t>(p);
      case Type::I32: return load<std::int32_t>(p);
      case Type::U32: return load<std::uint32_t>(p);
      case Type::F32: return load<float>(p);
      case Type::F64: return load<double>(p);
    }
    return 0;
  }
  std::uint64_t read_count(Type t, const Where& what) {
    const auto at = offset();
    const double v = read(t, what);
    if (v < 0) throw Error(path_ + ": negative list length at byte offset " + std::to_string(at) + " (" + what.str() + ")");
    return static_cast<std::uint64_t>(v);
  }
  void skip(const Property& p, const Where& what) {
    if (!p.list) {
      need(size_of(p.type), what);
      pos_ += size_of(p.type);
      return;
    }
    const auto n = read_count(p.count_type, what);
    need(n * size_of(p.type), what);
    pos_ += n * size_of(p.type);
  }
  std::size_t offset() const { return base_ + pos_; }
  bool at_end() const { return pos_ == data_.size(); }

private:
  template <class T>
  static T load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
  }
  void need(std::size_t n, const Where& what) const {
    if (data_.size() - pos_ < n)
      throw Error(path_ + ": truncated data at byte offset " + std::to_string(offset()) + " reading " + what.str());
  }
  std::vector<char> data_;
  std::size_t base_;
  std::size_t pos_ = 0;
  std::string path_;
};

inline std::vector<char> read_rest(std::istream& in) {
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace ply

// Points

/// Binary little-endian ply: x, y, z as double, scale as float, visibility as a list
/// of uint camera ids. Unit scale and notes ride along as comments.
inline void write_points(const Dataset& ds, const std::string& path) {
  atomic_write(path, [&](std::ostream& out) {
    out << "ply\nformat binary_little_endian 1.0\n";
    std::ostringstream us;
    us.precision(17);
    us << ds.unit_scale;
    out << "comment unit_scale " << us.str() << "\n";
    if (!ds.notes.empty()) {
      std::string n = ds.notes;
      std::replace(n.begin(), n.end(), '\n', ' ');
      out << "comment notes " << n << "\n";
    }
    out << "element vertex " << ds.points.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "property float scale\nproperty list uint uint visibility\nend_header\n";
    for (const auto& p : ds.points) {
      ply::put(out, p.position.x);
      ply::put(out, p.position.y);
      ply::put(out, p.position.z);
      ply::put(out, static_cast<float>(p.scale));
      ply::put(out, static_cast<std::uint32_t>(p.cameras.size()));
      for (auto c : p.cameras) ply::put(out, static_cast<std::uint32_t>(c));
    }
  });
}

/// Points without camera resolution; see read_dataset.
inline Dataset read_points(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const auto h = ply::read_header(in, path);
  Dataset ds;
  for (const auto& c : h.comments) {
    if (c.rfind("unit_scale ", 0) == 0) {
      try {
        ds.unit_scale = std::stod(c.substr(11));
      } catch (const std::exception&) {
        throw Error(path + ": malformed unit_scale comment");
      }
    } else if (c.rfind("notes ", 0) == 0) {
      ds.notes = c.substr(6);
    }
  }
  const ply::Element* vertex = nullptr;
  for (const auto& e : h.elements)
    if (e.name == "vertex") vertex = &e;
  if (!vertex) throw Error(path + ": no vertex element");
  const char* required[] = {"x", "y", "z", "scale", "visibility"};
  int idx[5];
  for (int i = 0; i < 5; ++i) {
    idx[i] = vertex->find(required[i]);
    if (idx[i] < 0) throw Error(path + ": vertex element lacks the '" + std::string(required[i]) + "' property");
  }
  for (int i = 0; i < 4; ++i)
    if (vertex->props[idx[i]].list) throw Error(path + ": property '" + required[i] + "' must be a scalar");
  if (!vertex->props[idx[4]].list) throw Error(path + ": property 'visibility' must be a list");
  const auto vis_type = vertex->props[idx[4]].type;
  if (vis_type == ply::Type::F32 || vis_type == ply::Type::F64)
    throw Error(path + ": property 'visibility' must hold integer camera ids");

  ply::Cursor cur(ply::read_rest(in), h.data_offset, path);
  for (const auto& e : h.elements) {
    const bool is_vertex = &e == vertex;
    if (is_vertex) ds.points.resize(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        const auto& p = e.props[k];
        const ply::Where what{e.name, i, p.name};
        if (!is_vertex) {
          cur.skip(p, what);
          continue;
        }
        auto& v = ds.points[i];
        const int ki = static_cast<int>(k);
        if (ki == idx[0]) v.position.x = cur.read(p.type, what);
        else if (ki == idx[1]) v.position.y = cur.read(p.type, what);
        else if (ki == idx[2]) v.position.z = cur.read(p.type, what);
        else if (ki == idx[3]) v.scale = cur.read(p.type, what);
        else if (ki == idx[4]) {
          const auto at = cur.offset();
          const auto n = cur.read_count(p.count_type, what);
          if (n > (1u << 20)) throw Error(path + ": implausible visibility length at byte offset " + std::to_string(at));
          v.cameras.resize(n);
          for (auto& c : v.cameras) {
            const double id = cur.read(p.type, what);
            if (id < 0) throw Error(path + ": negative camera id in " + what.str());
            c = static_cast<CameraId>(id);
          }
        } else {
          cur.skip(p, what);
        }
      }
    }
  }
  if (!cur.at_end()) throw Error(path + ": trailing bytes after the last element at byte offset " + std::to_string(cur.offset()));
  return ds;
}

// Cameras

/// One camera per line: `id cx cy cz`. Blank lines and lines starting with '#' are skipped.
inline void write_cameras(const std::vector<Camera>& cams, const std::string& path) {
  atomic_write(path, [&](std::ostream& out) {
    out.precision(17);
    out << "# id cx cy cz\n";
    for (const auto& c : cams) out << c.id << ' ' << c.center.x << ' ' << c.center.y << ' ' << c.center.z << '\n';
  });
}

inline std::vector<Camera> read_cameras(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<Camera> cams;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    long long id = -1;
    Camera c;
    std::string extra;
    if (!(ss >> id >> c.center.x >> c.center.y >> c.center.z) || id < 0 || id > 0xffffffffll || (ss >> extra))
      throw Error(path + ":" + std::to_string(lineno) + ": expected 'id cx cy cz'");
    c.id = static_cast<CameraId>(id);
    cams.push_back(c);
  }
  return cams;
}

/// Points plus cameras, checked: every referenced camera must exist.
inline Dataset read_dataset(const std::string& point_path, const std::string& camera_path) {
  auto ds = read_points(point_path);
  ds.cameras = read_cameras(camera_path);
  ds.validate();
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::string& point_path, const std::string& camera_path) {
  write_points(ds, point_path);
  write_cameras(ds.cameras, camera_path);
}

// Meshes

enum class MeshFormat { Ply, Obj };

inline MeshFormat mesh_format_for(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ply") return MeshFormat::Ply;
  if (ext == ".obj") return MeshFormat::Obj;
  throw Error("cannot tell the mesh format of " + path + " (use .ply or .obj)");
}

/// `offset` is added to every vertex on the way out.
inline void write_mesh(const IndexedMesh& mesh, const std::string& path, MeshFormat fmt, Vec3 offset = {0, 0, 0}) {
  atomic_write(path, [&](std::ostream& out) {
    if (fmt == MeshFormat::Ply) {
      out << "ply\nformat binary_little_endian 1.0\nelement vertex " << mesh.vertices.size()
          << "\nproperty double x\nproperty double y\nproperty double z\nelement face " << mesh.size()
          << "\nproperty list uchar uint vertex_indices\nend_header\n";
      for (const auto& v : mesh.vertices) {
        const Vec3 g = v + offset;
        ply::put(out, g.x);
        ply::put(out, g.y);
        ply::put(out, g.z);
      }
      for (const auto& t : mesh.triangles()) {
        ply::put(out, std::uint8_t{3});
        for (auto i : t.v) ply::put(out, i);
      }
    } else {
      out.precision(17);
      for (const auto& v : mesh.vertices) {
        const Vec3 g = v + offset;
        out << "v " << g.x << ' ' << g.y << ' ' << g.z << '\n';
      }
      for (const auto& t : mesh.triangles()) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    }
  });
}

inline void write_mesh(const IndexedMesh& mesh, const std::string& path) { write_mesh(mesh, path, mesh_format_for(path)); }

inline IndexedMesh read_mesh(const std::string& path, MeshFormat fmt) {
  IndexedMesh mesh;
  if (fmt == MeshFormat::Ply) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    const auto h = ply::read_header(in, path);
    ply::Cursor cur(ply::read_rest(in), h.data_offset, path);
    for (const auto& e : h.elements) {
      const int ix = e.find("x"), iy = e.find("y"), iz = e.find("z"), ii = e.find("vertex_indices");
      if (e.name == "vertex" && (ix < 0 || iy < 0 || iz < 0))
        throw Error(path + ": vertex element lacks the '" + std::string(ix < 0 ? "x" : iy < 0 ? "y" : "z") + "' property");
      if (e.name == "face" && ii < 0) throw Error(path + ": face element lacks the 'vertex_indices' property");
      for (std::size_t i = 0; i < e.count; ++i) {
        Vec3 v{0, 0, 0};
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          const auto& p = e.props[k];
          const int ki = static_cast<int>(k);
          const ply::Where what{e.name, i, p.name};
          if (e.name == "vertex" && !p.list && (ki == ix || ki == iy || ki == iz)) {
            (ki == ix ? v.x : ki == iy ? v.y : v.z) = cur.read(p.type, what);
          } else if (e.name == "face" && ki == ii && p.list) {
            const auto at = cur.offset();
            const auto n = cur.read_count(p.count_type, what);
            if (n != 3) throw Error(path + ": face " + std::to_string(i) + " is not a triangle (byte offset " + std::to_string(at) + ")");
            Triangle t;
            for (auto& x : t.v) x = static_cast<std::uint32_t>(cur.read(p.type, what));
            try {
              mesh.add_triangle(t);
            } catch (const Error& err) {
              throw Error(path + ": face " + std::to_string(i) + ": " + err.what());
            }
          } else {
            cur.skip(p, what);
          }
        }
        if (e.name == "vertex") mesh.vertices.push_back(v);
      }
    }
    if (!cur.at_end()) throw Error(path + ": trailing bytes at byte offset " + std::to_string(cur.offset()));
  } else {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ss(line);
      std::string kw;
      ss >> kw;
      auto fail = [&](const std::string& m) { throw Error(path + ":" + std::to_string(lineno) + ": " + m); };
      if (kw == "v") {
        Vec3 v;
        if (!(ss >> v.x >> v.y >> v.z)) fail("malformed vertex");
        mesh.vertices.push_back(v);
      } else if (kw == "f") {
        std::vector<long long> idx;
        std::string tok;
        while (ss >> tok) {
          try {
            idx.push_back(std::stoll(tok.substr(0, tok.find('/'))));
          } catch (const std::exception&) {
            fail("malformed face index '" + tok + "'");
          }
        }
        if (idx.size() != 3) fail("face is not a triangle");
        Triangle t;
        for (int k = 0; k < 3; ++k) {
          long long i = idx[k];
          if (i < 0) i += static_cast<long long>(mesh.vertices.size()) + 1;
          if (i < 1) fail("face index out of range");
          t.v[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(i - 1);
        }
        try {
          mesh.add_triangle(t);
        } catch (const Error& err) {
          fail(err.what());
        }
      }
    }
  }
  return mesh;
}

inline IndexedMesh read_mesh(const std::string& path) { return read_mesh(path, mesh_format_for(path)); }

// Hypothesis checkpoints

namespace detail {
inline constexpr char kHypMagic[8] = {'O', 'M', 'H', 'Y', 'P', '0', '0', '1'};

template <class T>
void get(std::istream& in, T& v, const std::string& path) {
  const auto at = in.tellg();
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw Error(path + ": truncated hypothesis file at byte offset " + std::to_string(static_cast<long long>(at)));
}
}  // namespace detail

/// Binary dump of the local hypotheses, tagged with the point count they were solved on.
inline void write_hypotheses(const HypothesisSet& hs, std::size_t n_points, const std::string& path) {
  atomic_write(path, [&](std::ostream& out) {
    out.write(detail::kHypMagic, 8);
    ply::put(out, static_cast<std::uint64_t>(n_points));
    ply::put(out, static_cast<std::uint64_t>(hs.subsets.size()));
    for (std::size_t i = 0; i < hs.subsets.size(); ++i) {
      const auto& s = hs.subsets[i];
      ply::put(out, static_cast<std::int64_t>(hs.subset_hyp[i]));
      ply::put(out, static_cast<std::uint32_t>(s.members.size()));
      for (auto m : s.members) ply::put(out, static_cast<std::uint32_t>(m));
    }
    ply::put(out, static_cast<std::uint64_t>(hs.hyps.size()));
    for (const auto& h : hs.hyps) {
      ply::put(out, h.subset_id);
      ply::put(out, static_cast<std::uint64_t>(h.triangles.size()));
      for (std::size_t k = 0; k < h.triangles.size(); ++k) {
        for (auto v : h.triangles[k].v) ply::put(out, v);
        ply::put(out, static_cast<std::uint8_t>(k < h.separates_final.size() ? h.separates_final[k] : 0));
      }
    }
  });
}

/// Reads a hypothesis dump. Subset boxes and corners are not stored; the caller
/// matches members against a rebuilt octree.
inline HypothesisSet read_hypotheses(const std::string& path, std::size_t n_points) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, detail::kHypMagic, 8) != 0) throw Error(path + ": not a hypothesis file");
  std::uint64_t np = 0, ns = 0, nh = 0;
  detail::get(in, np, path);
  if (np != n_points)
    throw Error(path + ": solved on " + std::to_string(np) + " points, the dataset has " + std::to_string(n_points));
  detail::get(in, ns, path);
  HypothesisSet hs;
  hs.subsets.resize(ns);
  hs.subset_hyp.resize(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    std::int64_t h = 0;
    std::uint32_t nm = 0;
    detail::get(in, h, path);
    detail::get(in, nm, path);
    if (nm > 8) throw Error(path + ": subset " + std::to_string(i) + " has more than 8 members");
    hs.subset_hyp[i] = static_cast<int>(h);
    hs.subsets[i].id = static_cast<std::uint32_t>(i);
    hs.subsets[i].members.resize(nm);
    for (auto& m : hs.subsets[i].members) detail::get(in, m, path);
  }
  detail::get(in, nh, path);
  hs.hyps.resize(nh);
  for (auto& h : hs.hyps) {
    std::uint64_t nt = 0;
    detail::get(in, h.subset_id, path);
    detail::get(in, nt, path);
    h.triangles.resize(nt);
    h.separates_final.resize(nt);
    for (std::size_t k = 0; k < nt; ++k) {
      for (auto& v : h.triangles[k].v) {
        detail::get(in, v, path);
        if (v >= n_points) throw Error(path + ": triangle references point " + std::to_string(v) + " out of range");
      }
      detail::get(in, h.separates_final[k], path);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(path + ": trailing bytes");
  for (auto h : hs.subset_hyp)
    if (h < -1 || h >= static_cast<long long>(hs.hyps.size())) throw Error(path + ": bad hypothesis index");
  return hs;
}

/// Resolved configuration written next to an output: `<path>.config.json`.
inline std::string config_echo_path(const std::string& output) { return output + ".config.json"; }

inline void write_config_echo(const nlohmann::json& j, const std::string& output) {
  atomic_write(config_echo_path(output), [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

}  // namespace octomesh
