#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace octomesh {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a * s; }
  friend constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  Vec3& operator+=(Vec3 o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(Vec3 o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  friend constexpr bool operator==(Vec3 a, Vec3 b) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline double distance(Vec3 a, Vec3 b) { return norm(a - b); }
inline bool is_finite(Vec3 a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// Axis-aligned box, closed on both ends.
struct Box {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  bool empty() const { return lo.x > hi.x || lo.y > hi.y || lo.z > hi.z; }
  void extend(Vec3 p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  void extend(const Box& b) {
    if (b.empty()) return;
    extend(b.lo);
    extend(b.hi);
  }
  Vec3 center() const { return (lo + hi) * 0.5; }
  Vec3 extent() const { return hi - lo; }
  bool contains(Vec3 p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
  bool overlaps(const Box& o) const {
    return lo.x <= o.hi.x && o.lo.x <= hi.x && lo.y <= o.hi.y && o.lo.y <= hi.y && lo.z <= o.hi.z &&
           o.lo.z <= hi.z;
  }
  /// Distance from p to the farthest corner of the box.
  double farthest_corner_distance(Vec3 p) const {
    Vec3 d{std::max(std::abs(p.x - lo.x), std::abs(p.x - hi.x)),
           std::max(std::abs(p.y - lo.y), std::abs(p.y - hi.y)),
           std::max(std::abs(p.z - lo.z), std::abs(p.z - hi.z))};
    return norm(d);
  }
  /// Euclidean distance from p to the box (0 inside).
  double distance_to(Vec3 p) const {
    Vec3 d{std::max({lo.x - p.x, 0.0, p.x - hi.x}), std::max({lo.y - p.y, 0.0, p.y - hi.y}),
           std::max({lo.z - p.z, 0.0, p.z - hi.z})};
    return norm(d);
  }
};

using CameraId = std::uint32_t;
using PointId = std::uint32_t;

struct Camera {
  CameraId id = 0;
  Vec3 center;
};

/// A measured 3D point with its local sample spacing and the cameras that saw it.
/// The first camera is the origin of the point's depthmap.
struct VisPoint {
  Vec3 position;
  double scale = 1.0;
  std::vector<CameraId> cameras;
};

inline void validate(const VisPoint& p) {
  if (!is_finite(p.position)) throw Error("point position is not finite");
  if (!(p.scale > 0.0) || !std::isfinite(p.scale)) throw Error("point scale must be positive");
  if (p.cameras.empty()) throw Error("point has no visibility information");
}

/// Oriented triangle over a shared vertex table; orientation is the index order.
struct Triangle {
  std::array<std::uint32_t, 3> v{0, 0, 0};

  std::uint32_t operator[](int i) const { return v[static_cast<std::size_t>(i)]; }
  friend bool operator==(const Triangle&, const Triangle&) = default;

  bool valid() const { return v[0] != v[1] && v[1] != v[2] && v[0] != v[2]; }
  /// Vertex set in ascending order; identity of a triangle regardless of orientation.
  std::array<std::uint32_t, 3> sorted() const {
    auto s = v;
    std::sort(s.begin(), s.end());
    return s;
  }
};

/// Undirected edge key; smaller index in the high word.
inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (std::uint64_t{a} << 32) | b;
}
inline std::uint32_t edge_first(std::uint64_t k) { return static_cast<std::uint32_t>(k >> 32); }
inline std::uint32_t edge_second(std::uint64_t k) { return static_cast<std::uint32_t>(k & 0xffffffffu); }

struct TriangleKey {
  std::array<std::uint32_t, 3> v;
  friend bool operator==(const TriangleKey&, const TriangleKey&) = default;
  friend auto operator<=>(const TriangleKey&, const TriangleKey&) = default;
};
inline TriangleKey triangle_key(const Triangle& t) { return {t.sorted()}; }

struct TriangleKeyHash {
  std::size_t operator()(const TriangleKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (auto x : k.v) {
      h ^= x;
      h *= 1099511628211ull;
      h ^= h >> 29;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Triangle soup over a vertex table, with undirected edge incidence.
class IndexedMesh {
public:
  std::vector<Vec3> vertices;

  const std::vector<Triangle>& triangles() const { return triangles_; }

  /// Appends a triangle; throws on invalid indices or a duplicate vertex set.
  std::size_t add_triangle(const Triangle& t) {
    if (!t.valid()) throw Error("triangle has repeated vertices");
    for (auto v : t.v)
      if (v >= vertices.size()) throw Error("triangle references a missing vertex");
    if (!keys_.emplace(triangle_key(t), triangles_.size()).second)
      throw Error("duplicate triangle");
    const auto id = static_cast<std::uint32_t>(triangles_.size());
    triangles_.push_back(t);
    for (int i = 0; i < 3; ++i) edges_[edge_key(t[i], t[(i + 1) % 3])].push_back(id);
    return id;
  }

  bool contains(const Triangle& t) const { return keys_.count(triangle_key(t)) != 0; }

  /// Triangles incident to the undirected edge (a, b).
  const std::vector<std::uint32_t>& edge_triangles(std::uint32_t a, std::uint32_t b) const {
    static const std::vector<std::uint32_t> none;
    auto it = edges_.find(edge_key(a, b));
    return it == edges_.end() ? none : it->second;
  }
  const std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>& edges() const { return edges_; }

  std::size_t size() const { return triangles_.size(); }
  bool empty() const { return triangles_.empty(); }

private:
  std::vector<Triangle> triangles_;
  std::unordered_map<TriangleKey, std::size_t, TriangleKeyHash> keys_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> edges_;
};

inline double triangle_area(Vec3 a, Vec3 b, Vec3 c) { return 0.5 * norm(cross(b - a, c - a)); }

/// Closest distance from p to the closed triangle abc.
inline double point_triangle_distance(Vec3 p, Vec3 a, Vec3 b, Vec3 c) {
  // Region classification after Ericson, Real-Time Collision Detection 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return distance(p, a);
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return distance(p, b);
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return distance(p, a + ab * (d1 / (d1 - d3)));
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return distance(p, c);
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return distance(p, a + ac * (d2 / (d2 - d6)));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return distance(p, b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))));
  const double denom = 1.0 / (va + vb + vc);
  return distance(p, a + ab * (vb * denom) + ac * (vc * denom));
}

}  // namespace octomesh
