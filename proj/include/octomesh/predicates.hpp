#pragma once

// Robust geometric predicates.
//
// Every predicate first evaluates in double precision and compares against a
// forward error bound; only when the sign is uncertain is the determinant
// recomputed exactly with floating-point expansions (Shewchuk's nonoverlapping
// expansion arithmetic).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include <boost/container/small_vector.hpp>

#include "octomesh/geometry.hpp"

namespace octomesh {

namespace exact {

/// Sum of nonoverlapping doubles, ordered by increasing magnitude, zeros eliminated.
struct Expansion {
  boost::container::small_vector<double, 16> c;

  Expansion() = default;
  explicit Expansion(double v) {
    if (v != 0.0) c.push_back(v);
  }
  int sign() const { return c.empty() ? 0 : (c.back() > 0.0 ? 1 : -1); }
  double estimate() const {
    double s = 0.0;
    for (double x : c) s += x;
    return s;
  }
};

inline void two_sum(double a, double b, double& x, double& y) {
  x = a + b;
  const double bv = x - a;
  const double av = x - bv;
  y = (a - av) + (b - bv);
}

inline void fast_two_sum(double a, double b, double& x, double& y) {
  x = a + b;
  y = b - (x - a);
}

inline void two_product(double a, double b, double& x, double& y) {
  x = a * b;
  y = std::fma(a, b, -x);
}

inline Expansion diff(double a, double b) {
  double x, y;
  two_sum(a, -b, x, y);
  Expansion e;
  if (y != 0.0) e.c.push_back(y);
  if (x != 0.0) e.c.push_back(x);
  return e;
}

inline Expansion grow(const Expansion& e, double b) {
  Expansion h;
  double q = b;
  for (double ei : e.c) {
    double s, hh;
    two_sum(q, ei, s, hh);
    q = s;
    if (hh != 0.0) h.c.push_back(hh);
  }
  if (q != 0.0) h.c.push_back(q);
  return h;
}

inline Expansion operator+(const Expansion& e, const Expansion& f) {
  Expansion r = e;
  for (double fi : f.c) r = grow(r, fi);
  return r;
}

inline Expansion operator-(const Expansion& e) {
  Expansion r = e;
  for (double& x : r.c) x = -x;
  return r;
}

inline Expansion operator-(const Expansion& e, const Expansion& f) { return e + (-f); }

inline Expansion scale(const Expansion& e, double b) {
  Expansion h;
  if (e.c.empty() || b == 0.0) return h;
  double q, hh;
  two_product(e.c[0], b, q, hh);
  if (hh != 0.0) h.c.push_back(hh);
  for (std::size_t i = 1; i < e.c.size(); ++i) {
    double p1, p0, sum;
    two_product(e.c[i], b, p1, p0);
    two_sum(q, p0, sum, hh);
    if (hh != 0.0) h.c.push_back(hh);
    fast_two_sum(p1, sum, q, hh);
    if (hh != 0.0) h.c.push_back(hh);
  }
  if (q != 0.0) h.c.push_back(q);
  return h;
}

inline Expansion operator*(const Expansion& e, const Expansion& f) {
  Expansion r;
  for (double fi : f.c) r = r + scale(e, fi);
  return r;
}

inline Expansion det2(const Expansion& a, const Expansion& b, const Expansion& c, const Expansion& d) {
  return a * d - b * c;
}

inline Expansion det3(const std::array<std::array<Expansion, 3>, 3>& m) {
  return m[0][0] * det2(m[1][1], m[1][2], m[2][1], m[2][2]) -
         m[0][1] * det2(m[1][0], m[1][2], m[2][0], m[2][2]) +
         m[0][2] * det2(m[1][0], m[1][1], m[2][0], m[2][1]);
}

inline int orient3d(Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
  std::array<std::array<Expansion, 3>, 3> m;
  const Vec3* rows[3] = {&b, &c, &d};
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) m[r][k] = diff((*rows[r])[k], a[k]);
  return det3(m).sign();
}

inline int insphere_det(Vec3 a, Vec3 b, Vec3 c, Vec3 d, Vec3 e) {
  const Vec3* pts[4] = {&a, &b, &c, &d};
  std::array<std::array<Expansion, 3>, 4> r;
  std::array<Expansion, 4> lift;
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 3; ++k) r[i][k] = diff((*pts[i])[k], e[k]);
    lift[i] = r[i][0] * r[i][0] + r[i][1] * r[i][1] + r[i][2] * r[i][2];
  }
  Expansion total;
  for (int i = 0; i < 4; ++i) {
    std::array<std::array<Expansion, 3>, 3> minor;
    for (int j = 0, row = 0; j < 4; ++j) {
      if (j == i) continue;
      minor[row++] = r[j];
    }
    const Expansion term = lift[i] * det3(minor);
    total = (i % 2 == 0) ? total - term : total + term;
  }
  return total.sign();
}

inline int orient2d(double ax, double ay, double bx, double by, double cx, double cy) {
  return (diff(bx, ax) * diff(cy, ay) - diff(by, ay) * diff(cx, ax)).sign();
}

}  // namespace exact

namespace detail {
constexpr double kEps = 1.1102230246251565e-16;  // 2^-53
constexpr double kOrient3dBound = (16.0 + 256.0 * kEps) * kEps;
constexpr double kInsphereBound = (64.0 + 1024.0 * kEps) * kEps;
constexpr double kOrient2dBound = (8.0 + 64.0 * kEps) * kEps;

inline void require_finite(Vec3 p) {
  if (!is_finite(p)) throw Error("non-finite coordinate in geometric predicate");
}
inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }
}  // namespace detail

/// Sign of det[b-a; c-a; d-a]: +1 when d lies on the side of plane (a,b,c) that sees
/// a->b->c counterclockwise, 0 when coplanar. Exact.
inline int orient3d(Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
  detail::require_finite(a);
  detail::require_finite(b);
  detail::require_finite(c);
  detail::require_finite(d);
  const double bx = b.x - a.x, by = b.y - a.y, bz = b.z - a.z;
  const double cx = c.x - a.x, cy = c.y - a.y, cz = c.z - a.z;
  const double dx = d.x - a.x, dy = d.y - a.y, dz = d.z - a.z;
  const double m1 = cy * dz - cz * dy, m2 = cx * dz - cz * dx, m3 = cx * dy - cy * dx;
  const double det = bx * m1 - by * m2 + bz * m3;
  const double perm = std::abs(bx) * (std::abs(cy * dz) + std::abs(cz * dy)) +
                      std::abs(by) * (std::abs(cx * dz) + std::abs(cz * dx)) +
                      std::abs(bz) * (std::abs(cx * dy) + std::abs(cy * dx));
  const double bound = detail::kOrient3dBound * perm;
  if (det > bound || -det > bound) return detail::sign_of(det);
  return exact::orient3d(a, b, c, d);
}

namespace detail {
// Callers guarantee finite input.
inline int insphere_raw(Vec3 a, Vec3 b, Vec3 c, Vec3 d, Vec3 e) {
  const double aex = a.x - e.x, aey = a.y - e.y, aez = a.z - e.z;
  const double bex = b.x - e.x, bey = b.y - e.y, bez = b.z - e.z;
  const double cex = c.x - e.x, cey = c.y - e.y, cez = c.z - e.z;
  const double dex = d.x - e.x, dey = d.y - e.y, dez = d.z - e.z;
  const double ab = aex * bey - bex * aey, bc = bex * cey - cex * bey, cd = cex * dey - dex * cey;
  const double da = dex * aey - aex * dey, ac = aex * cey - cex * aey, bd = bex * dey - dex * bey;
  const double abc = aez * bc - bez * ac + cez * ab;
  const double bcd = bez * cd - cez * bd + dez * bc;
  const double cda = cez * da + dez * ac + aez * cd;
  const double dab = dez * ab + aez * bd + bez * da;
  const double al = aex * aex + aey * aey + aez * aez, bl = bex * bex + bey * bey + bez * bez;
  const double cl = cex * cex + cey * cey + cez * cez, dl = dex * dex + dey * dey + dez * dez;
  const double det = (dl * abc - cl * dab) + (bl * cda - al * bcd);
  const double abp = std::abs(aex * bey) + std::abs(bex * aey), bcp = std::abs(bex * cey) + std::abs(cex * bey);
  const double cdp = std::abs(cex * dey) + std::abs(dex * cey), dap = std::abs(dex * aey) + std::abs(aex * dey);
  const double acp = std::abs(aex * cey) + std::abs(cex * aey), bdp = std::abs(bex * dey) + std::abs(dex * bey);
  const double perm = dl * (std::abs(aez) * bcp + std::abs(bez) * acp + std::abs(cez) * abp) +
                      cl * (std::abs(dez) * abp + std::abs(aez) * bdp + std::abs(bez) * dap) +
                      bl * (std::abs(cez) * dap + std::abs(dez) * acp + std::abs(aez) * cdp) +
                      al * (std::abs(bez) * cdp + std::abs(cez) * bdp + std::abs(dez) * bcp);
  const double bound = detail::kInsphereBound * perm;
  int s;
  if (det > bound || -det > bound)
    s = detail::sign_of(det);
  else
    s = exact::insphere_det(a, b, c, d, e);
  return -s;
}
}  // namespace detail

/// For a positively oriented tetrahedron (a,b,c,d): +1 when e is strictly inside the
/// circumsphere, 0 on it, -1 outside. Exact.
inline int insphere(Vec3 a, Vec3 b, Vec3 c, Vec3 d, Vec3 e) {
  detail::require_finite(e);
  if (orient3d(a, b, c, d) == 0) throw Error("insphere on a degenerate tetrahedron");
  return detail::insphere_raw(a, b, c, d, e);
}

/// insphere with degeneracies broken by symbolic perturbation of the lifted coordinate.
/// The point with the largest key receives the dominant perturbation, pushing it
/// outward; never returns 0 for distinct keys and a non-degenerate tetrahedron.
inline int insphere_sos(const std::array<Vec3, 5>& p, const std::array<std::uint64_t, 5>& key) {
  for (const auto& x : p) detail::require_finite(x);
  const int s = detail::insphere_raw(p[0], p[1], p[2], p[3], p[4]);
  if (s != 0) return s;
  std::array<int, 5> order{0, 1, 2, 3, 4};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return key[i] > key[j]; });
  for (int i : order) {
    std::array<Vec3, 4> rest;
    for (int j = 0, r = 0; j < 5; ++j)
      if (j != i) rest[r++] = p[j];
    // d(lifted det)/d(w_i) = (-1)^i * orient3d(rest); insphere is the negated det sign.
    const int o = orient3d(rest[0], rest[1], rest[2], rest[3]);
    if (o != 0) return (i % 2 == 0) ? -o : o;
  }
  return -1;
}

/// orient3d(a,b,c,p) where p is symbolically displaced by (e, e^2, e^3); zero only when
/// a, b, c are collinear.
inline int orient3d_sos(Vec3 a, Vec3 b, Vec3 c, Vec3 p) {
  const int o = orient3d(a, b, c, p);
  if (o != 0) return o;
  // The derivative with respect to p is the plane normal (b-a) x (c-a).
  auto component = [&](int i, int j) {
    using namespace exact;
    return (diff(b[i], a[i]) * diff(c[j], a[j]) - diff(b[j], a[j]) * diff(c[i], a[i])).sign();
  };
  if (int s = component(1, 2); s != 0) return s;
  if (int s = component(2, 0); s != 0) return s;
  return component(0, 1);
}

/// Exact 2D orientation of the projection dropping `axis`.
inline int orient2d(Vec3 a, Vec3 b, Vec3 c, int axis) {
  const int i = (axis + 1) % 3, j = (axis + 2) % 3;
  const double det = (b[i] - a[i]) * (c[j] - a[j]) - (b[j] - a[j]) * (c[i] - a[i]);
  const double perm = std::abs((b[i] - a[i]) * (c[j] - a[j])) + std::abs((b[j] - a[j]) * (c[i] - a[i]));
  if (std::abs(det) > detail::kOrient2dBound * perm) return detail::sign_of(det);
  return exact::orient2d(a[i], a[j], b[i], b[j], c[i], c[j]);
}

namespace detail {

/// Axis whose removal keeps triangle abc non-degenerate in 2D.
inline int projection_axis(Vec3 a, Vec3 b, Vec3 c) {
  for (int axis : {2, 0, 1})
    if (orient2d(a, b, c, axis) != 0) return axis;
  return -1;
}

inline bool coplanar_segment_triangle(Vec3 p, Vec3 q, Vec3 a, Vec3 b, Vec3 c) {
  const int axis = projection_axis(a, b, c);
  if (axis < 0) return false;
  const int s = orient2d(a, b, c, axis);
  auto inside = [&](Vec3 x) {
    return s * orient2d(a, b, x, axis) >= 0 && s * orient2d(b, c, x, axis) >= 0 &&
           s * orient2d(c, a, x, axis) >= 0;
  };
  if (inside(p) && inside(q)) return true;
  const Vec3 tri[3] = {a, b, c};
  for (int e = 0; e < 3; ++e) {
    const Vec3 u = tri[e], v = tri[(e + 1) % 3];
    const int d1 = orient2d(u, v, p, axis), d2 = orient2d(u, v, q, axis);
    if (d1 == 0 && d2 == 0) {
      const int i = (axis + 1) % 3, j = (axis + 2) % 3;
      const int k = p[i] != q[i] ? i : j;
      const double lo1 = std::min(p[k], q[k]), hi1 = std::max(p[k], q[k]);
      const double lo2 = std::min(u[k], v[k]), hi2 = std::max(u[k], v[k]);
      if (lo2 < hi1 && lo1 < hi2) return true;
      continue;
    }
    if (d1 * d2 >= 0) continue;
    const int d3 = orient2d(p, q, u, axis), d4 = orient2d(p, q, v, axis);
    if (d3 * d4 <= 0) return true;
  }
  return false;
}

}  // namespace detail

/// True iff the open segment (p, q) meets the closed triangle abc. Contact at a segment
/// endpoint (for instance an endpoint equal to a triangle vertex) is not an intersection.
inline bool segment_triangle_intersect(Vec3 p, Vec3 q, Vec3 a, Vec3 b, Vec3 c) {
  Box sb, tb;
  sb.extend(p);
  sb.extend(q);
  tb.extend(a);
  tb.extend(b);
  tb.extend(c);
  if (!sb.overlaps(tb)) return false;
  const int op = orient3d(a, b, c, p), oq = orient3d(a, b, c, q);
  if (op == 0 && oq == 0) return detail::coplanar_segment_triangle(p, q, a, b, c);
  if (op * oq >= 0) return false;
  const int s1 = orient3d(p, q, a, b), s2 = orient3d(p, q, b, c), s3 = orient3d(p, q, c, a);
  return (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0);
}

inline bool segment_triangle_intersect(Vec3 p, Vec3 q, const Triangle& t, const std::vector<Vec3>& verts) {
  return segment_triangle_intersect(p, q, verts[t[0]], verts[t[1]], verts[t[2]]);
}

/// True iff triangles s and t (over the same vertex table) intersect anywhere other than
/// in their shared vertices and shared edge.
template <class VertexLookup>
bool triangles_intersect(const Triangle& s, const Triangle& t, const VertexLookup& pos) {
  auto shares = [](const Triangle& tri, std::uint32_t v) {
    return tri[0] == v || tri[1] == v || tri[2] == v;
  };
  const Vec3 sp[3] = {pos(s[0]), pos(s[1]), pos(s[2])};
  const Vec3 tp[3] = {pos(t[0]), pos(t[1]), pos(t[2])};
  Box sb, tb;
  for (int i = 0; i < 3; ++i) {
    sb.extend(sp[i]);
    tb.extend(tp[i]);
  }
  if (!sb.overlaps(tb)) return false;
  for (int e = 0; e < 3; ++e) {
    const int i = e, j = (e + 1) % 3;
    if (!(shares(t, s[i]) && shares(t, s[j])) && segment_triangle_intersect(sp[i], sp[j], tp[0], tp[1], tp[2]))
      return true;
    if (!(shares(s, t[i]) && shares(s, t[j])) && segment_triangle_intersect(tp[i], tp[j], sp[0], sp[1], sp[2]))
      return true;
  }
  return false;
}

}  // namespace octomesh
