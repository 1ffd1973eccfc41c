#pragma once

// Synthetic datasets: the density-breakdown plane, a sphere and a flat grid.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <array>
#include <random>

#include "octomesh/dataset.hpp"

namespace octomesh {

struct BreakdownParams {
  std::size_t n_points = 240000;
  std::uint32_t ratio = 1;    // outer density / center density, a power of two
  double sigma_factor = 0.5;  // z-noise sigma as a multiple of the outer point spacing
  double side = 1.0;
  double camera_height = 1.0;  // in units of side
  std::uint64_t seed = 1;
};

/// Square plane [0, side]^2 at z = 0 with Gaussian z-noise. The central square
/// [side/4, 3 side/4]^2 (a quarter of the area) is sampled `ratio` times sparser. Its
/// border falls on octree lattice lines because the four plane corners are included
/// exactly, which makes the octree root the square itself. Four cameras hover over the
/// quadrant centers; every point lists all four, nearest first.
inline Dataset gen_breakdown(const BreakdownParams& p) {
  if (p.n_points < 1000) throw Error("breakdown scene needs at least 1000 points");
  if (p.ratio < 1 || (p.ratio & (p.ratio - 1)) != 0) throw Error("density ratio must be a power of two");
  if (!(p.side > 0.0) || !(p.sigma_factor >= 0.0)) throw Error("invalid breakdown parameters");
  Dataset d;
  const double s = p.side;
  const double h = p.camera_height * s;
  CameraId id = 0;
  for (double cy : {0.25, 0.75})
    for (double cx : {0.25, 0.75}) d.cameras.push_back({id++, {cx * s, cy * s, h}});

  const double area = s * s;
  const double rho = static_cast<double>(p.n_points) / (0.75 * area + 0.25 * area / p.ratio);
  const double spacing = 1.0 / std::sqrt(rho);
  const double sigma = p.sigma_factor * spacing;
  const auto n_center = static_cast<std::size_t>(std::llround(rho * 0.25 * area / p.ratio));
  const std::size_t n_outer = p.n_points - n_center - 4;

  std::mt19937_64 g(p.seed);
  std::uniform_real_distribution<double> u(0.0, s);
  std::normal_distribution<double> noise(0.0, sigma > 0 ? sigma : 1.0);
  auto in_center = [&](double x, double y) {
    return x >= 0.25 * s && x < 0.75 * s && y >= 0.25 * s && y < 0.75 * s;
  };
  auto add = [&](double x, double y, double z, double scale) {
    VisPoint v;
    v.position = {x, y, z};
    v.scale = scale;
    std::array<std::pair<double, CameraId>, 4> order;
    for (int c = 0; c < 4; ++c) order[c] = {distance(v.position, d.cameras[c].center), d.cameras[c].id};
    std::sort(order.begin(), order.end());
    for (auto& [dist, cid] : order) v.cameras.push_back(cid);
    d.points.push_back(std::move(v));
  };
  d.points.reserve(p.n_points);
  for (double x : {0.0, s})
    for (double y : {0.0, s}) add(x, y, 0.0, spacing);
  const double center_spacing = spacing * std::sqrt(static_cast<double>(p.ratio));
  for (std::size_t outer = 0; outer < n_outer;) {
    const double x = u(g), y = u(g);
    if (in_center(x, y)) continue;
    add(x, y, sigma > 0 ? noise(g) : 0.0, spacing);
    ++outer;
  }
  std::uniform_real_distribution<double> uc(0.25 * s, 0.75 * s);
  for (std::size_t i = 0; i < n_center; ++i) {
    const double x = uc(g), y = uc(g);
    add(x, y, sigma > 0 ? noise(g) : 0.0, center_spacing);
  }
  d.notes = "breakdown ratio=" + std::to_string(p.ratio) + " n=" + std::to_string(p.n_points);
  return d;
}

/// Points on a sphere (Fibonacci lattice) with optional radial noise; six cameras on the
/// axes at distance 3r. Each point lists the cameras that see it, best-aligned first.
inline Dataset gen_sphere(std::size_t n, double radius = 1.0, double noise = 0.0, std::uint64_t seed = 1) {
  if (n < 4) throw Error("sphere needs at least 4 points");
  Dataset d;
  const Vec3 axes[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (CameraId c = 0; c < 6; ++c) d.cameras.push_back({c, axes[c] * (3.0 * radius)});
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nz(0.0, noise > 0 ? noise : 1.0);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const double spacing = std::sqrt(4.0 * M_PI / static_cast<double>(n)) * radius;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(1.0 - z * z);
    const double phi = golden * static_cast<double>(i);
    const Vec3 dir{r * std::cos(phi), r * std::sin(phi), z};
    VisPoint v;
    v.position = dir * (radius + (noise > 0 ? nz(g) : 0.0));
    v.scale = spacing;
    std::vector<std::pair<double, CameraId>> seen;
    for (CameraId c = 0; c < 6; ++c) {
      const double a = dot(dir, axes[c]);
      if (a > 0.2) seen.push_back({-a, c});
    }
    std::sort(seen.begin(), seen.end());
    for (auto& [a, c] : seen) v.cameras.push_back(c);
    d.points.push_back(std::move(v));
  }
  d.notes = "sphere n=" + std::to_string(n);
  return d;
}

/// nx x ny grid with the given spacing and Gaussian z-noise (sigma in units of spacing);
/// four cameras above the quadrant centers at height equal to the grid width.
inline Dataset gen_flat_grid(std::size_t nx, std::size_t ny, double spacing = 1.0, double sigma = 0.1,
                             std::uint64_t seed = 1) {
  if (nx < 2 || ny < 2) throw Error("grid needs at least 2x2 points");
  Dataset d;
  const double wx = spacing * static_cast<double>(nx - 1), wy = spacing * static_cast<double>(ny - 1);
  CameraId id = 0;
  for (double fy : {0.25, 0.75})
    for (double fx : {0.25, 0.75}) d.cameras.push_back({id++, {fx * wx, fy * wy, std::max(wx, wy)}});
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nz(0.0, sigma > 0 ? sigma * spacing : 1.0);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      VisPoint v;
      v.position = {spacing * static_cast<double>(i), spacing * static_cast<double>(j), sigma > 0 ? nz(g) : 0.0};
      v.scale = spacing;
      std::array<std::pair<double, CameraId>, 4> order;
      for (int c = 0; c < 4; ++c) order[c] = {distance(v.position, d.cameras[c].center), d.cameras[c].id};
      std::sort(order.begin(), order.end());
      for (auto& [dist, cid] : order) v.cameras.push_back(cid);
      d.points.push_back(std::move(v));
    }
  d.notes = "grid " + std::to_string(nx) + "x" + std::to_string(ny);
  return d;
}

}  // namespace octomesh
