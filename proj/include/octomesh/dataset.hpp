#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "octomesh/extract.hpp"
#include "octomesh/geometry.hpp"

namespace octomesh {

struct Dataset {
  std::vector<Camera> cameras;
  std::vector<VisPoint> points;
  double unit_scale = 1.0;  // metres per scene unit
  std::string notes;

  CameraTable camera_table() const {
    CameraTable t;
    for (const auto& c : cameras) t[c.id] = c.center;
    return t;
  }

  /// Throws on invalid points, duplicate camera ids or dangling camera references.
  void validate() const {
    std::unordered_set<CameraId> ids;
    for (const auto& c : cameras) {
      if (!ids.insert(c.id).second) throw Error("duplicate camera id " + std::to_string(c.id));
      if (!is_finite(c.center)) throw Error("camera " + std::to_string(c.id) + " has a non-finite center");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
      try {
        validate_point(points[i]);
      } catch (const Error& e) {
        throw Error("point " + std::to_string(i) + ": " + e.what());
      }
      for (auto c : points[i].cameras)
        if (!ids.count(c)) throw Error("point " + std::to_string(i) + " references unknown camera id " + std::to_string(c));
    }
  }

private:
  static void validate_point(const VisPoint& p) { octomesh::validate(p); }
};

}  // namespace octomesh
