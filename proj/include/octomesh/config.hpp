#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "json.hpp"
#include "octomesh/extract.hpp"
#include "octomesh/geometry.hpp"
#include "octomesh/pointproc.hpp"

namespace octomesh {

struct PipelineConfig {
  std::size_t leaf_size = 128000;
  double alpha = 1e-4;
  double lambda_vis = 1.0;
  bool all_cameras = false;
  bool fuse_input = true;
  std::size_t fuse_k = 20;
  double fuse_radius_factor = 3.0;
  int smooth_iters = 2;
  double hc_alpha = 0.0;
  double hc_beta = 0.5;
  unsigned workers = 1;
  std::uint64_t seed = 1;
  bool checkpoints = false;
  std::string output;          // mesh path; empty keeps the mesh in memory only
  std::string checkpoint_dir;  // defaults to the output's directory

  void validate() const {
    if (leaf_size < 16 || leaf_size > 100000000) throw Error("leaf-size must be in [16, 1e8]");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error("alpha must be a finite value >= 0");
    if (!(lambda_vis > 0.0) || !std::isfinite(lambda_vis)) throw Error("lambda must be a finite value > 0");
    if (fuse_k < 1 || fuse_k > 1000) throw Error("fuse-k must be in [1, 1000]");
    if (!(fuse_radius_factor > 0.0) || fuse_radius_factor > 100.0) throw Error("fuse-radius-factor must be in (0, 100]");
    if (smooth_iters < 0 || smooth_iters > 100) throw Error("smooth-iters must be in [0, 100]");
    if (!(hc_alpha >= 0.0 && hc_alpha <= 1.0)) throw Error("hc-alpha must be in [0, 1]");
    if (!(hc_beta >= 0.0 && hc_beta <= 1.0)) throw Error("hc-beta must be in [0, 1]");
    if (workers < 1 || workers > 1024) throw Error("workers must be in [1, 1024]");
  }

  EnergyParams energy() const {
    EnergyParams e;
    e.alpha = alpha;
    e.lambda_vis = lambda_vis;
    e.all_cameras = all_cameras;
    return e;
  }
  FusionParams fusion() const { return {fuse_k, fuse_radius_factor, seed}; }
  SmoothParams smoothing() const { return {smooth_iters, hc_alpha, hc_beta, true}; }

  nlohmann::json to_json() const {
    return {{"leaf_size", leaf_size},       {"alpha", alpha},
            {"lambda_vis", lambda_vis},     {"all_cameras", all_cameras},
            {"fuse_input", fuse_input},     {"fuse_k", fuse_k},
            {"fuse_radius_factor", fuse_radius_factor}, {"smooth_iters", smooth_iters},
            {"hc_alpha", hc_alpha},         {"hc_beta", hc_beta},
            {"workers", workers},           {"seed", seed},
            {"checkpoints", checkpoints},   {"output", output},
            {"checkpoint_dir", checkpoint_dir}};
  }
};

}  // namespace octomesh
