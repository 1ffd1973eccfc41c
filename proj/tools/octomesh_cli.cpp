// octomesh command-line front end.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "octomesh/config.hpp"
#include "octomesh/harness.hpp"
#include "octomesh/io.hpp"
#include "octomesh/memory.hpp"
#include "octomesh/scenes.hpp"

OCTOMESH_TRACK_ALLOCATIONS();

using namespace octomesh;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  PipelineConfig cfg;
  std::string points, cameras, log;
  bool no_fuse_input = false;
};

void add_pipeline_flags(CLI::App* c, Common& o) {
  auto& cfg = o.cfg;
  c->add_option("--leaf-size", cfg.leaf_size, "Maximum points per octree leaf")->capture_default_str();
  c->add_option("--alpha", cfg.alpha, "Surface-area weight of the local energy")->capture_default_str();
  c->add_option("--lambda", cfg.lambda_vis, "Visibility weight of the local energy")->capture_default_str();
  c->add_flag("--all-cameras", cfg.all_cameras, "Cast a ray to every listed camera, not only the first");
  c->add_flag("--no-fuse-input", o.no_fuse_input, "Skip the input point fusion step");
  c->add_option("--fuse-k", cfg.fuse_k, "Neighbours considered by point fusion")->capture_default_str();
  c->add_option("--fuse-radius-factor", cfg.fuse_radius_factor, "Fusion radius as a multiple of the point scale")
      ->capture_default_str();
  c->add_option("--smooth-iters", cfg.smooth_iters, "HC smoothing iterations")->capture_default_str();
  c->add_option("--hc-alpha", cfg.hc_alpha, "HC smoothing anchor weight")->capture_default_str();
  c->add_option("--hc-beta", cfg.hc_beta, "HC smoothing correction weight")->capture_default_str();
  c->add_option("--workers", cfg.workers, "Worker threads (env OCTOMESH_WORKERS)")
      ->envname("OCTOMESH_WORKERS")
      ->capture_default_str();
  c->add_option("--seed", cfg.seed, "Seed for every randomized step")->capture_default_str();
  c->add_flag("--checkpoints", cfg.checkpoints, "Write the hypotheses and a mesh after every fusion stage");
  c->add_option("--checkpoint-dir", cfg.checkpoint_dir, "Checkpoint directory (default: next to the output)");
  c->add_option("--log", o.log, "Append metrics as JSON lines to this file");
}

void add_inputs(CLI::App* c, Common& o) {
  c->add_option("points", o.points, "Point file (binary PLY with scale and visibility)")->required();
  c->add_option("cameras", o.cameras, "Camera file (lines of: id cx cy cz)")->required();
}

double secs(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void emit(const std::string& log, const json& j) {
  if (log.empty()) {
    std::cout << j.dump() << '\n';
    return;
  }
  std::ofstream out(log, std::ios::app);
  if (!out) throw Error("cannot open log " + log);
  out << j.dump() << '\n';
}

void print_metrics(const MeshMetrics& m) {
  std::printf("vertices %zu\ntriangles %zu\nboundary loops %zu\nboundary edges %zu\nboundary length %.6g\n"
              "non-manifold edges %zu\n",
              m.vertices, m.triangles, m.loops, m.boundary_edges, m.boundary_length, m.non_manifold_edges);
}

std::string checkpoint_dir(const PipelineConfig& cfg) {
  if (!cfg.checkpoint_dir.empty()) return cfg.checkpoint_dir;
  const auto parent = fs::path(cfg.output).parent_path();
  return parent.empty() ? "." : parent.string();
}

std::string stem(const std::string& p) { return fs::path(p).stem().string(); }

// Runs the pipeline, writing checkpoints as they appear so a later failure keeps them.
int run(Common& o, const std::string& hyp_path, const std::string& mode, json inputs) {
  auto& cfg = o.cfg;
  cfg.fuse_input = !o.no_fuse_input;
  cfg.validate();
  const auto fmt = mesh_format_for(cfg.output);
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = read_dataset(o.points, o.cameras);
  std::printf("read %zu points, %zu cameras in %.2fs\n", ds.points.size(), ds.cameras.size(), secs(t0));

  if (cfg.checkpoints) cfg.checkpoint_dir = checkpoint_dir(cfg);
  json echo = {{"command", mode}, {"config", cfg.to_json()}, {"inputs", inputs}};
  PipelineHooks hooks;
  const bool resume = !hyp_path.empty();
  HypothesisSet loaded;
  if (resume) hooks.resume = &loaded;
  std::size_t n_points = 0;
  // Checkpoints are tagged with the fused point count.
  hooks.points = [&](const std::vector<VisPoint>& pts) {
    n_points = pts.size();
    if (resume) loaded = read_hypotheses(hyp_path, n_points);
  };
  std::string dir;
  if (cfg.checkpoints) {
    dir = checkpoint_dir(cfg);
    fs::create_directories(dir);
    const auto base = (fs::path(dir) / stem(cfg.output)).string();
    if (!resume)
      hooks.hypotheses = [&, base](const HypothesisSet& hs) {
        write_hypotheses(hs, n_points, base + ".hyp");
        std::printf("checkpoint %s.hyp\n", base.c_str());
      };
    hooks.mesh = [&, base](int stage, const std::string& name, const IndexedMesh& m) {
      const auto path = base + ".stage" + std::to_string(stage) + "-" + name + (fmt == MeshFormat::Obj ? ".obj" : ".ply");
      write_mesh(m, path, fmt);
      std::printf("checkpoint %s\n", path.c_str());
    };
  }
  const auto res = run_pipeline(ds, cfg, hooks);
  write_mesh(res.mesh, cfg.output, fmt);
  write_config_echo(echo, cfg.output);

  for (const auto& s : res.fusion)
    std::printf("fusion %-12s added %zu, patches %zu accepted %zu, boundary %.6g, %.2fs\n", s.name.c_str(), s.added,
                s.patches, s.accepted, s.boundary_length, s.seconds);
  for (const auto& s : res.resources.stages)
    std::printf("stage %-14s %8.2fs  peak heap %.1f MB\n", s.name.c_str(), s.seconds, s.peak_bytes / 1e6);
  std::printf("peak heap per extraction task %.1f MB, process peak RSS %.1f MB\n",
              res.resources.extract_peak_bytes / 1e6, res.resources.process_peak_rss / 1e6);
  print_metrics(res.metrics);
  std::printf("wrote %s\n", cfg.output.c_str());

  json stages = json::array();
  for (std::size_t i = 0; i < res.stage_metrics.size(); ++i)
    stages.push_back({{"stage", res.fusion[i].name}, {"metrics", res.stage_metrics[i].to_json()}});
  emit(o.log, {{"event", mode},
               {"output", cfg.output},
               {"metrics", res.metrics.to_json()},
               {"fusion_stages", stages},
               {"resources", res.resources.to_json()},
               {"seconds", secs(t0)}});
  return 0;
}

int extract_local_cmd(Common& o, std::size_t subset) {
  auto& cfg = o.cfg;
  cfg.fuse_input = !o.no_fuse_input;
  cfg.validate();
  const auto ds = read_dataset(o.points, o.cameras);
  const Vec3 origin = dataset_center(ds);
  std::vector<VisPoint> pts = ds.points;
  for (auto& p : pts) p.position = p.position - origin;
  CameraTable cams;
  for (const auto& c : ds.cameras) cams[c.id] = c.center - origin;
  const OctreeParams op{cfg.leaf_size, 40};
  if (cfg.fuse_input) pts = fuse_points(pts, cfg.fusion(), Octree::build(pts, op), cfg.workers);
  const auto tree = Octree::build(pts, op);
  const auto subsets = corner_subsets(tree);
  if (subset >= subsets.size())
    throw Error("subset " + std::to_string(subset) + " out of range (" + std::to_string(subsets.size()) + " subsets)");
  const auto& sub = subsets[subset];
  std::vector<PointId> ids;
  for (auto m : sub.members) {
    const auto& v = tree.voxel(m).points;
    ids.insert(ids.end(), v.begin(), v.end());
  }
  std::sort(ids.begin(), ids.end());
  LocalStats st;
  const auto t0 = std::chrono::steady_clock::now();
  memory::PeakScope scope;
  const auto h = extract_local(pts, cams, ids, sub.box, cfg.energy(), &st);
  const double took = secs(t0);
  std::vector<Vec3> pos(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) pos[i] = pts[i].position;
  const auto mesh = translated(compact_mesh(pos, h.triangles), origin);
  write_mesh(mesh, cfg.output);
  write_config_echo({{"command", "extract-local"},
                     {"subset", subset},
                     {"config", cfg.to_json()},
                     {"inputs", {{"points", o.points}, {"cameras", o.cameras}}}},
                    cfg.output);
  const auto m = count_holes(mesh);
  std::printf("subset %zu of %zu: %zu voxels, %zu points, %zu triangles, %.2fs, peak heap %.1f MB\n", subset,
              subsets.size(), sub.members.size(), ids.size(), h.triangles.size(), took, scope.peak_bytes() / 1e6);
  std::printf("watertight %s\n", is_watertight(h.triangles) ? "yes" : "no");
  print_metrics(m);
  emit(o.log, {{"event", "extract-local"},
               {"subset", subset},
               {"points", ids.size()},
               {"watertight", is_watertight(h.triangles)},
               {"metrics", m.to_json()},
               {"seconds", took}});
  return 0;
}

struct SynthArgs {
  std::string scene, out, cams;
  std::size_t n = 0;
  std::uint32_t ratio = 1;
  double sigma_factor = 0.5, side = 1.0, radius = 1.0, noise = 0.0, spacing = 1.0, sigma = 0.1;
  std::size_t nx = 100, ny = 100;
  std::uint64_t seed = 1;
};

int synth_cmd(SynthArgs& a) {
  Dataset ds;
  json params;
  if (a.scene == "breakdown") {
    BreakdownParams p;
    p.n_points = a.n ? a.n : p.n_points;
    p.ratio = a.ratio;
    p.sigma_factor = a.sigma_factor;
    p.side = a.side;
    p.seed = a.seed;
    ds = gen_breakdown(p);
    params = {{"points", p.n_points}, {"ratio", p.ratio}, {"sigma_factor", p.sigma_factor}, {"side", p.side},
              {"camera_height", p.camera_height}, {"seed", p.seed}};
  } else if (a.scene == "sphere") {
    const std::size_t n = a.n ? a.n : 2000;
    ds = gen_sphere(n, a.radius, a.noise, a.seed);
    params = {{"points", n}, {"radius", a.radius}, {"noise", a.noise}, {"seed", a.seed}};
  } else {
    ds = gen_flat_grid(a.nx, a.ny, a.spacing, a.sigma, a.seed);
    params = {{"nx", a.nx}, {"ny", a.ny}, {"spacing", a.spacing}, {"sigma", a.sigma}, {"seed", a.seed}};
  }
  if (a.cams.empty()) a.cams = (fs::path(a.out).replace_extension(".cams.txt")).string();
  write_dataset(ds, a.out, a.cams);
  write_config_echo({{"command", "synth"}, {"scene", a.scene}, {"params", params}, {"cameras", a.cams}}, a.out);
  std::printf("wrote %zu points to %s and %zu cameras to %s\n", ds.points.size(), a.out.c_str(), ds.cameras.size(),
              a.cams.c_str());
  return 0;
}

struct EvalArgs {
  std::string mesh, reference, log;
  double threshold = 0.0;
  std::vector<double> footprint;
  double band = 0.0;
};

int eval_cmd(const EvalArgs& a) {
  const auto mesh = read_mesh(a.mesh);
  auto m = count_holes(mesh);
  json j = {{"event", "eval"}, {"mesh", a.mesh}};
  if (!a.reference.empty()) {
    const auto ref = read_points(a.reference);
    std::vector<Vec3> rp;
    for (const auto& p : ref.points) rp.push_back(p.position);
    if (rp.empty()) throw Error("reference has no points");
    double thr = a.threshold;
    if (thr <= 0.0) {
      std::vector<double> s;
      for (const auto& p : ref.points) s.push_back(p.scale);
      std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
      thr = 2.0 * s[s.size() / 2];
    }
    accuracy_completeness(mesh.vertices, mesh.triangles(), rp, thr, m);
    j["reference"] = a.reference;
    j["threshold"] = thr;
  }
  print_metrics(m);
  if (!a.reference.empty())
    std::printf("mean accuracy %.6g\nmedian accuracy %.6g\nmean completeness %.6g\nmedian completeness %.6g\n"
                "completeness ratio %.4f\n",
                m.mean_accuracy, m.median_accuracy, m.mean_completeness, m.median_completeness, m.completeness_ratio);
  if (!a.footprint.empty()) {
    Box fp;
    fp.extend(Vec3{a.footprint[0], a.footprint[1], a.footprint[2]});
    fp.extend(Vec3{a.footprint[3], a.footprint[4], a.footprint[5]});
    const auto n = interior_holes(mesh.vertices, mesh.triangles(), fp, a.band);
    std::printf("interior boundary loops %zu\n", n);
    j["interior_loops"] = n;
  }
  j["metrics"] = m.to_json();
  emit(a.log, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Out-of-core surface reconstruction from point clouds with visibility", "octomesh"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Common rec;
  auto* c_rec = app.add_subcommand("reconstruct", "Run the full pipeline");
  add_inputs(c_rec, rec);
  add_pipeline_flags(c_rec, rec);
  c_rec->add_option("-o,--output", rec.cfg.output, "Output mesh (.ply or .obj)")->required();

  Common loc;
  std::size_t subset = 0;
  auto* c_loc = app.add_subcommand("extract-local", "Solve one voxel subset and write its closed surface");
  add_inputs(c_loc, loc);
  add_pipeline_flags(c_loc, loc);
  c_loc->add_option("--subset", subset, "Subset index")->capture_default_str();
  c_loc->add_option("-o,--output", loc.cfg.output, "Output mesh (.ply or .obj)")->required();

  Common fus;
  std::string hyp_path;
  auto* c_fus = app.add_subcommand("fuse", "Fuse checkpointed hypotheses with the same settings");
  add_inputs(c_fus, fus);
  c_fus->add_option("hypotheses", hyp_path, "Hypothesis checkpoint (.hyp)")->required()->check(CLI::ExistingFile);
  add_pipeline_flags(c_fus, fus);
  c_fus->add_option("-o,--output", fus.cfg.output, "Output mesh (.ply or .obj)")->required();

  SynthArgs sy;
  auto* c_syn = app.add_subcommand("synth", "Generate a synthetic dataset");
  c_syn->add_option("scene", sy.scene, "breakdown, sphere or grid")
      ->required()
      ->check(CLI::IsMember({"breakdown", "sphere", "grid"}));
  c_syn->add_option("-o,--output", sy.out, "Point file to write")->required();
  c_syn->add_option("--cameras", sy.cams, "Camera file to write (default: <output>.cams.txt)");
  c_syn->add_option("--points", sy.n, "Point count (breakdown 240000, sphere 2000)");
  c_syn->add_option("--ratio", sy.ratio, "breakdown: outer/center density ratio, a power of two")->capture_default_str();
  c_syn->add_option("--sigma-factor", sy.sigma_factor, "breakdown: z-noise in outer point spacings")
      ->capture_default_str();
  c_syn->add_option("--side", sy.side, "breakdown: side length")->capture_default_str();
  c_syn->add_option("--radius", sy.radius, "sphere: radius")->capture_default_str();
  c_syn->add_option("--noise", sy.noise, "sphere: radial noise")->capture_default_str();
  c_syn->add_option("--nx", sy.nx, "grid: columns")->capture_default_str();
  c_syn->add_option("--ny", sy.ny, "grid: rows")->capture_default_str();
  c_syn->add_option("--spacing", sy.spacing, "grid: spacing")->capture_default_str();
  c_syn->add_option("--sigma", sy.sigma, "grid: z-noise")->capture_default_str();
  c_syn->add_option("--seed", sy.seed, "Generator seed")->capture_default_str();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Boundary loops and accuracy/completeness of a mesh");
  c_ev->add_option("mesh", ev.mesh, "Mesh (.ply or .obj)")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--reference", ev.reference, "Reference point file for accuracy/completeness");
  c_ev->add_option("--threshold", ev.threshold, "Completeness distance (default: twice the median point scale)");
  c_ev->add_option("--footprint", ev.footprint, "xmin ymin zmin xmax ymax zmax; count loops away from its sides")
      ->expected(6);
  c_ev->add_option("--band", ev.band, "Width of the footprint side band")->capture_default_str();
  c_ev->add_option("--log", ev.log, "Append metrics as JSON lines to this file");

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_rec) return run(rec, "", "reconstruct", {{"points", rec.points}, {"cameras", rec.cameras}});
    if (*c_loc) return extract_local_cmd(loc, subset);
    if (*c_fus)
      return run(fus, hyp_path, "fuse", {{"points", fus.points}, {"cameras", fus.cameras}, {"hypotheses", hyp_path}});
    if (*c_syn) {
      if (sy.scene == "breakdown" && (sy.ratio < 1 || (sy.ratio & (sy.ratio - 1)) != 0))
        throw Error("--ratio must be a power of two");
      return synth_cmd(sy);
    }
    if (*c_ev) {
      if (!ev.footprint.empty() && ev.footprint.size() != 6) throw Error("--footprint takes 6 numbers");
      return eval_cmd(ev);
    }
  } catch (const std::exception& e) {
    std::cerr << "octomesh: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
