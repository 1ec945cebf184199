// rematch: remeshing, matching and evaluation from the command line.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rematch/bench.hpp"
#include "rematch/mesh_io.hpp"
#include "rematch/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace rematch;

namespace {

json to_json(const PipelineConfig &c) {
  return json{{"samples", c.samples},
              {"seed", c.seed},
              {"resample", c.resample},
              {"component_area_threshold", c.component_area_threshold},
              {"k0", c.k0},
              {"step", c.step},
              {"k_final", c.k_final},
              {"descriptor", to_string(c.descriptor)},
              {"descriptor_count", c.descriptor_count},
              {"threads", c.threads}};
}

void apply_json(PipelineConfig &c, const json &j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  for (const auto &[key, v] : j.items()) {
    try {
      if (key == "samples") c.samples = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "resample") c.resample = v.get<bool>();
      else if (key == "component_area_threshold") c.component_area_threshold = v.get<double>();
      else if (key == "k0") c.k0 = v.get<int>();
      else if (key == "step") c.step = v.get<int>();
      else if (key == "k_final") c.k_final = v.get<int>();
      else if (key == "descriptor") c.descriptor = descriptor_kind_from_string(v.get<std::string>());
      else if (key == "descriptor_count") c.descriptor_count = v.get<int>();
      else if (key == "threads") c.threads = v.get<int>();
      else throw UsageError("unknown config key '" + key + "'");
    } catch (const json::exception &e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }
}

PipelineConfig load_config(const fs::path &path) {
  PipelineConfig c;
  json j;
  try {
    j = json::parse(detail::read_file(path));
  } catch (const json::parse_error &e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  apply_json(c, j);
  return c;
}

// Values given on the command line; unset ones fall back to the config file,
// then to the defaults.
struct Flags {
  std::optional<int> samples, k0, step, k_final, descriptor_count, threads;
  std::optional<std::uint64_t> seed;
  std::optional<double> area_threshold;
  std::optional<std::string> descriptor;
  bool resample = false, no_resample = false;
  std::string config;
  bool dump_config = false;

  PipelineConfig resolve() const {
    PipelineConfig c = config.empty() ? PipelineConfig{} : load_config(config);
    if (samples) c.samples = *samples;
    if (seed) c.seed = *seed;
    if (resample) c.resample = true;
    if (no_resample) c.resample = false;
    if (area_threshold) c.component_area_threshold = *area_threshold;
    if (k0) c.k0 = *k0;
    if (step) c.step = *step;
    if (k_final) c.k_final = *k_final;
    if (descriptor) c.descriptor = descriptor_kind_from_string(*descriptor);
    if (descriptor_count) c.descriptor_count = *descriptor_count;
    if (threads) c.threads = *threads;
    return c;
  }
};

void log_config(const PipelineConfig &c) { std::fprintf(stderr, "config: %s\n", to_json(c).dump().c_str()); }

std::string stem_of(const fs::path &p) { return p.stem().string(); }

fs::path with_suffix(const fs::path &p, const std::string &suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

std::string timing_json(const JobLog &log) {
  json stages = json::array();
  double total = 0;
  for (const auto &e : log.entries) {
    stages.push_back({{"stage", e.stage}, {"seconds", e.seconds}});
    total += e.seconds;
  }
  return json{{"stages", stages}, {"total", total}}.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

int cmd_remesh(const PipelineConfig &cfg, const fs::path &in, const fs::path &out) {
  cfg.validate_remesh();
  const TriMesh mesh = load_mesh(in);
  JobLog log;
  const RemeshResult r = remesh(mesh, cfg.remesh_options(cfg.seed), &log, stem_of(in));
  save_mesh(out, r.output.lowres);
  write_remesh_sidecar(with_suffix(out, ".texels.txt"), r.output);
  write_text_file(with_suffix(out, ".timing.json"), timing_json(log));
  std::fprintf(stderr, "remesh: %d -> %d vertices (%d repair samples)\n", mesh.num_vertices(),
               r.output.lowres.num_vertices(), r.output.repair_count);
  return 0;
}

int cmd_match(const PipelineConfig &cfg, const fs::path &src, const fs::path &tgt, const fs::path &out) {
  cfg.validate();
  const TriMesh a = load_mesh(src), b = load_mesh(tgt);
  JobLog log;
  const MatchResult r = match_shapes(a, b, cfg, &log, stem_of(src) + "__" + stem_of(tgt));
  save_match(out, r, b);
  write_text_file(out / "config.json", to_json(cfg).dump(2) + "\n");
  write_text_file(out / artifact::timing, timing_csv(log));
  return 0;
}

int cmd_transfer(const fs::path &dir, const fs::path &function, const fs::path &out) {
  save_matrix(out, transfer_from_artifacts(dir, load_matrix(function)));
  return 0;
}

bool is_mesh_file(const fs::path &p) {
  const std::string e = p.extension().string();
  return e == ".off" || e == ".obj" || e == ".ply";
}

int cmd_badtosca(const PipelineConfig &cfg, const fs::path &in_dir, const fs::path &out_dir) {
  if (!fs::is_directory(in_dir)) throw IoError("'" + in_dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto &e : fs::directory_iterator(in_dir))
    if (e.is_regular_file() && is_mesh_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  fs::create_directories(out_dir);
  std::vector<TriMesh> meshes;
  std::vector<Perturbation> perts;
  std::string seeds = "mesh,seed\n", manifest;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::uint64_t s = cfg.seed + i;
    meshes.push_back(load_mesh(files[i]));
    perts.push_back(badtosca_perturb(meshes.back(), s));
    const std::string name = stem_of(files[i]);
    save_mesh(out_dir / (name + ".off"), perts.back().mesh);
    save_prolongation(out_dir / (name + ".pert.txt"), ProlongationMap{perts.back().u});
    seeds += name + "," + std::to_string(s) + "\n";
  }
  for (std::size_t i = 0; i < files.size(); ++i)
    for (std::size_t j = 0; j < files.size(); ++j) {
      if (i == j) continue;
      const std::string a = stem_of(files[i]), b = stem_of(files[j]);
      const GroundTruthMap gt = badtosca_groundtruth(meshes[i], meshes[j], perts[i].u, perts[j].u, cfg.threads);
      save_groundtruth(out_dir / (a + "__" + b + ".gt.txt"), gt);
      manifest += a + ".off " + b + ".off " + a + "__" + b + ".gt.txt\n";
    }
  write_text_file(out_dir / "seeds.csv", seeds);
  write_text_file(out_dir / "manifest.txt", manifest);
  std::fprintf(stderr, "badtosca: %zu meshes, %zu pairs\n", files.size(), files.size() * (files.size() - 1));
  return 0;
}

int cmd_eval(const PipelineConfig &cfg, const fs::path &manifest, const fs::path &out_csv, const std::string &curves,
             const std::string &timing, const std::string &timing_curve) {
  const std::vector<ManifestEntry> entries = load_manifest(manifest);
  std::string table = "pair,source,target,age,auc\n", curve_rows = "pair,threshold,fraction\n";
  JobLog log;
  char buf[64];
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ManifestEntry &e = entries[i];
    const std::string pair = stem_of(e.source) + "__" + stem_of(e.target);
    const TriMesh target = load_mesh(e.target);
    const GroundTruthMap gt = load_groundtruth(e.groundtruth);
    PointMap pred;
    if (e.prediction.empty()) {
      cfg.validate();
      pred = match_shapes(load_mesh(e.source), target, cfg, &log, pair).dense_map;
    } else {
      pred = load_pointmap(e.prediction, target.num_vertices());
    }
    const GeodesicErrors err = geodesic_error(pred, gt, target, cfg.threads);
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", err.curve.age, err.curve.auc);
    table += pair + "," + e.source.string() + "," + e.target.string() + buf;
    for (std::size_t k = 0; k < err.curve.thresholds.size(); ++k) {
      std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", err.curve.thresholds[k], err.curve.fractions[k]);
      curve_rows += pair + buf;
    }
  }
  write_text_file(out_csv, table);
  if (!curves.empty()) write_text_file(curves, curve_rows);
  if (!timing.empty()) write_text_file(timing, timing_csv(log));
  if (!timing_curve.empty()) {
    std::string s = "seconds,fraction\n";
    for (const auto &[t, f] : timing_cumulative(log)) {
      std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", t, f);
      s += buf;
    }
    write_text_file(timing_curve, s);
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Remeshing-based shape matching"};
  app.fallthrough();
  app.require_subcommand(0, 1);
  Flags fl;
  app.add_option("--threads", fl.threads, "worker threads");
  app.add_option("--seed", fl.seed, "random seed");
  app.add_option("--config", fl.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_flag("--dump-config", fl.dump_config, "print the resolved configuration and exit");
  app.add_option("-s,--samples", fl.samples, "lowres sample count");
  app.add_flag("--resample", fl.resample, "split large triangles before sampling");
  app.add_flag("--no-resample", fl.no_resample, "do not resample");
  app.add_option("--area-threshold", fl.area_threshold, "drop lowres components below this area fraction");
  app.add_option("--k0", fl.k0, "initial functional map size");
  app.add_option("--step", fl.step, "ZoomOut step");
  app.add_option("--k-final", fl.k_final, "final functional map size");
  app.add_option("--descriptor", fl.descriptor, "wks or hks");
  app.add_option("--descriptor-count", fl.descriptor_count, "number of descriptors");

  std::string in, out, src, tgt, dir, function, manifest, curves, timing, timing_curve;
  auto *remesh_cmd = app.add_subcommand("remesh", "remesh a mesh to the requested sample count");
  remesh_cmd->add_option("input", in)->required();
  remesh_cmd->add_option("output", out)->required();

  auto *match_cmd = app.add_subcommand("match", "match two meshes, write all artifacts to a directory");
  match_cmd->add_option("source", src)->required();
  match_cmd->add_option("target", tgt)->required();
  match_cmd->add_option("output-dir", out)->required();

  auto *transfer_cmd = app.add_subcommand("transfer", "carry a target function to the source through a match");
  transfer_cmd->add_option("match-dir", dir)->required();
  transfer_cmd->add_option("function", function)->required();
  transfer_cmd->add_option("output", out)->required();

  auto *badtosca_cmd = app.add_subcommand("badtosca", "perturbed copies and ground truth for a class directory");
  badtosca_cmd->add_option("input-dir", in)->required();
  badtosca_cmd->add_option("output-dir", out)->required();

  auto *eval_cmd = app.add_subcommand("eval", "geodesic error over a manifest of pairs");
  eval_cmd->add_option("manifest", manifest)->required();
  eval_cmd->add_option("output-csv", out)->required();
  eval_cmd->add_option("--curves", curves, "accuracy curves CSV");
  eval_cmd->add_option("--timing", timing, "per-stage timing CSV");
  eval_cmd->add_option("--timing-curve", timing_curve, "cumulative timing CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const PipelineConfig cfg = fl.resolve();
    if (fl.dump_config) {
      std::cout << to_json(cfg).dump(2) << "\n";
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return 2;
    }
    log_config(cfg);
    if (*remesh_cmd) return cmd_remesh(cfg, in, out);
    if (*match_cmd) return cmd_match(cfg, src, tgt, out);
    if (*transfer_cmd) return cmd_transfer(dir, function, out);
    if (*badtosca_cmd) return cmd_badtosca(cfg, in, out);
    if (*eval_cmd) return cmd_eval(cfg, manifest, out, curves, timing, timing_curve);
  } catch (const Error &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
