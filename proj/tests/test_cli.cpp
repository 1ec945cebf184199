#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "rematch/bench.hpp"
#include "rematch/mesh_io.hpp"
#include "rematch/pipeline.hpp"
#include "rematch/primitives.hpp"

using namespace rematch;
namespace prim = rematch::primitives;
namespace fs = std::filesystem;

namespace {

const fs::path &work_dir() {
  static const fs::path d = [] {
    fs::path p = fs::temp_directory_path() / "rematch_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

fs::path at(const std::string &name) { return work_dir() / name; }

// Runs the CLI in the work directory; stdout goes to `stdout_file` when given.
int run(const std::string &args, const std::string &stdout_file = "") {
  const std::string cmd = "cd '" + work_dir().string() + "' && '" REMATCH_CLI_PATH "' " + args +
                          (stdout_file.empty() ? " > /dev/null" : " > '" + stdout_file + "'") + " 2> last_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json dump_config(const std::string &args) {
  EXPECT_EQ(run("--dump-config " + args, "dump.json"), 0);
  return nlohmann::json::parse(detail::read_file(at("dump.json")));
}

void write_meshes() {
  static bool done = false;
  if (done) return;
  save_mesh(at("sphere.off"), prim::icosphere(4));
  save_mesh(at("tube.off"), prim::bent_cylinder(0.0, 32, 80));
  save_mesh(at("tube_bent.off"), prim::bent_cylinder(0.8, 32, 80));
  save_mesh(at("glued.off"), prim::glued_tetrahedra());
  done = true;
}

GroundTruthMap identity_gt(int n) {
  GroundTruthMap gt;
  gt.target_of.resize(n);
  std::iota(gt.target_of.begin(), gt.target_of.end(), 0);
  return gt;
}

} // namespace

TEST(Config, DefaultsFileAndFlagPrecedence) {
  const auto d = dump_config("");
  EXPECT_EQ(d["samples"], 3000);
  EXPECT_EQ(d["k0"], 20);
  EXPECT_EQ(d["k_final"], 100);
  EXPECT_EQ(d["step"], 5);
  EXPECT_EQ(d["descriptor"], "wks");
  EXPECT_DOUBLE_EQ(d["component_area_threshold"].get<double>(), 0.01);
  EXPECT_EQ(d["resample"], false);

  write_text_file(at("cfg.json"), R"({"samples": 800, "k0": 10, "resample": true, "seed": 5})");
  const auto f = dump_config("--config cfg.json");
  EXPECT_EQ(f["samples"], 800);
  EXPECT_EQ(f["k0"], 10);
  EXPECT_EQ(f["resample"], true);
  EXPECT_EQ(f["seed"], 5);
  EXPECT_EQ(f["k_final"], 100);

  const auto g = dump_config("--config cfg.json --samples 900 --no-resample --seed 6 --threads 3");
  EXPECT_EQ(g["samples"], 900);
  EXPECT_EQ(g["k0"], 10);
  EXPECT_EQ(g["resample"], false);
  EXPECT_EQ(g["seed"], 6);
  EXPECT_EQ(g["threads"], 3);

  // The dump is itself a valid config that reproduces the same resolution.
  fs::copy_file(at("dump.json"), at("again.json"), fs::copy_options::overwrite_existing);
  EXPECT_EQ(dump_config("--config again.json"), g);
}

TEST(Config, BadInputIsAUsageError) {
  write_text_file(at("unknown.json"), R"({"sample": 10})");
  EXPECT_EQ(run("--dump-config --config unknown.json"), 2);
  write_text_file(at("typed.json"), R"({"samples": "many"})");
  EXPECT_EQ(run("--dump-config --config typed.json"), 2);
  write_text_file(at("broken.json"), "{");
  EXPECT_EQ(run("--dump-config --config broken.json"), 2);
  EXPECT_EQ(run("--dump-config --descriptor sift"), 2);
  EXPECT_EQ(run("--samples"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run(""), 2);
}

TEST(Remesh, IcosphereGivesManifoldAtRequestedSize) {
  write_meshes();
  ASSERT_EQ(run("remesh sphere.off low.off -s 400"), 0);
  const TriMesh low = load_mesh(at("low.off"));
  EXPECT_EQ(low.num_vertices(), 400);
  EXPECT_TRUE(validate_manifold(low).empty());
  EXPECT_EQ(low.num_vertices() - low.num_edges() + low.num_triangles(), 2);
  EXPECT_TRUE(fs::exists(at("low.texels.txt")));
  const auto timing = nlohmann::json::parse(detail::read_file(at("low.timing.json")));
  EXPECT_GT(timing["stages"].size(), 0u);
  const RemeshOutput side = read_remesh_sidecar(at("low.texels.txt"), low);
  EXPECT_EQ(side.texel_of.size(), 2562u);
}

TEST(Remesh, ErrorsAndClamping) {
  write_meshes();
  EXPECT_EQ(run("remesh missing.off out.off"), 3);
  EXPECT_EQ(run("remesh glued.off out.off -s 4"), 4);
  EXPECT_EQ(run("remesh sphere.off out.off -s 0"), 2);
  ASSERT_EQ(run("remesh sphere.off all.off -s 100000"), 0);
  EXPECT_NE(detail::read_file(at("last_stderr.txt")).find("clamping"), std::string::npos);
  EXPECT_EQ(load_mesh(at("all.off")).num_vertices(), 2562);
}

TEST(Match, SelfMatchOfAnAsymmetricShapeIsNearIdentity) {
  write_meshes();
  ASSERT_EQ(run("match tube.off tube.off self -s 800 --k-final 60"), 0);
  const TriMesh tube = load_mesh(at("tube.off"));
  const PointMap pm = load_pointmap(at("self/map.txt"), tube.num_vertices());
  const auto err = geodesic_error(pm, identity_gt(tube.num_vertices()), tube);
  EXPECT_LT(err.curve.age, 0.02);
  for (const char *f : {"fmap.txt", "fmap_init.txt", "lowres_map.txt", "source.basis", "target_lowres.off",
                        "source_prolongation.txt", "target_texels.txt", "timing.csv", "config.json"})
    EXPECT_TRUE(fs::exists(at("self") / f)) << f;
  const FunctionalMap c = load_fmap(at("self/fmap.txt"));
  EXPECT_EQ(c.k_source(), 60);
  EXPECT_EQ(c.k_target(), 60);
}

TEST(Match, RerunsAreByteIdentical) {
  write_meshes();
  ASSERT_EQ(run("match tube.off tube_bent.off r1 -s 500 --k-final 40 --seed 3"), 0);
  ASSERT_EQ(run("match tube.off tube_bent.off r2 -s 500 --k-final 40 --seed 3"), 0);
  int compared = 0;
  for (const auto &e : fs::directory_iterator(at("r1"))) {
    const std::string name = e.path().filename().string();
    if (name == "timing.csv") continue;
    EXPECT_EQ(detail::read_file(e.path()), detail::read_file(at("r2") / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 14);
}

TEST(Match, ConfigErrors) {
  write_meshes();
  EXPECT_EQ(run("match tube.off tube.off bad -s 50 --k-final 60"), 2);
  EXPECT_EQ(run("match tube.off tube.off bad --k0 30 --k-final 20"), 2);
  EXPECT_EQ(run("match tube.off missing.off bad"), 3);
}

TEST(Transfer, ConstantsAndCoordinates) {
  write_meshes();
  const TriMesh tube = load_mesh(at("tube.off"));
  const int n = tube.num_vertices();
  Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(n, 1, 2.5), xyz(n, 3);
  for (int v = 0; v < n; ++v) xyz.row(v) = tube.position(v).transpose();
  save_matrix(at("ones.txt"), ones);
  save_matrix(at("xyz.txt"), xyz);
  // Coordinates of the identity pair come back up to truncation error, which
  // shrinks as the basis grows.
  std::vector<double> rms;
  for (int k : {20, 60}) {
    const std::string dir = "id" + std::to_string(k);
    ASSERT_EQ(run("match tube.off tube.off " + dir + " -s 800 --k0 " + std::to_string(std::min(k, 20)) +
                  " --k-final " + std::to_string(k)),
              0);
    ASSERT_EQ(run("transfer " + dir + " ones.txt ones_out.txt"), 0);
    const Eigen::MatrixXd back = load_matrix(at("ones_out.txt"));
    ASSERT_EQ(back.rows(), n);
    EXPECT_LT((back.array() - 2.5).abs().maxCoeff(), 1e-9);
    ASSERT_EQ(run("transfer " + dir + " xyz.txt xyz_out.txt"), 0);
    const Eigen::MatrixXd moved = load_matrix(at("xyz_out.txt"));
    ASSERT_EQ(moved.cols(), 3);
    rms.push_back(std::sqrt((moved - xyz).rowwise().squaredNorm().mean()));
  }
  EXPECT_LT(rms[1], rms[0]);
  EXPECT_LT(rms[1], 0.05);
  EXPECT_EQ(run("transfer id20 missing.txt out.txt"), 3);
  save_matrix(at("short.txt"), Eigen::MatrixXd::Ones(5, 1));
  EXPECT_EQ(run("transfer id20 short.txt out.txt"), 2);
}

TEST(BadToscaAndEval, ClassDirectoryRoundTrip) {
  write_meshes();
  fs::create_directories(at("cls"));
  fs::copy_file(at("tube.off"), at("cls/a.off"), fs::copy_options::overwrite_existing);
  fs::copy_file(at("tube_bent.off"), at("cls/b.off"), fs::copy_options::overwrite_existing);
  ASSERT_EQ(run("badtosca cls bt --seed 9"), 0);
  for (const char *f : {"a.off", "b.off", "a.pert.txt", "b.pert.txt", "a__b.gt.txt", "b__a.gt.txt", "manifest.txt",
                        "seeds.csv"})
    EXPECT_TRUE(fs::exists(at("bt") / f)) << f;
  EXPECT_EQ(detail::read_file(at("bt/seeds.csv")), "mesh,seed\na,9\nb,10\n");
  const std::string first = detail::read_file(at("bt/a__b.gt.txt"));
  ASSERT_EQ(run("badtosca cls bt2 --seed 9"), 0);
  EXPECT_EQ(detail::read_file(at("bt2/a__b.gt.txt")), first);
  EXPECT_EQ(detail::read_file(at("bt2/a.off")), detail::read_file(at("bt/a.off")));

  // Ground truth as prediction scores exactly zero.
  write_text_file(at("bt/pred.txt"), "a.off b.off a__b.gt.txt a__b.gt.txt\nb.off a.off b__a.gt.txt b__a.gt.txt\n");
  ASSERT_EQ(run("eval bt/pred.txt ev.csv --curves curves.csv"), 0);
  const std::string csv = detail::read_file(at("ev.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "pair,source,target,age,auc");
  std::istringstream rows(csv);
  std::string line;
  std::getline(rows, line);
  int pairs = 0;
  while (std::getline(rows, line)) {
    const auto c1 = line.rfind(','), c0 = line.rfind(',', c1 - 1);
    EXPECT_EQ(std::stod(line.substr(c0 + 1, c1 - c0 - 1)), 0.0) << line;
    EXPECT_EQ(std::stod(line.substr(c1 + 1)), 1.0) << line;
    ++pairs;
  }
  EXPECT_EQ(pairs, 2);
  EXPECT_TRUE(fs::exists(at("curves.csv")));

  write_text_file(at("empty.txt"), "# nothing\n");
  ASSERT_EQ(run("eval empty.txt ev0.csv --timing t0.csv"), 0);
  EXPECT_EQ(detail::read_file(at("ev0.csv")), "pair,source,target,age,auc\n");
  EXPECT_EQ(detail::read_file(at("t0.csv")), "pair,stage,seconds\n");
}

TEST(BadToscaAndEval, ConnectivityMismatchIsATopologyError) {
  write_meshes();
  fs::create_directories(at("mixed"));
  fs::copy_file(at("tube.off"), at("mixed/a.off"), fs::copy_options::overwrite_existing);
  fs::copy_file(at("sphere.off"), at("mixed/b.off"), fs::copy_options::overwrite_existing);
  EXPECT_EQ(run("badtosca mixed mixed_out"), 4);
  EXPECT_EQ(run("badtosca nowhere out"), 3);
}
