#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "cndhf/error.hpp"
#include "cndhf/pipeline.hpp"
#include "cndhf/shapes.hpp"

using namespace cndhf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cndhf_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Shared fixture meshes, written once.
const std::vector<fs::path>& fixtures() {
  static const std::vector<fs::path> paths = [] {
    auto p = write_fixtures(scratch("fixtures"));
    // A cube with three blind pockets, one per coordinate axis: needs three DHFs.
    const auto pockets = shapes::voxel_solid(9, 9, 9, Vec3::Constant(-0.9), 0.2, [](int i, int j, int k) {
      if (j == 2 && k == 2 && i < 3) return false;
      if (i == 6 && k == 6 && j < 3) return false;
      if (i == 2 && j == 6 && k < 3) return false;
      return true;
    });
    const auto three = fs::temp_directory_path() / "cndhf_test_cli" / "pockets" / "pockets.obj";
    fs::create_directories(three.parent_path());
    save_obj(pockets, three);
    p.push_back(three);
    return p;
  }();
  return paths;
}

const fs::path& fixture(const std::string& stem) {
  for (const auto& p : fixtures()) {
    if (p.stem() == stem) return p;
  }
  throw Error("no fixture " + stem);
}

PipelineOptions options_in(const fs::path& dir) {
  PipelineOptions o;
  o.out_dir = dir;
  o.seed = 7;
  o.quiet = true;
  return o;
}

nlohmann::json manifest(const fs::path& dir) {
  std::ifstream in(dir / kManifestName);
  return nlohmann::json::parse(in);
}

std::size_t count_files(const fs::path& dir, const std::string& prefix, const std::string& suffix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with(prefix) && name.ends_with(suffix)) ++n;
  }
  return n;
}

// Output files whose bytes must not depend on wall-clock time.
std::map<std::string, std::string> digests(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name == "run_log.csv" || name == "train_timing.csv") continue;
    out[name] = sha256_file(e.path());
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

struct Run {
  int status;
  std::string output;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(CNDHF_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

}  // namespace

TEST_CASE("seed derivation and width budget") {
  CHECK(derive_seed(1, "train") == derive_seed(1, "train"));
  CHECK(derive_seed(1, "train") != derive_seed(2, "train"));
  CHECK(derive_seed(1, "train") != derive_seed(1, "eval"));

  // P = 10k split over two axes lands on the ~4k preset below 5k.
  CHECK(width_for_budget(10000, 2) == 31);
  CHECK(parameter_count_for_width(31) <= 5000);
  CHECK(parameter_count_for_width(45) > 5000);
  CHECK(width_for_budget(10000, 1) == 45);
  CHECK(width_for_budget(40000, 1) == 93);
  CHECK_THROWS_AS((void)width_for_budget(1000, 2), Error);
  CHECK_THROWS_AS((void)width_for_budget(10000, 0), Error);
}

TEST_CASE("decompose picks the expected axis counts") {
  const std::map<std::string, std::size_t> expected = {{"sphere", 1}, {"torus", 1}, {"plus-solid", 2}, {"pockets", 3}};
  for (const auto& [stem, n] : expected) {
    const auto dir = scratch("decompose_" + stem);
    std::ostringstream log;
    const auto sel = cmd_decompose(fixture(stem), options_in(dir), log);
    CAPTURE(stem);
    CHECK(sel.axes.size() == n);
    CHECK(log.str().starts_with("N=" + std::to_string(n) + "\n"));
    const auto m = manifest(dir);
    CHECK(m["schema"] == "cndhf.manifest");
    CHECK(m["schema_version"] == kManifestSchemaVersion);
    CHECK(m["decompose"]["axes"].size() == n);
    CHECK(m["shape"]["sha256"] == sha256_file(fixture(stem)));
    CHECK(m["stages"] == nlohmann::json::array({"decompose"}));
  }
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_decompose(scratch("nope") / "missing.obj", options_in(scratch("nope")), log), Error);
}

TEST_CASE("bake writes one raster and two meshes per axis") {
  std::ostringstream log;
  for (const auto& [stem, n] : std::map<std::string, std::size_t>{{"sphere", 1}, {"pockets", 3}}) {
    const auto dir = scratch("bake_" + stem);
    auto o = options_in(dir);
    cmd_decompose(fixture(stem), o, log);
    o.resolution = 32;
    cmd_bake(o, log);
    CHECK(count_files(dir, "raster_", ".dhfr") == n);
    CHECK(count_files(dir, "gt_", ".obj") == 2 * n);
    CHECK(manifest(dir)["stages"] == nlohmann::json::array({"decompose", "bake"}));
  }
  CHECK_THROWS_WITH_AS(cmd_bake(options_in(scratch("bake_empty")), log),
                       doctest::Contains("missing manifest"), Error);
}

TEST_CASE("full chain on the sphere, rerun byte-identical") {
  const auto dir = scratch("chain");
  std::ostringstream log;
  auto run_all = [&] {
    auto o = options_in(dir);
    cmd_decompose(fixture("sphere"), o, log);
    o.resolution = 64;
    cmd_bake(o, log);
    o.resolution = 16;
    o.iterations = 60;
    o.milestones = {30, 60};
    o.params = 5000;
    cmd_train(o, log);
    o.resolution = 24;
    cmd_reconstruct(o, log);
    o.resolution = 16;
    o.samples = 2000;
    return cmd_eval({}, o, log);
  };
  const auto first = run_all();
  const auto before = digests(dir);
  const auto second = run_all();
  CHECK(second.chamfer_l1 == first.chamfer_l1);
  CHECK(second.iou == first.iou);
  CHECK(digests(dir) == before);

  for (const char* name : {"model.cndhf", "axis_0_it30.cndhf-net", "axis_0_it60.cndhf-net", "train_loss_0.csv",
                           "train_timing.csv", "recon.obj", "recon_world.obj", "pred_0_near.obj", "pred_0_far.obj",
                           "eval.json", "eval.csv", "run_log.csv"}) {
    CAPTURE(name);
    CHECK(fs::exists(dir / name));
  }
  const auto m = manifest(dir);
  CHECK(m["stages"] == nlohmann::json::array({"decompose", "bake", "train", "reconstruct", "eval"}));
  CHECK(m["train"]["width"] == 31);
  CHECK(m["train"]["per_axis_params"].get<std::size_t>() <= 5000);

  // Rerunning an early stage invalidates everything after it.
  auto o = options_in(dir);
  o.resolution = 64;
  cmd_bake(o, log);
  CHECK(manifest(dir)["stages"] == nlohmann::json::array({"decompose", "bake"}));
  CHECK_THROWS_AS(cmd_eval({}, o, log), Error);
}

TEST_CASE("eval of the ground-truth sphere rasters at 512") {
  const auto dir = scratch("eval_gt");
  std::ostringstream log;
  auto o = options_in(dir);
  cmd_decompose(fixture("sphere"), o, log);
  cmd_bake(o, log);
  o.resolution.reset();
  EvalSource gt;
  gt.ground_truth = true;
  const auto r = cmd_eval(gt, o, log);
  MESSAGE("GT sphere chamfer x1e3 " << r.chamfer_x1e3() << ", IoU " << r.iou);
  CHECK(r.chamfer_x1e3() < 2.0);
  CHECK(r.samples_model == 100000);
  const auto report = nlohmann::json::parse(std::ifstream(dir / "eval.json"));
  CHECK(report["chamfer_l1_x1e3"].get<double>() == doctest::Approx(r.chamfer_x1e3()));

  // A manifest whose files changed on disk is refused.
  {
    std::ofstream out(dir / "raster_0.dhfr", std::ios::binary | std::ios::app);
    out << 'x';
  }
  CHECK_THROWS_WITH_AS(cmd_eval(gt, o, log), doctest::Contains("hash mismatch"), Error);
  fs::remove(dir / "raster_0.dhfr");
  CHECK_THROWS_WITH_AS(cmd_eval(gt, o, log), doctest::Contains("missing file"), Error);
}

TEST_CASE("eval of a mesh against itself is exact") {
  const auto dir = scratch("eval_self");
  std::ostringstream log;
  auto o = options_in(dir);
  o.samples = 5000;
  o.resolution = 32;
  EvalSource self;
  self.candidate_mesh = fixture("torus");
  self.reference_mesh = fixture("torus");
  const auto r = cmd_eval(self, o, log);
  CHECK(r.chamfer_l1 == 0.0);
  CHECK(r.hausdorff == 0.0);
  CHECK(r.iou == 1.0);
  self.reference_mesh.reset();
  CHECK_THROWS_AS(cmd_eval(self, o, log), Error);
}

TEST_CASE("eval without a trained model errors") {
  const auto dir = scratch("eval_missing");
  std::ostringstream log;
  auto o = options_in(dir);
  cmd_decompose(fixture("sphere"), o, log);
  o.resolution = 16;
  cmd_bake(o, log);
  o.iterations = 10;
  o.milestones = {10};
  cmd_train(o, log);
  o.samples = 500;
  fs::remove(dir / "axis_0_it10.cndhf-net");
  CHECK_THROWS_WITH_AS(cmd_eval({}, o, log), doctest::Contains("missing file"), Error);
}

TEST_CASE("train refuses budgets below the smallest preset") {
  const auto dir = scratch("train_budget");
  std::ostringstream log;
  auto o = options_in(dir);
  cmd_decompose(fixture("pockets"), o, log);
  o.resolution = 16;
  cmd_bake(o, log);
  o.params = 1000;
  CHECK_THROWS_WITH_AS(cmd_train(o, log), doctest::Contains("too small"), Error);
}

TEST_CASE("stats over a corpus") {
  std::ostringstream log;
  const auto corpus = fixtures().front().parent_path();
  const auto out = scratch("stats");
  const auto csv = cmd_stats(corpus, options_in(out), log);
  const auto rows = parse_csv(csv);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0][0] == "shape");
  CHECK(rows[1][0] == "plus-solid");
  CHECK(rows[1].back() == "2");
  CHECK(rows[2][0] == "sphere");
  CHECK(rows[3][0] == "torus");
  CHECK(rows[4][0] == "aggregate");
  CHECK(fs::exists(out / "coverage.csv"));

  CHECK_THROWS_AS(cmd_stats(scratch("stats_empty_corpus"), options_in(scratch("stats_empty")), log), Error);

  const auto twins = scratch("twins");
  fs::copy_file(fixture("torus"), twins / "a.obj");
  fs::copy_file(fixture("torus"), twins / "b.obj");
  const auto twin_rows = parse_csv(cmd_stats(twins, options_in(scratch("stats_twins")), log));
  REQUIRE(twin_rows.size() == 4);
  for (std::size_t c = 1; c < twin_rows[1].size(); ++c) {
    CHECK(std::stod(twin_rows[3][c]) == std::stod(twin_rows[1][c]));
  }
}

TEST_CASE("command-line binary") {
  const auto dir = scratch("binary");
  auto r = run_cli("fixture " + (dir / "shapes").string());
  CHECK(r.status == 0);
  CHECK(fs::exists(dir / "shapes" / "sphere.obj"));

  r = run_cli("--seed 3 --out-dir " + (dir / "run").string() + " decompose " + (dir / "shapes" / "sphere.obj").string());
  CHECK(r.status == 0);
  CHECK(r.output.find("N=1") != std::string::npos);

  r = run_cli("--out-dir " + (dir / "run").string() + " --resolution 16 bake");
  CHECK(r.status == 0);
  CHECK(fs::exists(dir / "run" / "raster_0.dhfr"));

  r = run_cli("--out-dir " + (dir / "run").string() + " --params 10 train");
  CHECK(r.status == 1);
  CHECK(r.output.find("error: ") != std::string::npos);

  r = run_cli("--out-dir " + (dir / "empty").string() + " bake");
  CHECK(r.status == 1);
  CHECK(r.output.find("missing manifest") != std::string::npos);

  r = run_cli("--out-dir " + (dir / "stats").string() + " stats " + (dir / "shapes").string());
  CHECK(r.status == 0);
  CHECK(r.output.find("aggregate") != std::string::npos);

  CHECK(run_cli("--help").status == 0);
  CHECK(run_cli("frobnicate").status != 0);
}
