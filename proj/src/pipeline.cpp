#include "cndhf/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "cndhf/error.hpp"
#include "cndhf/occupancy.hpp"
#include "cndhf/reconstruct.hpp"
#include "cndhf/shapes.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace cndhf {

namespace {

const std::vector<std::string> kStages = {"decompose", "bake", "train", "reconstruct", "eval"};

std::array<unsigned char, 32> sha256(const void* data, std::size_t size) {
  std::array<unsigned char, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32) {
    throw Error("SHA-256 failed");
  }
  return digest;
}

std::string hex(const std::array<unsigned char, 32>& digest) {
  std::ostringstream out;
  for (unsigned char c : digest) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
  return out.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

json file_record(const fs::path& out_dir, const std::string& relative) {
  return json{{"path", relative}, {"sha256", sha256_file(out_dir / relative)}};
}

fs::path manifest_path(const PipelineOptions& o) { return o.out_dir / kManifestName; }

json load_manifest(const PipelineOptions& o) {
  const auto path = manifest_path(o);
  if (!fs::exists(path)) throw Error("missing manifest " + path.string() + " (run decompose first)");
  json m = json::parse(read_file(path));
  if (m.value("schema", "") != "cndhf.manifest" || m.value("schema_version", 0) != kManifestSchemaVersion) {
    throw Error("unsupported manifest schema in " + path.string());
  }
  return m;
}

void require_stage(const json& m, const std::string& stage) {
  if (!m.contains(stage)) throw Error("manifest has no " + stage + " stage (run it first)");
}

// Records `stage` and forgets every later one.
void set_stage(json& m, const std::string& stage, json record) {
  const auto pos = std::find(kStages.begin(), kStages.end(), stage) - kStages.begin();
  for (std::size_t s = static_cast<std::size_t>(pos); s < kStages.size(); ++s) m.erase(kStages[s]);
  m[stage] = std::move(record);
  json done = json::array();
  for (const auto& s : kStages) {
    if (m.contains(s)) done.push_back(s);
  }
  m["stages"] = done;
}

void save_manifest(const PipelineOptions& o, const json& m) { write_text(manifest_path(o), m.dump(2) + "\n"); }

// Wall-clock data lives outside the manifest so reruns stay byte-identical.
void append_run_log(const PipelineOptions& o, const std::string& stage, double seconds) {
  const auto stamp = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&stamp, &utc);
  std::ostringstream line;
  line << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ") << ',' << stage << ',' << std::fixed << std::setprecision(3)
       << seconds << '\n';
  const auto path = o.out_dir / "run_log.csv";
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (fresh) out << "utc,stage,seconds\n";
  out << line.str();
}

class StageTimer {
 public:
  StageTimer(const PipelineOptions& o, std::string stage) : o_(o), stage_(std::move(stage)) {}
  void finish() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    append_run_log(o_, stage_, s);
  }

 private:
  const PipelineOptions& o_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

NormalizationTransform manifest_normalization(const json& m) {
  NormalizationTransform t;
  t.scale = m.at("normalization").at("scale").get<double>();
  t.center = json_vec(m.at("normalization").at("center"));
  return t;
}

TriangleMesh apply_normalization(const TriangleMesh& mesh, const NormalizationTransform& t) {
  std::vector<Vec3> vertices;
  vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) vertices.push_back(t.apply(v));
  return TriangleMesh::from_indexed(std::move(vertices), mesh.triangles);
}

// The input shape in the normalized frame, after checking it is unchanged.
TriangleMesh manifest_shape(const json& m) {
  const fs::path path = m.at("shape").at("path").get<std::string>();
  if (sha256_file(path) != m.at("shape").at("sha256").get<std::string>()) {
    throw Error("input shape " + path.string() + " changed since decompose");
  }
  return apply_normalization(load_mesh(path).mesh, manifest_normalization(m));
}

std::vector<DhfAxis> manifest_axes(const json& m) {
  std::vector<DhfAxis> axes;
  for (const auto& a : m.at("decompose").at("axes")) axes.push_back(DhfAxis::from_direction(json_vec(a)));
  return axes;
}

// Every {"path", "sha256"} object below `node`.
void collect_records(const json& node, std::vector<std::pair<std::string, std::string>>& out) {
  if (node.is_object()) {
    if (node.contains("path") && node.contains("sha256")) {
      out.emplace_back(node["path"].get<std::string>(), node["sha256"].get<std::string>());
    }
    for (const auto& [key, value] : node.items()) collect_records(value, out);
  } else if (node.is_array()) {
    for (const auto& value : node) collect_records(value, out);
  }
}

void verify_manifest_files(const json& m, const PipelineOptions& o) {
  std::vector<std::pair<std::string, std::string>> records;
  collect_records(m, records);
  for (const auto& [path, digest] : records) {
    fs::path p = path;
    if (p.is_relative()) p = o.out_dir / p;
    if (!fs::exists(p)) throw Error("manifest references missing file " + p.string());
    if (sha256_file(p) != digest) throw Error("hash mismatch for " + p.string());
  }
}

std::string axis_file(const char* prefix, std::size_t axis, const char* suffix) {
  return std::string(prefix) + "_" + std::to_string(axis) + suffix;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  const std::string key = std::string(stage) + ":" + std::to_string(seed);
  const auto digest = sha256(key.data(), key.size());
  std::uint64_t out = 0;
  for (int k = 7; k >= 0; --k) out = (out << 8) | digest[static_cast<std::size_t>(k)];
  return out;
}

std::string sha256_file(const fs::path& path) {
  const std::string bytes = read_file(path);
  return hex(sha256(bytes.data(), bytes.size()));
}

int width_for_budget(std::size_t budget, std::size_t axes) {
  if (axes == 0) throw Error("no axes to train");
  const std::size_t per_axis = budget / axes;
  int best = 0;
  for (int w : kWidthPresets) {
    if (parameter_count_for_width(w) <= per_axis) best = w;
  }
  if (best == 0) {
    throw Error("parameter budget " + std::to_string(budget) + " is too small for " + std::to_string(axes) +
                " axes (smallest preset needs " + std::to_string(parameter_count_for_width(kWidthPresets[0])) +
                " per axis)");
  }
  return best;
}

AxisSelection cmd_decompose(const fs::path& mesh_path, const PipelineOptions& o, std::ostream& log) {
  StageTimer timer(o, "decompose");
  const auto loaded = load_mesh(mesh_path);
  const auto normalized = normalize_to_unit_cube(loaded.mesh);
  SelectionOptions sel;
  sel.n_fibonacci = o.n_fibonacci;
  sel.coverage_target = o.coverage_target;
  sel.effective_area = o.effective_area;
  sel.seed = derive_seed(o.seed, "decompose");
  const auto selection = greedy_select(normalized.mesh, sel);

  fs::create_directories(o.out_dir);
  json m;
  m["schema"] = "cndhf.manifest";
  m["schema_version"] = kManifestSchemaVersion;
  const fs::path abs = fs::absolute(mesh_path).lexically_normal();
  m["shape"] = {{"name", mesh_path.stem().string()},
                {"path", abs.string()},
                {"sha256", sha256_file(mesh_path)},
                {"triangles", loaded.mesh.triangles.size()},
                {"degenerate_triangles", loaded.diagnostics.degenerate_triangles},
                {"duplicate_triangles", loaded.diagnostics.duplicate_triangles}};
  m["normalization"] = {{"scale", normalized.transform.scale}, {"center", vec_json(normalized.transform.center)}};
  m["seed"] = o.seed;
  json axes = json::array();
  for (const auto& a : selection.axes) axes.push_back(vec_json(a.direction));
  set_stage(m, "decompose",
            {{"seed", sel.seed},
             {"coverage_target", o.coverage_target},
             {"n_fibonacci", o.n_fibonacci},
             {"effective_area", o.effective_area == EffectiveAreaMode::kAsPrinted ? "as_printed" : "inverse"},
             {"axes", axes},
             {"candidate_indices", selection.candidate_indices},
             {"cumulative_coverage", selection.cumulative_coverage},
             {"coverage_curve", selection.coverage_curve},
             {"visible_fraction", selection.visible_fraction}});
  save_manifest(o, m);

  log << "N=" << selection.axes.size() << "\n";
  log << "coverage";
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& c = selection.coverage_curve;
    const double v = c.empty() ? 0.0 : c[std::min(k, c.size() - 1)];
    log << ' ' << std::fixed << std::setprecision(2) << 100.0 * v;
  }
  log << " visible " << std::fixed << std::setprecision(2) << 100.0 * selection.visible_fraction << "\n";
  log.unsetf(std::ios::floatfield);
  timer.finish();
  return selection;
}

void cmd_bake(const PipelineOptions& o, std::ostream& log) {
  StageTimer timer(o, "bake");
  json m = load_manifest(o);
  require_stage(m, "decompose");
  const int res = o.resolution.value_or(kDefaultBakeResolution);
  if (res < 2) throw Error("bake resolution must be at least 2");
  const TriangleMesh mesh = manifest_shape(m);
  const Bvh bvh(mesh);
  const auto axes = manifest_axes(m);
  json rasters = json::array(), meshes = json::array();
  for (std::size_t i = 0; i < axes.size(); ++i) {
    BakeStats stats;
    const auto raster = bake_raster(bvh, axes[i], res, res, &stats);
    const auto name = axis_file("raster", i, ".dhfr");
    save_raster(raster, o.out_dir / name);
    rasters.push_back(file_record(o.out_dir, name));
    rasters.back()["valid_pixels"] = raster.valid_count();
    rasters.back()["odd_hit_pixels"] = stats.odd_hit_pixels;
    rasters.back()["multi_interval_pixels"] = stats.multi_interval_pixels;
    for (auto [surface, suffix] : {std::pair{HeightSurface::kNear, "_near.obj"}, std::pair{HeightSurface::kFar, "_far.obj"}}) {
      const auto obj = axis_file("gt", i, suffix);
      save_obj(export_hf_mesh(raster, surface), o.out_dir / obj);
      meshes.push_back(file_record(o.out_dir, obj));
    }
    log << "axis " << i << ": " << raster.valid_count() << " valid pixels";
    if (stats.odd_hit_pixels) log << ", " << stats.odd_hit_pixels << " odd-crossing pixels";
    if (stats.multi_interval_pixels) log << ", " << stats.multi_interval_pixels << " multi-interval pixels";
    log << "\n";
  }
  set_stage(m, "bake", {{"resolution", res}, {"rasters", rasters}, {"gt_meshes", meshes}});
  save_manifest(o, m);
  timer.finish();
}

void cmd_train(const PipelineOptions& o, std::ostream& log) {
  StageTimer timer(o, "train");
  json m = load_manifest(o);
  require_stage(m, "bake");
  const auto axes = manifest_axes(m);
  const int res = o.resolution.value_or(kDefaultTrainResolution);
  if (res < 4) throw Error("training resolution must be at least 4");
  if (o.iterations < 1) throw Error("iterations must be at least 1");
  const int width = width_for_budget(o.params, axes.size());

  CnDhfModel model;
  model.normalization = manifest_normalization(m);
  model.shape_name = m.at("shape").at("name").get<std::string>();
  std::ostringstream provenance;
  provenance << "width=" << width << " iterations=" << o.iterations << " resolution=" << res
             << " lambda=" << o.lambda_lap << " seed=" << o.seed;
  model.provenance = provenance.str();

  std::ostringstream timing;
  timing << "axis,iteration,seconds\n";
  json per_axis = json::array();
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const auto& rec = m.at("bake").at("rasters").at(i);
    const auto baked = load_raster(o.out_dir / rec.at("path").get<std::string>());
    const auto gt = (baked.width == res && baked.height == res) ? baked : resample_raster(baked, res, res);
    const auto axis_seed = derive_seed(o.seed, "train/axis" + std::to_string(i));

    TrainConfig cfg;
    cfg.iterations = o.iterations;
    cfg.lambda_lap = o.lambda_lap;
    cfg.outside = o.outside;
    cfg.seed = axis_seed;
    cfg.checkpoint_at = o.milestones;
    cfg.log_every = std::max(1, std::min(100, o.iterations / 10));
    json checkpoints = json::array();
    cfg.on_checkpoint = [&](int iteration, const SirenModel& net) {
      const auto name = "axis_" + std::to_string(i) + "_it" + std::to_string(iteration) + ".cndhf-net";
      save_checkpoint({axes[i], net}, o.out_dir / name);
      json r = file_record(o.out_dir, name);
      r["iteration"] = iteration;
      checkpoints.push_back(r);
    };
    const auto result = train(init_model(width, axis_seed), gt, cfg);

    std::ostringstream loss;
    loss << std::setprecision(9) << "iteration,reg,lap,total\n";
    for (const auto& e : result.report.log) {
      loss << e.iteration << ',' << e.reg << ',' << e.lap << ',' << e.total << '\n';
      timing << i << ',' << e.iteration << ',' << std::fixed << std::setprecision(3) << e.seconds << '\n'
             << std::defaultfloat;
    }
    const auto loss_name = axis_file("train_loss", i, ".csv");
    write_text(o.out_dir / loss_name, loss.str());

    json a = {{"axis", i}, {"seed", axis_seed}, {"final_valid_l1", result.report.final_valid_l1},
              {"checkpoints", checkpoints}, {"loss_log", file_record(o.out_dir, loss_name)}};
    per_axis.push_back(a);
    model.entries.push_back({axes[i], std::make_shared<NeuralField>(result.model)});
    log << "axis " << i << ": width " << width << ", valid-pixel L1 " << result.report.final_valid_l1 << ", "
        << std::fixed << std::setprecision(1) << result.report.wall_seconds << " s\n"
        << std::defaultfloat;
  }
  write_text(o.out_dir / "train_timing.csv", timing.str());
  save_model(model, o.out_dir / "model.cndhf");

  set_stage(m, "train",
            {{"params", o.params},
             {"per_axis_budget", o.params / axes.size()},
             {"width", width},
             {"per_axis_params", parameter_count_for_width(width)},
             {"iterations", o.iterations},
             {"resolution", res},
             {"lambda_lap", o.lambda_lap},
             {"outside", o.outside == OutsideMode::kHinge ? "hinge" : "regress_constants"},
             {"milestones", o.milestones},
             {"axes", per_axis},
             {"model", file_record(o.out_dir, "model.cndhf")}});
  save_manifest(o, m);
  timer.finish();
}

void cmd_reconstruct(const PipelineOptions& o, std::ostream& log) {
  StageTimer timer(o, "reconstruct");
  json m = load_manifest(o);
  require_stage(m, "train");
  const int res = o.resolution.value_or(kDefaultGridResolution);
  const int raster_res = m.at("bake").at("resolution").get<int>();
  const auto model = load_model(o.out_dir / m.at("train").at("model").at("path").get<std::string>());

  json meshes = json::array();
  const auto hf = export_model_hf_meshes(model, raster_res);
  for (std::size_t k = 0; k < hf.size(); ++k) {
    const auto name = axis_file("pred", k / 2, k % 2 == 0 ? "_near.obj" : "_far.obj");
    save_obj(hf[k], o.out_dir / name);
    meshes.push_back(file_record(o.out_dir, name));
  }
  const auto grid = voxelize(model, res);
  const auto surface = marching_cubes(grid);
  save_obj(surface, o.out_dir / "recon.obj");
  std::vector<Vec3> world;
  world.reserve(surface.vertices.size());
  for (const auto& v : surface.vertices) world.push_back(model.normalization.invert(v));
  save_obj(TriangleMesh::from_indexed(std::move(world), surface.triangles), o.out_dir / "recon_world.obj");

  set_stage(m, "reconstruct",
            {{"grid_resolution", res},
             {"hf_resolution", raster_res},
             {"occupied_voxels", grid.occupied_count()},
             {"hf_meshes", meshes},
             {"surface", file_record(o.out_dir, "recon.obj")},
             {"surface_world", file_record(o.out_dir, "recon_world.obj")}});
  save_manifest(o, m);
  log << "recon.obj: " << surface.vertices.size() << " vertices, " << surface.triangles.size() << " triangles\n";
  timer.finish();
}

MetricReport cmd_eval(const EvalSource& source, const PipelineOptions& o, std::ostream& log) {
  StageTimer timer(o, "eval");
  const int iou_res = o.resolution.value_or(kDefaultIouResolution);
  const auto seed = derive_seed(o.seed, "eval");
  MetricReport report;
  report.seed = seed;
  report.iou_resolution = iou_res;

  std::vector<Vec3> cand_points, ref_points;
  OccupancyFn cand_occ;
  std::optional<json> manifest;
  std::optional<TriangleMesh> cand_mesh;
  std::optional<Bvh> cand_bvh;
  CnDhfModel model;
  TriangleMesh reference;

  if (source.candidate_mesh) {
    if (!source.reference_mesh) throw Error("--candidate needs --reference");
    const auto ref = normalize_to_unit_cube(load_mesh(*source.reference_mesh).mesh);
    reference = ref.mesh;
    cand_mesh = apply_normalization(load_mesh(*source.candidate_mesh).mesh, ref.transform);
    cand_bvh.emplace(*cand_mesh);
    cand_points = sample_by_ray_stabbing(*cand_bvh, o.samples, seed);
    cand_occ = mesh_occupancy(*cand_bvh);
    report.shape = source.candidate_mesh->stem().string();
  } else {
    manifest = load_manifest(o);
    verify_manifest_files(*manifest, o);
    const auto& m = *manifest;
    reference = source.reference_mesh
                    ? apply_normalization(load_mesh(*source.reference_mesh).mesh, manifest_normalization(m))
                    : manifest_shape(m);
    model.normalization = manifest_normalization(m);
    model.shape_name = m.at("shape").at("name").get<std::string>();
    if (source.ground_truth) {
      require_stage(m, "bake");
      const auto axes = manifest_axes(m);
      for (std::size_t i = 0; i < axes.size(); ++i) {
        auto raster = load_raster(o.out_dir / m.at("bake").at("rasters").at(i).at("path").get<std::string>());
        model.entries.push_back({axes[i], std::make_shared<RasterField>(std::move(raster))});
      }
    } else {
      require_stage(m, "train");
      model = load_model(o.out_dir / m.at("train").at("model").at("path").get<std::string>());
    }
    cand_points = sample_by_ray_stabbing(model, o.samples, seed);
    cand_occ = model_occupancy(model);
    report.shape = model.shape_name;
  }

  const Bvh ref_bvh(reference);
  ref_points = sample_by_ray_stabbing(ref_bvh, o.samples, seed);
  report.chamfer_l1 = chamfer_l1(cand_points, ref_points);
  report.hausdorff = hausdorff(cand_points, ref_points);
  report.samples_model = cand_points.size();
  report.samples_reference = ref_points.size();
  report.iou = iou(cand_occ, mesh_occupancy(ref_bvh), iou_res);

  fs::create_directories(o.out_dir);
  write_text(o.out_dir / "eval.json", report_json(report));
  write_text(o.out_dir / "eval.csv", report_csv(std::span<const MetricReport>(&report, 1)));
  if (manifest) {
    set_stage(*manifest, "eval",
              {{"source", source.ground_truth ? "ground_truth_rasters" : "model"},
               {"samples", o.samples},
               {"iou_resolution", iou_res},
               {"seed", seed},
               {"chamfer_l1_x1e3", report.chamfer_x1e3()},
               {"iou", report.iou},
               {"hausdorff", report.hausdorff},
               {"report", file_record(o.out_dir, "eval.json")}});
    save_manifest(o, *manifest);
  }
  log << "chamfer_l1_x1e3 " << report.chamfer_x1e3() << "  iou " << report.iou << "  hausdorff " << report.hausdorff
      << "\n";
  timer.finish();
  return report;
}

std::string cmd_stats(const fs::path& corpus, const PipelineOptions& o, std::ostream& log) {
  if (!fs::is_directory(corpus)) throw Error("not a directory: " + corpus.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(corpus)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj" || ext == ".stl") files.push_back(entry.path());
  }
  if (files.empty()) throw Error("no meshes in " + corpus.string());
  std::sort(files.begin(), files.end());

  std::ostringstream csv;
  csv << std::fixed << std::setprecision(4);
  csv << "shape,coverage_1dhf,coverage_2dhf,coverage_3dhf,coverage_4dhf,visible_pct,selected_n\n";
  std::array<double, 6> mean{};
  std::size_t rows = 0;
  for (const auto& file : files) {
    const auto mesh = normalize_to_unit_cube(load_mesh(file).mesh).mesh;
    SelectionOptions sel;
    sel.n_fibonacci = o.n_fibonacci;
    sel.coverage_target = o.coverage_target;
    sel.effective_area = o.effective_area;
    sel.seed = derive_seed(o.seed, "stats/" + file.filename().string());
    const auto s = greedy_select(mesh, sel);
    std::array<double, 6> row{};
    for (std::size_t k = 0; k < 4; ++k) {
      row[k] = 100.0 * (s.coverage_curve.empty() ? 0.0 : s.coverage_curve[std::min(k, s.coverage_curve.size() - 1)]);
    }
    row[4] = 100.0 * s.visible_fraction;
    row[5] = static_cast<double>(s.axes.size());
    ++rows;
    // Running mean keeps equal inputs exactly equal.
    for (std::size_t k = 0; k < row.size(); ++k) mean[k] += (row[k] - mean[k]) / static_cast<double>(rows);
    csv << file.stem().string();
    for (std::size_t k = 0; k < 5; ++k) csv << ',' << row[k];
    csv << ',' << s.axes.size() << '\n';
    log << file.filename().string() << ": N=" << s.axes.size() << "\n";
  }
  csv << "aggregate";
  for (double v : mean) csv << ',' << v;
  csv << '\n';
  fs::create_directories(o.out_dir);
  write_text(o.out_dir / "coverage.csv", csv.str());
  return csv.str();
}

std::vector<fs::path> write_fixtures(const fs::path& dir) {
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, TriangleMesh>> fixtures = {
      {"sphere.obj", shapes::icosphere(1.0, 5)},
      {"torus.obj", shapes::torus(1.0, 0.4, 48, 24)},
      {"plus-solid.obj", shapes::plus_solid()},
  };
  std::vector<fs::path> paths;
  for (const auto& [name, mesh] : fixtures) {
    save_obj(mesh, dir / name);
    paths.push_back(dir / name);
  }
  return paths;
}

}  // namespace cndhf
