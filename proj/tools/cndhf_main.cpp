// Command-line driver for the CN-DHF pipeline.
#include <CLI11.hpp>
#include <iostream>

#include "cndhf/error.hpp"
#include "cndhf/pipeline.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Neural double-height-field shape encoding: decompose, bake, train, reconstruct, evaluate"};
  app.require_subcommand(1);
  app.fallthrough();

  cndhf::PipelineOptions opt;
  int resolution = 0;
  std::string outside = "hinge";
  std::string effective = "as_printed";

  app.add_option("--seed", opt.seed, "Root seed; each stage derives its own")->capture_default_str();
  app.add_option("--resolution", resolution,
                 "Grid size of the stage: bake raster (512), training raster (256), "
                 "marching-cubes grid (256), IoU grid (128)");
  app.add_option("--coverage-target", opt.coverage_target, "Share of visible effective area to cover")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--params", opt.params, "Total parameter budget P, split evenly over the N axes")
      ->capture_default_str();
  app.add_option("--iterations", opt.iterations, "Training iterations per axis")->capture_default_str();
  app.add_option("--out-dir", opt.out_dir, "Directory holding the manifest and artifacts")->capture_default_str();
  app.add_option("--lambda", opt.lambda_lap, "Weight of the Laplacian loss")->capture_default_str();
  app.add_option("--outside", outside, "Loss on pixels that miss the shape")
      ->check(CLI::IsMember({"hinge", "regress"}))
      ->capture_default_str();
  app.add_option("--effective-area", effective, "Visibility reweighting of triangle areas")
      ->check(CLI::IsMember({"as_printed", "inverse"}))
      ->capture_default_str();
  app.add_option("--candidates", opt.n_fibonacci, "Spherical Fibonacci candidate count")->capture_default_str();
  app.add_option("--milestones", opt.milestones, "Iterations at which to keep checkpoints");
  app.add_option("--samples", opt.samples, "Ray-stabbed surface samples per side for eval")->capture_default_str();

  auto* decompose = app.add_subcommand("decompose", "Select DHF axes for a mesh and start a manifest");
  fs::path mesh;
  decompose->add_option("mesh", mesh, "Input .obj or .stl")->required()->check(CLI::ExistingFile);

  auto* bake = app.add_subcommand("bake", "Bake ground-truth rasters and height-field meshes per axis");
  auto* train = app.add_subcommand("train", "Train one network per axis");
  auto* reconstruct = app.add_subcommand("reconstruct", "Export predicted height fields and extract the surface");

  auto* eval = app.add_subcommand("eval", "Chamfer-L1, IoU and Hausdorff against the reference mesh");
  cndhf::EvalSource source;
  eval->add_flag("--gt", source.ground_truth, "Evaluate the baked rasters instead of the networks");
  eval->add_option("--candidate", source.candidate_mesh, "Evaluate this mesh instead of a model");
  eval->add_option("--reference", source.reference_mesh, "Reference mesh (default: the manifest's shape)");

  auto* stats = app.add_subcommand("stats", "Coverage against DHF count for every mesh in a directory");
  fs::path corpus;
  stats->add_option("corpus", corpus, "Directory of .obj/.stl files")->required();

  auto* fixture = app.add_subcommand("fixture", "Write the sphere, torus and plus-solid test meshes");
  fs::path fixture_dir;
  fixture->add_option("dir", fixture_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (resolution > 0) opt.resolution = resolution;
  opt.outside = outside == "hinge" ? cndhf::OutsideMode::kHinge : cndhf::OutsideMode::kRegressConstants;
  opt.effective_area =
      effective == "as_printed" ? cndhf::EffectiveAreaMode::kAsPrinted : cndhf::EffectiveAreaMode::kInverse;

  try {
    if (*decompose) {
      cndhf::cmd_decompose(mesh, opt, std::cout);
    } else if (*bake) {
      cndhf::cmd_bake(opt, std::cout);
    } else if (*train) {
      cndhf::cmd_train(opt, std::cout);
    } else if (*reconstruct) {
      cndhf::cmd_reconstruct(opt, std::cout);
    } else if (*eval) {
      cndhf::cmd_eval(source, opt, std::cout);
    } else if (*stats) {
      std::cout << cndhf::cmd_stats(corpus, opt, std::cerr);
    } else if (*fixture) {
      for (const auto& p : cndhf::write_fixtures(fixture_dir)) std::cout << p.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
