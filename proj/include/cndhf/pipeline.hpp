#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cndhf/axis_select.hpp"
#include "cndhf/metrics.hpp"
#include "cndhf/train.hpp"

namespace cndhf {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

/// Stage seed: first 8 bytes of SHA-256("<stage>:<seed>"), little-endian.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Largest width preset whose parameter count does not exceed budget / axes.
/// Throws when even the smallest preset is too large.
int width_for_budget(std::size_t budget, std::size_t axes);

struct PipelineOptions {
  std::filesystem::path out_dir = "cndhf_out";
  std::uint64_t seed = 0;
  /// Stage-specific grid size; unset picks the stage default.
  std::optional<int> resolution;
  double coverage_target = 0.999;
  int n_fibonacci = 50;
  EffectiveAreaMode effective_area = EffectiveAreaMode::kAsPrinted;
  std::size_t params = 10000;
  int iterations = 20000;
  double lambda_lap = 10.0;
  OutsideMode outside = OutsideMode::kHinge;
  std::vector<int> milestones = {10000, 100000, 1000000};
  std::size_t samples = 100000;
  bool quiet = false;
};

inline constexpr int kDefaultBakeResolution = 512;
inline constexpr int kDefaultTrainResolution = 256;
inline constexpr int kDefaultGridResolution = 256;
inline constexpr int kDefaultIouResolution = 128;

/// Each command reads and rewrites <out_dir>/manifest.json. Rerunning a stage
/// drops the records of every later stage.
AxisSelection cmd_decompose(const std::filesystem::path& mesh, const PipelineOptions& options, std::ostream& log);
void cmd_bake(const PipelineOptions& options, std::ostream& log);
void cmd_train(const PipelineOptions& options, std::ostream& log);
void cmd_reconstruct(const PipelineOptions& options, std::ostream& log);

struct EvalSource {
  /// Evaluate the baked rasters instead of the trained networks.
  bool ground_truth = false;
  /// Evaluate this mesh instead of any model (no manifest needed).
  std::optional<std::filesystem::path> candidate_mesh;
  /// Reference mesh; defaults to the manifest's input shape.
  std::optional<std::filesystem::path> reference_mesh;
};
MetricReport cmd_eval(const EvalSource& source, const PipelineOptions& options, std::ostream& log);

/// Coverage table for every .obj/.stl directly inside `corpus`, written to
/// <out_dir>/coverage.csv and returned as text.
std::string cmd_stats(const std::filesystem::path& corpus, const PipelineOptions& options, std::ostream& log);

/// Writes the built-in test shapes (sphere, torus, plus-solid) as OBJ.
std::vector<std::filesystem::path> write_fixtures(const std::filesystem::path& dir);

}  // namespace cndhf
