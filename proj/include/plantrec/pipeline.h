#pragma once

#include "plantrec/aggregate.h"
#include "plantrec/cameras.h"
#include "plantrec/metrics.h"
#include "plantrec/particleflow.h"
#include "plantrec/plantgen.h"
#include "plantrec/probmap.h"
#include "plantrec/refine.h"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace plantrec
{
inline constexpr const char *kVersion = "0.1.0";

enum class MapMode
{
  visible_branch,
  whole_plant,
  i2i_single_sample,
  i2i_bayesian,
  external,
};

MapMode parse_map_mode(const std::string &name);
std::string to_string(MapMode mode);

/// Rig shape used for a camera count in the ablation: 72 hemisphere, 36 three rings,
/// 12 semicircle, 6 quarter circle. Other counts keep `fallback`.
RigKind standard_rig_kind(int camera_count, RigKind fallback);

struct PipelineConfig
{
  // plant source: a file when plant_path is set, otherwise the generator
  std::filesystem::path plant_path;
  PlantGenConfig plant;
  std::optional<std::uint64_t> plant_seed;  ///< defaults to a value derived from seed
  bool leafless = false;

  RigLayout rig;
  bool fit_rig_radius = true;  ///< overrides rig.radius and rig.look_at from the plant bounds

  MapMode mode = MapMode::i2i_bayesian;
  std::vector<std::filesystem::path> external_maps;  ///< one per camera, mode external only
  InferenceSimConfig inference;

  int grid_resolution = 128;
  double grid_padding = 0.1;
  double eps_floor = 1e-4;
  OutOfFramePolicy out_of_frame = OutOfFramePolicy::floor;

  nlohmann::json flow = nlohmann::json::object();    ///< overrides on FlowConfig::defaults_for(grid)
  nlohmann::json refine = nlohmann::json::object();  ///< overrides on RefineConfig::defaults_for(grid)

  double eval_spacing_fraction = 0.005;
  int threads = 1;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir;  ///< empty: nothing is written
  std::string plant_id;              ///< label for reports; derived when empty

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::json pipeline_config_to_json(const PipelineConfig &cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json &doc);
PipelineConfig load_pipeline_config(const std::filesystem::path &path);

/// Parses a JSON file. Throws ConfigError when missing, FormatError when malformed
nlohmann::json load_json_file(const std::filesystem::path &path);

struct RunReport
{
  std::string version = kVersion;
  std::uint64_t seed = 0;
  std::string plant_id;
  int camera_count = 0;
  MapMode mode = MapMode::i2i_bayesian;
  std::vector<std::pair<std::string, double>> timings;  ///< seconds per stage, in stage order
  double runtime_seconds = 0.0;
  Evaluation metrics;
  std::size_t raw_vertices = 0;
  nlohmann::json config;

  SkeletonGraph truth;
  SkeletonGraph skeleton;
};

nlohmann::json report_to_json(const RunReport &report);

/// generate/load -> render -> maps -> aggregate -> flow -> refine -> eval. Errors carry
/// the stage name. Artifacts go to cfg.output_dir when it is set.
RunReport run_pipeline(const PipelineConfig &cfg);

/// plant_id, camera_count, mode, geometric_error_normalized, structure_error, runtime_seconds
std::string eval_csv_header();
std::string eval_csv_row(const std::string &plant_id, int camera_count, MapMode mode, const Evaluation &ev,
                         double runtime_seconds);

struct AblationCell
{
  int camera_count = 0;
  MapMode mode = MapMode::i2i_bayesian;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunReport report;
};

struct AblationResult
{
  std::vector<int> camera_counts;
  std::vector<MapMode> modes;
  std::vector<AblationCell> cells;  ///< count-major, then mode, then seed

  /// One row per run followed by a blank line and the per-cell means
  /// (rows = modes, columns = camera counts) for both metrics.
  std::string to_csv() const;
};

/// One run per (count, mode, seed). Each seed selects the plant and the sampling seed.
/// A failing run is recorded in its cell and the sweep continues. When keep_artifacts is
/// false no per-run files are written.
/// Throws UsageError when any list is empty
AblationResult run_ablation(const PipelineConfig &base, const std::vector<int> &camera_counts,
                            const std::vector<MapMode> &modes, const std::vector<std::uint64_t> &seeds,
                            bool keep_artifacts = false);
}  // namespace plantrec
