#include "plantrec/pipeline.h"
#include "support.h"

#include <doctest.h>

#include <fstream>

using namespace plantrec;

namespace
{
PipelineConfig small_config()
{
  PipelineConfig cfg;
  cfg.seed = 4;
  cfg.leafless = true;
  cfg.mode = MapMode::visible_branch;
  cfg.rig.kind = RigKind::semicircle;
  cfg.rig.camera_count = 12;
  cfg.rig.width = cfg.rig.height = 128;
  cfg.grid_resolution = 48;
  cfg.flow = { { "particle_count", 1500 } };
  return cfg;
}
}  // namespace

TEST_CASE("map modes and rig kinds")
{
  for (auto m : { MapMode::visible_branch, MapMode::whole_plant, MapMode::i2i_single_sample, MapMode::i2i_bayesian,
                  MapMode::external })
    CHECK(parse_map_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_map_mode("bogus"), ConfigError);
  CHECK(standard_rig_kind(72, RigKind::semicircle) == RigKind::hemisphere);
  CHECK(standard_rig_kind(36, RigKind::hemisphere) == RigKind::three_rings);
  CHECK(standard_rig_kind(12, RigKind::hemisphere) == RigKind::semicircle);
  CHECK(standard_rig_kind(6, RigKind::hemisphere) == RigKind::quarter_circle);
  CHECK(standard_rig_kind(20, RigKind::three_rings) == RigKind::three_rings);
}

TEST_CASE("pipeline config documents")
{
  auto cfg = small_config();
  cfg.plant_seed = 99;
  cfg.eps_floor = 1e-3;
  const auto back = pipeline_config_from_json(pipeline_config_to_json(cfg));
  CHECK(back.seed == 4);
  CHECK(back.plant_seed == std::optional<std::uint64_t>(99));
  CHECK(back.mode == MapMode::visible_branch);
  CHECK(back.rig.camera_count == 12);
  CHECK(back.grid_resolution == 48);
  CHECK(back.eps_floor == 1e-3);
  CHECK(back.flow.at("particle_count") == 1500);

  CHECK_THROWS_AS(pipeline_config_from_json({ { "mode", "nope" } }), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json({ { "grid", { { "resolution", 0 } } } }), ConfigError);

  testsupport::TempDir dir("cfg");
  CHECK_THROWS_AS(load_pipeline_config(dir.path() / "missing.json"), ConfigError);
  std::ofstream(dir.path() / "bad.json") << "{ \"seed\": ";
  CHECK_THROWS_AS(load_pipeline_config(dir.path() / "bad.json"), FormatError);
}

TEST_CASE("external mode needs one readable map per camera")
{
  auto cfg = small_config();
  cfg.mode = MapMode::external;
  cfg.external_maps = { "a.pgm" };
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  testsupport::TempDir dir("ext");
  cfg.external_maps.clear();
  for (int i = 0; i < cfg.rig.camera_count; ++i)
    cfg.external_maps.push_back(dir.path() / ("missing_" + std::to_string(i) + ".pgm"));
  try
  {
    run_pipeline(cfg);
    FAIL("expected ConfigError");
  }
  catch (const ConfigError &e)
  {
    CHECK(std::string(e.what()).find("missing_0.pgm") != std::string::npos);
  }
}

TEST_CASE("pipeline runs end to end and writes its artifacts")
{
  testsupport::TempDir dir("run");
  auto cfg = small_config();
  cfg.output_dir = dir.path();
  const auto report = run_pipeline(cfg);
  CHECK(testsupport::oracle_is_tree(report.skeleton));
  CHECK(testsupport::oracle_is_tree(report.truth));
  CHECK(report.camera_count == 12);
  CHECK(report.metrics.geometric_error_normalized < 0.1);
  CHECK(report.timings.size() >= 5);
  for (const char *name : { "plant.json", "truth_skeleton.json", "rig.json", "grid.raw", "grid.json", "raw_graph.json",
                            "skeleton.json", "skeleton.ply", "eval.csv", "report.json", "maps/view_000.pgm",
                            "maps/view_011.pgm" })
    CHECK_MESSAGE(std::filesystem::exists(dir.path() / name), name);

  // Feeding the saved maps back reproduces the same skeleton.
  auto ext = small_config();
  ext.mode = MapMode::external;
  for (int i = 0; i < 12; ++i)
  {
    char name[32];
    std::snprintf(name, sizeof name, "maps/view_%03d.pgm", i);
    ext.external_maps.push_back(dir.path() / name);
  }
  CHECK(run_pipeline(ext).skeleton == report.skeleton);
}

TEST_CASE("pipeline is deterministic across runs and thread counts")
{
  auto cfg = small_config();
  cfg.mode = MapMode::i2i_bayesian;
  cfg.inference.n_samples = 10;
  const auto a = run_pipeline(cfg);
  CHECK(run_pipeline(cfg).skeleton == a.skeleton);
  cfg.threads = 3;
  const auto b = run_pipeline(cfg);
  CHECK(b.skeleton == a.skeleton);
  CHECK(b.metrics.geometric_error == a.metrics.geometric_error);
}

TEST_CASE("ablation")
{
  auto cfg = small_config();
  CHECK_THROWS_AS(run_ablation(cfg, { 12 }, { MapMode::visible_branch }, {}), UsageError);
  CHECK_THROWS_AS(run_ablation(cfg, {}, { MapMode::visible_branch }, { 1 }), UsageError);

  const auto result = run_ablation(cfg, { 12 }, { MapMode::visible_branch }, { 3 });
  REQUIRE(result.cells.size() == 1);
  CHECK(result.cells[0].ok);
  CHECK(result.cells[0].report.plant_id == "plant_3");
  const auto csv = result.to_csv();
  CHECK(csv.rfind(eval_csv_header(), 0) == 0);
  CHECK(csv.find("plant_3") != std::string::npos);
  CHECK(csv.find("visible_branch") != std::string::npos);
}
