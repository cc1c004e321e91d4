#include "plantrec/pipeline.h"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace plantrec;

namespace
{
std::string view_file(const char *prefix, std::size_t v)
{
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_%03zu.pgm", prefix, v);
  return buf;
}

void write_text(const fs::path &path, const std::string &text)
{
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw UsageError("cannot write " + path.string());
  out << text;
}

GridSpec grid_for_plant(const PlantModel &plant, int resolution, double padding)
{
  const auto [lo, hi] = plant.full_bounds();
  return grid_for_bounds(lo, hi, resolution, padding);
}

std::vector<std::uint64_t> parse_seeds(const std::vector<std::string> &items)
{
  std::vector<std::uint64_t> seeds;
  for (const auto &s : items)
    seeds.push_back(std::stoull(s));
  return seeds;
}

struct Shared
{
  std::string config;
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::string out = ".";
  int threads = 1;
};

void add_shared(CLI::App *cmd, Shared &shared)
{
  cmd->add_option("--config", shared.config, "JSON configuration file");
  cmd->add_option_function<std::uint64_t>(
    "--seed",
    [&shared](std::uint64_t s) {
      shared.seed = s;
      shared.seed_set = true;
    },
    "random seed");
  cmd->add_option("--out", shared.out, "output directory");
  cmd->add_option("--threads", shared.threads, "worker threads (0 = all cores)");
}

nlohmann::json config_or_empty(const Shared &shared)
{
  return shared.config.empty() ? nlohmann::json::object() : load_json_file(shared.config);
}
}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{ "Multi-view plant branch reconstruction" };
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Shared shared;

  // gen
  auto *gen = app.add_subcommand("gen", "generate a synthetic plant");
  add_shared(gen, shared);
  bool leafless = false;
  gen->add_flag("--leafless", leafless, "drop all leaves");

  // rig
  auto *rig = app.add_subcommand("rig", "build a camera rig");
  add_shared(rig, shared);
  std::string rig_kind;
  int rig_count = 0;
  std::string rig_plant;
  rig->add_option("--kind", rig_kind, "hemisphere | three_rings | semicircle | quarter_circle");
  rig->add_option("--count", rig_count, "camera count; also picks the standard rig shape unless --kind is given");
  rig->add_option("--plant", rig_plant, "plant file; centers the rig and fits its radius");

  // render
  auto *render = app.add_subcommand("render", "render branch, visible-branch and whole-plant masks");
  add_shared(render, shared);
  std::string render_plant, render_rig;
  render->add_option("--plant", render_plant)->required();
  render->add_option("--rig", render_rig)->required();

  // infer-sim
  auto *infer = app.add_subcommand("infer-sim", "simulate stochastic inference and write probability maps");
  add_shared(infer, shared);
  std::string infer_masks;
  int infer_views = 0;
  int infer_samples = 0;
  infer->add_option("--masks", infer_masks, "directory written by render")->required();
  infer->add_option("--views", infer_views, "number of views")->required();
  infer->add_option("--samples", infer_samples, "samples per view (overrides config)");

  // aggregate
  auto *agg = app.add_subcommand("aggregate", "back-project probability maps into a voxel grid");
  add_shared(agg, shared);
  std::string agg_rig, agg_maps, agg_plant, agg_oof = "floor";
  int agg_res = 128;
  double agg_pad = 0.1, agg_eps = 1e-4;
  agg->add_option("--rig", agg_rig)->required();
  agg->add_option("--maps", agg_maps, "directory of view_NNN.pgm")->required();
  agg->add_option("--plant", agg_plant, "plant file whose bounds define the grid")->required();
  agg->add_option("--resolution", agg_res);
  agg->add_option("--padding", agg_pad);
  agg->add_option("--eps", agg_eps, "probability floor");
  agg->add_option("--out-of-frame", agg_oof, "floor | skip")->check(CLI::IsMember({ "floor", "skip", "skip_view" }));

  // flow
  auto *flow = app.add_subcommand("flow", "trace particles through the voxel grid");
  add_shared(flow, shared);
  std::string flow_grid;
  std::optional<int> particles;
  std::optional<double> radius, lambda_r, step;
  flow->add_option("--grid", flow_grid, "grid.raw")->required();
  flow->add_option("--particles", particles);
  flow->add_option("--radius", radius);
  flow->add_option("--lambda-r", lambda_r);
  flow->add_option("--step", step);

  // refine
  auto *refine = app.add_subcommand("refine", "turn raw traces into the final skeleton");
  add_shared(refine, shared);
  std::string refine_grid, refine_raw;
  std::optional<int> iterations;
  refine->add_option("--grid", refine_grid)->required();
  refine->add_option("--raw", refine_raw, "raw_graph.json")->required();
  refine->add_option("--iterations", iterations);

  // eval
  auto *eval = app.add_subcommand("eval", "compare a skeleton with the ground truth");
  add_shared(eval, shared);
  std::string eval_skel, eval_truth, eval_id = "plant", eval_mode = "i2i_bayesian";
  int eval_cameras = 0;
  double eval_runtime = 0.0, eval_spacing = 0.005;
  eval->add_option("--skeleton", eval_skel)->required();
  eval->add_option("--truth", eval_truth, "plant or skeleton file")->required();
  eval->add_option("--plant-id", eval_id);
  eval->add_option("--camera-count", eval_cameras);
  eval->add_option("--mode", eval_mode);
  eval->add_option("--runtime", eval_runtime);
  eval->add_option("--spacing-fraction", eval_spacing);

  // pipeline
  auto *pipe = app.add_subcommand("pipeline", "run every stage end to end");
  add_shared(pipe, shared);
  std::string pipe_mode;
  int pipe_cameras = 0;
  pipe->add_option("--mode", pipe_mode, "visible_branch | whole_plant | i2i_single_sample | i2i_bayesian | external");
  pipe->add_option("--cameras", pipe_cameras, "camera count; also picks the standard rig shape");

  // ablation
  auto *abl = app.add_subcommand("ablation", "sweep camera counts x modes x seeds");
  add_shared(abl, shared);
  std::vector<int> abl_counts{ 72, 36, 12, 6 };
  std::vector<std::string> abl_modes{ "visible_branch", "whole_plant", "i2i_single_sample", "i2i_bayesian" };
  std::vector<std::string> abl_seeds{ "1", "2", "3", "4", "5" };
  bool keep_artifacts = false;
  abl->add_option("--counts", abl_counts, "camera counts, e.g. 72,36,12,6")->delimiter(',');
  abl->add_option("--modes", abl_modes, "map modes")->delimiter(',');
  abl->add_option("--seeds", abl_seeds, "one plant and sampling seed per entry")->delimiter(',');
  abl->add_flag("--keep-artifacts", keep_artifacts, "write every run's intermediates");

  CLI11_PARSE(app, argc, argv);
  const fs::path out = shared.out;

  try
  {
    if (*gen)
    {
      const auto doc = config_or_empty(shared);
      // same plant stream as the pipeline for this seed
      PlantModel plant = generate_plant(plant_config_from_json(doc), derive_seed(shared.seed, 1));
      if (leafless)
        plant.leaves.clear();
      save_plant(plant, out / "plant.json");
      save_skeleton(plant.skeleton(), out / "truth_skeleton.json");
      std::cout << "plant: " << plant.nodes.size() << " nodes, " << plant.leaves.size() << " leaves, "
                << joint_count(plant) << " joints\n";
    }
    else if (*rig)
    {
      RigLayout layout = rig_layout_from_json(config_or_empty(shared));
      if (rig_count > 0)
      {
        layout.camera_count = rig_count;
        layout.kind = standard_rig_kind(rig_count, layout.kind);
      }
      if (!rig_kind.empty())
        layout.kind = parse_rig_kind(rig_kind);
      if (!rig_plant.empty())
      {
        const auto [lo, hi] = load_plant(rig_plant).full_bounds();
        layout.look_at = 0.5 * (lo + hi);
        layout.radius = fitting_radius(0.5 * (hi - lo).norm(), layout.horizontal_fov_deg);
      }
      const auto cameras = make_rig(layout);
      save_rig(cameras, out / "rig.json");
      std::cout << "rig: " << cameras.size() << " cameras (" << to_string(layout.kind) << ")\n";
    }
    else if (*render)
    {
      const PlantModel plant = load_plant(render_plant);
      const auto cameras = load_rig(render_rig);
      std::vector<RenderedMasks> masks(cameras.size());
      parallel_for(cameras.size(), shared.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t v = b; v < e; ++v)
          masks[v] = render_masks(plant, cameras[v]);
      });
      for (std::size_t v = 0; v < masks.size(); ++v)
      {
        save_mask(masks[v].full_branch, out / view_file("full", v));
        save_mask(masks[v].visible_branch, out / view_file("visible", v));
        save_mask(masks[v].whole_plant, out / view_file("whole", v));
      }
      std::cout << "render: " << masks.size() << " views\n";
    }
    else if (*infer)
    {
      InferenceSimConfig cfg = inference_config_from_json(config_or_empty(shared));
      if (infer_samples > 0)
        cfg.n_samples = infer_samples;
      cfg.validate();
      const fs::path dir = infer_masks;
      std::vector<ProbMap2D> maps(static_cast<std::size_t>(infer_views));
      parallel_for(maps.size(), shared.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t v = b; v < e; ++v)
        {
          const BinaryMask full = load_mask(dir / view_file("full", v));
          const BinaryMask visible = load_mask(dir / view_file("visible", v));
          maps[v] = simulate_prob_map(full, visible, cfg, derive_seed(shared.seed, 2, v));
        }
      });
      for (std::size_t v = 0; v < maps.size(); ++v)
        save_prob_map(maps[v], out / view_file("view", v));
      std::cout << "infer-sim: " << maps.size() << " maps, " << cfg.n_samples << " samples each\n";
    }
    else if (*agg)
    {
      const auto cameras = load_rig(agg_rig);
      std::vector<ProbMap2D> maps;
      for (std::size_t v = 0; v < cameras.size(); ++v)
      {
        const fs::path p = fs::path(agg_maps) / view_file("view", v);
        if (!fs::exists(p))
          throw ConfigError("probability map not found: " + p.string());
        maps.push_back(load_prob_map(p));
      }
      AggregateConfig cfg;
      if (!shared.config.empty())
        cfg = aggregate_config_from_json(load_json_file(shared.config));
      cfg.grid = grid_for_plant(load_plant(agg_plant), agg_res, agg_pad);
      cfg.eps_floor = agg_eps;
      cfg.out_of_frame = parse_out_of_frame_policy(agg_oof);
      cfg.threads = shared.threads;
      const VoxelGrid grid = aggregate(maps, cameras, cfg);
      save_grid(grid, out / "grid.raw");
      std::cout << "aggregate: " << grid.spec.dims[0] << "^3 voxels from " << cameras.size() << " views\n";
    }
    else if (*flow)
    {
      const VoxelGrid grid = load_grid(flow_grid);
      FlowConfig cfg = flow_config_from_json(config_or_empty(shared), FlowConfig::defaults_for(grid.spec));
      if (particles)
        cfg.particle_count = *particles;
      if (radius)
        cfg.radius = *radius;
      if (lambda_r)
        cfg.lambda_r = *lambda_r;
      if (step)
        cfg.step_length = *step;
      cfg.threads = shared.threads;
      const auto raw = simulate(grid, cfg, derive_seed(shared.seed, 3));
      save_skeleton(raw, out / "raw_graph.json");
      std::cout << "flow: " << raw.size() << " vertices\n";
    }
    else if (*refine)
    {
      const VoxelGrid grid = load_grid(refine_grid);
      RefineConfig cfg = refine_config_from_json(config_or_empty(shared), RefineConfig::defaults_for(grid.spec));
      if (iterations)
        cfg.iterations = *iterations;
      const auto skeleton = refine_loop(load_skeleton(refine_raw), grid, cfg);
      save_skeleton(skeleton, out / "skeleton.json");
      save_skeleton_ply(skeleton, out / "skeleton.ply");
      std::cout << "refine: " << skeleton.size() << " vertices, " << joint_count(skeleton) << " joints\n";
    }
    else if (*eval)
    {
      const SkeletonGraph generated = load_skeleton(eval_skel);
      const auto truth_doc = load_json_file(eval_truth);
      const SkeletonGraph truth = truth_doc.contains("leaves") ? plant_from_json(truth_doc).skeleton()
                                                               : skeleton_from_json_string(truth_doc.dump());
      const Evaluation ev = evaluate(generated, truth, eval_spacing);
      const std::string row = eval_csv_row(eval_id, eval_cameras, parse_map_mode(eval_mode), ev, eval_runtime);
      std::cout << eval_csv_header() << '\n' << row << '\n';
      if (shared.out != ".")
        write_text(out / "eval.csv", eval_csv_header() + "\n" + row + "\n");
    }
    else if (*pipe)
    {
      PipelineConfig cfg = shared.config.empty() ? PipelineConfig{} : load_pipeline_config(shared.config);
      if (shared.seed_set)
        cfg.seed = shared.seed;
      if (!pipe_mode.empty())
        cfg.mode = parse_map_mode(pipe_mode);
      if (pipe_cameras > 0)
      {
        cfg.rig.camera_count = pipe_cameras;
        cfg.rig.kind = standard_rig_kind(pipe_cameras, cfg.rig.kind);
        cfg.rig.elevations_deg.clear();
      }
      cfg.threads = shared.threads;
      cfg.output_dir = out;
      const RunReport report = run_pipeline(cfg);
      std::cout << eval_csv_header() << '\n'
                << eval_csv_row(report.plant_id, report.camera_count, report.mode, report.metrics,
                                report.runtime_seconds)
                << '\n';
    }
    else if (*abl)
    {
      PipelineConfig base = shared.config.empty() ? PipelineConfig{} : load_pipeline_config(shared.config);
      base.threads = shared.threads;
      base.output_dir = out;
      std::vector<MapMode> modes;
      for (const auto &m : abl_modes)
        modes.push_back(parse_map_mode(m));
      const auto result = run_ablation(base, abl_counts, modes, parse_seeds(abl_seeds), keep_artifacts);
      const std::string csv = result.to_csv();
      write_text(out / "ablation.csv", csv);
      std::cout << csv;
    }
  }
  catch (const ConfigError &e)
  {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  }
  catch (const UsageError &e)
  {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }
  catch (const FormatError &e)
  {
    std::cerr << "format error: " << e.what() << '\n';
    return 3;
  }
  catch (const std::exception &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
