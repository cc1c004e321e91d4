#include "plantrec/pipeline.h"

#include "io_util.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace plantrec
{
namespace
{
template <class Fn>
auto run_stage(const std::string &name, Fn &&fn)
{
  const std::string prefix = name + ": ";
  try
  {
    return fn();
  }
  catch (const FormatError &e)
  {
    throw e.prefixed(prefix);
  }
  catch (const ConfigError &e)
  {
    throw ConfigError(prefix + e.what());
  }
  catch (const UsageError &e)
  {
    throw UsageError(prefix + e.what());
  }
  catch (const StructuralError &e)
  {
    throw StructuralError(prefix + e.what());
  }
  catch (const EmptyVolumeError &e)
  {
    throw EmptyVolumeError(prefix + e.what());
  }
  catch (const ReconstructionError &e)
  {
    throw ReconstructionError(prefix + e.what());
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ConfigError(prefix + e.what());
  }
}

class Stopwatch
{
public:
  double lap()
  {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::string format_double(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string view_name(std::size_t v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%03zu.pgm", v);
  return buf;
}

}  // namespace

MapMode parse_map_mode(const std::string &name)
{
  if (name == "visible_branch")
    return MapMode::visible_branch;
  if (name == "whole_plant")
    return MapMode::whole_plant;
  if (name == "i2i_single_sample")
    return MapMode::i2i_single_sample;
  if (name == "i2i_bayesian")
    return MapMode::i2i_bayesian;
  if (name == "external")
    return MapMode::external;
  throw ConfigError("mode: unknown map mode '" + name + "'");
}

std::string to_string(MapMode mode)
{
  switch (mode)
  {
    case MapMode::visible_branch: return "visible_branch";
    case MapMode::whole_plant: return "whole_plant";
    case MapMode::i2i_single_sample: return "i2i_single_sample";
    case MapMode::i2i_bayesian: return "i2i_bayesian";
    case MapMode::external: return "external";
  }
  return "unknown";
}

RigKind standard_rig_kind(int camera_count, RigKind fallback)
{
  switch (camera_count)
  {
    case 72: return RigKind::hemisphere;
    case 36: return RigKind::three_rings;
    case 12: return RigKind::semicircle;
    case 6: return RigKind::quarter_circle;
    default: return fallback;
  }
}

void PipelineConfig::validate() const
{
  if (plant_path.empty())
    plant.validate();
  rig.validate();
  inference.validate();
  if (mode == MapMode::external)
  {
    if (external_maps.empty())
      throw ConfigError("external_maps: mode external needs one probability map per camera");
    if (static_cast<int>(external_maps.size()) != rig.camera_count)
      throw ConfigError("external_maps: " + std::to_string(external_maps.size()) + " maps for " +
                        std::to_string(rig.camera_count) + " cameras");
  }
  if (grid_resolution < 2)
    throw ConfigError("grid.resolution must be >= 2");
  if (!(grid_padding >= 0.0))
    throw ConfigError("grid.padding must be >= 0");
  if (!(eps_floor > 0.0 && eps_floor < 1.0))
    throw ConfigError("aggregate.eps_floor must lie in (0, 1)");
  if (!(eval_spacing_fraction > 0.0))
    throw ConfigError("eval.spacing_fraction must be > 0");
  if (!flow.is_object())
    throw ConfigError("flow must be an object");
  if (!refine.is_object())
    throw ConfigError("refine must be an object");
}

nlohmann::json pipeline_config_to_json(const PipelineConfig &c)
{
  nlohmann::json doc;
  if (!c.plant_path.empty())
    doc["plant_path"] = c.plant_path.string();
  else
    doc["plant"] = plant_config_to_json(c.plant);
  if (c.plant_seed)
    doc["plant_seed"] = *c.plant_seed;
  doc["leafless"] = c.leafless;
  doc["rig"] = rig_layout_to_json(c.rig);
  doc["fit_rig_radius"] = c.fit_rig_radius;
  doc["mode"] = to_string(c.mode);
  if (!c.external_maps.empty())
  {
    doc["external_maps"] = nlohmann::json::array();
    for (const auto &p : c.external_maps)
      doc["external_maps"].push_back(p.string());
  }
  doc["inference"] = inference_config_to_json(c.inference);
  doc["grid"] = { { "resolution", c.grid_resolution }, { "padding", c.grid_padding } };
  doc["aggregate"] = { { "eps_floor", c.eps_floor }, { "out_of_frame", to_string(c.out_of_frame) } };
  doc["flow"] = c.flow;
  doc["refine"] = c.refine;
  doc["eval"] = { { "spacing_fraction", c.eval_spacing_fraction } };
  doc["threads"] = c.threads;
  doc["seed"] = c.seed;
  doc["output_dir"] = c.output_dir.string();
  if (!c.plant_id.empty())
    doc["plant_id"] = c.plant_id;
  return doc;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json &doc)
{
  if (!doc.is_object())
    throw ConfigError("pipeline config must be an object");
  PipelineConfig c;
  try
  {
    if (doc.contains("plant") && doc.contains("plant_path"))
      throw ConfigError("plant and plant_path are mutually exclusive");
    if (doc.contains("plant_path"))
      c.plant_path = doc.at("plant_path").get<std::string>();
    if (doc.contains("plant"))
      c.plant = plant_config_from_json(doc.at("plant"));
    if (doc.contains("plant_seed"))
      c.plant_seed = doc.at("plant_seed").get<std::uint64_t>();
    c.leafless = doc.value("leafless", c.leafless);
    if (doc.contains("rig"))
      c.rig = rig_layout_from_json(doc.at("rig"));
    c.fit_rig_radius = doc.value("fit_rig_radius", c.fit_rig_radius);
    if (doc.contains("mode"))
      c.mode = parse_map_mode(doc.at("mode").get<std::string>());
    if (doc.contains("external_maps"))
      for (const auto &p : doc.at("external_maps"))
        c.external_maps.emplace_back(p.get<std::string>());
    if (doc.contains("inference"))
      c.inference = inference_config_from_json(doc.at("inference"));
    if (doc.contains("grid"))
    {
      c.grid_resolution = doc.at("grid").value("resolution", c.grid_resolution);
      c.grid_padding = doc.at("grid").value("padding", c.grid_padding);
    }
    if (doc.contains("aggregate"))
    {
      const auto &a = doc.at("aggregate");
      c.eps_floor = a.value("eps_floor", c.eps_floor);
      if (a.contains("out_of_frame"))
        c.out_of_frame = parse_out_of_frame_policy(a.at("out_of_frame").get<std::string>());
    }
    if (doc.contains("flow"))
      c.flow = doc.at("flow");
    if (doc.contains("refine"))
      c.refine = doc.at("refine");
    if (doc.contains("eval"))
      c.eval_spacing_fraction = doc.at("eval").value("spacing_fraction", c.eval_spacing_fraction);
    c.threads = doc.value("threads", c.threads);
    c.seed = doc.value("seed", c.seed);
    c.output_dir = doc.value("output_dir", std::string{});
    c.plant_id = doc.value("plant_id", std::string{});
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json load_json_file(const std::filesystem::path &path)
{
  if (!std::filesystem::exists(path))
    throw ConfigError("file not found: " + path.string());
  return detail::parse_json(detail::read_file(path), path.string());
}

PipelineConfig load_pipeline_config(const std::filesystem::path &path)
{
  return pipeline_config_from_json(load_json_file(path));
}

nlohmann::json report_to_json(const RunReport &r)
{
  nlohmann::json timings = nlohmann::json::object();
  for (const auto &[stage, s] : r.timings)
    timings[stage] = s;
  return { { "version", r.version },
           { "seed", r.seed },
           { "plant_id", r.plant_id },
           { "camera_count", r.camera_count },
           { "mode", to_string(r.mode) },
           { "timings", timings },
           { "runtime_seconds", r.runtime_seconds },
           { "metrics",
             { { "geometric_error", r.metrics.geometric_error },
               { "geometric_error_normalized", r.metrics.geometric_error_normalized },
               { "structure_error", r.metrics.structure_error },
               { "joints_generated", r.metrics.joints_generated },
               { "joints_truth", r.metrics.joints_truth },
               { "diagonal", r.metrics.diagonal },
               { "sample_spacing", r.metrics.spacing } } },
           { "raw_vertices", r.raw_vertices },
           { "skeleton_vertices", r.skeleton.size() },
           { "config", r.config } };
}

RunReport run_pipeline(const PipelineConfig &cfg)
{
  run_stage("config", [&] {
    cfg.validate();
    return 0;
  });
  const bool write = !cfg.output_dir.empty();
  const auto &out = cfg.output_dir;
  if (write)
    std::filesystem::create_directories(out);

  RunReport report;
  report.seed = cfg.seed;
  report.mode = cfg.mode;
  report.config = pipeline_config_to_json(cfg);
  Stopwatch total;
  Stopwatch clock;

  const std::uint64_t plant_seed = cfg.plant_seed.value_or(derive_seed(cfg.seed, 1));
  PlantModel plant = run_stage("plant", [&] {
    PlantModel p = cfg.plant_path.empty() ? generate_plant(cfg.plant, plant_seed) : load_plant(cfg.plant_path);
    if (cfg.leafless)
      p.leaves.clear();
    if (write)
      save_plant(p, out / "plant.json");
    return p;
  });
  report.plant_id = !cfg.plant_id.empty()        ? cfg.plant_id
                    : !cfg.plant_path.empty() ? cfg.plant_path.stem().string()
                                              : "plant_" + std::to_string(plant_seed);
  report.truth = plant.skeleton();
  if (write)
    save_skeleton(report.truth, out / "truth_skeleton.json");
  report.timings.emplace_back("plant", clock.lap());

  const auto [lo, hi] = plant.full_bounds();
  const std::vector<Camera> cameras = run_stage("rig", [&] {
    RigLayout layout = cfg.rig;
    if (cfg.fit_rig_radius)
    {
      layout.look_at = 0.5 * (lo + hi);
      layout.radius = fitting_radius(0.5 * (hi - lo).norm(), layout.horizontal_fov_deg);
    }
    auto rig = make_rig(layout);
    if (write)
      save_rig(rig, out / "rig.json");
    return rig;
  });
  report.camera_count = static_cast<int>(cameras.size());
  report.timings.emplace_back("rig", clock.lap());

  const std::vector<ProbMap2D> maps = run_stage("maps", [&] {
    std::vector<ProbMap2D> result(cameras.size());
    if (cfg.mode == MapMode::external)
    {
      for (std::size_t v = 0; v < cameras.size(); ++v)
      {
        const auto &path = cfg.external_maps[v];
        if (!std::filesystem::exists(path))
          throw ConfigError("external map not found: " + path.string());
        result[v] = load_prob_map(path);
      }
      return result;
    }
    InferenceSimConfig inference = cfg.inference;
    if (cfg.mode == MapMode::i2i_single_sample)
      inference.n_samples = 1;
    parallel_for(cameras.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t v = begin; v < end; ++v)
      {
        const RenderedMasks masks = render_masks(plant, cameras[v]);
        ProbMap2D map;
        switch (cfg.mode)
        {
          case MapMode::visible_branch: map = mask_to_prob_map(masks.visible_branch); break;
          case MapMode::whole_plant: map = mask_to_prob_map(masks.whole_plant); break;
          default:
            map = simulate_prob_map(masks.full_branch, masks.visible_branch, inference, derive_seed(cfg.seed, 2, v));
        }
        result[v] = quantize_prob_map(map);
      }
    });
    if (write)
      for (std::size_t v = 0; v < result.size(); ++v)
        save_prob_map(result[v], out / "maps" / view_name(v));
    return result;
  });
  report.timings.emplace_back("maps", clock.lap());

  const VoxelGrid grid = run_stage("aggregate", [&] {
    AggregateConfig acfg;
    acfg.grid = grid_for_bounds(lo, hi, cfg.grid_resolution, cfg.grid_padding);
    acfg.eps_floor = cfg.eps_floor;
    acfg.out_of_frame = cfg.out_of_frame;
    acfg.threads = cfg.threads;
    VoxelGrid g = quantize_grid(aggregate(maps, cameras, acfg));
    if (write)
      save_grid(g, out / "grid.raw");
    return g;
  });
  report.timings.emplace_back("aggregate", clock.lap());

  const RawTraceGraph raw = run_stage("flow", [&] {
    FlowConfig fcfg = flow_config_from_json(cfg.flow, FlowConfig::defaults_for(grid.spec));
    fcfg.threads = cfg.threads;
    auto r = simulate(grid, fcfg, derive_seed(cfg.seed, 3));
    if (write)
      save_skeleton(r, out / "raw_graph.json");
    return r;
  });
  report.raw_vertices = raw.size();
  report.timings.emplace_back("flow", clock.lap());

  report.skeleton = run_stage("refine", [&] {
    const RefineConfig rcfg = refine_config_from_json(cfg.refine, RefineConfig::defaults_for(grid.spec));
    auto s = refine_loop(raw, grid, rcfg);
    if (write)
    {
      save_skeleton(s, out / "skeleton.json");
      save_skeleton_ply(s, out / "skeleton.ply");
    }
    return s;
  });
  report.timings.emplace_back("refine", clock.lap());

  report.metrics = run_stage("eval", [&] { return evaluate(report.skeleton, report.truth, cfg.eval_spacing_fraction); });
  report.timings.emplace_back("eval", clock.lap());
  report.runtime_seconds = total.lap();

  if (write)
  {
    detail::write_file(out / "eval.csv", eval_csv_header() + "\n" +
                                           eval_csv_row(report.plant_id, report.camera_count, report.mode,
                                                        report.metrics, report.runtime_seconds) +
                                           "\n");
    detail::write_file(out / "report.json", report_to_json(report).dump(2) + "\n");
  }
  return report;
}

std::string eval_csv_header()
{
  return "plant_id,camera_count,mode,geometric_error_normalized,structure_error,runtime_seconds";
}

std::string eval_csv_row(const std::string &plant_id, int camera_count, MapMode mode, const Evaluation &ev,
                         double runtime_seconds)
{
  std::ostringstream ss;
  ss << plant_id << ',' << camera_count << ',' << to_string(mode) << ',' << format_double(ev.geometric_error_normalized)
     << ',' << ev.structure_error << ',' << format_double(runtime_seconds);
  return ss.str();
}

std::string AblationResult::to_csv() const
{
  std::ostringstream ss;
  ss << eval_csv_header() << ",seed,status\n";
  for (const auto &c : cells)
  {
    if (c.ok)
      ss << eval_csv_row(c.report.plant_id, c.camera_count, c.mode, c.report.metrics, c.report.runtime_seconds);
    else
      ss << "plant_" << c.seed << ',' << c.camera_count << ',' << to_string(c.mode) << ",nan,nan,nan";
    std::string status = c.ok ? "ok" : "failed: " + c.error;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    ss << ',' << c.seed << ',' << status << '\n';
  }

  auto write_summary = [&](const char *metric, auto value_of) {
    ss << "\nsummary," << metric;
    for (int n : camera_counts)
      ss << ',' << n;
    ss << '\n';
    for (MapMode m : modes)
    {
      ss << to_string(m) << ',' << metric;
      for (int n : camera_counts)
      {
        double sum = 0.0;
        int ok = 0;
        for (const auto &c : cells)
          if (c.ok && c.mode == m && c.camera_count == n)
          {
            sum += value_of(c.report.metrics);
            ++ok;
          }
        ss << ',' << (ok > 0 ? format_double(sum / ok) : std::string("failed"));
      }
      ss << '\n';
    }
  };
  write_summary("geometric_error_normalized", [](const Evaluation &e) { return e.geometric_error_normalized; });
  write_summary("structure_error", [](const Evaluation &e) { return static_cast<double>(e.structure_error); });
  return ss.str();
}

AblationResult run_ablation(const PipelineConfig &base, const std::vector<int> &camera_counts,
                            const std::vector<MapMode> &modes, const std::vector<std::uint64_t> &seeds,
                            bool keep_artifacts)
{
  if (camera_counts.empty())
    throw UsageError("ablation: camera count list is empty");
  if (modes.empty())
    throw UsageError("ablation: mode list is empty");
  if (seeds.empty())
    throw UsageError("ablation: seed list is empty");
  AblationResult result;
  result.camera_counts = camera_counts;
  result.modes = modes;
  for (int n : camera_counts)
    for (MapMode m : modes)
      for (std::uint64_t s : seeds)
      {
        AblationCell cell;
        cell.camera_count = n;
        cell.mode = m;
        cell.seed = s;
        PipelineConfig cfg = base;
        cfg.rig.camera_count = n;
        cfg.rig.kind = standard_rig_kind(n, base.rig.kind);
        cfg.rig.elevations_deg.clear();
        cfg.mode = m;
        cfg.seed = s;
        cfg.plant_seed = s;
        cfg.plant_id = "plant_" + std::to_string(s);
        cfg.output_dir = keep_artifacts && !base.output_dir.empty()
                           ? base.output_dir / ("n" + std::to_string(n) + "_" + to_string(m) + "_s" + std::to_string(s))
                           : std::filesystem::path{};
        try
        {
          cell.report = run_pipeline(cfg);
          cell.ok = true;
        }
        catch (const std::exception &e)
        {
          cell.error = e.what();
        }
        result.cells.push_back(std::move(cell));
      }
  return result;
}
}  // namespace plantrec
