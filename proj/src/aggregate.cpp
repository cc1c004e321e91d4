#include "plantrec/aggregate.h"

#include "io_util.h"

#include <bit>
#include <cstring>
#include <numeric>

namespace plantrec
{
namespace
{
/// Lexicographic key used to order views independently of how they were passed in.
bool view_less(const Camera &ca, const ProbMap2D &ma, const Camera &cb, const ProbMap2D &mb)
{
  auto key = [](const Camera &c) {
    std::vector<double> k{ c.fx, c.fy, c.cx, c.cy, static_cast<double>(c.width), static_cast<double>(c.height) };
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        k.push_back(c.rotation(i, j));
    for (int i = 0; i < 3; ++i)
      k.push_back(c.translation[i]);
    return k;
  };
  const auto ka = key(ca), kb = key(cb);
  if (ka != kb)
    return ka < kb;
  return ma.values < mb.values;
}

float to_float(double v) { return static_cast<float>(v); }
}  // namespace

OutOfFramePolicy parse_out_of_frame_policy(const std::string &name)
{
  if (name == "floor")
    return OutOfFramePolicy::floor;
  if (name == "skip" || name == "skip_view")
    return OutOfFramePolicy::skip_view;
  throw ConfigError("aggregate: unknown out-of-frame policy '" + name + "' (expected floor or skip)");
}

std::string to_string(OutOfFramePolicy policy)
{
  return policy == OutOfFramePolicy::floor ? "floor" : "skip";
}

void GridSpec::validate() const
{
  for (int d : dims)
    if (d < 1)
      throw ConfigError("grid: dims must all be >= 1");
  if (!(spacing > 0.0))
    throw ConfigError("grid: spacing must be > 0");
}

GridSpec grid_for_bounds(const Vec3 &lo, const Vec3 &hi, int resolution, double padding)
{
  if (resolution < 1)
    throw ConfigError("grid: resolution must be >= 1");
  const double extent = std::max((hi - lo).maxCoeff(), 1e-9);
  const double side = extent * (1.0 + 2.0 * padding);
  GridSpec spec;
  spec.dims = { resolution, resolution, resolution };
  spec.spacing = side / resolution;
  spec.origin = 0.5 * (lo + hi) - Vec3::Constant(0.5 * spec.spacing * (resolution - 1));
  return spec;
}

std::array<int, 3> VoxelGrid::coords(std::size_t index) const
{
  const std::size_t nx = static_cast<std::size_t>(spec.dims[0]);
  const std::size_t ny = static_cast<std::size_t>(spec.dims[1]);
  return { static_cast<int>(index % nx), static_cast<int>((index / nx) % ny), static_cast<int>(index / (nx * ny)) };
}

Vec3 VoxelGrid::center(std::size_t index) const
{
  const auto c = coords(index);
  return center(c[0], c[1], c[2]);
}

double VoxelGrid::weight_at(const Vec3 &p) const
{
  const Vec3 g = (p - spec.origin) / spec.spacing;
  const int i0 = static_cast<int>(std::floor(g.x()));
  const int j0 = static_cast<int>(std::floor(g.y()));
  const int k0 = static_cast<int>(std::floor(g.z()));
  const double fx = g.x() - i0, fy = g.y() - j0, fz = g.z() - k0;
  double sum = 0.0;
  for (int dk = 0; dk < 2; ++dk)
  {
    const int k = k0 + dk;
    if (k < 0 || k >= spec.dims[2])
      continue;
    const double wz = dk ? fz : 1.0 - fz;
    for (int dj = 0; dj < 2; ++dj)
    {
      const int j = j0 + dj;
      if (j < 0 || j >= spec.dims[1])
        continue;
      const double wy = dj ? fy : 1.0 - fy;
      for (int di = 0; di < 2; ++di)
      {
        const int i = i0 + di;
        if (i < 0 || i >= spec.dims[0])
          continue;
        const double wx = di ? fx : 1.0 - fx;
        sum += wx * wy * wz * weight(index(i, j, k));
      }
    }
  }
  return sum;
}

void AggregateConfig::validate() const
{
  grid.validate();
  if (!(eps_floor > 0.0 && eps_floor < 1.0))
    throw ConfigError("aggregate: eps_floor must lie in (0, 1)");
}

std::optional<double> sample_bilinear(const ProbMap2D &map, const Vec2 &pixel)
{
  const double x = pixel.x(), y = pixel.y();
  if (!(x >= 0.0 && y >= 0.0 && x <= map.width - 1 && y <= map.height - 1))
    return std::nullopt;
  const int x0 = std::min(static_cast<int>(x), map.width - 1);
  const int y0 = std::min(static_cast<int>(y), map.height - 1);
  const int x1 = std::min(x0 + 1, map.width - 1);
  const int y1 = std::min(y0 + 1, map.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = (1.0 - fx) * map.at(x0, y0) + fx * map.at(x1, y0);
  const double bottom = (1.0 - fx) * map.at(x0, y1) + fx * map.at(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

VoxelGrid aggregate(std::span<const ProbMap2D> maps, std::span<const Camera> cameras, const AggregateConfig &cfg)
{
  cfg.validate();
  if (maps.empty())
    throw UsageError("aggregate: no views given");
  if (maps.size() != cameras.size())
    throw UsageError("aggregate: " + std::to_string(maps.size()) + " maps but " + std::to_string(cameras.size()) +
                     " cameras");
  for (std::size_t v = 0; v < maps.size(); ++v)
  {
    cameras[v].validate();
    if (maps[v].width != cameras[v].width || maps[v].height != cameras[v].height)
      throw StructuralError("aggregate: map " + std::to_string(v) + " does not match its camera's image size");
  }

  std::vector<std::size_t> order(maps.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return view_less(cameras[a], maps[a], cameras[b], maps[b]);
  });

  VoxelGrid grid;
  grid.spec = cfg.grid;
  grid.eps_floor = cfg.eps_floor;
  grid.n_views = static_cast<int>(maps.size());
  grid.policy = cfg.out_of_frame;
  grid.log_values.assign(cfg.grid.voxel_count(), 0.0);

  const double log_eps = std::log(cfg.eps_floor);
  const double out_of_frame_term = cfg.out_of_frame == OutOfFramePolicy::floor ? log_eps : 0.0;
  const int nx = cfg.grid.dims[0], ny = cfg.grid.dims[1], nz = cfg.grid.dims[2];

  for (std::size_t v : order)
  {
    const Camera &cam = cameras[v];
    const ProbMap2D &map = maps[v];
    const Vec3 step = cam.rotation.col(0) * cfg.grid.spacing;
    parallel_for(static_cast<std::size_t>(nz), cfg.threads, [&](std::size_t kb, std::size_t ke) {
      for (std::size_t k = kb; k < ke; ++k)
      {
        for (int j = 0; j < ny; ++j)
        {
          const Vec3 row = cam.to_camera(grid.center(0, j, static_cast<int>(k)));
          double *out = &grid.log_values[grid.index(0, j, static_cast<int>(k))];
          for (int i = 0; i < nx; ++i)
          {
            const Vec3 c = row + static_cast<double>(i) * step;
            double term = log_eps;
            if (c.z() > 0.0)
            {
              const auto p = sample_bilinear(map, Vec2(cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy));
              term = p ? std::log(std::max(cfg.eps_floor, *p)) : out_of_frame_term;
            }
            out[i] += term;
          }
        }
      }
    });
  }
  const double lo = grid.log_floor();
  for (auto &lv : grid.log_values)
    lv = std::clamp(lv, lo, 0.0);
  return grid;
}

double normalized_weight(const VoxelGrid &grid, std::size_t index)
{
  return grid.weight(index);
}

VoxelGrid quantize_grid(const VoxelGrid &grid)
{
  VoxelGrid out = grid;
  const double lo = grid.log_floor();
  for (auto &v : out.log_values)
    v = std::clamp(static_cast<double>(to_float(v)), lo, 0.0);
  return out;
}

void save_grid(const VoxelGrid &grid, const std::filesystem::path &raw_path)
{
  std::string bytes(grid.log_values.size() * 4, '\0');
  for (std::size_t i = 0; i < grid.log_values.size(); ++i)
  {
    const auto u = std::bit_cast<std::uint32_t>(to_float(grid.log_values[i]));
    for (int b = 0; b < 4; ++b)
      bytes[4 * i + static_cast<std::size_t>(b)] = static_cast<char>((u >> (8 * b)) & 0xff);
  }
  detail::write_file(raw_path, bytes);

  nlohmann::json side;
  side["dims"] = grid.spec.dims;
  side["origin"] = { grid.spec.origin.x(), grid.spec.origin.y(), grid.spec.origin.z() };
  side["spacing"] = grid.spec.spacing;
  side["eps_floor"] = grid.eps_floor;
  side["n_views"] = grid.n_views;
  side["log_floor"] = grid.log_floor();
  side["out_of_frame"] = to_string(grid.policy);
  side["layout"] = "float32 little-endian, x fastest then y then z";
  auto sidecar = raw_path;
  detail::write_file(sidecar.replace_extension(".json"), side.dump(1));
}

VoxelGrid load_grid(const std::filesystem::path &raw_path)
{
  auto sidecar = raw_path;
  sidecar.replace_extension(".json");
  const auto side = detail::parse_json(detail::read_file(sidecar), "grid sidecar " + sidecar.string());
  VoxelGrid grid;
  try
  {
    grid.spec.dims = side.at("dims").get<std::array<int, 3>>();
    const auto o = side.at("origin").get<std::vector<double>>();
    if (o.size() != 3)
      throw FormatError("grid sidecar: origin needs 3 numbers", 0);
    grid.spec.origin = Vec3(o[0], o[1], o[2]);
    grid.spec.spacing = side.at("spacing").get<double>();
    grid.eps_floor = side.at("eps_floor").get<double>();
    grid.n_views = side.value("n_views", 1);
    grid.policy = parse_out_of_frame_policy(side.value("out_of_frame", std::string("floor")));
  }
  catch (const nlohmann::json::exception &e)
  {
    throw FormatError(std::string("grid sidecar: ") + e.what(), 0);
  }
  grid.spec.validate();

  const std::string bytes = detail::read_file(raw_path);
  const std::size_t n = grid.spec.voxel_count();
  if (bytes.size() != 4 * n)
    throw FormatError("grid raw: expected " + std::to_string(4 * n) + " bytes, found " + std::to_string(bytes.size()),
                      std::min(bytes.size(), 4 * n));
  grid.log_values.resize(n);
  const double lo = grid.log_floor();
  for (std::size_t i = 0; i < n; ++i)
  {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + static_cast<std::size_t>(b)])) << (8 * b);
    const double v = std::bit_cast<float>(u);
    if (std::isnan(v))
      throw FormatError("grid raw: NaN value", 4 * i);
    grid.log_values[i] = std::clamp(v, lo, 0.0);
  }
  return grid;
}

nlohmann::json aggregate_config_to_json(const AggregateConfig &c)
{
  return { { "dims", c.grid.dims },
           { "origin", { c.grid.origin.x(), c.grid.origin.y(), c.grid.origin.z() } },
           { "spacing", c.grid.spacing },
           { "eps_floor", c.eps_floor },
           { "out_of_frame", to_string(c.out_of_frame) } };
}

AggregateConfig aggregate_config_from_json(const nlohmann::json &doc)
{
  AggregateConfig c;
  try
  {
    if (doc.contains("dims"))
      c.grid.dims = doc.at("dims").get<std::array<int, 3>>();
    if (doc.contains("origin"))
    {
      const auto o = doc.at("origin").get<std::vector<double>>();
      if (o.size() != 3)
        throw ConfigError("aggregate: origin needs 3 numbers");
      c.grid.origin = Vec3(o[0], o[1], o[2]);
    }
    c.grid.spacing = doc.value("spacing", c.grid.spacing);
    c.eps_floor = doc.value("eps_floor", c.eps_floor);
    if (doc.contains("out_of_frame"))
      c.out_of_frame = parse_out_of_frame_policy(doc.at("out_of_frame").get<std::string>());
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ConfigError(std::string("aggregate: ") + e.what());
  }
  return c;
}
}  // namespace plantrec
