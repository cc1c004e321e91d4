#include "plantrec/plantgen.h"

#include "io_util.h"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace plantrec
{
namespace
{
constexpr double kMinUpComponent = 0.15;

Vec3 any_perpendicular(const Vec3 &d)
{
  const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
  return d.cross(helper).normalized();
}

/// Rotates d by `angle` away from itself, toward the perpendicular at `azimuth`.
Vec3 deflect(const Vec3 &d, double angle, double azimuth)
{
  const Vec3 u = any_perpendicular(d);
  const Vec3 v = d.cross(u);
  const Vec3 side = std::cos(azimuth) * u + std::sin(azimuth) * v;
  return (std::cos(angle) * d + std::sin(angle) * side).normalized();
}

Vec3 keep_rising(Vec3 d)
{
  while (d.y() < kMinUpComponent)
    d = (d + 0.2 * Vec3::UnitY()).normalized();
  return d;
}

class Grower
{
public:
  Grower(const PlantGenConfig &cfg, std::uint64_t seed)
    : cfg_(cfg)
    , rng_(seed)
  {}

  PlantModel run()
  {
    plant_.nodes.push_back({ 0, Vec3::Zero(), cfg_.trunk_radius });
    plant_.root = 0;
    grow(0, Vec3::UnitY(), 0, cfg_.trunk_radius);
    return std::move(plant_);
  }

private:
  void grow(int from, const Vec3 &dir, int depth, double radius)
  {
    if (depth >= cfg_.max_depth)
      return;
    const double length = rng_.uniform(cfg_.segment_length_range.min, cfg_.segment_length_range.max);
    const Vec3 start = plant_.nodes[static_cast<std::size_t>(from)].position;
    const Vec3 end = start + dir * length;
    const double end_radius = radius * cfg_.radius_decay;
    const int child = static_cast<int>(plant_.nodes.size());
    plant_.nodes.push_back({ child, end, end_radius });
    plant_.edges.push_back({ from, child });
    if (depth >= 1)
      add_leaves(start, end, radius);

    const int child_depth = depth + 1;
    const bool lateral = child_depth < cfg_.max_depth && rng_.bernoulli(cfg_.branch_probability);
    const Vec3 next_dir = keep_rising(
      deflect(dir, rng_.uniform(0.0, cfg_.axis_jitter), rng_.uniform(0.0, 2.0 * std::numbers::pi)) + 0.1 * Vec3::UnitY());
    Vec3 lateral_dir = Vec3::Zero();
    if (lateral)
    {
      const double angle = rng_.uniform(cfg_.branch_angle_range.min, cfg_.branch_angle_range.max);
      lateral_dir = keep_rising(deflect(dir, angle, rng_.uniform(0.0, 2.0 * std::numbers::pi)));
    }
    grow(child, next_dir.normalized(), child_depth, end_radius);
    if (lateral)
      grow(child, lateral_dir, child_depth, end_radius * cfg_.radius_decay);
  }

  void add_leaves(const Vec3 &start, const Vec3 &end, double radius)
  {
    const Vec3 axis = end - start;
    const double length = axis.norm();
    const Vec3 dir = axis / length;
    const int count = static_cast<int>(std::floor(cfg_.leaf_density * length + rng_.uniform()));
    const Vec3 u = any_perpendicular(dir);
    const Vec3 v = dir.cross(u);
    for (int i = 0; i < count; ++i)
    {
      const double t = rng_.uniform(0.2, 1.0);
      const double azimuth = rng_.uniform(0.0, 2.0 * std::numbers::pi);
      const Vec3 outward = std::cos(azimuth) * u + std::sin(azimuth) * v;
      LeafDisc leaf;
      leaf.radius = rng_.uniform(cfg_.leaf_radius_range.min, cfg_.leaf_radius_range.max);
      leaf.center = start + t * axis + outward * (radius + 0.9 * leaf.radius);
      const Vec3 jitter(rng_.uniform(-0.3, 0.3), rng_.uniform(-0.3, 0.3), rng_.uniform(-0.3, 0.3));
      leaf.normal = (0.6 * outward + 0.8 * Vec3::UnitY() + jitter).normalized();
      plant_.leaves.push_back(leaf);
    }
  }

  const PlantGenConfig &cfg_;
  Rng rng_;
  PlantModel plant_;
};

void check_range(const Range &r, const char *field, double lo, double hi)
{
  if (!(r.min <= r.max) || !(r.min >= lo) || !(r.max <= hi))
    throw ConfigError(std::string("plant config: ") + field + " must satisfy " + std::to_string(lo) +
                      " <= min <= max <= " + std::to_string(hi));
}
}  // namespace

SkeletonGraph PlantModel::skeleton() const
{
  SkeletonGraph g;
  g.vertices.reserve(nodes.size());
  for (const auto &n : nodes)
    g.vertices.push_back(n.position);
  g.edges = edges;
  g.root = root;
  return g;
}

std::pair<Vec3, Vec3> PlantModel::branch_bounds() const
{
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto &n : nodes)
  {
    lo = lo.cwiseMin(n.position);
    hi = hi.cwiseMax(n.position);
  }
  return { lo, hi };
}

std::pair<Vec3, Vec3> PlantModel::full_bounds() const
{
  auto [lo, hi] = branch_bounds();
  for (const auto &leaf : leaves)
  {
    lo = lo.cwiseMin(leaf.center - Vec3::Constant(leaf.radius));
    hi = hi.cwiseMax(leaf.center + Vec3::Constant(leaf.radius));
  }
  return { lo, hi };
}

void validate_plant(const PlantModel &plant)
{
  const std::size_t n = plant.nodes.size();
  for (std::size_t i = 0; i < n; ++i)
    if (plant.nodes[i].id != static_cast<int>(i))
      throw StructuralError("plant node ids must equal their index");
  const auto topo = topology(n, plant.edges, plant.root);
  const double root_y = plant.nodes[static_cast<std::size_t>(plant.root)].position.y();
  for (std::size_t i = 0; i < n; ++i)
  {
    const auto &node = plant.nodes[i];
    if (!(node.radius > 0.0))
      throw StructuralError("plant node " + std::to_string(i) + " has non-positive radius");
    if (node.position.y() < root_y)
      throw StructuralError("plant node " + std::to_string(i) + " lies below the root");
    const int p = topo.parent[i];
    if (p >= 0 && node.radius > plant.nodes[static_cast<std::size_t>(p)].radius)
      throw StructuralError("plant node " + std::to_string(i) + " is thicker than its parent");
  }
  for (std::size_t i = 0; i < plant.leaves.size(); ++i)
  {
    const auto &leaf = plant.leaves[i];
    if (!(leaf.radius > 0.0))
      throw StructuralError("leaf " + std::to_string(i) + " has non-positive radius");
    if (std::abs(leaf.normal.norm() - 1.0) > 1e-9)
      throw StructuralError("leaf " + std::to_string(i) + " normal is not unit length");
  }
}

void PlantGenConfig::validate() const
{
  if (max_depth < 1)
    throw ConfigError("plant config: max_depth must be >= 1");
  if (!(branch_probability >= 0.0 && branch_probability <= 1.0))
    throw ConfigError("plant config: branch_probability must lie in [0, 1]");
  check_range(branch_angle_range, "branch_angle_range", 0.0, std::numbers::pi);
  check_range(segment_length_range, "segment_length_range", 1e-9, std::numeric_limits<double>::max());
  check_range(leaf_radius_range, "leaf_radius_range", 1e-9, std::numeric_limits<double>::max());
  if (!(leaf_density >= 0.0))
    throw ConfigError("plant config: leaf_density must be >= 0");
  if (!(trunk_radius > 0.0))
    throw ConfigError("plant config: trunk_radius must be > 0");
  if (!(radius_decay > 0.0 && radius_decay <= 1.0))
    throw ConfigError("plant config: radius_decay must lie in (0, 1]");
  if (!(axis_jitter >= 0.0 && axis_jitter <= std::numbers::pi / 2))
    throw ConfigError("plant config: axis_jitter must lie in [0, pi/2]");
}

PlantModel generate_plant(const PlantGenConfig &config, std::uint64_t seed)
{
  config.validate();
  return Grower(config, seed).run();
}

nlohmann::json plant_to_json(const PlantModel &plant)
{
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (const auto &n : plant.nodes)
    doc["nodes"].push_back(
      { { "id", n.id }, { "x", n.position.x() }, { "y", n.position.y() }, { "z", n.position.z() }, { "r", n.radius } });
  doc["edges"] = nlohmann::json::array();
  for (const auto &e : plant.edges)
    doc["edges"].push_back({ e.parent, e.child });
  doc["root"] = plant.root;
  doc["leaves"] = nlohmann::json::array();
  for (const auto &l : plant.leaves)
    doc["leaves"].push_back({ { "cx", l.center.x() },
                              { "cy", l.center.y() },
                              { "cz", l.center.z() },
                              { "nx", l.normal.x() },
                              { "ny", l.normal.y() },
                              { "nz", l.normal.z() },
                              { "r", l.radius } });
  return doc;
}

PlantModel plant_from_json(const nlohmann::json &doc)
{
  PlantModel plant;
  try
  {
    std::map<long long, int> index;
    for (const auto &n : doc.at("nodes"))
    {
      const long long id = n.at("id").get<long long>();
      const int idx = static_cast<int>(plant.nodes.size());
      if (!index.emplace(id, idx).second)
        throw StructuralError("plant document: duplicate node id " + std::to_string(id));
      plant.nodes.push_back(
        { idx, Vec3(n.at("x").get<double>(), n.at("y").get<double>(), n.at("z").get<double>()), n.at("r").get<double>() });
    }
    auto lookup = [&](long long id) {
      auto it = index.find(id);
      if (it == index.end())
        throw StructuralError("plant document: unknown node id " + std::to_string(id));
      return it->second;
    };
    for (const auto &e : doc.at("edges"))
      plant.edges.push_back({ lookup(e.at(0).get<long long>()), lookup(e.at(1).get<long long>()) });
    plant.root = lookup(doc.at("root").get<long long>());
    if (doc.contains("leaves"))
      for (const auto &l : doc.at("leaves"))
        plant.leaves.push_back({ Vec3(l.at("cx").get<double>(), l.at("cy").get<double>(), l.at("cz").get<double>()),
                                 Vec3(l.at("nx").get<double>(), l.at("ny").get<double>(), l.at("nz").get<double>()),
                                 l.at("r").get<double>() });
  }
  catch (const nlohmann::json::exception &e)
  {
    throw FormatError(std::string("plant document: ") + e.what(), 0);
  }
  validate_plant(plant);
  return plant;
}

void save_plant(const PlantModel &plant, const std::filesystem::path &path)
{
  detail::write_file(path, plant_to_json(plant).dump(1));
}

PlantModel load_plant(const std::filesystem::path &path)
{
  return plant_from_json(detail::parse_json(detail::read_file(path), "plant document " + path.string()));
}

nlohmann::json plant_config_to_json(const PlantGenConfig &c)
{
  return { { "max_depth", c.max_depth },
           { "branch_probability", c.branch_probability },
           { "branch_angle_range", { c.branch_angle_range.min, c.branch_angle_range.max } },
           { "segment_length_range", { c.segment_length_range.min, c.segment_length_range.max } },
           { "leaf_density", c.leaf_density },
           { "trunk_radius", c.trunk_radius },
           { "radius_decay", c.radius_decay },
           { "leaf_radius_range", { c.leaf_radius_range.min, c.leaf_radius_range.max } },
           { "axis_jitter", c.axis_jitter } };
}

PlantGenConfig plant_config_from_json(const nlohmann::json &doc)
{
  PlantGenConfig c;
  auto range = [&](const char *key, Range &r) {
    if (!doc.contains(key))
      return;
    const auto &v = doc.at(key);
    if (!v.is_array() || v.size() != 2)
      throw ConfigError(std::string("plant config: ") + key + " must be [min, max]");
    r = { v[0].get<double>(), v[1].get<double>() };
  };
  try
  {
    c.max_depth = doc.value("max_depth", c.max_depth);
    c.branch_probability = doc.value("branch_probability", c.branch_probability);
    range("branch_angle_range", c.branch_angle_range);
    range("segment_length_range", c.segment_length_range);
    c.leaf_density = doc.value("leaf_density", c.leaf_density);
    c.trunk_radius = doc.value("trunk_radius", c.trunk_radius);
    c.radius_decay = doc.value("radius_decay", c.radius_decay);
    range("leaf_radius_range", c.leaf_radius_range);
    c.axis_jitter = doc.value("axis_jitter", c.axis_jitter);
  }
  catch (const nlohmann::json::type_error &e)
  {
    throw ConfigError(std::string("plant config: ") + e.what());
  }
  return c;
}
}  // namespace plantrec
