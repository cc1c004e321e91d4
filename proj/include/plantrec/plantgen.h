#pragma once

#include "plantrec/graph.h"

#include <json.hpp>

#include <filesystem>

namespace plantrec
{
struct PlantNode
{
  int id = 0;
  Vec3 position = Vec3::Zero();
  double radius = 0.0;
};

/// Flat circular leaf used as an occluder.
struct LeafDisc
{
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
  double radius = 0.0;
};

/// Ground-truth plant: branch skeleton with radii, plus leaf occluders.
/// Node ids equal their index. Growth is along +y from the root.
struct PlantModel
{
  std::vector<PlantNode> nodes;
  std::vector<Edge> edges;
  int root = 0;
  std::vector<LeafDisc> leaves;

  SkeletonGraph skeleton() const;
  /// Axis-aligned bounds of the branch nodes (leaves excluded).
  std::pair<Vec3, Vec3> branch_bounds() const;
  /// Bounds including leaf discs.
  std::pair<Vec3, Vec3> full_bounds() const;
};

/// Throws StructuralError naming the first violated PlantModel invariant.
void validate_plant(const PlantModel &plant);

struct Range
{
  double min = 0.0;
  double max = 0.0;
};

/// Parameters of the recursive segment-splitting generator. Defaults are free choices,
/// sized so a plant fits in roughly a 1.2 x 1.6 x 1.2 box.
struct PlantGenConfig
{
  int max_depth = 6;                          ///< segments along the longest root-to-tip path
  double branch_probability = 0.6;            ///< chance of a lateral at each non-root node
  Range branch_angle_range{ 0.6, 1.0 };       ///< lateral angle from the parent axis, radians
  Range segment_length_range{ 0.2, 0.32 };
  double leaf_density = 14.0;                 ///< leaves per unit branch length
  double trunk_radius = 0.02;
  double radius_decay = 0.85;
  Range leaf_radius_range{ 0.04, 0.065 };
  double axis_jitter = 0.25;                  ///< max deviation of a continuing segment, radians

  /// Throws ConfigError naming the offending field
  void validate() const;
};

PlantModel generate_plant(const PlantGenConfig &config, std::uint64_t seed);

inline int joint_count(const PlantModel &plant) { return joint_count(plant.nodes.size(), plant.edges, plant.root); }

nlohmann::json plant_to_json(const PlantModel &plant);
PlantModel plant_from_json(const nlohmann::json &doc);
void save_plant(const PlantModel &plant, const std::filesystem::path &path);
PlantModel load_plant(const std::filesystem::path &path);

nlohmann::json plant_config_to_json(const PlantGenConfig &config);
/// Missing keys keep their defaults.
PlantGenConfig plant_config_from_json(const nlohmann::json &doc);
}  // namespace plantrec
