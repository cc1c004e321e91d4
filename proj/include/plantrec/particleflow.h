#pragma once

#include "plantrec/aggregate.h"
#include "plantrec/graph.h"

#include <json.hpp>

#include <optional>

namespace plantrec
{
struct Particle
{
  enum class State
  {
    moving,
    captured,  ///< reached the root capture ball
    merged,    ///< joined another particle's trail
    dead,      ///< left the probability mass or lost its force
  };

  int id = 0;
  Vec3 position = Vec3::Zero();
  std::vector<Vec3> trail;  ///< visited positions, last entry equals position
  State state = State::moving;

  bool alive() const { return state == State::moving; }
};

/// Particle-flow parameters. Lengths are in world units; see defaults_for().
struct FlowConfig
{
  int particle_count = 10000;
  double radius = 3.0;               ///< neighborhood radius for the local forces
  double lambda_r = 0.1;             ///< constant weight of the root-ward force
  double step_length = 1.0;
  int max_steps = 512;
  double root_capture_radius = 2.0;
  double merge_radius = 1.5;
  double min_weight_to_live = 0.05;
  double root_threshold = 0.5;       ///< normalized weight a voxel needs to be a root candidate
  int threads = 1;

  /// Defaults scaled to the grid: radius 3, step 1, capture 2 and merge 1.5 voxel
  /// spacings, max_steps 4 * max(dims).
  static FlowConfig defaults_for(const GridSpec &grid);
  void validate() const;
};

/// Raw particle traces: a rooted tree whose provenance records each vertex's source particle.
using RawTraceGraph = SkeletonGraph;

/// Center of the lowest (minimum y) voxel whose normalized weight reaches `threshold`.
/// Ties go to the smallest horizontal distance from the candidates' weight centroid,
/// then to the lexicographically smallest (i, j, k).
/// Throws EmptyVolumeError when no voxel passes
Vec3 find_root(const VoxelGrid &grid, double threshold);

/// Draws particles with probability proportional to the normalized weight, jittered
/// uniformly inside the chosen voxel.
/// Throws EmptyVolumeError when every weight is zero
std::vector<Particle> seed_particles(const VoxelGrid &grid, int count, std::uint64_t seed);

struct LocalForces
{
  Vec3 to_center = Vec3::Zero();  ///< unit vector toward the weighted mass center, or zero
  Vec3 along_axis = Vec3::Zero(); ///< principal axis of the weighted neighborhood, oriented root-ward
  double center_distance = 0.0;
};

/// Weighted mass center and principal axis over voxels within `radius` of p.
/// nullopt when the neighborhood carries no weight.
std::optional<LocalForces> local_forces(const VoxelGrid &grid, const Vec3 &p, double radius, const Vec3 &root);

struct BlendWeights
{
  double center = 0.0;  // lambda_c
  double axis = 0.0;    // lambda_d
  double root = 0.0;    // lambda_r
};

/// lambda_c = (d_c / r)(1 - lambda_r), lambda_d = 1 - lambda_r - lambda_c, with d_c clamped
/// to [0, r]. lambda_c is rounded onto the ulp grid of 1 - lambda_r so that
/// lambda_c + lambda_d + lambda_r == 1 holds exactly in floating point.
BlendWeights blend_weights(double center_distance, double radius, double lambda_r);

/// lambda_c F_c + lambda_d F_d + lambda_r F_r, with F_r the unit vector from p to the root.
Vec3 blended_force(const LocalForces &forces, const Vec3 &p, const Vec3 &root, double radius, double lambda_r);

/// Advances one live particle by step_length along the blended force, then applies the
/// capture and kill rules. A particle already inside the capture ball is captured in place.
void step_particle(Particle &particle, const VoxelGrid &grid, const Vec3 &root, const FlowConfig &cfg);

/// Runs the given particles in lockstep rounds. A particle that comes within merge_radius
/// of another live or captured trail stops and joins it; merges resolve in ascending id
/// order. Only trails connected to the root survive.
/// Throws ReconstructionError when no trail reaches the root
RawTraceGraph trace_particles(const VoxelGrid &grid, std::vector<Particle> particles, const Vec3 &root,
                              const FlowConfig &cfg);

/// find_root + seed_particles + trace_particles.
RawTraceGraph simulate(const VoxelGrid &grid, const FlowConfig &cfg, std::uint64_t seed);

nlohmann::json flow_config_to_json(const FlowConfig &cfg);
/// Overrides fields present in doc on top of `base`.
FlowConfig flow_config_from_json(const nlohmann::json &doc, FlowConfig base);
}  // namespace plantrec
