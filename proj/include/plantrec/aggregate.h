#pragma once

#include "plantrec/cameras.h"
#include "plantrec/probmap.h"

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>

namespace plantrec
{
enum class OutOfFramePolicy
{
  floor,      ///< an out-of-frame view contributes the probability floor
  skip_view,  ///< an out-of-frame view contributes nothing
};

OutOfFramePolicy parse_out_of_frame_policy(const std::string &name);
std::string to_string(OutOfFramePolicy policy);

/// Regular grid of voxel centers: center(i, j, k) = origin + spacing * (i, j, k).
struct GridSpec
{
  std::array<int, 3> dims{ 128, 128, 128 };
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;

  void validate() const;
  std::size_t voxel_count() const
  {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  bool operator==(const GridSpec &) const = default;
};

/// Cubic grid of `resolution`^3 voxels centered on the box, whose side is the largest box
/// extent grown by `padding` of that extent on each side.
GridSpec grid_for_bounds(const Vec3 &lo, const Vec3 &hi, int resolution = 128, double padding = 0.1);

/// Log-probability volume. Every value lies in [log_floor(), 0] where
/// log_floor() = n_views * log(eps_floor) is the effective floor of the product.
struct VoxelGrid
{
  GridSpec spec;
  double eps_floor = 1e-4;
  int n_views = 1;
  OutOfFramePolicy policy = OutOfFramePolicy::floor;
  std::vector<double> log_values;  // x fastest, then y, then z

  double log_floor() const { return n_views * std::log(eps_floor); }
  std::size_t index(int i, int j, int k) const
  {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(spec.dims[1]) + static_cast<std::size_t>(j)) *
             static_cast<std::size_t>(spec.dims[0]) +
           static_cast<std::size_t>(i);
  }
  std::array<int, 3> coords(std::size_t index) const;
  Vec3 center(int i, int j, int k) const { return spec.origin + spec.spacing * Vec3(i, j, k); }
  Vec3 center(std::size_t index) const;
  /// Linear remap of the log value onto [0, 1]: 0 at the floor, 1 at probability one.
  double weight(std::size_t index) const { return (log_values[index] - log_floor()) / (-log_floor()); }
  /// Trilinear interpolation of the normalized weight; voxels outside the grid weigh 0.
  double weight_at(const Vec3 &p) const;
  bool operator==(const VoxelGrid &) const = default;
};

struct AggregateConfig
{
  GridSpec grid;
  double eps_floor = 1e-4;
  OutOfFramePolicy out_of_frame = OutOfFramePolicy::floor;
  int threads = 1;

  void validate() const;
};

/// Bilinear interpolation between pixel centers. nullopt outside [0, w-1] x [0, h-1].
std::optional<double> sample_bilinear(const ProbMap2D &map, const Vec2 &pixel);

/// Back-projects the views into a log-probability grid: the per-voxel product of the
/// floored view probabilities, accumulated in the log domain. Views are summed in a
/// canonical order so the result does not depend on input order or thread count.
/// Throws UsageError for empty or mismatched inputs, StructuralError when a map does
///         not match its camera's image size
VoxelGrid aggregate(std::span<const ProbMap2D> maps, std::span<const Camera> cameras, const AggregateConfig &cfg);

double normalized_weight(const VoxelGrid &grid, std::size_t index);

/// Raw little-endian float32 array plus a JSON sidecar next to it (same stem, .json).
void save_grid(const VoxelGrid &grid, const std::filesystem::path &raw_path);
VoxelGrid load_grid(const std::filesystem::path &raw_path);
/// Values as they survive a float32 round trip.
VoxelGrid quantize_grid(const VoxelGrid &grid);

nlohmann::json aggregate_config_to_json(const AggregateConfig &cfg);
AggregateConfig aggregate_config_from_json(const nlohmann::json &doc);
}  // namespace plantrec
