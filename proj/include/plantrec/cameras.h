#pragma once

#include "plantrec/common.h"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace plantrec
{
/// Pinhole camera. Pixel centers sit at integer coordinates; x right, y down, z forward.
/// rotation/translation map world points into the camera frame: X_c = R X_w + t.
struct Camera
{
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 1;
  int height = 1;

  /// Throws ConfigError when intrinsics or the rotation are invalid
  void validate() const;
  Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 optical_axis() const { return rotation.row(2).transpose(); }
  /// World-space unit direction of the ray through pixel (u, v).
  Vec3 ray_direction(double u, double v) const;
  bool operator==(const Camera &) const = default;
};

struct Projection
{
  Vec2 pixel;
  double depth = 0.0;  ///< camera-frame z
};

/// Pinhole projection. Returns nullopt when the point is at or behind the camera plane.
std::optional<Projection> project(const Camera &camera, const Vec3 &world);

enum class RigKind
{
  hemisphere,
  three_rings,
  semicircle,
  quarter_circle
};

RigKind parse_rig_kind(const std::string &name);
std::string to_string(RigKind kind);

/// Multi-view layout around a target point. Elevations are in degrees above the
/// horizontal plane through look_at. An empty elevation list selects per-kind defaults.
struct RigLayout
{
  RigKind kind = RigKind::hemisphere;
  int camera_count = 72;
  double radius = 3.0;
  Vec3 look_at = Vec3::Zero();
  std::vector<double> elevations_deg;
  int width = 256;
  int height = 256;
  double horizontal_fov_deg = 50.0;

  void validate() const;
  /// Elevations actually used: hemisphere rings, the three semicircle heights, or a single ring.
  std::vector<double> resolved_elevations() const;
};

/// Camera at `eye` looking at `target` with world +y up, square pixels and the
/// principal point at the image center.
Camera look_at_camera(const Vec3 &eye, const Vec3 &target, int width, int height, double horizontal_fov_deg);

std::vector<Camera> make_rig(const RigLayout &layout);

/// Rig radius that keeps a sphere of `bounding_radius` inside the field of view with a margin.
double fitting_radius(double bounding_radius, double horizontal_fov_deg, double fill = 0.85);

nlohmann::json camera_to_json(const Camera &camera);
Camera camera_from_json(const nlohmann::json &doc);
nlohmann::json rig_to_json(const std::vector<Camera> &cameras);
std::vector<Camera> rig_from_json(const nlohmann::json &doc);
void save_rig(const std::vector<Camera> &cameras, const std::filesystem::path &path);
std::vector<Camera> load_rig(const std::filesystem::path &path);

nlohmann::json rig_layout_to_json(const RigLayout &layout);
RigLayout rig_layout_from_json(const nlohmann::json &doc);
}  // namespace plantrec
