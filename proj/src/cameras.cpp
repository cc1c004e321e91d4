#include "plantrec/cameras.h"

#include "io_util.h"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace plantrec
{
namespace
{
double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Splits `count` cameras over `rings`, giving the remainder to the first rings.
std::vector<int> split_count(int count, int rings)
{
  std::vector<int> per(static_cast<std::size_t>(rings), count / rings);
  for (int r = 0; r < count % rings; ++r)
    ++per[static_cast<std::size_t>(r)];
  return per;
}

Vec3 orbit_point(const Vec3 &center, double radius, double elevation_deg, double azimuth_deg)
{
  const double el = deg2rad(elevation_deg);
  const double az = deg2rad(azimuth_deg);
  return center + radius * Vec3(std::cos(el) * std::cos(az), std::sin(el), std::cos(el) * std::sin(az));
}

/// n azimuths from 0 to span inclusive (a single camera sits at 0).
std::vector<double> arc_azimuths(int n, double span_deg)
{
  std::vector<double> az(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    az[static_cast<std::size_t>(k)] = n == 1 ? 0.0 : span_deg * k / (n - 1);
  return az;
}
}  // namespace

void Camera::validate() const
{
  if (!(fx > 0.0 && fy > 0.0))
    throw ConfigError("camera: focal lengths must be > 0");
  if (width < 1 || height < 1)
    throw ConfigError("camera: width and height must be >= 1");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw ConfigError("camera: principal point must lie inside the image");
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw ConfigError("camera: rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw ConfigError("camera: rotation determinant is not +1");
}

Vec3 Camera::ray_direction(double u, double v) const
{
  const Vec3 d((u - cx) / fx, (v - cy) / fy, 1.0);
  return (rotation.transpose() * d).normalized();
}

std::optional<Projection> project(const Camera &camera, const Vec3 &world)
{
  const Vec3 c = camera.to_camera(world);
  if (!(c.z() > 0.0))
    return std::nullopt;
  return Projection{ Vec2(camera.fx * c.x() / c.z() + camera.cx, camera.fy * c.y() / c.z() + camera.cy), c.z() };
}

RigKind parse_rig_kind(const std::string &name)
{
  if (name == "hemisphere")
    return RigKind::hemisphere;
  if (name == "three_rings")
    return RigKind::three_rings;
  if (name == "semicircle")
    return RigKind::semicircle;
  if (name == "quarter_circle")
    return RigKind::quarter_circle;
  throw ConfigError("rig: unknown layout kind '" + name + "'");
}

std::string to_string(RigKind kind)
{
  switch (kind)
  {
  case RigKind::hemisphere:
    return "hemisphere";
  case RigKind::three_rings:
    return "three_rings";
  case RigKind::semicircle:
    return "semicircle";
  case RigKind::quarter_circle:
    return "quarter_circle";
  }
  return "unknown";
}

void RigLayout::validate() const
{
  if (camera_count < 1)
    throw ConfigError("rig: camera_count must be >= 1");
  if (!(radius > 0.0))
    throw ConfigError("rig: radius must be > 0");
  if (width < 1 || height < 1)
    throw ConfigError("rig: width and height must be >= 1");
  if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0))
    throw ConfigError("rig: horizontal_fov_deg must lie in (0, 180)");
  for (double e : elevations_deg)
    if (!(e > -90.0 && e < 90.0))
      throw ConfigError("rig: elevations must lie in (-90, 90) degrees");
}

std::vector<double> RigLayout::resolved_elevations() const
{
  if (!elevations_deg.empty())
    return elevations_deg;
  switch (kind)
  {
  case RigKind::hemisphere:
  {
    const int rings = std::clamp(static_cast<int>(std::lround(std::sqrt(camera_count / 2.0))), 1, camera_count);
    if (rings == 1)
      return { 30.0 };
    std::vector<double> el;
    for (int r = 0; r < rings; ++r)
      el.push_back(10.0 + (75.0 - 10.0) * r / (rings - 1));
    return el;
  }
  case RigKind::three_rings:
    return { 15.0, 40.0, 65.0 };
  case RigKind::semicircle:
  case RigKind::quarter_circle:
    return { 20.0 };
  }
  return { 20.0 };
}

Camera look_at_camera(const Vec3 &eye, const Vec3 &target, int width, int height, double horizontal_fov_deg)
{
  const Vec3 forward = (target - eye).normalized();
  Vec3 down = -Vec3::UnitY();
  if (std::abs(forward.dot(down)) > 1.0 - 1e-9)
    down = Vec3::UnitZ();
  const Vec3 y_axis = (down - down.dot(forward) * forward).normalized();
  const Vec3 x_axis = y_axis.cross(forward);

  Camera cam;
  cam.rotation.row(0) = x_axis.transpose();
  cam.rotation.row(1) = y_axis.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.width = width;
  cam.height = height;
  cam.fx = 0.5 * width / std::tan(0.5 * deg2rad(horizontal_fov_deg));
  cam.fy = cam.fx;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  return cam;
}

std::vector<Camera> make_rig(const RigLayout &layout)
{
  layout.validate();
  const auto elevations = layout.resolved_elevations();
  const int rings = static_cast<int>(elevations.size());
  if (rings > layout.camera_count)
    throw ConfigError("rig: more elevation rings than cameras");
  const auto per_ring = split_count(layout.camera_count, rings);

  std::vector<Camera> cams;
  cams.reserve(static_cast<std::size_t>(layout.camera_count));
  for (int r = 0; r < rings; ++r)
  {
    const int n = per_ring[static_cast<std::size_t>(r)];
    std::vector<double> azimuths;
    switch (layout.kind)
    {
    case RigKind::hemisphere:
      // full circle, odd rings staggered by half a step
      for (int k = 0; k < n; ++k)
        azimuths.push_back(360.0 * (k + (r % 2 ? 0.5 : 0.0)) / n);
      break;
    case RigKind::three_rings:
    case RigKind::semicircle:
      azimuths = arc_azimuths(n, 180.0);
      break;
    case RigKind::quarter_circle:
      azimuths = arc_azimuths(n, 90.0);
      break;
    }
    for (double az : azimuths)
      cams.push_back(look_at_camera(orbit_point(layout.look_at, layout.radius, elevations[static_cast<std::size_t>(r)], az),
                                    layout.look_at, layout.width, layout.height, layout.horizontal_fov_deg));
  }
  return cams;
}

double fitting_radius(double bounding_radius, double horizontal_fov_deg, double fill)
{
  return bounding_radius / std::sin(0.5 * deg2rad(horizontal_fov_deg) * fill);
}

nlohmann::json camera_to_json(const Camera &c)
{
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r[static_cast<std::size_t>(3 * i + j)] = c.rotation(i, j);
  return { { "fx", c.fx },       { "fy", c.fy },         { "cx", c.cx }, { "cy", c.cy },
           { "width", c.width }, { "height", c.height }, { "R", r },     { "t", { c.translation.x(), c.translation.y(), c.translation.z() } } };
}

Camera camera_from_json(const nlohmann::json &doc)
{
  Camera c;
  try
  {
    c.fx = doc.at("fx").get<double>();
    c.fy = doc.at("fy").get<double>();
    c.cx = doc.at("cx").get<double>();
    c.cy = doc.at("cy").get<double>();
    c.width = doc.at("width").get<int>();
    c.height = doc.at("height").get<int>();
    const auto r = doc.at("R").get<std::vector<double>>();
    const auto t = doc.at("t").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3)
      throw ConfigError("camera: R needs 9 numbers and t needs 3");
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        c.rotation(i, j) = r[static_cast<std::size_t>(3 * i + j)];
    c.translation = Vec3(t[0], t[1], t[2]);
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ConfigError(std::string("camera: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json rig_to_json(const std::vector<Camera> &cameras)
{
  nlohmann::json doc;
  doc["cameras"] = nlohmann::json::array();
  for (const auto &c : cameras)
    doc["cameras"].push_back(camera_to_json(c));
  return doc;
}

std::vector<Camera> rig_from_json(const nlohmann::json &doc)
{
  const nlohmann::json &list = doc.is_array() ? doc : doc.at("cameras");
  std::vector<Camera> cams;
  for (const auto &c : list)
    cams.push_back(camera_from_json(c));
  return cams;
}

void save_rig(const std::vector<Camera> &cameras, const std::filesystem::path &path)
{
  detail::write_file(path, rig_to_json(cameras).dump(1));
}

std::vector<Camera> load_rig(const std::filesystem::path &path)
{
  return rig_from_json(detail::parse_json(detail::read_file(path), "rig document " + path.string()));
}

nlohmann::json rig_layout_to_json(const RigLayout &l)
{
  return { { "kind", to_string(l.kind) },
           { "camera_count", l.camera_count },
           { "radius", l.radius },
           { "look_at", { l.look_at.x(), l.look_at.y(), l.look_at.z() } },
           { "elevations_deg", l.elevations_deg },
           { "width", l.width },
           { "height", l.height },
           { "horizontal_fov_deg", l.horizontal_fov_deg } };
}

RigLayout rig_layout_from_json(const nlohmann::json &doc)
{
  RigLayout l;
  try
  {
    if (doc.contains("kind"))
      l.kind = parse_rig_kind(doc.at("kind").get<std::string>());
    l.camera_count = doc.value("camera_count", l.camera_count);
    l.radius = doc.value("radius", l.radius);
    if (doc.contains("look_at"))
    {
      const auto v = doc.at("look_at").get<std::vector<double>>();
      if (v.size() != 3)
        throw ConfigError("rig: look_at needs 3 numbers");
      l.look_at = Vec3(v[0], v[1], v[2]);
    }
    l.elevations_deg = doc.value("elevations_deg", l.elevations_deg);
    l.width = doc.value("width", l.width);
    l.height = doc.value("height", l.height);
    l.horizontal_fov_deg = doc.value("horizontal_fov_deg", l.horizontal_fov_deg);
  }
  catch (const nlohmann::json::type_error &e)
  {
    throw ConfigError(std::string("rig: ") + e.what());
  }
  return l;
}
}  // namespace plantrec
