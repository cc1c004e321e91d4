#include "plantrec/probmap.h"

#include "io_util.h"

#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

namespace plantrec
{
namespace
{
constexpr double kNear = 1e-6;
constexpr int kLeafRimSamples = 24;

struct DepthBuffer
{
  int width;
  int height;
  std::vector<double> depth;
  DepthBuffer(int w, int h)
    : width(w)
    , height(h)
    , depth(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), std::numeric_limits<double>::infinity())
  {}
  void write(int x, int y, double z)
  {
    double &d = depth[static_cast<std::size_t>(y) * width + x];
    d = std::min(d, z);
  }
  bool hit(std::size_t i) const { return depth[i] < std::numeric_limits<double>::infinity(); }
};

/// Clips a camera-frame segment against the near plane. Returns false if fully behind.
bool clip_near(Vec3 &a, Vec3 &b, double &ra, double &rb)
{
  if (a.z() <= kNear && b.z() <= kNear)
    return false;
  auto cut = [&](Vec3 &p, double &rp, const Vec3 &q, double rq) {
    const double t = (kNear - p.z()) / (q.z() - p.z());
    p = p + t * (q - p);
    rp = rp + t * (rq - rp);
  };
  if (a.z() <= kNear)
    cut(a, ra, b, rb);
  else if (b.z() <= kNear)
    cut(b, rb, a, ra);
  return true;
}

void rasterize_segment(const Camera &cam, Vec3 a, Vec3 b, double ra, double rb, DepthBuffer &buffer)
{
  if (!clip_near(a, b, ra, rb))
    return;
  const Vec2 pa(cam.fx * a.x() / a.z() + cam.cx, cam.fy * a.y() / a.z() + cam.cy);
  const Vec2 pb(cam.fx * b.x() / b.z() + cam.cx, cam.fy * b.y() / b.z() + cam.cy);
  // projected radius, never thinner than one pixel across
  const double ha = std::max(cam.fx * ra / a.z(), 0.5);
  const double hb = std::max(cam.fx * rb / b.z(), 0.5);
  const double reach = std::max(ha, hb);
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(pa.x(), pb.x()) - reach)));
  const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max(pa.x(), pb.x()) + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(pa.y(), pb.y()) - reach)));
  const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max(pa.y(), pb.y()) + reach)));
  if (x0 > x1 || y0 > y1)
    return;
  const Vec2 ab = pb - pa;
  const double len2 = ab.squaredNorm();
  for (int y = y0; y <= y1; ++y)
  {
    for (int x = x0; x <= x1; ++x)
    {
      const Vec2 p(x, y);
      const double t = len2 > 0.0 ? std::clamp((p - pa).dot(ab) / len2, 0.0, 1.0) : 0.0;
      const double dist = (p - (pa + t * ab)).norm();
      if (dist > ha + t * (hb - ha))
        continue;
      // inverse depth is affine in screen space
      const double inv_z = (1.0 - t) / a.z() + t / b.z();
      buffer.write(x, y, 1.0 / inv_z);
    }
  }
}

void rasterize_leaf(const Camera &cam, const LeafDisc &leaf, DepthBuffer &buffer)
{
  const Vec3 c = cam.to_camera(leaf.center);
  const Vec3 n = cam.rotation * leaf.normal;
  // z extent of the disc in camera space
  const double reach = leaf.radius * std::sqrt(std::max(0.0, 1.0 - n.z() * n.z()));
  if (c.z() + reach <= kNear)
    return;
  int x0 = 0, x1 = cam.width - 1, y0 = 0, y1 = cam.height - 1;
  if (c.z() - reach > kNear)
  {
    const Vec3 u = (std::abs(n.x()) < 0.9 ? n.cross(Vec3::UnitX()) : n.cross(Vec3::UnitZ())).normalized();
    const Vec3 v = n.cross(u);
    double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
    double xmax = -xmin, ymax = -xmin;
    for (int k = 0; k < kLeafRimSamples; ++k)
    {
      const double a = 2.0 * std::numbers::pi * k / kLeafRimSamples;
      const Vec3 rim = c + leaf.radius * (std::cos(a) * u + std::sin(a) * v);
      const double px = cam.fx * rim.x() / rim.z() + cam.cx;
      const double py = cam.fy * rim.y() / rim.z() + cam.cy;
      xmin = std::min(xmin, px);
      xmax = std::max(xmax, px);
      ymin = std::min(ymin, py);
      ymax = std::max(ymax, py);
    }
    // the rim polygon slightly underestimates the ellipse
    x0 = std::max(0, static_cast<int>(std::floor(xmin)) - 1);
    x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(xmax)) + 1);
    y0 = std::max(0, static_cast<int>(std::floor(ymin)) - 1);
    y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(ymax)) + 1);
  }
  const double nc = n.dot(c);
  const double r2 = leaf.radius * leaf.radius;
  for (int y = y0; y <= y1; ++y)
  {
    for (int x = x0; x <= x1; ++x)
    {
      const Vec3 d((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
      const double nd = n.dot(d);
      if (std::abs(nd) < 1e-12)
        continue;
      const double t = nc / nd;
      if (t <= kNear)
        continue;
      if ((t * d - c).squaredNorm() <= r2)
        buffer.write(x, y, t);
    }
  }
}

BinaryMask box_majority(const BinaryMask &in, int radius)
{
  const int w = in.width, h = in.height;
  // summed-area table with a zero border
  std::vector<int> sat(static_cast<std::size_t>(w + 1) * static_cast<std::size_t>(h + 1), 0);
  auto S = [&](int x, int y) -> int & { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      S(x + 1, y + 1) = in.at(x, y) + S(x, y + 1) + S(x + 1, y) - S(x, y);
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y)
  {
    for (int x = 0; x < w; ++x)
    {
      const int xa = std::max(0, x - radius), xb = std::min(w, x + radius + 1);
      const int ya = std::max(0, y - radius), yb = std::min(h, y + radius + 1);
      const int sum = S(xb, yb) - S(xa, yb) - S(xb, ya) + S(xa, ya);
      const int area = (xb - xa) * (yb - ya);
      out.bits[static_cast<std::size_t>(y) * w + x] = 2 * sum >= area ? 1 : 0;
    }
  }
  return out;
}

void check_same_size(int w, int h, int w2, int h2, const char *what)
{
  if (w != w2 || h != h2)
    throw StructuralError(std::string(what) + ": raster dimensions differ (" + std::to_string(w) + "x" +
                          std::to_string(h) + " vs " + std::to_string(w2) + "x" + std::to_string(h2) + ")");
}

std::uint16_t quantize(double p)
{
  return static_cast<std::uint16_t>(std::lround(std::clamp(p, 0.0, 1.0) * 65535.0));
}

struct PgmHeader
{
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

PgmHeader parse_pgm_header(std::string_view bytes)
{
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError("PGM: missing P5 magic", 0);
  pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size())
    {
      const char ch = bytes[pos];
      if (ch == '#')
      {
        while (pos < bytes.size() && bytes[pos] != '\n')
          ++pos;
      }
      else if (std::isspace(static_cast<unsigned char>(ch)))
        ++pos;
      else
        break;
    }
  };
  auto read_int = [&](const char *field) {
    skip_space();
    const std::size_t start = pos;
    long long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
    {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1 << 30))
        throw FormatError(std::string("PGM: ") + field + " too large", start);
      ++pos;
    }
    if (pos == start)
      throw FormatError(std::string("PGM: expected ") + field, start);
    return static_cast<int>(v);
  };
  PgmHeader h;
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("PGM: expected whitespace after magic", pos);
  h.width = read_int("width");
  h.height = read_int("height");
  const std::size_t maxval_at = pos;
  h.maxval = read_int("maxval");
  if (h.width < 1 || h.height < 1)
    throw FormatError("PGM: dimensions must be positive", maxval_at);
  if (h.maxval < 1 || h.maxval > 65535)
    throw FormatError("PGM: maxval must lie in [1, 65535]", maxval_at);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("PGM: expected single whitespace before raster", pos);
  h.data_offset = pos + 1;
  const std::size_t bps = h.maxval < 256 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height) * bps;
  if (bytes.size() - h.data_offset < need)
    throw FormatError("PGM: raster truncated, expected " + std::to_string(need) + " bytes", bytes.size());
  return h;
}

/// Sample values in raster order, validated against maxval.
std::vector<int> pgm_samples(std::string_view bytes, const PgmHeader &h)
{
  const std::size_t n = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
  std::vector<int> out(n);
  const bool wide = h.maxval >= 256;
  for (std::size_t i = 0; i < n; ++i)
  {
    const std::size_t at = h.data_offset + (wide ? 2 * i : i);
    const int v = wide ? (static_cast<unsigned char>(bytes[at]) << 8) | static_cast<unsigned char>(bytes[at + 1])
                       : static_cast<unsigned char>(bytes[at]);
    if (v > h.maxval)
      throw FormatError("PGM: sample exceeds maxval", at);
    out[i] = v;
  }
  return out;
}
}  // namespace

std::size_t BinaryMask::count() const
{
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{ 1 }));
}

RenderedMasks render_masks(const PlantModel &plant, const Camera &camera)
{
  camera.validate();
  const int w = camera.width, h = camera.height;
  DepthBuffer branch(w, h), leaves(w, h);
  for (const auto &e : plant.edges)
  {
    const auto &a = plant.nodes[static_cast<std::size_t>(e.parent)];
    const auto &b = plant.nodes[static_cast<std::size_t>(e.child)];
    rasterize_segment(camera, camera.to_camera(a.position), camera.to_camera(b.position), a.radius, b.radius, branch);
  }
  for (const auto &leaf : plant.leaves)
    rasterize_leaf(camera, leaf, leaves);

  RenderedMasks out{ BinaryMask(w, h), BinaryMask(w, h), BinaryMask(w, h), false };
  std::size_t any = 0;
  for (std::size_t i = 0; i < branch.depth.size(); ++i)
  {
    const bool b = branch.hit(i);
    const bool l = leaves.hit(i);
    out.full_branch.bits[i] = b;
    out.visible_branch.bits[i] = b && branch.depth[i] < leaves.depth[i];
    out.whole_plant.bits[i] = b || l;
    any += b || l;
  }
  out.out_of_frame = any == 0;
  return out;
}

void InferenceSimConfig::validate() const
{
  if (n_samples < 1)
    throw ConfigError("inference: n_samples must be >= 1");
  auto prob = [](double p, const char *field) {
    if (!(p >= 0.0 && p <= 1.0))
      throw ConfigError(std::string("inference: ") + field + " must lie in [0, 1]");
  };
  prob(occluded_recall, "occluded_recall");
  prob(visible_recall, "visible_recall");
  prob(false_positive_rate, "false_positive_rate");
  if (blur_radius < 0)
    throw ConfigError("inference: blur_radius must be >= 0");
}

BinaryMask simulate_inference_sample(const BinaryMask &full, const BinaryMask &visible, const InferenceSimConfig &cfg,
                                     std::uint64_t seed, std::uint64_t sample_index)
{
  cfg.validate();
  check_same_size(full.width, full.height, visible.width, visible.height, "inference sample");
  Rng rng(derive_seed(seed, sample_index, 0x5a17));
  BinaryMask out(full.width, full.height);
  const std::size_t n = full.bits.size();
  for (std::size_t i = 0; i < n; ++i)
  {
    if (visible.bits[i])
      out.bits[i] = rng.uniform() < cfg.visible_recall;
    else if (full.bits[i])
      out.bits[i] = rng.uniform() < cfg.occluded_recall;
  }
  // background false positives, visiting selected pixels with geometric skips
  if (cfg.false_positive_rate > 0.0)
  {
    const double log_q = std::log1p(-cfg.false_positive_rate);
    std::size_t pos = 0;
    while (true)
    {
      std::size_t skip = 0;
      if (cfg.false_positive_rate < 1.0)
      {
        const double gap = std::floor(std::log1p(-rng.uniform()) / log_q);
        if (gap >= static_cast<double>(n))
          break;
        skip = static_cast<std::size_t>(gap);
      }
      pos += skip;
      if (pos >= n)
        break;
      if (!full.bits[pos] && !visible.bits[pos])
        out.bits[pos] = 1;
      ++pos;
    }
  }
  if (cfg.blur_radius > 0)
    out = box_majority(out, cfg.blur_radius);
  return out;
}

ProbMap2D estimate_prob_map(std::span<const BinaryMask> samples)
{
  if (samples.empty())
    throw UsageError("estimate_prob_map: no samples");
  const int w = samples.front().width, h = samples.front().height;
  std::vector<int> counts(samples.front().bits.size(), 0);
  for (const auto &s : samples)
  {
    check_same_size(w, h, s.width, s.height, "estimate_prob_map");
    for (std::size_t i = 0; i < counts.size(); ++i)
      counts[i] += s.bits[i];
  }
  ProbMap2D map(w, h);
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    map.values[i] = counts[i] / n;
  return map;
}

ProbMap2D simulate_prob_map(const BinaryMask &full, const BinaryMask &visible, const InferenceSimConfig &cfg,
                            std::uint64_t seed)
{
  cfg.validate();
  check_same_size(full.width, full.height, visible.width, visible.height, "simulate_prob_map");
  std::vector<int> counts(full.bits.size(), 0);
  for (int s = 0; s < cfg.n_samples; ++s)
  {
    const BinaryMask sample = simulate_inference_sample(full, visible, cfg, seed, static_cast<std::uint64_t>(s));
    for (std::size_t i = 0; i < counts.size(); ++i)
      counts[i] += sample.bits[i];
  }
  ProbMap2D map(full.width, full.height);
  const double n = static_cast<double>(cfg.n_samples);
  for (std::size_t i = 0; i < counts.size(); ++i)
    map.values[i] = counts[i] / n;
  return map;
}

ProbMap2D mask_to_prob_map(const BinaryMask &mask)
{
  ProbMap2D map(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    map.values[i] = mask.bits[i] ? 1.0 : 0.0;
  return map;
}

ProbMap2D quantize_prob_map(const ProbMap2D &map)
{
  ProbMap2D out = map;
  for (auto &v : out.values)
    v = quantize(v) / 65535.0;
  return out;
}

std::string encode_prob_map(const ProbMap2D &map)
{
  std::string bytes = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n65535\n";
  const std::size_t header = bytes.size();
  bytes.resize(header + 2 * map.values.size());
  for (std::size_t i = 0; i < map.values.size(); ++i)
  {
    const std::uint16_t q = quantize(map.values[i]);
    bytes[header + 2 * i] = static_cast<char>(q >> 8);
    bytes[header + 2 * i + 1] = static_cast<char>(q & 0xff);
  }
  return bytes;
}

ProbMap2D parse_prob_map(std::string_view bytes)
{
  const PgmHeader h = parse_pgm_header(bytes);
  const auto samples = pgm_samples(bytes, h);
  ProbMap2D map(h.width, h.height);
  for (std::size_t i = 0; i < samples.size(); ++i)
    map.values[i] = static_cast<double>(samples[i]) / h.maxval;
  return map;
}

void save_prob_map(const ProbMap2D &map, const std::filesystem::path &path)
{
  detail::write_file(path, encode_prob_map(map));
}

ProbMap2D load_prob_map(const std::filesystem::path &path)
{
  return parse_prob_map(detail::read_file(path));
}

void save_mask(const BinaryMask &mask, const std::filesystem::path &path)
{
  std::string bytes = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n1\n";
  bytes.reserve(bytes.size() + mask.bits.size());
  for (auto b : mask.bits)
    bytes.push_back(static_cast<char>(b ? 1 : 0));
  detail::write_file(path, bytes);
}

BinaryMask load_mask(const std::filesystem::path &path)
{
  const std::string bytes = detail::read_file(path);
  const PgmHeader h = parse_pgm_header(bytes);
  const auto samples = pgm_samples(bytes, h);
  BinaryMask mask(h.width, h.height);
  for (std::size_t i = 0; i < samples.size(); ++i)
    mask.bits[i] = samples[i] > 0;
  return mask;
}

nlohmann::json inference_config_to_json(const InferenceSimConfig &c)
{
  return { { "n_samples", c.n_samples },
           { "occluded_recall", c.occluded_recall },
           { "visible_recall", c.visible_recall },
           { "false_positive_rate", c.false_positive_rate },
           { "blur_radius", c.blur_radius } };
}

InferenceSimConfig inference_config_from_json(const nlohmann::json &doc)
{
  InferenceSimConfig c;
  try
  {
    c.n_samples = doc.value("n_samples", c.n_samples);
    c.occluded_recall = doc.value("occluded_recall", c.occluded_recall);
    c.visible_recall = doc.value("visible_recall", c.visible_recall);
    c.false_positive_rate = doc.value("false_positive_rate", c.false_positive_rate);
    c.blur_radius = doc.value("blur_radius", c.blur_radius);
  }
  catch (const nlohmann::json::type_error &e)
  {
    throw ConfigError(std::string("inference: ") + e.what());
  }
  return c;
}
}  // namespace plantrec
