#pragma once

#include "plantrec/aggregate.h"

#include <cmath>
#include <optional>

namespace testsupport
{
using plantrec::Camera;
using plantrec::ProbMap2D;
using plantrec::Vec3;

/// Direct bilinear lookup, written out without the library helpers.
inline std::optional<double> oracle_bilinear(const ProbMap2D &m, double u, double v)
{
  if (u < 0.0 || v < 0.0 || u > m.width - 1 || v > m.height - 1)
    return std::nullopt;
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const int x1 = std::min(x0 + 1, m.width - 1);
  const int y1 = std::min(y0 + 1, m.height - 1);
  const double a = u - x0;
  const double b = v - y0;
  auto px = [&](int x, int y) { return m.values[static_cast<std::size_t>(y) * static_cast<std::size_t>(m.width) + static_cast<std::size_t>(x)]; };
  return (1 - a) * (1 - b) * px(x0, y0) + a * (1 - b) * px(x1, y0) + (1 - a) * b * px(x0, y1) + a * b * px(x1, y1);
}

/// Product of floored per-view probabilities, no logarithms.
inline double oracle_product(const Vec3 &x, const std::vector<ProbMap2D> &maps, const std::vector<Camera> &cams,
                             double eps, bool skip_out_of_frame)
{
  double prod = 1.0;
  for (std::size_t v = 0; v < maps.size(); ++v)
  {
    const Camera &c = cams[v];
    const Vec3 pc = c.rotation * x + c.translation;
    if (pc.z() <= 0.0)
    {
      prod *= eps;
      continue;
    }
    const auto p = oracle_bilinear(maps[v], c.fx * pc.x() / pc.z() + c.cx, c.fy * pc.y() / pc.z() + c.cy);
    if (!p)
    {
      if (!skip_out_of_frame)
        prod *= eps;
      continue;
    }
    prod *= std::max(eps, *p);
  }
  return prod;
}
}  // namespace testsupport
