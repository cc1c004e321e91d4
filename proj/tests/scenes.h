#pragma once

#include "plantrec/aggregate.h"

#include <vector>

namespace testsupport
{
using namespace plantrec;

struct Scene
{
  std::vector<ProbMap2D> maps;
  std::vector<Camera> cams;
  AggregateConfig cfg;
};

/// Random cameras around a unit cube grid with random maps; a fraction of pixels is zero.
inline Scene random_scene(std::uint64_t seed, int views, int res, double zero_fraction = 0.2)
{
  Rng rng(seed);
  Scene s;
  s.cfg.grid.dims = { res, res, res };
  s.cfg.grid.spacing = 1.0 / res;
  s.cfg.grid.origin = Vec3::Constant(-0.5 + 0.5 / res);
  for (int v = 0; v < views; ++v)
  {
    const double az = rng.uniform(0.0, 6.283185307179586);
    const double el = rng.uniform(-0.6, 1.2);
    const double r = rng.uniform(1.2, 2.5);
    const Vec3 eye(r * std::cos(el) * std::cos(az), r * std::sin(el), r * std::cos(el) * std::sin(az));
    const Vec3 target(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
    const int w = 20 + static_cast<int>(rng.index(30));
    const int h = 20 + static_cast<int>(rng.index(30));
    s.cams.push_back(look_at_camera(eye, target, w, h, rng.uniform(25.0, 60.0)));
    ProbMap2D m(w, h);
    for (auto &val : m.values)
      val = rng.bernoulli(zero_fraction) ? 0.0 : rng.uniform();
    s.maps.push_back(m);
  }
  return s;
}
}  // namespace testsupport
