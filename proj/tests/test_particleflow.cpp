#include "plantrec/particleflow.h"
#include "support.h"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace plantrec;
using testsupport::analytic_grid;
using testsupport::distance_to_segment;

namespace
{
const Vec3 kBottom(16, 3, 16);
const Vec3 kFork(16, 16, 16);
const Vec3 kLeftTip(8, 26, 16);
const Vec3 kRightTip(24, 26, 16);

double tube(double d) { return std::exp(-0.5 * d * d); }

VoxelGrid line_grid()
{
  return analytic_grid({ 32, 32, 32 }, Vec3::Zero(), 1.0,
                       [](const Vec3 &p) { return tube(distance_to_segment(p, kBottom, Vec3(16, 28, 16))); });
}

VoxelGrid y_grid()
{
  return analytic_grid({ 32, 32, 32 }, Vec3::Zero(), 1.0, [](const Vec3 &p) {
    const double d = std::min({ distance_to_segment(p, kBottom, kFork), distance_to_segment(p, kFork, kLeftTip),
                                distance_to_segment(p, kFork, kRightTip) });
    return tube(d);
  });
}

Particle at(int id, const Vec3 &p)
{
  Particle q;
  q.id = id;
  q.position = p;
  q.trail = { p };
  return q;
}

double angle_deg(const Vec3 &a, const Vec3 &b)
{
  return std::acos(std::min(1.0, std::abs(a.normalized().dot(b.normalized())))) * 180.0 / std::numbers::pi;
}
}  // namespace

TEST_CASE("blend weights")
{
  const auto full = blend_weights(2.0, 2.0, 0.1);
  CHECK(full.center == 0.9);
  CHECK(full.axis == 0.0);
  CHECK(full.root == 0.1);
  const auto none = blend_weights(0.0, 3.0, 0.1);
  CHECK(none.center == 0.0);
  CHECK(none.axis == 1.0 - 0.1);
  const auto outside = blend_weights(5.0, 3.0, 0.2);
  CHECK(outside.center == 1.0 - 0.2);
  CHECK(outside.axis == 0.0);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i)
  {
    const double r = rng.uniform(0.01, 10.0);
    const auto w = blend_weights(rng.uniform(0.0, r), r, rng.uniform(0.0, 0.99));
    CHECK(w.center + w.axis + w.root == 1.0);
    CHECK(w.center >= 0.0);
    CHECK(w.axis >= 0.0);
  }
}

TEST_CASE("root finding")
{
  auto one = analytic_grid({ 8, 8, 8 }, Vec3::Zero(), 1.0, [](const Vec3 &p) { return p == Vec3(3, 5, 2) ? 1.0 : 0.0; });
  CHECK(find_root(one, 0.5) == Vec3(3, 5, 2));

  auto two = analytic_grid({ 9, 8, 8 }, Vec3::Zero(), 1.0, [](const Vec3 &p) {
    if (p.y() == 1 && p.z() == 4 && (p.x() == 4 || p.x() == 1))
      return 1.0;
    if (p.y() == 5 && p.z() == 4 && (p.x() >= 3 && p.x() <= 5))
      return 1.0;
    return 0.0;
  });
  CHECK(find_root(two, 0.5) == Vec3(4, 1, 4));

  auto empty = analytic_grid({ 4, 4, 4 }, Vec3::Zero(), 1.0, [](const Vec3 &) { return 0.2; });
  CHECK_THROWS_AS(find_root(empty, 0.5), EmptyVolumeError);
  CHECK((find_root(line_grid(), 0.5) - kBottom).norm() <= 1.0);
}

TEST_CASE("seeding follows the weights")
{
  auto one = analytic_grid({ 6, 6, 6 }, Vec3::Zero(), 1.0, [](const Vec3 &p) { return p == Vec3(2, 3, 4) ? 1.0 : 0.0; });
  for (const auto &q : seed_particles(one, 200, 4))
  {
    CHECK((q.position - Vec3(2, 3, 4)).cwiseAbs().maxCoeff() <= 0.5);
    CHECK(q.trail.size() == 1);
    CHECK(q.trail.back() == q.position);
  }

  auto pair = analytic_grid({ 4, 1, 1 }, Vec3::Zero(), 1.0, [](const Vec3 &p) {
    return p.x() == 0 ? 0.8 : p.x() == 3 ? 0.2 : 0.0;
  });
  const auto seeds = seed_particles(pair, 10000, 9);
  int first = 0;
  for (const auto &q : seeds)
    first += q.position.x() < 1.5;
  const double tol = 3.0 * std::sqrt(10000 * 0.16);
  CHECK(std::abs(first - 8000) <= tol);

  const auto again = seed_particles(pair, 10000, 9);
  for (std::size_t i = 0; i < seeds.size(); ++i)
    CHECK(again[i].position == seeds[i].position);

  auto zero = analytic_grid({ 3, 3, 3 }, Vec3::Zero(), 1.0, [](const Vec3 &) { return 0.0; });
  CHECK_THROWS_AS(seed_particles(zero, 10, 1), EmptyVolumeError);
}

TEST_CASE("local forces")
{
  const Vec3 c(8, 8, 8);
  auto sym = analytic_grid({ 17, 17, 17 }, Vec3::Zero(), 1.0, [&](const Vec3 &p) { return std::exp(-(p - c).squaredNorm() / 8); });
  const auto s = local_forces(sym, c, 3.0, Vec3(8, 0, 8));
  REQUIRE(s);
  CHECK(s->center_distance < 1e-9);
  CHECK(s->to_center == Vec3::Zero());

  const auto line = local_forces(line_grid(), Vec3(16.3, 15.2, 15.8), 3.0, kBottom);
  REQUIRE(line);
  CHECK(angle_deg(line->along_axis, Vec3::UnitY()) < 5.0);
  CHECK(line->along_axis.y() < 0.0);

  auto single = analytic_grid({ 9, 9, 9 }, Vec3::Zero(), 1.0, [](const Vec3 &p) { return p == Vec3(6, 4, 4) ? 1.0 : 0.0; });
  const auto one = local_forces(single, Vec3(4, 4, 4), 3.0, Vec3(4, 0, 4));
  REQUIRE(one);
  CHECK((one->to_center - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK(one->center_distance == doctest::Approx(2.0).epsilon(1e-12));

  auto blank = analytic_grid({ 9, 9, 9 }, Vec3::Zero(), 1.0, [](const Vec3 &) { return 0.0; });
  CHECK_FALSE(local_forces(blank, Vec3(4, 4, 4), 3.0, Vec3::Zero()));
}

TEST_CASE("without center or axis force the step heads for the root")
{
  LocalForces none;
  const Vec3 p(3, 7, -2), root(0, 0, 0);
  const Vec3 f = blended_force(none, p, root, 2.0, 0.1);
  CHECK((f.normalized() - (root - p).normalized()).norm() < 1e-15);
}

TEST_CASE("steps have exact length; capture and death")
{
  const auto grid = line_grid();
  const Vec3 root = find_root(grid, 0.5);
  FlowConfig cfg = FlowConfig::defaults_for(grid.spec);
  Particle q = at(0, Vec3(16.2, 20.0, 15.9));
  for (int i = 0; i < 5 && q.alive(); ++i)
  {
    const Vec3 before = q.position;
    step_particle(q, grid, root, cfg);
    if (q.state != Particle::State::dead)
      CHECK(std::abs((q.position - before).norm() - cfg.step_length) < 1e-9);
    CHECK(q.trail.back() == q.position);
  }

  Particle near = at(1, root + Vec3(0.5, 0.5, 0));
  step_particle(near, grid, root, cfg);
  CHECK(near.state == Particle::State::captured);
  CHECK(near.trail.size() == 1);

  Particle lost = at(2, Vec3(2, 20, 2));
  step_particle(lost, grid, root, cfg);
  CHECK(lost.state == Particle::State::dead);
}

TEST_CASE("particles on a straight line reach the root")
{
  const auto grid = line_grid();
  const Vec3 root = find_root(grid, 0.5);
  FlowConfig cfg = FlowConfig::defaults_for(grid.spec);
  Rng rng(3);
  int captured = 0;
  const int n = 200;
  for (int i = 0; i < n; ++i)
  {
    Particle q = at(i, Vec3(16 + rng.uniform(-0.5, 0.5), rng.uniform(6, 28), 16 + rng.uniform(-0.5, 0.5)));
    for (int s = 0; s < cfg.max_steps && q.alive(); ++s)
      step_particle(q, grid, root, cfg);
    captured += q.state == Particle::State::captured;
  }
  CHECK(captured >= 0.9 * n);
}

TEST_CASE("one particle traces a single chain")
{
  const auto grid = line_grid();
  const Vec3 root = find_root(grid, 0.5);
  const auto raw = trace_particles(grid, { at(0, Vec3(16, 25, 16)) }, root, FlowConfig::defaults_for(grid.spec));
  CHECK(testsupport::oracle_is_tree(raw));
  CHECK(joint_count(raw) == 0);
  CHECK(raw.size() > 10);
  CHECK(raw.provenance.size() == raw.size());
}

TEST_CASE("two tips of a Y unify into one joint")
{
  const auto grid = y_grid();
  const Vec3 root = find_root(grid, 0.5);
  const auto raw = trace_particles(grid, { at(0, kLeftTip), at(1, kRightTip) }, root, FlowConfig::defaults_for(grid.spec));
  CHECK(testsupport::oracle_is_tree(raw));
  CHECK(joint_count(raw) == 1);
  CHECK(testsupport::oracle_joints(raw) == 1);
}

TEST_CASE("nothing reaching the root is a reconstruction failure")
{
  const auto grid = line_grid();
  FlowConfig cfg = FlowConfig::defaults_for(grid.spec);
  CHECK_THROWS_AS(trace_particles(grid, { at(0, Vec3(2, 20, 2)) }, find_root(grid, 0.5), cfg), ReconstructionError);
}

TEST_CASE("simulation is a deterministic tree for any thread count")
{
  const auto grid = y_grid();
  FlowConfig cfg = FlowConfig::defaults_for(grid.spec);
  cfg.particle_count = 400;
  const auto a = simulate(grid, cfg, 17);
  CHECK(testsupport::oracle_is_tree(a));
  CHECK(simulate(grid, cfg, 17) == a);
  cfg.threads = 4;
  CHECK(simulate(grid, cfg, 17) == a);
}

TEST_CASE("flow config validation and documents")
{
  FlowConfig cfg;
  cfg.lambda_r = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = FlowConfig{};
  cfg.radius = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = FlowConfig{};
  cfg.particle_count = 123;
  cfg.lambda_r = 0.25;
  const auto back = flow_config_from_json(flow_config_to_json(cfg), FlowConfig{});
  CHECK(back.particle_count == 123);
  CHECK(back.lambda_r == 0.25);
}
