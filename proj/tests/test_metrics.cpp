#include "plantrec/metrics.h"
#include "support.h"

#include <doctest.h>

#include <limits>

using namespace plantrec;

namespace
{
double brute_one_way(const std::vector<Vec3> &a, const std::vector<Vec3> &b)
{
  double sum = 0.0;
  for (const auto &p : a)
  {
    double best = std::numeric_limits<double>::infinity();
    for (const auto &q : b)
      best = std::min(best, (p - q).norm());
    sum += best;
  }
  return sum / static_cast<double>(a.size());
}

PointSet random_set(Rng &rng, int n)
{
  PointSet s;
  for (int i = 0; i < n; ++i)
    s.points.push_back(Vec3(rng.uniform(-1, 1), rng.uniform(0, 2), rng.uniform(-1, 1)));
  return s;
}
}  // namespace

TEST_CASE("geometric error matches brute force and is symmetric")
{
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial)
  {
    const auto g = random_set(rng, 50 + trial);
    const auto t = random_set(rng, 80);
    const double expect = 0.5 * (brute_one_way(g.points, t.points) + brute_one_way(t.points, g.points));
    CHECK(std::abs(geometric_error(g, t) - expect) <= 1e-12);
    CHECK(geometric_error(g, t) == geometric_error(t, g));
    CHECK(geometric_error(g, g) == 0.0);
  }
  CHECK_THROWS_AS(geometric_error(PointSet{}, random_set(rng, 3)), UsageError);
}

TEST_CASE("hand-computed geometric error")
{
  PointSet a{ { Vec3(0, 0, 0), Vec3(1, 0, 0) }, 0.0 };
  PointSet b{ { Vec3(0, 1, 0) }, 0.0 };
  // a -> b: 1 and sqrt(2); b -> a: 1
  CHECK(geometric_error(a, b) == doctest::Approx(0.5 * ((1 + std::sqrt(2.0)) / 2 + 1)).epsilon(1e-14));
}

TEST_CASE("edge sampling")
{
  const auto g = testsupport::chain({ Vec3(0, 0, 0), Vec3(1, 0, 0) });
  const auto s = sample_edge_points(g, 0.25);
  CHECK(s.points.size() == 5);
  CHECK(s.source_spacing == 0.25);
  const auto coarse = sample_edge_points(g, 0.3);
  CHECK(coarse.points.size() == 5);  // 0, 0.3, 0.6, 0.9, 1

  SkeletonGraph lone;
  lone.vertices = { Vec3::Zero() };
  CHECK_THROWS_AS(sample_edge_points(lone, 0.1), UsageError);
  CHECK_THROWS_AS(sample_edge_points(g, 0.0), UsageError);
}

TEST_CASE("structure error and bounding diagonal")
{
  const auto y = testsupport::y_fixture();
  const auto line = testsupport::chain({ Vec3(0, 0, 0), Vec3(0, 1, 0) });
  CHECK(structure_error(y, line) == 1);
  CHECK(structure_error(line, y) == 1);
  CHECK(structure_error(y, y) == 0);
  CHECK(bounding_diagonal(y) == doctest::Approx(std::sqrt(0.36 + 1.96)));
}

TEST_CASE("evaluation normalizes by the truth diagonal")
{
  const auto truth = testsupport::y_fixture();
  auto shifted = truth;
  for (auto &v : shifted.vertices)
    v += Vec3(0.01, 0, 0);
  const auto e = evaluate(shifted, truth);
  CHECK(e.structure_error == 0);
  CHECK(e.joints_truth == 1);
  CHECK(e.spacing == doctest::Approx(0.005 * e.diagonal));
  CHECK(e.geometric_error_normalized == doctest::Approx(e.geometric_error / e.diagonal));
  CHECK(e.geometric_error <= 0.01 + 1e-12);

  auto big_truth = truth, big_gen = shifted;
  for (auto &v : big_truth.vertices)
    v *= 10;
  for (auto &v : big_gen.vertices)
    v *= 10;
  CHECK(evaluate(big_gen, big_truth).geometric_error_normalized == doctest::Approx(e.geometric_error_normalized).epsilon(1e-9));
  CHECK(evaluate(truth, truth).geometric_error == 0.0);
}
