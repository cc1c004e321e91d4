#include "plantrec/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace plantrec
{
namespace
{
/// Exact nearest neighbor queries via a sweep over points sorted by x.
class SweepIndex
{
public:
  explicit SweepIndex(const std::vector<Vec3> &points) : points_(points), order_(points.size())
  {
    std::iota(order_.begin(), order_.end(), 0);
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      const Vec3 &pa = points_[a];
      const Vec3 &pb = points_[b];
      return std::tie(pa.x(), pa.y(), pa.z(), a) < std::tie(pb.x(), pb.y(), pb.z(), b);
    });
    xs_.reserve(order_.size());
    for (std::size_t i : order_)
      xs_.push_back(points_[i].x());
  }

  double nearest_distance(const Vec3 &q) const
  {
    const std::size_t start =
      static_cast<std::size_t>(std::lower_bound(xs_.begin(), xs_.end(), q.x()) - xs_.begin());
    double best2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = start; i < xs_.size(); ++i)
    {
      const double dx = xs_[i] - q.x();
      if (dx * dx > best2)
        break;
      best2 = std::min(best2, (points_[order_[i]] - q).squaredNorm());
    }
    for (std::size_t i = start; i-- > 0;)
    {
      const double dx = q.x() - xs_[i];
      if (dx * dx > best2)
        break;
      best2 = std::min(best2, (points_[order_[i]] - q).squaredNorm());
    }
    return std::sqrt(best2);
  }

private:
  const std::vector<Vec3> &points_;
  std::vector<std::size_t> order_;
  std::vector<double> xs_;
};

double mean_nearest(const std::vector<Vec3> &from, const std::vector<Vec3> &to)
{
  const SweepIndex index(to);
  double sum = 0.0;
  for (const auto &p : from)
    sum += index.nearest_distance(p);
  return sum / static_cast<double>(from.size());
}
}  // namespace

PointSet sample_edge_points(const SkeletonGraph &graph, double spacing)
{
  if (!(spacing > 0.0))
    throw UsageError("sample_edge_points: spacing must be > 0");
  if (graph.edges.empty())
    throw UsageError("sample_edge_points: graph has no edges");
  PointSet out;
  out.source_spacing = spacing;
  out.points = graph.vertices;
  for (const auto &e : graph.edges)
  {
    const Vec3 &a = graph.vertices[static_cast<std::size_t>(e.parent)];
    const Vec3 &b = graph.vertices[static_cast<std::size_t>(e.child)];
    const double len = (b - a).norm();
    for (int k = 1; k * spacing < len - 1e-9; ++k)
      out.points.push_back(a + (b - a) * (k * spacing / len));
  }
  return out;
}

double geometric_error(const PointSet &g, const PointSet &t)
{
  if (g.points.empty() || t.points.empty())
    throw UsageError("geometric_error: point sets must be non-empty");
  return 0.5 * (mean_nearest(g.points, t.points) + mean_nearest(t.points, g.points));
}

int structure_error(const SkeletonGraph &g, const SkeletonGraph &t)
{
  return std::abs(joint_count(g) - joint_count(t));
}

double bounding_diagonal(const SkeletonGraph &graph)
{
  if (graph.vertices.empty())
    return 0.0;
  Vec3 lo = graph.vertices.front();
  Vec3 hi = lo;
  for (const auto &p : graph.vertices)
  {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

Evaluation evaluate(const SkeletonGraph &generated, const SkeletonGraph &truth, double spacing_fraction)
{
  Evaluation ev;
  ev.diagonal = bounding_diagonal(truth);
  if (!(ev.diagonal > 0.0))
    throw UsageError("evaluate: ground-truth skeleton has zero extent");
  ev.spacing = spacing_fraction * ev.diagonal;
  const auto g = sample_edge_points(generated, ev.spacing);
  const auto t = sample_edge_points(truth, ev.spacing);
  ev.geometric_error = geometric_error(g, t);
  ev.geometric_error_normalized = ev.geometric_error / ev.diagonal;
  ev.joints_generated = joint_count(generated);
  ev.joints_truth = joint_count(truth);
  ev.structure_error = std::abs(ev.joints_generated - ev.joints_truth);
  return ev;
}
}  // namespace plantrec
