#pragma once

#include "plantrec/graph.h"

namespace plantrec
{
struct PointSet
{
  std::vector<Vec3> points;
  double source_spacing = 0.0;
};

/// Every graph vertex once, plus interior points at multiples of spacing along each edge.
/// Throws UsageError on a graph without edges or spacing <= 0
PointSet sample_edge_points(const SkeletonGraph &graph, double spacing);

/// Symmetric mean nearest-neighbor distance between two point sets.
/// Throws UsageError when either set is empty
double geometric_error(const PointSet &g, const PointSet &t);

/// |joints(g) - joints(t)|, joints being vertices of degree >= 3.
int structure_error(const SkeletonGraph &g, const SkeletonGraph &t);

/// Bounding-box diagonal of the graph vertices.
double bounding_diagonal(const SkeletonGraph &graph);

struct Evaluation
{
  double geometric_error = 0.0;
  double geometric_error_normalized = 0.0;
  int structure_error = 0;
  int joints_generated = 0;
  int joints_truth = 0;
  double diagonal = 0.0;
  double spacing = 0.0;
};

/// Samples both graphs at spacing_fraction of the truth diagonal and computes both metrics.
Evaluation evaluate(const SkeletonGraph &generated, const SkeletonGraph &truth, double spacing_fraction = 0.005);
}  // namespace plantrec
