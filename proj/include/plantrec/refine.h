#pragma once

#include "plantrec/aggregate.h"
#include "plantrec/graph.h"
#include "plantrec/particleflow.h"

#include <json.hpp>

namespace plantrec
{
struct RefineConfig
{
  int iterations = 3;
  double unify_radius = 2.5;
  double prune_weight_threshold = 0.3;
  double ridge_search_radius = 2.0;
  double ridge_step = 0.5;           ///< radial increment of the ridge stencil
  double min_branch_length = 10.0;    ///< tip chains shorter than this are cut at their joint
  double link_radius = 5.0;          ///< unified vertices this close may be joined when re-extracting the tree

  /// Defaults scaled to the grid: unify 2.5, ridge 2, ridge step 0.5, link 5 and min branch
  /// length 10 voxel spacings.
  static RefineConfig defaults_for(const GridSpec &grid);
  void validate() const;
};

/// Moves every vertex except the root and the tips to the mean of itself and its neighbors.
SkeletonGraph smooth(const SkeletonGraph &graph);

/// Moves every non-root vertex to the highest-weight sample of an 8-direction stencil in
/// the plane perpendicular to its local branch direction. The current position is the
/// first candidate and only a weight higher by more than 1e-12 displaces it.
SkeletonGraph snap_to_ridge(const SkeletonGraph &graph, const VoxelGrid &grid, const RefineConfig &cfg);

/// Unifies vertices within unify_radius (greedy clustering in BFS order, root kept in
/// place) and re-extracts a shortest-path tree from the root over the traced edges plus
/// links between vertices within link_radius. An edge costs its length over the weight at
/// its midpoint. Then deletes subtrees whose mean weight is below prune_weight_threshold
/// and cuts tip chains shorter than min_branch_length.
/// Throws ReconstructionError when nothing but the root would remain
SkeletonGraph simplify(const SkeletonGraph &graph, const VoxelGrid &grid, const RefineConfig &cfg);

/// smooth -> snap_to_ridge -> simplify, cfg.iterations times.
SkeletonGraph refine_loop(const RawTraceGraph &raw, const VoxelGrid &grid, const RefineConfig &cfg);

nlohmann::json refine_config_to_json(const RefineConfig &cfg);
RefineConfig refine_config_from_json(const nlohmann::json &doc, RefineConfig base);
}  // namespace plantrec
