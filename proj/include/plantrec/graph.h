#pragma once

#include "plantrec/common.h"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace plantrec
{
/// Directed tree edge, parent is the endpoint closer to the root.
struct Edge
{
  int parent = 0;
  int child = 0;
  bool operator==(const Edge &) const = default;
};

/// Rooted tree of 3D vertices. Vertex ids are indices into `vertices`.
/// Used for extracted skeletons, raw particle traces and ground-truth plant skeletons.
struct SkeletonGraph
{
  std::vector<Vec3> vertices;
  std::vector<Edge> edges;
  int root = 0;
  /// Source particle per vertex (-1 for none). Empty unless the graph came from a particle trace.
  std::vector<int> provenance;

  std::size_t size() const { return vertices.size(); }
  bool operator==(const SkeletonGraph &) const = default;
};

/// Parent/children view of a validated tree.
struct TreeTopology
{
  std::vector<int> parent;                 // -1 for the root
  std::vector<std::vector<int>> children;  // sorted ascending
  std::vector<int> bfs_order;              // root first
};

/// Returns an empty string when (n, edges, root) is a single connected tree rooted at
/// root, otherwise a description of the first violation found.
std::string tree_violation(std::size_t vertex_count, const std::vector<Edge> &edges, int root);
inline bool is_tree(const SkeletonGraph &g) { return tree_violation(g.size(), g.edges, g.root).empty(); }

/// Throws StructuralError unless the graph is a valid rooted tree.
void require_tree(std::size_t vertex_count, const std::vector<Edge> &edges, int root);

/// Builds the parent/children view. Undirected edges are re-oriented away from the root.
TreeTopology topology(std::size_t vertex_count, const std::vector<Edge> &edges, int root);
inline TreeTopology topology(const SkeletonGraph &g) { return topology(g.size(), g.edges, g.root); }

std::vector<int> degrees(std::size_t vertex_count, const std::vector<Edge> &edges);

/// Number of vertices with three or more incident edges.
/// Throws StructuralError when the input is not a tree.
int joint_count(std::size_t vertex_count, const std::vector<Edge> &edges, int root);
inline int joint_count(const SkeletonGraph &g) { return joint_count(g.size(), g.edges, g.root); }

/// Drops vertices not reachable from the root and renumbers the rest in BFS order.
/// The result has the root at index 0.
SkeletonGraph compact(const SkeletonGraph &g, const std::vector<bool> &keep);

// skeleton document: {nodes:[{id,x,y,z}], edges:[[a,b]], root}
void save_skeleton(const SkeletonGraph &g, const std::filesystem::path &path);
SkeletonGraph load_skeleton(const std::filesystem::path &path);
std::string skeleton_to_json_string(const SkeletonGraph &g);
SkeletonGraph skeleton_from_json_string(const std::string &text);

/// ASCII PLY with vertex and edge elements.
void save_skeleton_ply(const SkeletonGraph &g, const std::filesystem::path &path);
}  // namespace plantrec
