#pragma once

#include "plantrec/aggregate.h"
#include "plantrec/graph.h"

#include <filesystem>
#include <numeric>
#include <string>

namespace testsupport
{
using plantrec::Vec3;

/// Union-find tree check written independently of the library's BFS validator.
inline bool oracle_is_tree(const plantrec::SkeletonGraph &g)
{
  const std::size_t n = g.vertices.size();
  if (n == 0 || g.root < 0 || static_cast<std::size_t>(g.root) >= n || g.edges.size() + 1 != n)
    return false;
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x)
      x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto &e : g.edges)
  {
    if (e.parent < 0 || e.child < 0 || static_cast<std::size_t>(e.parent) >= n || static_cast<std::size_t>(e.child) >= n)
      return false;
    const auto a = find(static_cast<std::size_t>(e.parent));
    const auto b = find(static_cast<std::size_t>(e.child));
    if (a == b)
      return false;
    parent[a] = b;
  }
  return true;
}

inline int oracle_joints(const plantrec::SkeletonGraph &g)
{
  std::vector<int> deg(g.vertices.size(), 0);
  for (const auto &e : g.edges)
  {
    ++deg[static_cast<std::size_t>(e.parent)];
    ++deg[static_cast<std::size_t>(e.child)];
  }
  return static_cast<int>(std::count_if(deg.begin(), deg.end(), [](int d) { return d >= 3; }));
}

inline plantrec::SkeletonGraph chain(const std::vector<Vec3> &pts)
{
  plantrec::SkeletonGraph g;
  g.vertices = pts;
  for (std::size_t i = 1; i < pts.size(); ++i)
    g.edges.push_back({ static_cast<int>(i - 1), static_cast<int>(i) });
  return g;
}

/// Root at the origin, stem of length 1 up +y, fork into two arms of length 0.5.
inline plantrec::SkeletonGraph y_fixture()
{
  plantrec::SkeletonGraph g;
  g.vertices = { Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(-0.3, 1.4, 0), Vec3(0.3, 1.4, 0) };
  g.edges = { { 0, 1 }, { 1, 2 }, { 1, 3 } };
  return g;
}

/// Grid whose normalized weight is given by fn(center).
template <class Fn>
plantrec::VoxelGrid analytic_grid(std::array<int, 3> dims, Vec3 origin, double spacing, Fn &&fn)
{
  plantrec::VoxelGrid grid;
  grid.spec.dims = dims;
  grid.spec.origin = origin;
  grid.spec.spacing = spacing;
  grid.eps_floor = 1e-4;
  grid.n_views = 10;
  const double floor = grid.log_floor();
  grid.log_values.resize(grid.spec.voxel_count());
  for (std::size_t i = 0; i < grid.log_values.size(); ++i)
  {
    const double w = std::clamp(static_cast<double>(fn(grid.center(i))), 0.0, 1.0);
    grid.log_values[i] = floor * (1.0 - w);
  }
  return grid;
}

inline double distance_to_segment(const Vec3 &p, const Vec3 &a, const Vec3 &b)
{
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

class TempDir
{
public:
  explicit TempDir(const std::string &name)
    : path_(std::filesystem::temp_directory_path() / ("plantrec_test_" + name))
  {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path &path() const { return path_; }

private:
  std::filesystem::path path_;
};
}  // namespace testsupport
