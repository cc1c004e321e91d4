#include "plantrec/refine.h"

#include <cmath>
#include <map>
#include <numbers>
#include <queue>
#include <unordered_map>

namespace plantrec
{
namespace
{
Vec3 any_perpendicular(const Vec3 &d)
{
  const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
  return d.cross(helper).normalized();
}

std::vector<std::vector<int>> neighbors(const SkeletonGraph &g)
{
  std::vector<std::vector<int>> adj(g.size());
  for (const auto &e : g.edges)
  {
    adj[static_cast<std::size_t>(e.parent)].push_back(e.child);
    adj[static_cast<std::size_t>(e.child)].push_back(e.parent);
  }
  return adj;
}

/// Greedy clustering: each vertex joins the nearest cluster seed within radius.
std::vector<int> cluster_vertices(const SkeletonGraph &g, const std::vector<int> &order, double radius,
                                  std::vector<Vec3> &seeds)
{
  auto cell_of = [radius](const Vec3 &p) {
    return std::array<long long, 3>{ static_cast<long long>(std::floor(p.x() / radius)),
                                     static_cast<long long>(std::floor(p.y() / radius)),
                                     static_cast<long long>(std::floor(p.z() / radius)) };
  };
  auto key = [](const std::array<long long, 3> &c) {
    return (static_cast<std::uint64_t>(c[0] & 0x1fffff) << 42) | (static_cast<std::uint64_t>(c[1] & 0x1fffff) << 21) |
           static_cast<std::uint64_t>(c[2] & 0x1fffff);
  };
  std::unordered_map<std::uint64_t, std::vector<int>> cells;
  std::vector<int> cluster(g.size(), -1);
  const double r2 = radius * radius;
  for (int v : order)
  {
    const Vec3 &p = g.vertices[static_cast<std::size_t>(v)];
    const auto c = cell_of(p);
    int best = -1;
    double best_d = r2;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
        {
          auto it = cells.find(key({ c[0] + dx, c[1] + dy, c[2] + dz }));
          if (it == cells.end())
            continue;
          for (int s : it->second)
          {
            const double d = (seeds[static_cast<std::size_t>(s)] - p).squaredNorm();
            if (best < 0 ? d <= best_d : (d < best_d || (d == best_d && s < best)))
            {
              best = s;
              best_d = d;
            }
          }
        }
    if (best < 0)
    {
      best = static_cast<int>(seeds.size());
      seeds.push_back(p);
      cells[key(c)].push_back(best);
    }
    cluster[static_cast<std::size_t>(v)] = best;
  }
  return cluster;
}

/// Shortest-path tree of a connected graph from vertex 0. An edge costs its length divided
/// by the weight at its midpoint, so paths prefer to run along high-probability ridges.
std::vector<Edge> shortest_path_tree(const std::vector<Vec3> &pos, const std::vector<std::vector<int>> &adj,
                                     const VoxelGrid &grid)
{
  const std::size_t n = pos.size();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> pred(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[0] = 0.0;
  queue.push({ 0.0, 0 });
  while (!queue.empty())
  {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[static_cast<std::size_t>(v)])
      continue;
    for (int w : adj[static_cast<std::size_t>(v)])
    {
      const Vec3 &a = pos[static_cast<std::size_t>(v)];
      const Vec3 &b = pos[static_cast<std::size_t>(w)];
      const double nd = d + (b - a).norm() / std::max(grid.weight_at(0.5 * (a + b)), 1e-3);
      auto &cur = dist[static_cast<std::size_t>(w)];
      if (nd < cur || (nd == cur && v < pred[static_cast<std::size_t>(w)]))
      {
        cur = nd;
        pred[static_cast<std::size_t>(w)] = v;
        queue.push({ nd, w });
      }
    }
  }
  std::vector<Edge> edges;
  for (std::size_t v = 1; v < n; ++v)
    if (pred[v] >= 0)
      edges.push_back({ pred[v], static_cast<int>(v) });
  return edges;
}

/// Adds an edge between every pair of points closer than radius.
void link_nearby(const std::vector<Vec3> &pos, double radius, std::vector<std::vector<int>> &adj)
{
  std::map<std::array<long long, 3>, std::vector<int>> cells;
  auto cell_of = [radius](const Vec3 &p) {
    return std::array<long long, 3>{ static_cast<long long>(std::floor(p.x() / radius)),
                                     static_cast<long long>(std::floor(p.y() / radius)),
                                     static_cast<long long>(std::floor(p.z() / radius)) };
  };
  for (std::size_t i = 0; i < pos.size(); ++i)
    cells[cell_of(pos[i])].push_back(static_cast<int>(i));
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < pos.size(); ++i)
  {
    const auto c = cell_of(pos[i]);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
        {
          auto it = cells.find({ c[0] + dx, c[1] + dy, c[2] + dz });
          if (it == cells.end())
            continue;
          for (int j : it->second)
            if (static_cast<std::size_t>(j) > i && (pos[static_cast<std::size_t>(j)] - pos[i]).squaredNorm() <= r2)
            {
              adj[i].push_back(j);
              adj[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
            }
        }
  }
}

SkeletonGraph unify(const SkeletonGraph &graph, const VoxelGrid &grid, double radius, double link_radius)
{
  const auto topo = topology(graph);
  std::vector<Vec3> seeds;
  const auto cluster = cluster_vertices(graph, topo.bfs_order, radius, seeds);
  const std::size_t nc = seeds.size();

  std::vector<Vec3> sum(nc, Vec3::Zero());
  std::vector<int> count(nc, 0);
  for (std::size_t v = 0; v < graph.size(); ++v)
  {
    sum[static_cast<std::size_t>(cluster[v])] += graph.vertices[v];
    ++count[static_cast<std::size_t>(cluster[v])];
  }
  SkeletonGraph out;
  out.vertices.resize(nc);
  for (std::size_t c = 0; c < nc; ++c)
    out.vertices[c] = sum[c] / count[c];

  // clusters holding a tip keep the tip farthest from the root, so branches do not
  // shorten from one iteration to the next
  const Vec3 &root_pos = graph.vertices[static_cast<std::size_t>(graph.root)];
  std::vector<double> tip_reach(nc, -1.0);
  for (std::size_t v = 0; v < graph.size(); ++v)
  {
    if (static_cast<int>(v) == graph.root || !topo.children[v].empty())
      continue;
    const auto c = static_cast<std::size_t>(cluster[v]);
    const double reach = (graph.vertices[v] - root_pos).norm();
    if (reach > tip_reach[c])
    {
      tip_reach[c] = reach;
      out.vertices[c] = graph.vertices[v];
    }
  }
  out.vertices[0] = root_pos;
  out.root = 0;

  std::vector<std::vector<int>> adj(nc);
  for (const auto &e : graph.edges)
  {
    const int a = cluster[static_cast<std::size_t>(e.parent)];
    const int b = cluster[static_cast<std::size_t>(e.child)];
    if (a == b)
      continue;
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  if (link_radius > 0.0)
    link_nearby(out.vertices, link_radius, adj);
  for (auto &a : adj)
  {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  out.edges = shortest_path_tree(out.vertices, adj, grid);
  return out;
}

/// Removes subtrees whose mean vertex weight falls below the threshold. Works from the
/// tips up, so a subtree is judged on what survived below it.
std::vector<bool> prune_low_weight(const SkeletonGraph &g, const TreeTopology &topo, const VoxelGrid &grid,
                                   double threshold)
{
  const std::size_t n = g.size();
  std::vector<double> sum(n, 0.0);
  std::vector<int> count(n, 1);
  std::vector<bool> dropped(n, false);
  for (std::size_t v = 0; v < n; ++v)
    sum[v] = grid.weight_at(g.vertices[v]);
  for (auto it = topo.bfs_order.rbegin(); it != topo.bfs_order.rend(); ++it)
  {
    const auto v = static_cast<std::size_t>(*it);
    const int p = topo.parent[v];
    if (p < 0)
      continue;
    if (sum[v] / count[v] < threshold)
    {
      dropped[v] = true;
      continue;
    }
    sum[static_cast<std::size_t>(p)] += sum[v];
    count[static_cast<std::size_t>(p)] += count[v];
  }
  std::vector<bool> keep(n, false);
  for (int v : topo.bfs_order)
  {
    const int p = topo.parent[static_cast<std::size_t>(v)];
    keep[static_cast<std::size_t>(v)] = p < 0 || (!dropped[static_cast<std::size_t>(v)] && keep[static_cast<std::size_t>(p)]);
  }
  return keep;
}

/// Cuts tip chains shorter than min_length that hang off a branching vertex. When every
/// child chain of a vertex is short the longest one stays.
void cut_short_tips(const SkeletonGraph &g, const TreeTopology &topo, double min_length, std::vector<bool> &keep)
{
  const std::size_t n = g.size();
  auto live_children = [&](int v) {
    int k = 0;
    for (int c : topo.children[static_cast<std::size_t>(v)])
      k += keep[static_cast<std::size_t>(c)];
    return k;
  };
  struct Chain
  {
    std::vector<int> vertices;
    double length = 0.0;
  };
  std::unordered_map<int, std::vector<Chain>> by_anchor;
  for (std::size_t t = 0; t < n; ++t)
  {
    const int tip = static_cast<int>(t);
    if (!keep[t] || tip == g.root || live_children(tip) != 0)
      continue;
    Chain chain;
    int v = tip;
    while (true)
    {
      chain.vertices.push_back(v);
      const int p = topo.parent[static_cast<std::size_t>(v)];
      chain.length += (g.vertices[static_cast<std::size_t>(v)] - g.vertices[static_cast<std::size_t>(p)]).norm();
      if (p == g.root || live_children(p) >= 2)
      {
        if (live_children(p) >= 2)
          by_anchor[p].push_back(std::move(chain));
        break;
      }
      v = p;
    }
  }
  std::vector<int> anchors;
  for (const auto &[a, _] : by_anchor)
    anchors.push_back(a);
  std::sort(anchors.begin(), anchors.end());
  for (int a : anchors)
  {
    auto &chains = by_anchor[a];
    const int total_children = live_children(a);
    std::vector<std::size_t> short_ones;
    for (std::size_t i = 0; i < chains.size(); ++i)
      if (chains[i].length < min_length)
        short_ones.push_back(i);
    if (short_ones.empty())
      continue;
    if (static_cast<int>(short_ones.size()) == total_children)
    {
      // keep the longest (lowest tip id on ties)
      auto longest = std::max_element(short_ones.begin(), short_ones.end(), [&](std::size_t x, std::size_t y) {
        return chains[x].length < chains[y].length;
      });
      short_ones.erase(longest);
    }
    for (std::size_t i : short_ones)
      for (int v : chains[i].vertices)
        keep[static_cast<std::size_t>(v)] = false;
  }
}
}  // namespace

RefineConfig RefineConfig::defaults_for(const GridSpec &grid)
{
  RefineConfig cfg;
  const double s = grid.spacing;
  cfg.unify_radius = 2.5 * s;
  cfg.ridge_search_radius = 2.0 * s;
  cfg.ridge_step = 0.5 * s;
  cfg.min_branch_length = 10.0 * s;
  cfg.link_radius = 5.0 * s;
  return cfg;
}

void RefineConfig::validate() const
{
  if (iterations < 0)
    throw ConfigError("refine: iterations must be >= 0");
  if (!(unify_radius > 0.0))
    throw ConfigError("refine: unify_radius must be > 0");
  if (!(ridge_search_radius > 0.0))
    throw ConfigError("refine: ridge_search_radius must be > 0");
  if (!(ridge_step > 0.0))
    throw ConfigError("refine: ridge_step must be > 0");
  if (!(prune_weight_threshold >= 0.0 && prune_weight_threshold <= 1.0))
    throw ConfigError("refine: prune_weight_threshold must lie in [0, 1]");
  if (!(link_radius >= 0.0))
    throw ConfigError("refine: link_radius must be >= 0");
  if (!(min_branch_length >= 0.0))
    throw ConfigError("refine: min_branch_length must be >= 0");
}

SkeletonGraph smooth(const SkeletonGraph &graph)
{
  require_tree(graph.size(), graph.edges, graph.root);
  const auto adj = neighbors(graph);
  SkeletonGraph out = graph;
  for (std::size_t v = 0; v < graph.size(); ++v)
  {
    if (static_cast<int>(v) == graph.root || adj[v].size() < 2)
      continue;
    Vec3 sum = graph.vertices[v];
    for (int w : adj[v])
      sum += graph.vertices[static_cast<std::size_t>(w)];
    out.vertices[v] = sum / static_cast<double>(adj[v].size() + 1);
  }
  return out;
}

SkeletonGraph snap_to_ridge(const SkeletonGraph &graph, const VoxelGrid &grid, const RefineConfig &cfg)
{
  cfg.validate();
  const auto topo = topology(graph);
  SkeletonGraph out = graph;
  const int rings = static_cast<int>(std::floor(cfg.ridge_search_radius / cfg.ridge_step + 1e-9));
  for (std::size_t v = 0; v < graph.size(); ++v)
  {
    if (static_cast<int>(v) == graph.root)
      continue;
    const Vec3 &p = graph.vertices[v];
    Vec3 dir = Vec3::Zero();
    const int parent = topo.parent[v];
    if (parent >= 0)
    {
      const Vec3 d = p - graph.vertices[static_cast<std::size_t>(parent)];
      if (d.norm() > 1e-12)
        dir += d.normalized();
    }
    for (int c : topo.children[v])
    {
      const Vec3 d = graph.vertices[static_cast<std::size_t>(c)] - p;
      if (d.norm() > 1e-12)
        dir += d.normalized();
    }
    if (dir.norm() < 1e-12)
      continue;
    dir.normalize();
    const Vec3 u = any_perpendicular(dir);
    const Vec3 w = dir.cross(u);
    Vec3 best = p;
    double best_weight = grid.weight_at(p);
    for (int ring = 1; ring <= rings; ++ring)
      for (int k = 0; k < 8; ++k)
      {
        const double a = k * std::numbers::pi / 4.0;
        const Vec3 q = p + ring * cfg.ridge_step * (std::cos(a) * u + std::sin(a) * w);
        const double wq = grid.weight_at(q);
        // interpolation of a flat field is only flat to a few ulps
        if (wq > best_weight + 1e-12)
        {
          best_weight = wq;
          best = q;
        }
      }
    out.vertices[v] = best;
  }
  return out;
}

SkeletonGraph simplify(const SkeletonGraph &graph, const VoxelGrid &grid, const RefineConfig &cfg)
{
  cfg.validate();
  SkeletonGraph merged = unify(graph, grid, cfg.unify_radius, cfg.link_radius);
  const auto topo = topology(merged);
  auto keep = prune_low_weight(merged, topo, grid, cfg.prune_weight_threshold);
  if (cfg.min_branch_length > 0.0)
    cut_short_tips(merged, topo, cfg.min_branch_length, keep);
  SkeletonGraph out = compact(merged, keep);
  if (out.edges.empty())
    throw ReconstructionError("simplify: only the root would remain");
  return out;
}

SkeletonGraph refine_loop(const RawTraceGraph &raw, const VoxelGrid &grid, const RefineConfig &cfg)
{
  cfg.validate();
  SkeletonGraph g{ raw.vertices, raw.edges, raw.root, {} };
  require_tree(g.size(), g.edges, g.root);
  for (int it = 0; it < cfg.iterations; ++it)
    g = simplify(snap_to_ridge(smooth(g), grid, cfg), grid, cfg);
  return g;
}

nlohmann::json refine_config_to_json(const RefineConfig &c)
{
  return { { "iterations", c.iterations },
           { "unify_radius", c.unify_radius },
           { "prune_weight_threshold", c.prune_weight_threshold },
           { "ridge_search_radius", c.ridge_search_radius },
           { "ridge_step", c.ridge_step },
           { "min_branch_length", c.min_branch_length },
           { "link_radius", c.link_radius } };
}

RefineConfig refine_config_from_json(const nlohmann::json &doc, RefineConfig c)
{
  try
  {
    c.iterations = doc.value("iterations", c.iterations);
    c.unify_radius = doc.value("unify_radius", c.unify_radius);
    c.prune_weight_threshold = doc.value("prune_weight_threshold", c.prune_weight_threshold);
    c.ridge_search_radius = doc.value("ridge_search_radius", c.ridge_search_radius);
    c.ridge_step = doc.value("ridge_step", c.ridge_step);
    c.min_branch_length = doc.value("min_branch_length", c.min_branch_length);
    c.link_radius = doc.value("link_radius", c.link_radius);
  }
  catch (const nlohmann::json::type_error &e)
  {
    throw ConfigError(std::string("refine: ") + e.what());
  }
  return c;
}
}  // namespace plantrec
