#include "plantrec/graph.h"

#include "io_util.h"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace plantrec
{
namespace
{
std::vector<std::vector<int>> adjacency(std::size_t n, const std::vector<Edge> &edges)
{
  std::vector<std::vector<int>> adj(n);
  for (const auto &e : edges)
  {
    adj[static_cast<std::size_t>(e.parent)].push_back(e.child);
    adj[static_cast<std::size_t>(e.child)].push_back(e.parent);
  }
  for (auto &a : adj)
    std::sort(a.begin(), a.end());
  return adj;
}

}  // namespace

std::string tree_violation(std::size_t n, const std::vector<Edge> &edges, int root)
{
  if (n == 0)
    return "graph has no vertices";
  if (root < 0 || static_cast<std::size_t>(root) >= n)
    return "root id out of range";
  if (edges.size() != n - 1)
    return "edge count " + std::to_string(edges.size()) + " != vertex count - 1 (" + std::to_string(n - 1) + ")";
  for (const auto &e : edges)
  {
    if (e.parent < 0 || e.child < 0 || static_cast<std::size_t>(e.parent) >= n || static_cast<std::size_t>(e.child) >= n)
      return "edge references missing vertex";
    if (e.parent == e.child)
      return "self loop at vertex " + std::to_string(e.parent);
  }
  // |E| = |V| - 1 plus connectivity implies acyclic
  const auto adj = adjacency(n, edges);
  std::vector<bool> seen(n, false);
  std::vector<int> stack{ root };
  seen[static_cast<std::size_t>(root)] = true;
  std::size_t visited = 0;
  while (!stack.empty())
  {
    const int v = stack.back();
    stack.pop_back();
    ++visited;
    for (int w : adj[static_cast<std::size_t>(v)])
    {
      if (!seen[static_cast<std::size_t>(w)])
      {
        seen[static_cast<std::size_t>(w)] = true;
        stack.push_back(w);
      }
    }
  }
  if (visited != n)
    return "graph is disconnected (" + std::to_string(visited) + " of " + std::to_string(n) + " vertices reachable)";
  return {};
}

void require_tree(std::size_t n, const std::vector<Edge> &edges, int root)
{
  const std::string why = tree_violation(n, edges, root);
  if (!why.empty())
    throw StructuralError("not a rooted tree: " + why);
}

TreeTopology topology(std::size_t n, const std::vector<Edge> &edges, int root)
{
  require_tree(n, edges, root);
  const auto adj = adjacency(n, edges);
  TreeTopology topo;
  topo.parent.assign(n, -1);
  topo.children.assign(n, {});
  topo.bfs_order.reserve(n);
  std::vector<bool> seen(n, false);
  std::queue<int> queue;
  queue.push(root);
  seen[static_cast<std::size_t>(root)] = true;
  while (!queue.empty())
  {
    const int v = queue.front();
    queue.pop();
    topo.bfs_order.push_back(v);
    for (int w : adj[static_cast<std::size_t>(v)])
    {
      if (seen[static_cast<std::size_t>(w)])
        continue;
      seen[static_cast<std::size_t>(w)] = true;
      topo.parent[static_cast<std::size_t>(w)] = v;
      topo.children[static_cast<std::size_t>(v)].push_back(w);
      queue.push(w);
    }
  }
  return topo;
}

std::vector<int> degrees(std::size_t n, const std::vector<Edge> &edges)
{
  std::vector<int> deg(n, 0);
  for (const auto &e : edges)
  {
    ++deg[static_cast<std::size_t>(e.parent)];
    ++deg[static_cast<std::size_t>(e.child)];
  }
  return deg;
}

int joint_count(std::size_t n, const std::vector<Edge> &edges, int root)
{
  require_tree(n, edges, root);
  const auto deg = degrees(n, edges);
  return static_cast<int>(std::count_if(deg.begin(), deg.end(), [](int d) { return d >= 3; }));
}

SkeletonGraph compact(const SkeletonGraph &g, const std::vector<bool> &keep)
{
  // adjacency restricted to kept vertices
  const std::size_t n = g.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto &e : g.edges)
  {
    if (keep[static_cast<std::size_t>(e.parent)] && keep[static_cast<std::size_t>(e.child)])
    {
      adj[static_cast<std::size_t>(e.parent)].push_back(e.child);
      adj[static_cast<std::size_t>(e.child)].push_back(e.parent);
    }
  }
  for (auto &a : adj)
    std::sort(a.begin(), a.end());

  SkeletonGraph out;
  if (!keep[static_cast<std::size_t>(g.root)])
    return out;
  std::vector<int> remap(n, -1);
  std::queue<int> queue;
  queue.push(g.root);
  remap[static_cast<std::size_t>(g.root)] = 0;
  out.vertices.push_back(g.vertices[static_cast<std::size_t>(g.root)]);
  if (!g.provenance.empty())
    out.provenance.push_back(g.provenance[static_cast<std::size_t>(g.root)]);
  while (!queue.empty())
  {
    const int v = queue.front();
    queue.pop();
    for (int w : adj[static_cast<std::size_t>(v)])
    {
      if (remap[static_cast<std::size_t>(w)] >= 0)
        continue;
      remap[static_cast<std::size_t>(w)] = static_cast<int>(out.vertices.size());
      out.vertices.push_back(g.vertices[static_cast<std::size_t>(w)]);
      if (!g.provenance.empty())
        out.provenance.push_back(g.provenance[static_cast<std::size_t>(w)]);
      out.edges.push_back({ remap[static_cast<std::size_t>(v)], remap[static_cast<std::size_t>(w)] });
      queue.push(w);
    }
  }
  out.root = 0;
  return out;
}

std::string skeleton_to_json_string(const SkeletonGraph &g)
{
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < g.vertices.size(); ++i)
  {
    const auto &p = g.vertices[i];
    doc["nodes"].push_back({ { "id", i }, { "x", p.x() }, { "y", p.y() }, { "z", p.z() } });
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto &e : g.edges)
    doc["edges"].push_back({ e.parent, e.child });
  doc["root"] = g.root;
  if (!g.provenance.empty())
    doc["provenance"] = g.provenance;
  return doc.dump(1);
}

SkeletonGraph skeleton_from_json_string(const std::string &text)
{
  const nlohmann::json doc = detail::parse_json(text, "skeleton document");
  SkeletonGraph g;
  std::unordered_map<long long, int> index;
  try
  {
    for (const auto &node : doc.at("nodes"))
    {
      const long long id = node.at("id").get<long long>();
      if (!index.emplace(id, static_cast<int>(g.vertices.size())).second)
        throw StructuralError("duplicate node id " + std::to_string(id));
      g.vertices.emplace_back(node.at("x").get<double>(), node.at("y").get<double>(), node.at("z").get<double>());
    }
    auto lookup = [&](long long id) {
      auto it = index.find(id);
      if (it == index.end())
        throw StructuralError("edge references unknown node id " + std::to_string(id));
      return it->second;
    };
    for (const auto &e : doc.at("edges"))
      g.edges.push_back({ lookup(e.at(0).get<long long>()), lookup(e.at(1).get<long long>()) });
    g.root = lookup(doc.at("root").get<long long>());
    if (doc.contains("provenance"))
      g.provenance = doc["provenance"].get<std::vector<int>>();
  }
  catch (const nlohmann::json::exception &e)
  {
    throw FormatError(std::string("skeleton document: ") + e.what(), 0);
  }
  require_tree(g.size(), g.edges, g.root);
  return g;
}

void save_skeleton(const SkeletonGraph &g, const std::filesystem::path &path)
{
  detail::write_file(path, skeleton_to_json_string(g));
}

SkeletonGraph load_skeleton(const std::filesystem::path &path)
{
  return skeleton_from_json_string(detail::read_file(path));
}

void save_skeleton_ply(const SkeletonGraph &g, const std::filesystem::path &path)
{
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << g.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "element edge " << g.edges.size() << "\n";
  out << "property int vertex1\nproperty int vertex2\n";
  out << "end_header\n";
  out << std::setprecision(9);
  for (const auto &p : g.vertices)
    out << p.x() << " " << p.y() << " " << p.z() << "\n";
  for (const auto &e : g.edges)
    out << e.parent << " " << e.child << "\n";
  detail::write_file(path, out.str());
}
}  // namespace plantrec
