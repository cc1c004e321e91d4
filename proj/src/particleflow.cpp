#include "plantrec/particleflow.h"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <tuple>
#include <unordered_map>

namespace plantrec
{
namespace
{
/// Uniform hash grid over trail vertices.
class VertexHash
{
public:
  explicit VertexHash(double cell)
    : cell_(cell)
  {}

  void insert(const Vec3 &p, int vertex) { cells_[key(cell_of(p))].push_back(vertex); }

  template <class Fn>
  void for_each_near(const Vec3 &p, Fn &&fn) const
  {
    const auto c = cell_of(p);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
        {
          auto it = cells_.find(key({ c[0] + dx, c[1] + dy, c[2] + dz }));
          if (it == cells_.end())
            continue;
          for (int v : it->second)
            fn(v);
        }
  }

private:
  std::array<long long, 3> cell_of(const Vec3 &p) const
  {
    return { static_cast<long long>(std::floor(p.x() / cell_)), static_cast<long long>(std::floor(p.y() / cell_)),
             static_cast<long long>(std::floor(p.z() / cell_)) };
  }
  static std::uint64_t key(const std::array<long long, 3> &c)
  {
    return (static_cast<std::uint64_t>(c[0] & 0x1fffff) << 42) | (static_cast<std::uint64_t>(c[1] & 0x1fffff) << 21) |
           static_cast<std::uint64_t>(c[2] & 0x1fffff);
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

class UnionFind
{
public:
  explicit UnionFind(std::size_t n)
    : parent_(n)
  {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x)
  {
    while (parent_[static_cast<std::size_t>(x)] != x)
    {
      parent_[static_cast<std::size_t>(x)] = parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(x)])];
      x = parent_[static_cast<std::size_t>(x)];
    }
    return x;
  }
  /// Attaches a's set under b's representative.
  void attach(int a, int b) { parent_[static_cast<std::size_t>(find(a))] = find(b); }

private:
  std::vector<int> parent_;
};

struct Proposal
{
  bool killed = false;
  Vec3 position = Vec3::Zero();
};

Proposal propose_step(const Vec3 &p, const VoxelGrid &grid, const Vec3 &root, const FlowConfig &cfg)
{
  const auto forces = local_forces(grid, p, cfg.radius, root);
  if (!forces)
    return { true, p };
  const Vec3 f = blended_force(*forces, p, root, cfg.radius, cfg.lambda_r);
  const double norm = f.norm();
  if (norm < 1e-9)
    return { true, p };
  return { false, p + cfg.step_length * (f / norm) };
}

bool in_capture(const Vec3 &p, const Vec3 &root, const FlowConfig &cfg)
{
  return (p - root).norm() <= cfg.root_capture_radius;
}

/// Applies a proposal: move, then capture or kill.
void apply_step(Particle &particle, const Proposal &proposal, const VoxelGrid &grid, const Vec3 &root,
                const FlowConfig &cfg)
{
  if (proposal.killed)
  {
    particle.state = Particle::State::dead;
    return;
  }
  particle.position = proposal.position;
  particle.trail.push_back(proposal.position);
  if (in_capture(particle.position, root, cfg))
    particle.state = Particle::State::captured;
  else if (grid.weight_at(particle.position) < cfg.min_weight_to_live)
    particle.state = Particle::State::dead;
}
}  // namespace

FlowConfig FlowConfig::defaults_for(const GridSpec &grid)
{
  FlowConfig cfg;
  const double s = grid.spacing;
  cfg.radius = 3.0 * s;
  cfg.step_length = 1.0 * s;
  cfg.root_capture_radius = 2.0 * s;
  cfg.merge_radius = 1.5 * s;
  cfg.max_steps = 4 * *std::max_element(grid.dims.begin(), grid.dims.end());
  return cfg;
}

void FlowConfig::validate() const
{
  if (particle_count < 1)
    throw ConfigError("flow: particle_count must be >= 1");
  if (!(radius > 0.0))
    throw ConfigError("flow: radius must be > 0");
  if (!(step_length > 0.0))
    throw ConfigError("flow: step_length must be > 0");
  if (!(lambda_r >= 0.0 && lambda_r < 1.0))
    throw ConfigError("flow: lambda_r must lie in [0, 1)");
  if (max_steps < 0)
    throw ConfigError("flow: max_steps must be >= 0");
  if (!(root_capture_radius > 0.0))
    throw ConfigError("flow: root_capture_radius must be > 0");
  if (!(merge_radius > 0.0))
    throw ConfigError("flow: merge_radius must be > 0");
  if (!(min_weight_to_live >= 0.0 && min_weight_to_live <= 1.0))
    throw ConfigError("flow: min_weight_to_live must lie in [0, 1]");
  if (!(root_threshold >= 0.0 && root_threshold <= 1.0))
    throw ConfigError("flow: root_threshold must lie in [0, 1]");
}

Vec3 find_root(const VoxelGrid &grid, double threshold)
{
  const std::size_t n = grid.log_values.size();
  int min_j = std::numeric_limits<int>::max();
  double wsum = 0.0, cx = 0.0, cz = 0.0;
  for (std::size_t idx = 0; idx < n; ++idx)
  {
    const double w = grid.weight(idx);
    if (w < threshold)
      continue;
    const auto c = grid.coords(idx);
    min_j = std::min(min_j, c[1]);
    const Vec3 p = grid.center(idx);
    wsum += w;
    cx += w * p.x();
    cz += w * p.z();
  }
  if (min_j == std::numeric_limits<int>::max())
    throw EmptyVolumeError("find_root: no voxel reaches weight " + std::to_string(threshold));
  if (wsum > 0.0)
  {
    cx /= wsum;
    cz /= wsum;
  }
  double best_d = std::numeric_limits<double>::infinity();
  std::array<int, 3> best{ 0, 0, 0 };
  for (int k = 0; k < grid.spec.dims[2]; ++k)
    for (int i = 0; i < grid.spec.dims[0]; ++i)
    {
      // (i, k) outer loops visit the bottom layer in lexicographic (i, j, k) order
      const std::size_t idx = grid.index(i, min_j, k);
      if (grid.weight(idx) < threshold)
        continue;
      const Vec3 p = grid.center(idx);
      const double d = (p.x() - cx) * (p.x() - cx) + (p.z() - cz) * (p.z() - cz);
      const std::array<int, 3> c{ i, min_j, k };
      if (d < best_d || (d == best_d && c < best))
      {
        best_d = d;
        best = c;
      }
    }
  return grid.center(best[0], best[1], best[2]);
}

std::vector<Particle> seed_particles(const VoxelGrid &grid, int count, std::uint64_t seed)
{
  if (count < 0)
    throw UsageError("seed_particles: negative count");
  const std::size_t n = grid.log_values.size();
  std::vector<double> cumulative(n);
  double total = 0.0;
  for (std::size_t idx = 0; idx < n; ++idx)
  {
    total += std::max(0.0, grid.weight(idx));
    cumulative[idx] = total;
  }
  if (!(total > 0.0))
    throw EmptyVolumeError("seed_particles: every voxel is at the probability floor");

  Rng rng(derive_seed(seed, 0x5eed));
  std::vector<Particle> particles(static_cast<std::size_t>(count));
  const double s = grid.spec.spacing;
  for (int id = 0; id < count; ++id)
  {
    const double u = rng.uniform() * total;
    std::size_t idx = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    idx = std::min(idx, n - 1);
    const Vec3 jitter(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    Particle &p = particles[static_cast<std::size_t>(id)];
    p.id = id;
    p.position = grid.center(idx) + s * jitter;
    p.trail = { p.position };
  }
  return particles;
}

std::optional<LocalForces> local_forces(const VoxelGrid &grid, const Vec3 &p, double radius, const Vec3 &root)
{
  const auto &spec = grid.spec;
  const double s = spec.spacing;
  int lo[3], hi[3];
  for (int a = 0; a < 3; ++a)
  {
    lo[a] = std::max(0, static_cast<int>(std::ceil((p[a] - radius - spec.origin[a]) / s)));
    hi[a] = std::min(spec.dims[static_cast<std::size_t>(a)] - 1, static_cast<int>(std::floor((p[a] + radius - spec.origin[a]) / s)));
  }
  const double r2 = radius * radius;
  double total = 0.0;
  Vec3 first = Vec3::Zero();
  Mat3 second = Mat3::Zero();
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i)
      {
        // offsets relative to p keep the moments well conditioned
        const Vec3 d = grid.center(i, j, k) - p;
        if (d.squaredNorm() > r2)
          continue;
        const double w = grid.weight(grid.index(i, j, k));
        if (w <= 0.0)
          continue;
        total += w;
        first += w * d;
        second += w * d * d.transpose();
      }
  if (!(total > 1e-12))
    return std::nullopt;

  LocalForces out;
  const Vec3 offset = first / total;
  out.center_distance = offset.norm();
  if (out.center_distance >= 1e-12)
    out.to_center = offset / out.center_distance;
  const Mat3 cov = second / total - offset * offset.transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  out.along_axis = eig.eigenvectors().col(2).normalized();
  if (out.along_axis.dot(root - p) < 0.0)
    out.along_axis = -out.along_axis;
  return out;
}

BlendWeights blend_weights(double center_distance, double radius, double lambda_r)
{
  const double dc = std::clamp(center_distance, 0.0, radius);
  const double share = 1.0 - lambda_r;
  int exponent = 0;
  std::frexp(share, &exponent);
  const double ulp = std::ldexp(1.0, exponent - 53);
  const double raw = (dc / radius) * share;
  const double center = std::min(share, std::round(raw / ulp) * ulp);
  return { center, share - center, lambda_r };
}

Vec3 blended_force(const LocalForces &forces, const Vec3 &p, const Vec3 &root, double radius, double lambda_r)
{
  const Vec3 to_root = root - p;
  const double root_dist = to_root.norm();
  const Vec3 f_r = root_dist > 1e-12 ? Vec3(to_root / root_dist) : Vec3::Zero();
  const BlendWeights w = blend_weights(forces.center_distance, radius, lambda_r);
  return w.center * forces.to_center + w.axis * forces.along_axis + w.root * f_r;
}

void step_particle(Particle &particle, const VoxelGrid &grid, const Vec3 &root, const FlowConfig &cfg)
{
  if (!particle.alive())
    return;
  if (in_capture(particle.position, root, cfg))
  {
    particle.state = Particle::State::captured;
    return;
  }
  apply_step(particle, propose_step(particle.position, grid, root, cfg), grid, root, cfg);
}

RawTraceGraph trace_particles(const VoxelGrid &grid, std::vector<Particle> particles, const Vec3 &root,
                              const FlowConfig &cfg)
{
  cfg.validate();
  enum class Fate
  {
    open,
    rooted,
    lost
  };
  const std::size_t np = particles.size();
  RawTraceGraph graph;
  graph.vertices.push_back(root);
  graph.provenance.push_back(-1);
  graph.root = 0;
  std::vector<int> owner{ -1 };                    // particle per vertex
  std::vector<int> head(np, -1);                   // particle's latest vertex
  std::vector<Fate> fate(np, Fate::open);          // indexed by union-find representative
  UnionFind sets(np);
  VertexHash hash(cfg.merge_radius);

  auto add_vertex = [&](int pid, const Vec3 &p) {
    const int v = static_cast<int>(graph.vertices.size());
    graph.vertices.push_back(p);
    graph.provenance.push_back(pid);
    owner.push_back(pid);
    if (head[static_cast<std::size_t>(pid)] >= 0)
      graph.edges.push_back({ v, head[static_cast<std::size_t>(pid)] });
    head[static_cast<std::size_t>(pid)] = v;
    return v;
  };
  auto connect_root = [&](int pid) {
    graph.edges.push_back({ 0, head[static_cast<std::size_t>(pid)] });
    fate[static_cast<std::size_t>(sets.find(pid))] = Fate::rooted;
  };

  for (std::size_t i = 0; i < np; ++i)
  {
    Particle &p = particles[i];
    p.id = static_cast<int>(i);
    if (p.trail.empty() || p.trail.back() != p.position)
      p.trail = { p.position };
    p.state = Particle::State::moving;
    hash.insert(p.position, add_vertex(p.id, p.position));
    if (in_capture(p.position, root, cfg))
    {
      p.state = Particle::State::captured;
      connect_root(p.id);
    }
  }

  std::vector<Proposal> proposals(np);
  for (int round = 0; round < cfg.max_steps; ++round)
  {
    bool any_alive = false;
    for (const auto &p : particles)
      any_alive = any_alive || p.alive();
    if (!any_alive)
      break;
    parallel_for(np, cfg.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i)
        if (particles[i].alive())
          proposals[i] = propose_step(particles[i].position, grid, root, cfg);
    });
    // serial resolution in ascending id order
    for (std::size_t i = 0; i < np; ++i)
    {
      Particle &p = particles[i];
      if (!p.alive())
        continue;
      apply_step(p, proposals[i], grid, root, cfg);
      if (p.state == Particle::State::dead)
      {
        fate[static_cast<std::size_t>(sets.find(p.id))] = Fate::lost;
        continue;
      }
      const int v = add_vertex(p.id, p.position);
      if (p.state == Particle::State::captured)
      {
        connect_root(p.id);
        hash.insert(p.position, v);
        continue;
      }
      const int own = sets.find(p.id);
      int target = -1;
      double best = cfg.merge_radius * cfg.merge_radius;
      hash.for_each_near(p.position, [&](int u) {
        const int set = sets.find(owner[static_cast<std::size_t>(u)]);
        if (set == own || fate[static_cast<std::size_t>(set)] == Fate::lost)
          return;
        const double d = (graph.vertices[static_cast<std::size_t>(u)] - p.position).squaredNorm();
        if (target < 0 ? d <= best : (d < best || (d == best && u < target)))
        {
          best = d;
          target = u;
        }
      });
      if (target >= 0)
      {
        graph.edges.push_back({ target, v });
        sets.attach(p.id, owner[static_cast<std::size_t>(target)]);
        p.state = Particle::State::merged;
      }
      hash.insert(p.position, v);
    }
  }

  std::vector<bool> keep(graph.vertices.size(), false);
  keep[0] = true;
  bool any_rooted = false;
  for (std::size_t v = 1; v < graph.vertices.size(); ++v)
  {
    const bool rooted = fate[static_cast<std::size_t>(sets.find(owner[v]))] == Fate::rooted;
    keep[v] = rooted;
    any_rooted = any_rooted || rooted;
  }
  if (!any_rooted)
    throw ReconstructionError("particle flow: no trail reached the root");
  return compact(graph, keep);
}

RawTraceGraph simulate(const VoxelGrid &grid, const FlowConfig &cfg, std::uint64_t seed)
{
  cfg.validate();
  const Vec3 root = find_root(grid, cfg.root_threshold);
  return trace_particles(grid, seed_particles(grid, cfg.particle_count, seed), root, cfg);
}

nlohmann::json flow_config_to_json(const FlowConfig &c)
{
  return { { "particle_count", c.particle_count },
           { "radius", c.radius },
           { "lambda_r", c.lambda_r },
           { "step_length", c.step_length },
           { "max_steps", c.max_steps },
           { "root_capture_radius", c.root_capture_radius },
           { "merge_radius", c.merge_radius },
           { "min_weight_to_live", c.min_weight_to_live },
           { "root_threshold", c.root_threshold } };
}

FlowConfig flow_config_from_json(const nlohmann::json &doc, FlowConfig c)
{
  try
  {
    c.particle_count = doc.value("particle_count", c.particle_count);
    c.radius = doc.value("radius", c.radius);
    c.lambda_r = doc.value("lambda_r", c.lambda_r);
    c.step_length = doc.value("step_length", c.step_length);
    c.max_steps = doc.value("max_steps", c.max_steps);
    c.root_capture_radius = doc.value("root_capture_radius", c.root_capture_radius);
    c.merge_radius = doc.value("merge_radius", c.merge_radius);
    c.min_weight_to_live = doc.value("min_weight_to_live", c.min_weight_to_live);
    c.root_threshold = doc.value("root_threshold", c.root_threshold);
  }
  catch (const nlohmann::json::type_error &e)
  {
    throw ConfigError(std::string("flow: ") + e.what());
  }
  return c;
}
}  // namespace plantrec
