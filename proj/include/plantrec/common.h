#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace plantrec
{
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value. The message names the offending field.
class ConfigError : public Error
{
public:
  using Error::Error;
};

/// Precondition on call arguments violated (empty inputs, count mismatch).
class UsageError : public Error
{
public:
  using Error::Error;
};

/// Input graph or raster does not have the required shape.
class StructuralError : public Error
{
public:
  using Error::Error;
};

/// Malformed file. Carries the byte offset where parsing failed.
class FormatError : public Error
{
public:
  FormatError(const std::string &what, std::size_t offset)
    : Error(what + " (at byte " + std::to_string(offset) + ")")
    , offset_(offset)
  {}
  std::size_t offset() const { return offset_; }
  /// Same error with `prefix` prepended to the message.
  FormatError prefixed(const std::string &prefix) const { return FormatError(prefix + what(), offset_, 0); }

private:
  FormatError(const std::string &full, std::size_t offset, int)
    : Error(full)
    , offset_(offset)
  {}
  std::size_t offset_;
};

/// The voxel grid holds no usable probability mass.
class EmptyVolumeError : public Error
{
public:
  using Error::Error;
};

/// Skeleton extraction produced nothing usable.
class ReconstructionError : public Error
{
public:
  using Error::Error;
};

/// SplitMix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b * 0x2545f4914f6cdd1dull));
}

/// Seeded random stream. Draws are derived from raw 64-bit output so results do not
/// depend on the standard library's distribution implementations.
class Rng
{
public:
  explicit Rng(std::uint64_t seed)
    : engine_(mix_seed(seed))
  {}

  std::uint64_t bits() { return engine_(); }
  /// uniform in [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// uniform integer in [0, n)
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }
  bool bernoulli(double p) { return uniform() < p; }

private:
  std::mt19937_64 engine_;
};

inline int resolve_threads(int threads)
{
  if (threads > 0)
    return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Static-chunked parallel loop over [0, n). fn(begin, end) must only write to
/// state owned by its own index range, so results do not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn &&fn)
{
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)), n);
  if (workers <= 1)
  {
    if (n > 0)
      fn(std::size_t{ 0 }, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w)
  {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end)
      break;
    pool.emplace_back([&fn, &errors, w, begin, end] {
      try
      {
        fn(begin, end);
      }
      catch (...)
      {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto &t : pool)
    t.join();
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}
}  // namespace plantrec
