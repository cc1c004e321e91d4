#pragma once

#include "plantrec/cameras.h"
#include "plantrec/plantgen.h"

#include <json.hpp>

#include <filesystem>
#include <span>

namespace plantrec
{
/// Row-major boolean raster.
struct BinaryMask
{
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h)
    : width(w)
    , height(h)
    , bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0)
  {}
  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
  bool operator==(const BinaryMask &) const = default;
};

/// Row-major per-pixel branch probability in [0, 1].
struct ProbMap2D
{
  int width = 0;
  int height = 0;
  std::vector<double> values;

  ProbMap2D() = default;
  ProbMap2D(int w, int h, double fill = 0.0)
    : width(w)
    , height(h)
    , values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill)
  {}
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const ProbMap2D &) const = default;
};

struct RenderedMasks
{
  BinaryMask full_branch;     ///< every branch segment, ignoring leaves
  BinaryMask visible_branch;  ///< branch pixels not hidden behind a leaf
  BinaryMask whole_plant;     ///< branches plus leaf silhouettes
  bool out_of_frame = false;  ///< nothing of the plant landed in the image
};

/// Rasterizes the plant into one view. Branches are capsules of projected radius
/// (at least half a pixel); leaves are exact ray/disc intersections.
RenderedMasks render_masks(const PlantModel &plant, const Camera &camera);

/// Parameters of the stochastic stand-in for a dropout-sampled segmentation network.
struct InferenceSimConfig
{
  int n_samples = 100;
  double occluded_recall = 0.5;
  double visible_recall = 0.95;
  double false_positive_rate = 1e-4;
  int blur_radius = 0;  ///< box-filter half width in pixels, 0 disables

  void validate() const;
};

/// One binary inference sample. Deterministic per (seed, sample_index).
BinaryMask simulate_inference_sample(const BinaryMask &full, const BinaryMask &visible, const InferenceSimConfig &cfg,
                                     std::uint64_t seed, std::uint64_t sample_index);

/// Per-pixel mean of the sample indicators.
/// Throws UsageError on an empty list, StructuralError on mismatched sizes
ProbMap2D estimate_prob_map(std::span<const BinaryMask> samples);

/// Draws cfg.n_samples samples (indices 0..n-1) and returns their mean without keeping them.
/// Identical to estimate_prob_map over the same samples.
ProbMap2D simulate_prob_map(const BinaryMask &full, const BinaryMask &visible, const InferenceSimConfig &cfg,
                            std::uint64_t seed);

ProbMap2D mask_to_prob_map(const BinaryMask &mask);

/// Rounds every value onto the 16-bit grid used by the map file format.
ProbMap2D quantize_prob_map(const ProbMap2D &map);

/// 16-bit binary PGM (P5, maxval 65535), value = round(p * 65535).
void save_prob_map(const ProbMap2D &map, const std::filesystem::path &path);
/// Accepts any binary PGM; values are divided by maxval.
/// Throws FormatError with the byte offset of the problem
ProbMap2D load_prob_map(const std::filesystem::path &path);
ProbMap2D parse_prob_map(std::string_view bytes);
std::string encode_prob_map(const ProbMap2D &map);

/// Masks are stored as maxval-1 PGM.
void save_mask(const BinaryMask &mask, const std::filesystem::path &path);
BinaryMask load_mask(const std::filesystem::path &path);

nlohmann::json inference_config_to_json(const InferenceSimConfig &cfg);
InferenceSimConfig inference_config_from_json(const nlohmann::json &doc);
}  // namespace plantrec
