#include "plantrec/probmap.h"
#include "support.h"

#include <doctest.h>

#include <cmath>

using namespace plantrec;

namespace
{
PlantModel fitted_plant(std::uint64_t seed, std::vector<Camera> &rig, int count = 72)
{
  PlantModel plant = generate_plant(PlantGenConfig{}, seed);
  const auto [lo, hi] = plant.full_bounds();
  RigLayout layout;
  layout.camera_count = count;
  layout.look_at = 0.5 * (lo + hi);
  layout.radius = fitting_radius(0.5 * (hi - lo).norm(), layout.horizontal_fov_deg);
  layout.width = layout.height = 128;
  rig = make_rig(layout);
  return plant;
}

bool subset(const BinaryMask &a, const BinaryMask &b)
{
  for (std::size_t i = 0; i < a.bits.size(); ++i)
    if (a.bits[i] && !b.bits[i])
      return false;
  return true;
}

BinaryMask random_mask(int w, int h, double p, std::uint64_t seed)
{
  Rng rng(seed);
  BinaryMask m(w, h);
  for (auto &b : m.bits)
    b = rng.bernoulli(p);
  return m;
}
}  // namespace

TEST_CASE("mask containment over a full rig")
{
  std::vector<Camera> rig;
  const auto plant = fitted_plant(11, rig);
  std::size_t occluded = 0;
  for (const auto &cam : rig)
  {
    const auto m = render_masks(plant, cam);
    CHECK_FALSE(m.out_of_frame);
    CHECK(m.full_branch.count() > 0);
    CHECK(subset(m.visible_branch, m.full_branch));
    CHECK(subset(m.full_branch, m.whole_plant));
    occluded += m.full_branch.count() - m.visible_branch.count();
  }
  CHECK(occluded > 0);
}

TEST_CASE("leafless plants are fully visible")
{
  std::vector<Camera> rig;
  auto plant = fitted_plant(12, rig, 8);
  plant.leaves.clear();
  for (const auto &cam : rig)
  {
    const auto m = render_masks(plant, cam);
    CHECK(m.visible_branch == m.full_branch);
    CHECK(m.whole_plant == m.full_branch);
  }
}

TEST_CASE("a leaf covering the view hides every branch")
{
  std::vector<Camera> rig;
  auto plant = fitted_plant(13, rig, 1);
  const Camera &cam = rig.front();
  LeafDisc wall;
  wall.center = cam.center() + 0.2 * cam.optical_axis();
  wall.normal = cam.optical_axis();
  wall.radius = 100.0;
  plant.leaves = { wall };
  const auto m = render_masks(plant, cam);
  CHECK(m.full_branch.count() > 0);
  CHECK(m.visible_branch.count() == 0);
}

TEST_CASE("plant behind the camera is flagged out of frame")
{
  std::vector<Camera> rig;
  const auto plant = fitted_plant(14, rig, 1);
  const Camera &c = rig.front();
  const Camera away = look_at_camera(c.center(), c.center() + (c.center() - 0.5 * (plant.full_bounds().first + plant.full_bounds().second)), c.width, c.height, 50.0);
  const auto m = render_masks(plant, away);
  CHECK(m.out_of_frame);
  CHECK(m.whole_plant.count() == 0);
}

TEST_CASE("lossless and occlusion-only channels")
{
  const auto full = random_mask(64, 48, 0.3, 1);
  BinaryMask visible = full;
  Rng rng(2);
  for (auto &b : visible.bits)
    if (b && rng.bernoulli(0.5))
      b = 0;

  InferenceSimConfig lossless;
  lossless.visible_recall = 1.0;
  lossless.occluded_recall = 1.0;
  lossless.false_positive_rate = 0.0;
  CHECK(simulate_inference_sample(full, visible, lossless, 9, 0) == full);

  InferenceSimConfig occl = lossless;
  occl.occluded_recall = 0.0;
  CHECK(simulate_inference_sample(full, visible, occl, 9, 0) == visible);
}

TEST_CASE("occluded recovery follows the binomial law")
{
  BinaryMask full(100, 100);
  std::fill(full.bits.begin(), full.bits.end(), 1);
  const BinaryMask visible(100, 100);
  InferenceSimConfig cfg;
  cfg.occluded_recall = 0.3;
  cfg.false_positive_rate = 0.0;
  const auto s = simulate_inference_sample(full, visible, cfg, 77, 3);
  const double tol = 3.0 * std::sqrt(10000 * 0.3 * 0.7);
  CHECK(std::abs(static_cast<double>(s.count()) - 3000.0) <= tol);
}

TEST_CASE("false positives land on background only at the configured rate")
{
  BinaryMask full(200, 200);
  for (int i = 0; i < 200 * 20; ++i)
    full.bits[static_cast<std::size_t>(i)] = 1;
  const BinaryMask visible = full;
  InferenceSimConfig cfg;
  cfg.visible_recall = 1.0;
  cfg.false_positive_rate = 0.01;
  const auto s = simulate_inference_sample(full, visible, cfg, 5, 0);
  const double background = 200.0 * 180.0;
  const double fp = static_cast<double>(s.count()) - 200.0 * 20.0;
  CHECK(std::abs(fp - background * 0.01) <= 3.0 * std::sqrt(background * 0.01 * 0.99));
}

TEST_CASE("samples are keyed by seed and index")
{
  const auto full = random_mask(32, 32, 0.4, 3);
  const BinaryMask visible(32, 32);
  InferenceSimConfig cfg;
  const auto a = simulate_inference_sample(full, visible, cfg, 1, 4);
  CHECK(a == simulate_inference_sample(full, visible, cfg, 1, 4));
  CHECK_FALSE(a == simulate_inference_sample(full, visible, cfg, 1, 5));
  CHECK_FALSE(a == simulate_inference_sample(full, visible, cfg, 2, 4));
  CHECK_THROWS_AS(simulate_inference_sample(full, BinaryMask(31, 32), cfg, 1, 0), StructuralError);
}

TEST_CASE("majority blur removes isolated specks and keeps solid regions")
{
  BinaryMask m(20, 20);
  for (int y = 5; y < 15; ++y)
    for (int x = 5; x < 15; ++x)
      m.bits[static_cast<std::size_t>(y * 20 + x)] = 1;
  InferenceSimConfig cfg;
  cfg.visible_recall = 1.0;
  cfg.false_positive_rate = 0.0;
  cfg.blur_radius = 1;
  BinaryMask speck = m;
  speck.bits[0] = 1;
  const auto s = simulate_inference_sample(speck, speck, cfg, 1, 0);
  CHECK_FALSE(s.at(0, 0));
  CHECK(s.at(10, 10));
}

TEST_CASE("probability map is the sample mean")
{
  const auto a = random_mask(16, 16, 0.5, 1);
  const std::vector<BinaryMask> same(5, a);
  CHECK(estimate_prob_map(same) == mask_to_prob_map(a));

  BinaryMask x(1, 1), y(1, 1);
  x.bits[0] = 1;
  const std::vector<BinaryMask> pair{ x, y };
  CHECK(estimate_prob_map(pair).values[0] == 0.5);

  CHECK_THROWS_AS(estimate_prob_map(std::span<const BinaryMask>{}), UsageError);
  const std::vector<BinaryMask> mismatch{ BinaryMask(2, 2), BinaryMask(3, 2) };
  CHECK_THROWS_AS(estimate_prob_map(mismatch), StructuralError);
}

TEST_CASE("100 samples at keep probability 0.3 concentrate")
{
  BinaryMask full(50, 50);
  std::fill(full.bits.begin(), full.bits.end(), 1);
  const BinaryMask visible(50, 50);
  InferenceSimConfig cfg;
  cfg.occluded_recall = 0.3;
  cfg.false_positive_rate = 0.0;
  std::vector<BinaryMask> samples;
  for (int i = 0; i < 100; ++i)
    samples.push_back(simulate_inference_sample(full, visible, cfg, 21, static_cast<std::uint64_t>(i)));
  const auto map = estimate_prob_map(samples);
  const double sd = std::sqrt(0.3 * 0.7 / 100.0);
  std::size_t inside = 0;
  for (double v : map.values)
  {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    inside += std::abs(v - 0.3) <= 3.0 * sd;
  }
  CHECK(static_cast<double>(inside) >= 0.99 * static_cast<double>(map.values.size()));
  CHECK(simulate_prob_map(full, visible, cfg, 21) == map);
}

TEST_CASE("raising occluded recall raises the expected occluded probability")
{
  BinaryMask full(20, 20);
  std::fill(full.bits.begin(), full.bits.end(), 1);
  const BinaryMask visible(20, 20);
  double previous = -1.0;
  for (double recall : { 0.1, 0.3, 0.5, 0.7, 0.9 })
  {
    InferenceSimConfig cfg;
    cfg.n_samples = 1;
    cfg.occluded_recall = recall;
    cfg.false_positive_rate = 0.0;
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed)
      for (double v : simulate_prob_map(full, visible, cfg, seed).values)
        sum += v;
    const double mean = sum / (100.0 * 400.0);
    CHECK(mean > previous);
    previous = mean;
  }
}

TEST_CASE("16-bit map files")
{
  testsupport::TempDir dir("pgm");
  ProbMap2D map(7, 5);
  Rng rng(4);
  for (auto &v : map.values)
    v = rng.uniform();
  save_prob_map(map, dir.path() / "m.pgm");
  const auto back = load_prob_map(dir.path() / "m.pgm");
  REQUIRE(back.width == 7);
  REQUIRE(back.height == 5);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    CHECK(std::abs(back.values[i] - map.values[i]) <= 1.0 / 65535.0);
  CHECK(back == quantize_prob_map(map));

  for (double fill : { 0.0, 1.0 })
  {
    const ProbMap2D uniform(4, 4, fill);
    CHECK(parse_prob_map(encode_prob_map(uniform)) == uniform);
  }

  const std::string bytes = encode_prob_map(map);
  try
  {
    parse_prob_map(bytes.substr(0, bytes.size() - 3));
    FAIL("expected FormatError");
  }
  catch (const FormatError &e)
  {
    CHECK(e.offset() > 0);
  }
  CHECK_THROWS_AS(parse_prob_map("P2\n2 2\n255\n0 0 0 0"), FormatError);
  CHECK(parse_prob_map(std::string("P5\n# comment\n2 1\n255\n") + char(0) + char(255)).values == std::vector<double>{ 0.0, 1.0 });
}

TEST_CASE("mask files")
{
  testsupport::TempDir dir("mask");
  const auto m = random_mask(9, 4, 0.5, 8);
  save_mask(m, dir.path() / "m.pgm");
  CHECK(load_mask(dir.path() / "m.pgm") == m);
}
