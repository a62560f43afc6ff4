#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "gedf/kdtree.hpp"
#include "gedf/scene.hpp"
#include "gedf/spatial_key.hpp"
#include "gedf/sparse_map.hpp"
#include "test_support.hpp"

namespace gedf {
namespace {

using testing::numeric_gradient;
using testing::seam_map;

// Every block of a 3 x 3 x 2 lattice holds a few random kernels.
SparseGmmMap random_block_map(std::uint64_t seed, double block_size = 1.0,
                              double margin = 0.25) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Block> blocks;
  for (int k = 0; k < 2; ++k)
    for (int j = -1; j < 2; ++j)
      for (int i = -1; i < 2; ++i) {
        Block b;
        b.index = BlockIndex(i, j, k);
        for (int n = 0; n < 4; ++n) {
          GaussianKernel g;
          g.weight = 2.0 * u(rng) - 0.5;
          g.center = block_size * (b.index.cast<double>() + Eigen::Vector3d(u(rng), u(rng), u(rng)));
          g.length_scales = Eigen::Vector3d(0.2 + 0.6 * u(rng), 0.2 + 0.6 * u(rng), 0.2 + 0.6 * u(rng));
          b.fit.kernels.push_back(g);
        }
        b.fit.converged = true;
        blocks.push_back(std::move(b));
      }
  Eigen::AlignedBox3d bounds(Eigen::Vector3d(-block_size, -block_size, 0.0),
                             Eigen::Vector3d(2 * block_size, 2 * block_size, 2 * block_size));
  return SparseGmmMap(block_size, margin, std::move(blocks), bounds, 0.01);
}

TEST(SparseMap, ConfigValidationRejectsBadMargins) {
  MapConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.overlap_margin = 0.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.overlap_margin = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = MapConfig{};
  cfg.activation_distance = 0.4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = MapConfig{};
  cfg.edt_voxel_size = 0.3;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = MapConfig{};
  EXPECT_DOUBLE_EQ(cfg.effective_halo(), 1.5 + 0.5 + 0.25);
}

TEST(SparseMap, BuildRejectsEmptyCloud) {
  EXPECT_THROW(build_map({}, MapConfig{}), std::invalid_argument);
}

TEST(SparseMap, DuplicateBlocksAreRejected) {
  std::vector<Block> blocks(2);
  blocks[0].index = blocks[1].index = BlockIndex(1, 2, 3);
  EXPECT_THROW(SparseGmmMap(1.0, 0.25, blocks, Eigen::AlignedBox3d(), 0.0), std::invalid_argument);
}

TEST(SparseMap, ActiveBlocksMatchBruteForce) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-2.0, 3.0);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 40; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  MapConfig cfg;
  const auto got = select_active_blocks(pts, cfg);

  std::set<std::tuple<int, int, int>> want;
  for (int k = -6; k <= 7; ++k)
    for (int j = -6; j <= 7; ++j)
      for (int i = -6; i <= 7; ++i) {
        const Eigen::Vector3d lo(i, j, k);
        const Eigen::Vector3d center = lo + Eigen::Vector3d::Constant(0.5);
        bool active = false;
        for (const auto& p : pts) {
          const bool inside = (p.array() >= lo.array()).all() &&
                              (p.array() < (lo + Eigen::Vector3d::Ones()).array()).all();
          if (inside || (p - center).norm() <= cfg.activation_distance) {
            active = true;
            break;
          }
        }
        if (active) want.insert({i, j, k});
      }
  std::set<std::tuple<int, int, int>> have;
  for (const auto& b : got) have.insert({b.x(), b.y(), b.z()});
  EXPECT_EQ(have, want);
  EXPECT_TRUE(std::is_sorted(got.begin(), got.end(), [](const BlockIndex& a, const BlockIndex& b) {
    return pack_block_key(a) < pack_block_key(b);
  }));
}

TEST(SparseMap, InteriorQueryPassesThroughBitExact) {
  const SparseGmmMap map = random_block_map(42);
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.26, 0.74);
  for (int n = 0; n < 200; ++n) {
    const Eigen::Vector3d x(u(rng), u(rng), u(rng) + 1.0);
    const auto pos = map.find(BlockIndex(0, 0, 1));
    ASSERT_GE(pos, 0);
    const MixtureValue m = eval_mixture(map.blocks()[pos].fit.kernels, x);
    const FieldSample s = map.query(x);
    ASSERT_TRUE(s.valid);
    EXPECT_EQ(s.value, m.value);
    EXPECT_EQ(s.gradient, m.gradient);
    const auto w = map.blend_weights(x);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].alpha, 1.0);
  }
}

TEST(SparseMap, MidplaneWeightsAreHalf) {
  const SparseGmmMap map = random_block_map(44);
  const auto w = map.blend_weights(Eigen::Vector3d(1.0, 0.5, 0.5));
  ASSERT_EQ(w.size(), 2u);
  EXPECT_NEAR(w[0].alpha, 0.5, 1e-15);
  EXPECT_NEAR(w[1].alpha, 0.5, 1e-15);

  const auto corner = map.blend_weights(Eigen::Vector3d(0.0, 0.0, 1.0));
  ASSERT_EQ(corner.size(), 8u);
  for (const auto& c : corner) EXPECT_NEAR(c.alpha, 0.125, 1e-15);
}

TEST(SparseMap, WeightsFormPartitionOfUnity) {
  const SparseGmmMap map = random_block_map(45);
  std::mt19937_64 rng(46);
  std::uniform_real_distribution<double> ux(-1.2, 2.2);
  std::uniform_real_distribution<double> uz(-0.2, 2.2);
  int tested = 0;
  for (int n = 0; n < 2000; ++n) {
    const Eigen::Vector3d x(ux(rng), ux(rng), uz(rng));
    const auto w = map.blend_weights(x);
    if (w.empty()) {
      EXPECT_FALSE(map.query(x).valid);
      continue;
    }
    double sum = 0.0;
    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    for (const auto& b : w) {
      EXPECT_GT(b.alpha, 0.0);
      EXPECT_TRUE(map.extended_domain(map.blocks()[b.block].index).contains(x));
      sum += b.alpha;
      grad += b.gradient;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_LT(grad.norm(), 1e-9);
    ++tested;
  }
  EXPECT_GT(tested, 1000);
}

TEST(SparseMap, BlendedValueIsWeightedSumOfBlocks) {
  const SparseGmmMap map = random_block_map(47);
  std::mt19937_64 rng(48);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int n = 0; n < 300; ++n) {
    const Eigen::Vector3d x = Eigen::Vector3d(1.0, 0.0, 1.0) + Eigen::Vector3d(u(rng), u(rng), u(rng));
    double v = 0.0;
    for (const auto& b : map.blend_weights(x)) {
      v += b.alpha * eval_mixture_value(map.blocks()[b.block].fit.kernels, x);
    }
    EXPECT_NEAR(map.query(x).value, v, 1e-12);
  }
}

TEST(SparseMap, BlendWeightGradientsMatchFiniteDifferences) {
  const SparseGmmMap map = random_block_map(49);
  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> u(-0.24, 0.24);
  for (int n = 0; n < 200; ++n) {
    const Eigen::Vector3d x = Eigen::Vector3d(0.0, 1.0, 1.0) + Eigen::Vector3d(u(rng), u(rng), u(rng));
    const auto w = map.blend_weights(x);
    for (const auto& b : w) {
      const auto alpha_of = [&](const Eigen::Vector3d& p) {
        for (const auto& c : map.blend_weights(p)) {
          if (c.block == b.block) return c.alpha;
        }
        return 0.0;
      };
      const Eigen::Vector3d fd = numeric_gradient(alpha_of, x, 1e-6);
      EXPECT_LT((fd - b.gradient).norm(), 1e-6);
    }
  }
}

// Segments crossing block faces, edges and corners of a random multi-block map.
TEST(SparseMap, BlendedFieldIsC1AcrossSeams) {
  const SparseGmmMap map = random_block_map(51);
  std::mt19937_64 rng(52);
  std::uniform_int_distribution<int> seam(0, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> dir(0.0, 1.0);
  const double h = 1e-4;
  for (int s = 0; s < 100; ++s) {
    const Eigen::Vector3d crossing(static_cast<double>(seam(rng)), 1.2 * u(rng) - 0.4,
                                   s % 3 == 0 ? 1.0 : 0.4 + 1.2 * u(rng));
    Eigen::Vector3d d(dir(rng), dir(rng), dir(rng));
    d.normalize();
    if (std::abs(d.x()) < 0.2) d.x() = 0.5;
    d.normalize();
    const Eigen::Vector3d a = crossing - 0.3 * d;
    const int steps = static_cast<int>(0.6 / h);
    double prev = map.query(a).value;
    for (int i = 1; i <= steps; ++i) {
      const Eigen::Vector3d x = a + (i * h) * d;
      const FieldSample q = map.query(x);
      ASSERT_TRUE(q.valid);
      EXPECT_LT(std::abs(q.value - prev), 1e-3) << "segment " << s << " step " << i;
      prev = q.value;
      if (i % 100 == 0) {
        const Eigen::Vector3d fd =
            numeric_gradient([&](const Eigen::Vector3d& p) { return map.query(p).value; }, x, 1e-6);
        EXPECT_LT((fd - q.gradient).norm(), 1e-3) << "segment " << s << " step " << i;
      }
    }
  }
}

TEST(SparseMap, QueryOutsideMapIsInvalid) {
  const SparseGmmMap map = random_block_map(53);
  const FieldSample s = map.query(Eigen::Vector3d(10.0, 10.0, 10.0));
  EXPECT_FALSE(s.valid);
  EXPECT_EQ(s.value, 0.0);
  EXPECT_TRUE(s.gradient.isZero());
  // On the outer rim of the extended domain the weight vanishes.
  EXPECT_FALSE(map.query(Eigen::Vector3d(-1.25, 0.5, 0.5)).valid);
}

TEST(SparseMap, QueryBatchMatchesPointQueries) {
  const SparseGmmMap map = random_block_map(54);
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-1.5, 2.5);
  std::vector<Eigen::Vector3d> xs;
  for (int i = 0; i < 10000; ++i) xs.emplace_back(u(rng), u(rng), u(rng));
  const auto batch = map.query_batch(xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const FieldSample s = map.query(xs[i]);
    EXPECT_EQ(batch[i].valid, s.valid);
    EXPECT_EQ(batch[i].value, s.value);
    EXPECT_EQ(batch[i].gradient, s.gradient);
  }
}

TEST(SparseMap, BuiltMapApproximatesSceneDistance) {
  const SparseGmmMap& map = seam_map();
  ASSERT_GT(map.blocks().size(), 8u);
  Scene s;
  s.primitives = {RectanglePrimitive{{0.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, 2.0, 2.0},
                  RectanglePrimitive{{0.0, 0.6, 0.5}, {0.0, 1.0, 0.0}, 2.0, 1.0}};
  std::mt19937_64 rng(56);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::uniform_real_distribution<double> uz(0.05, 0.9);
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d x(u(rng), u(rng), uz(rng));
    const FieldSample q = map.query(x);
    if (!q.valid) continue;
    sum += std::abs(q.value - s.distance(x));
    ++n;
  }
  ASSERT_GT(n, 400);
  EXPECT_LT(sum / n, 2.0 * map.global_mae());
  for (const auto& b : map.blocks()) {
    for (const auto& k : b.fit.kernels) {
      EXPECT_EQ(k.weight, static_cast<double>(static_cast<float>(k.weight)));
      for (int a = 0; a < 3; ++a) {
        EXPECT_EQ(k.center[a], static_cast<double>(static_cast<float>(k.center[a])));
        EXPECT_EQ(k.length_scales[a], static_cast<double>(static_cast<float>(k.length_scales[a])));
      }
    }
  }
}

TEST(SparseMap, TruthPointsRegressTowardZero) {
  Scene s;
  s.density = 150.0;
  s.seed = 9;
  s.primitives = {RectanglePrimitive{{0.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, 2.0, 2.0},
                  RectanglePrimitive{{0.0, 0.6, 0.5}, {0.0, 1.0, 0.0}, 2.0, 1.0}};
  const auto truth = generate_scene(s);
  double sum = 0.0;
  for (const auto& p : truth) sum += std::abs(seam_map().query(p).value);
  EXPECT_LE(sum / truth.size(), 2.0 * MapConfig{}.fit.mae_tolerance);
}

TEST(SparseMap, EvalRejectsMapWithoutValidProbes) {
  const SparseGmmMap map = random_block_map(57);
  EXPECT_THROW(eval_reconstruction(map, DistanceFn([](const Eigen::Vector3d&) { return 0.0; }),
                                   EvalOptions{0.3, 1e-4, 100.0}),
               std::runtime_error);
  EXPECT_THROW(eval_reconstruction(SparseGmmMap{}, DistanceFn([](const Eigen::Vector3d&) { return 0.0; }),
                                   EvalOptions{}),
               std::runtime_error);
  EXPECT_THROW(eval_reconstruction(map, DistanceFn([](const Eigen::Vector3d&) { return 0.0; }),
                                   EvalOptions{0.0, 1e-4, 0.0}),
               std::invalid_argument);
}

TEST(SparseMap, EvalOfExactFieldIsZero) {
  const SparseGmmMap map = random_block_map(58);
  const auto m = eval_reconstruction(
      map, DistanceFn([&](const Eigen::Vector3d& x) { return map.query(x).value; }),
      EvalOptions{0.2, 0.0, 0.0});
  EXPECT_GT(m.probes, 100u);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.median, 0.0);
  EXPECT_EQ(m.trimmed, 0u);
}

TEST(SparseMap, TrimFractionBarelyMovesMae) {
  const SparseGmmMap& map = seam_map();
  Scene s;
  s.primitives = {RectanglePrimitive{{0.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, 2.0, 2.0},
                  RectanglePrimitive{{0.0, 0.6, 0.5}, {0.0, 1.0, 0.0}, 2.0, 1.0}};
  const DistanceFn truth = [&](const Eigen::Vector3d& x) { return s.distance(x); };
  const auto trimmed = eval_reconstruction(map, truth, EvalOptions{0.1, 1e-4, 0.0});
  const auto raw = eval_reconstruction(map, truth, EvalOptions{0.1, 0.0, 0.0});
  EXPECT_LT(std::abs(trimmed.mae - raw.mae), 0.05 * raw.mae);
  EXPECT_GE(raw.probes, trimmed.probes);
}

TEST(SpatialKey, RoundTripsSignedCoordinates) {
  std::mt19937_64 rng(59);
  std::uniform_int_distribution<int> u(-(1 << 20), (1 << 20) - 1);
  std::set<std::uint64_t> keys;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector3i v(u(rng), u(rng), u(rng));
    const std::uint64_t key = pack_lattice_key(v);
    EXPECT_EQ(unpack_lattice_key(key), v);
    keys.insert(key);
  }
  EXPECT_GT(keys.size(), 9990u);
  EXPECT_EQ(unpack_lattice_key(pack_lattice_key({-1, 0, 1})), Eigen::Vector3i(-1, 0, 1));
  EXPECT_EQ(lattice_index(Eigen::Vector3d(-0.01, 0.0, 0.99), 1.0), Eigen::Vector3i(-1, 0, 0));
  EXPECT_EQ(lattice_index(Eigen::Vector3d(-1.0, 2.5, 0.25), 0.5), Eigen::Vector3i(-2, 5, 0));
}

TEST(KdTree, MatchesBruteForceNearest) {
  std::mt19937_64 rng(60);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 3000; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  const KdTree tree(pts);
  EXPECT_EQ(tree.size(), pts.size());
  for (int n = 0; n < 500; ++n) {
    const Eigen::Vector3d q(u(rng) * 1.5, u(rng) * 1.5, u(rng) * 1.5);
    double best = 1e300;
    for (const auto& p : pts) best = std::min(best, (p - q).norm());
    const auto hit = tree.nearest(q);
    EXPECT_NEAR(hit.distance, best, 1e-12);
    EXPECT_NEAR((pts[hit.index] - q).norm(), best, 1e-12);
  }
}

}  // namespace
}  // namespace gedf
