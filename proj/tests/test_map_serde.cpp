#include <cstring>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gedf/map_serde.hpp"

namespace gedf {
namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

SparseGmmMap random_map(std::uint64_t seed, int block_count) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> kcount(1, 6);
  std::vector<Block> blocks;
  for (int n = 0; n < block_count; ++n) {
    Block b;
    b.index = BlockIndex(n % 5 - 2, (n / 5) % 5 - 2, n / 25);
    const int k = kcount(rng);
    for (int i = 0; i < k; ++i) {
      GaussianKernel g;
      g.weight = f32(2.0 * u(rng) - 0.5);
      g.center = (b.index.cast<double>() + Eigen::Vector3d(u(rng), u(rng), u(rng))).unaryExpr(&f32);
      g.length_scales = Eigen::Vector3d(0.1 + u(rng), 0.1 + u(rng), 0.1 + u(rng)).unaryExpr(&f32);
      b.fit.kernels.push_back(g);
    }
    b.fit.mae = f32(0.05 * u(rng));
    b.fit.converged = u(rng) > 0.2;
    blocks.push_back(std::move(b));
  }
  const Eigen::AlignedBox3d bounds(Eigen::Vector3d(-2.0, -2.0, 0.0),
                                   Eigen::Vector3d(3.0, 3.0, 1.0 + block_count / 25));
  return SparseGmmMap(1.0, 0.25, std::move(blocks), bounds, f32(0.0123));
}

std::string serialize(const SparseGmmMap& map) {
  std::ostringstream out(std::ios::binary);
  save_map(map, out);
  return out.str();
}

SparseGmmMap deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return load_map(in);
}

template <class T>
T read_le(const std::string& bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

TEST(MapSerde, EmptyMapIsHeaderOnly) {
  const SparseGmmMap map(1.0, 0.25, {}, Eigen::AlignedBox3d(Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()), 0.0);
  const std::string bytes = serialize(map);
  ASSERT_EQ(bytes.size(), 46u);
  EXPECT_EQ(bytes.substr(0, 4), "GEDF");
  EXPECT_EQ(read_le<std::uint16_t>(bytes, 4), 1u);
  EXPECT_EQ(read_le<float>(bytes, 6), 1.0f);
  EXPECT_EQ(read_le<float>(bytes, 10), 0.25f);
  EXPECT_EQ(read_le<float>(bytes, 14), 0.0f);
  EXPECT_EQ(read_le<float>(bytes, 18), 0.0f);
  EXPECT_EQ(read_le<float>(bytes, 30), 1.0f);
  EXPECT_EQ(read_le<std::uint32_t>(bytes, 42), 0u);
  EXPECT_EQ(deserialize(bytes).blocks().size(), 0u);
}

TEST(MapSerde, SingleBlockLayout) {
  Block b;
  b.index = BlockIndex(-3, 7, 2);
  for (int i = 0; i < 3; ++i) {
    b.fit.kernels.push_back({0.5 + i, Eigen::Vector3d(i, 2.0 * i, 3.0 * i), Eigen::Vector3d(0.25, 0.5, 1.0)});
  }
  b.fit.mae = 0.03125;
  b.fit.converged = true;
  const SparseGmmMap map(1.0, 0.25, {b}, Eigen::AlignedBox3d(Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()), 0.5);
  const std::string bytes = serialize(map);
  ASSERT_EQ(bytes.size(), 46u + 19u + 3u * 28u);
  EXPECT_EQ(bytes.size(), serialized_size(1, 3));
  EXPECT_EQ(read_le<std::int32_t>(bytes, 46), -3);
  EXPECT_EQ(read_le<std::int32_t>(bytes, 50), 7);
  EXPECT_EQ(read_le<std::int32_t>(bytes, 54), 2);
  EXPECT_EQ(read_le<std::uint16_t>(bytes, 58), 3u);
  EXPECT_EQ(read_le<float>(bytes, 60), 0.03125f);
  EXPECT_EQ(static_cast<unsigned char>(bytes[64]), 1u);
  const std::size_t k1 = 65 + 28;
  EXPECT_EQ(read_le<float>(bytes, k1), 1.5f);
  EXPECT_EQ(read_le<float>(bytes, k1 + 4), 1.0f);
  EXPECT_EQ(read_le<float>(bytes, k1 + 8), 2.0f);
  EXPECT_EQ(read_le<float>(bytes, k1 + 12), 3.0f);
  EXPECT_EQ(read_le<float>(bytes, k1 + 16), 0.25f);
  EXPECT_EQ(read_le<float>(bytes, k1 + 24), 1.0f);
}

TEST(MapSerde, SizeFormulaAndDeterminism) {
  const SparseGmmMap map = random_map(61, 40);
  const std::string a = serialize(map);
  const std::string b = serialize(map);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), serialized_size(map.blocks().size(), map.total_kernels()));
  std::ostringstream sink(std::ios::binary);
  EXPECT_EQ(save_map(map, sink), a.size());
}

TEST(MapSerde, RoundTripGivesBitIdenticalQueries) {
  const SparseGmmMap map = random_map(62, 100);
  const SparseGmmMap back = deserialize(serialize(map));
  ASSERT_EQ(back.blocks().size(), map.blocks().size());
  EXPECT_EQ(back.total_kernels(), map.total_kernels());
  EXPECT_EQ(back.global_mae(), map.global_mae());
  EXPECT_EQ(back.unconverged_blocks(), map.unconverged_blocks());
  EXPECT_TRUE(back.bounds().isApprox(map.bounds()));
  for (std::size_t i = 0; i < map.blocks().size(); ++i) {
    EXPECT_EQ(back.blocks()[i].index, map.blocks()[i].index);
    EXPECT_EQ(back.blocks()[i].fit.mae, map.blocks()[i].fit.mae);
  }
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> u(-2.5, 3.5);
  std::vector<Eigen::Vector3d> probes;
  for (int i = 0; i < 10000; ++i) probes.emplace_back(u(rng), u(rng), 0.5 * u(rng) + 1.0);
  const auto qa = map.query_batch(probes);
  const auto qb = back.query_batch(probes);
  int valid = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    ASSERT_EQ(qa[i].valid, qb[i].valid);
    ASSERT_EQ(qa[i].value, qb[i].value);
    ASSERT_EQ(qa[i].gradient, qb[i].gradient);
    valid += qa[i].valid;
  }
  EXPECT_GT(valid, 2000);
  EXPECT_EQ(serialize(back), serialize(map));
}

TEST(MapSerde, FileRoundTrip) {
  const SparseGmmMap map = random_map(64, 10);
  const std::string path = ::testing::TempDir() + "serde_roundtrip.bin";
  const std::size_t written = save_map(map, path);
  const SparseGmmMap back = load_map(path);
  EXPECT_EQ(written, serialized_size(map.blocks().size(), map.total_kernels()));
  EXPECT_EQ(serialize(back), serialize(map));
  EXPECT_THROW(load_map(std::string("/nonexistent/map.bin")), std::runtime_error);
}

TEST(MapSerde, TruncatedKernelPayloadNamesBlock) {
  const SparseGmmMap map = random_map(65, 5);
  const std::string bytes = serialize(map);
  const std::string cut = bytes.substr(0, bytes.size() - 3);
  const BlockIndex last = map.blocks().back().index;
  try {
    deserialize(cut);
    FAIL() << "expected MapFormatError";
  } catch (const MapFormatError& e) {
    EXPECT_EQ(e.kind(), MapFormatError::Kind::kTruncatedBlock);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("#4"), std::string::npos) << msg;
    const std::string idx = "(" + std::to_string(last.x()) + ", " + std::to_string(last.y()) + ", " +
                            std::to_string(last.z()) + ")";
    EXPECT_NE(msg.find(idx), std::string::npos) << msg;
  }
}

TEST(MapSerde, EveryTruncationIsRejected) {
  const SparseGmmMap map = random_map(66, 3);
  const std::string bytes = serialize(map);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    EXPECT_THROW(deserialize(bytes.substr(0, n)), MapFormatError) << "length " << n;
  }
}

TEST(MapSerde, BadMagicIsFormatMismatch) {
  std::string bytes = serialize(random_map(67, 2));
  bytes[0] = 'X';
  try {
    deserialize(bytes);
    FAIL() << "expected MapFormatError";
  } catch (const MapFormatError& e) {
    EXPECT_EQ(e.kind(), MapFormatError::Kind::kBadMagic);
    EXPECT_NE(std::string(e.what()).find("format mismatch"), std::string::npos);
  }
}

TEST(MapSerde, UnknownVersionIsRejected) {
  std::string bytes = serialize(random_map(68, 2));
  bytes[4] = 2;
  try {
    deserialize(bytes);
    FAIL() << "expected MapFormatError";
  } catch (const MapFormatError& e) {
    EXPECT_EQ(e.kind(), MapFormatError::Kind::kUnsupportedVersion);
  }
}

TEST(MapSerde, NonPositiveLengthScaleIsRejected) {
  std::string bytes = serialize(random_map(69, 2));
  const float zero = 0.0f;
  std::memcpy(bytes.data() + 46 + 19 + 16, &zero, sizeof(float));
  try {
    deserialize(bytes);
    FAIL() << "expected MapFormatError";
  } catch (const MapFormatError& e) {
    EXPECT_EQ(e.kind(), MapFormatError::Kind::kInvalidBlock);
  }
}

TEST(MapSerde, EmptyBlockAndDuplicateIndexAreRejected) {
  std::string bytes = serialize(random_map(70, 2));
  std::string zero_k = bytes;
  zero_k[58] = 0;
  zero_k[59] = 0;
  EXPECT_THROW(deserialize(zero_k), MapFormatError);

  const SparseGmmMap two = random_map(71, 2);
  std::string dup = serialize(two);
  const std::size_t second = 46 + 19 + 28 * two.blocks()[0].fit.kernels.size();
  std::memcpy(dup.data() + second, dup.data() + 46, 12);
  EXPECT_THROW(deserialize(dup), MapFormatError);
}

}  // namespace
}  // namespace gedf
