#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "retina/block_store.hpp"
#include "retina/errors.hpp"

using namespace retina;

namespace {

Block random_block(std::size_t r, std::size_t c, std::uint64_t seed) {
  Block b(r, c);
  const auto v = oracle::random_vector(r * c, seed, -1.0, 1.0);
  std::copy(v.begin(), v.end(), b.values().begin());
  return b;
}

}  // namespace

TEST(BlockStore, WriteThenReadIsBitIdentical) {
  for (auto layout : {StoreLayout::file_per_block, StoreLayout::single_file}) {
    oracle::TempDir dir("store");
    auto s = BlockMatrixStore::create(dir.path / "m", 128, 128, 64, layout);
    const Block b = random_block(64, 64, 1);
    s.write_block(1, 0, b);
    const Block back = s.read_block(1, 0);
    ASSERT_TRUE(std::equal(b.values().begin(), b.values().end(), back.values().begin(), back.values().end()));
  }
}

TEST(BlockStore, UnwrittenBlocksReadAsZero) {
  oracle::TempDir dir("store");
  auto s = BlockMatrixStore::create(dir.path / "m", 50, 70, 16);
  EXPECT_FALSE(s.is_written(2, 3));
  const Block b = s.read_block(2, 3);
  EXPECT_EQ(b.rows(), 16u);
  EXPECT_EQ(b.cols(), 16u);
  for (double v : b.values()) EXPECT_EQ(v, 0.0);
}

TEST(BlockStore, EdgeBlocksTakeTheRemainder) {
  oracle::TempDir dir("store");
  auto s = BlockMatrixStore::create(dir.path / "m", 100, 100, 40);
  ASSERT_EQ(s.block_rows(), 3u);
  ASSERT_EQ(s.block_cols(), 3u);
  EXPECT_EQ(s.read_block(1, 2).rows(), 40u);
  EXPECT_EQ(s.read_block(1, 2).cols(), 20u);
  EXPECT_EQ(s.read_block(2, 1).rows(), 20u);
  EXPECT_EQ(s.read_block(2, 1).cols(), 40u);
  EXPECT_EQ(s.read_block(2, 2).rows(), 20u);
  EXPECT_EQ(s.read_block(2, 2).cols(), 20u);
  EXPECT_THROW(s.write_block(2, 2, Block(40, 40)), InvalidParameter);
  EXPECT_THROW(s.read_block(3, 0), InvalidParameter);
}

TEST(BlockStore, ReopenedStoreHasSameContents) {
  for (auto layout : {StoreLayout::file_per_block, StoreLayout::single_file}) {
    oracle::TempDir dir("store");
    const auto dense = oracle::random_vector(37 * 29, 4);
    {
      auto s = BlockMatrixStore::create(dir.path / "m", 37, 29, 16, layout);
      for (std::size_t br = 0; br < s.block_rows(); ++br)
        for (std::size_t bc = 0; bc < s.block_cols(); ++bc) {
          if ((br + bc) % 2) continue;  // leave some blocks unwritten
          Block b(s.block_height(br), s.block_width(bc));
          for (std::size_t r = 0; r < b.rows(); ++r)
            for (std::size_t c = 0; c < b.cols(); ++c) b(r, c) = dense[(br * 16 + r) * 29 + bc * 16 + c];
          s.write_block(br, bc, b);
        }
    }
    const auto s = BlockMatrixStore::open(dir.path / "m");
    EXPECT_EQ(s.rows(), 37u);
    EXPECT_EQ(s.cols(), 29u);
    EXPECT_EQ(s.block_size(), 16u);
    EXPECT_EQ(s.layout(), layout);
    const auto back = store_to_dense(s);
    for (std::size_t r = 0; r < 37; ++r)
      for (std::size_t c = 0; c < 29; ++c) {
        const bool written = ((r / 16) + (c / 16)) % 2 == 0;
        EXPECT_EQ(back[r * 29 + c], written ? dense[r * 29 + c] : 0.0);
      }
  }
}

TEST(BlockStore, DenseHelpersRoundTrip) {
  oracle::TempDir dir("store");
  const auto dense = oracle::random_vector(45 * 45, 5);
  const auto s = store_from_dense(dir.path / "m", 45, 45, 16, dense);
  EXPECT_EQ(store_to_dense(s), dense);
}

TEST(BlockStore, DamagedManifestIsAStorageError) {
  oracle::TempDir dir("store");
  {
    auto s = BlockMatrixStore::create(dir.path / "m", 32, 32, 16);
    s.write_block(0, 0, random_block(16, 16, 2));
    s.sync();
  }
  std::ofstream(dir.path / "m" / "manifest.txt", std::ios::trunc) << "retina-blockstore 1\nrows banana\n";
  EXPECT_THROW(BlockMatrixStore::open(dir.path / "m"), StorageError);
  EXPECT_THROW(BlockMatrixStore::open(dir.path / "nowhere"), StorageError);
}

TEST(BlockStore, MissingBlockFileIsAStorageError) {
  oracle::TempDir dir("store");
  {
    auto s = BlockMatrixStore::create(dir.path / "m", 32, 32, 16);
    s.write_block(1, 1, random_block(16, 16, 2));
  }
  for (const auto& e : std::filesystem::directory_iterator(dir.path / "m"))
    if (e.path().extension() == ".f64") std::filesystem::remove(e.path());
  const auto s = BlockMatrixStore::open(dir.path / "m");
  EXPECT_THROW(s.read_block(1, 1), StorageError);
}

TEST(BlockStore, RejectsBadShapes) {
  oracle::TempDir dir("store");
  EXPECT_THROW(BlockMatrixStore::create(dir.path / "a", 10, 10, 0), InvalidParameter);
  EXPECT_THROW(BlockMatrixStore::create(dir.path / "b", 0, 10, 4), InvalidParameter);
}
