#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "stripereid/checkpoint.hpp"

using namespace stripereid;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "stripereid_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  Checkpoint c;
  c.put("a.weight", Tensor::randn({3, 2, 2}, 1));
  c.put("tiny", Tensor({1}, {5e-324}));
  c.put_u64("meta.epoch", 17);
  c.put_u64("ints", std::vector<std::uint64_t>{0, ~0ULL, 42});
  const auto path = temp_file("roundtrip.ckpt");
  c.save(path);
  const Checkpoint d = Checkpoint::load(path);
  EXPECT_EQ(c, d);
  EXPECT_EQ(d.u64_scalar("meta.epoch"), 17u);
  EXPECT_EQ(d.tensor("a.weight").shape(), (Shape{3, 2, 2}));
  EXPECT_EQ(d.names().size(), 4u);
}

TEST(Checkpoint, LoadIntoChecksShapeAndType) {
  Checkpoint c;
  c.put("w", Tensor::ones({2, 2}));
  c.put_u64("n", 3);
  Tensor ok = Tensor::zeros({2, 2});
  c.load_into("w", ok);
  EXPECT_EQ(ok[3], 1.0);
  Tensor wrong = Tensor::zeros({4});
  EXPECT_THROW(c.load_into("w", wrong), std::runtime_error);
  EXPECT_THROW(c.load_into("n", ok), std::runtime_error);
  EXPECT_THROW(c.u64("w"), std::runtime_error);
  EXPECT_THROW(c.tensor("missing"), std::runtime_error);
}

TEST(Checkpoint, RejectsBadNamesAndReplacesDuplicates) {
  Checkpoint c;
  EXPECT_THROW(c.put("has space", Tensor::ones({1})), std::invalid_argument);
  EXPECT_THROW(c.put("", Tensor::ones({1})), std::invalid_argument);
  c.put("x", Tensor::ones({1}));
  c.put("x", Tensor::full({2}, 3.0));
  EXPECT_EQ(c.names().size(), 1u);
  EXPECT_EQ(c.tensor("x").shape(), (Shape{2}));
}

TEST(Checkpoint, DetectsCorruptFiles) {
  const auto bad_magic = temp_file("bad_magic.ckpt");
  std::ofstream(bad_magic) << "not-a-checkpoint v1\n\n";
  EXPECT_THROW(Checkpoint::load(bad_magic), std::runtime_error);

  Checkpoint c;
  c.put("w", Tensor::ones({4}));
  const auto path = temp_file("truncated.ckpt");
  c.save(path);
  fs::resize_file(path, fs::file_size(path) - 8);
  EXPECT_THROW(Checkpoint::load(path), std::runtime_error);
  EXPECT_THROW(Checkpoint::load(temp_file("does_not_exist.ckpt")), std::runtime_error);
}
