#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "stripereid/synthdata.hpp"

using namespace stripereid;
using namespace stripereid::synth;

namespace {

bool has_occluder_pixel(const Image8& img) {
  for (std::int64_t y = 0; y < img.height; ++y)
    for (std::int64_t x = 0; x < img.width; ++x)
      if (img.at(y, x, 0) == kOccluderGray && img.at(y, x, 1) == kOccluderGray && img.at(y, x, 2) == kOccluderGray) return true;
  return false;
}

ImageF random_image(std::uint64_t seed, std::int64_t h = 16, std::int64_t w = 8) {
  SplitMix64 rng(seed);
  ImageF img = ImageF::blank(h, w);
  for (auto& v : img.planes) v = rng.uniform();
  return img;
}

}  // namespace

TEST(Manifest, RoundTrip) {
  DatasetManifest m;
  m.records.push_back({3, 1, Split::train, "images/3_1_0.ppm"});
  m.records.push_back({7, 0, Split::query, "images/7_0_0.ppm"});
  m.records.push_back({7, 2, Split::gallery, "images/7_2_1.ppm"});
  const auto text = format_manifest(m);
  EXPECT_EQ(text.substr(0, text.find('\n')), kManifestHeader);
  EXPECT_EQ(parse_manifest(text), m);
  EXPECT_EQ(m.indices(Split::gallery), (std::vector<std::size_t>{2}));
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  const std::string header = std::string(kManifestHeader) + "\n";
  auto line_of = [](const std::string& text) {
    try {
      parse_manifest(text);
    } catch (const ManifestParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("id,cam\n"), 1u);
  EXPECT_EQ(line_of(header + "1,0,train,a.ppm\n1,0,train\n"), 3u);
  EXPECT_EQ(line_of(header + "1,0,train,a.ppm\nx,0,train,b.ppm\n"), 3u);
  EXPECT_EQ(line_of(header + "1,0,val,a.ppm\n"), 2u);
  EXPECT_EQ(line_of(header + "1,0,train,\n"), 2u);
  EXPECT_EQ(line_of(header + "1,0,train,a.ppm\r\n"), 0u);
}

TEST(Generator, IdentitiesAreSeparatedInColour) {
  const auto people = sample_identities(32, 4);
  for (std::size_t a = 0; a < people.size(); ++a)
    for (std::size_t b = a + 1; b < people.size(); ++b) {
      double gap = 0.0;
      for (std::size_t band = 0; band < 4; ++band)
        for (std::size_t c = 0; c < 3; ++c) gap = std::max(gap, std::fabs(people[a].bands[band][c] - people[b].bands[band][c]));
      EXPECT_GE(gap, kMinIdentityColorGap);
    }
}

TEST(Generator, DefaultLayoutAndSplits) {
  const GeneratorConfig cfg;
  const auto ds = generate_dataset(cfg);
  ASSERT_EQ(ds.images.size(), 512u);
  EXPECT_EQ(ds.manifest.indices(Split::train).size(), 256u);
  EXPECT_EQ(ds.manifest.indices(Split::query).size(), 64u);
  EXPECT_EQ(ds.manifest.indices(Split::gallery).size(), 192u);
  std::set<std::int64_t> train_ids, test_ids;
  for (const auto& r : ds.manifest.records) (r.split == Split::train ? train_ids : test_ids).insert(r.person_id);
  EXPECT_EQ(train_ids.size(), 16u);
  EXPECT_EQ(test_ids.size(), 16u);
  for (const auto id : train_ids) EXPECT_EQ(test_ids.count(id), 0u);
  for (const auto& img : ds.images) {
    EXPECT_EQ(img.height, 64);
    EXPECT_EQ(img.width, 32);
    EXPECT_FALSE(has_occluder_pixel(img));
  }
}

TEST(Generator, IsDeterministicPerSeed) {
  GeneratorConfig cfg;
  cfg.num_ids = 6;
  cfg.num_cams = 2;
  cfg.per_id_per_cam = 2;
  const auto a = generate_dataset(cfg);
  const auto b = generate_dataset(cfg);
  EXPECT_EQ(a.manifest, b.manifest);
  EXPECT_EQ(a.images, b.images);
  cfg.seed = 2;
  EXPECT_NE(generate_dataset(cfg).images, a.images);
}

TEST(Generator, OcclusionRateAndMarking) {
  GeneratorConfig cfg;
  cfg.occlusion_prob = 0.5;
  const auto ds = generate_dataset(cfg);
  std::size_t count = 0;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    EXPECT_EQ(has_occluder_pixel(ds.images[i]), ds.occluded[i]);
    count += ds.occluded[i] ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(count) / 512.0, 0.5, 0.08);
}

TEST(Generator, RejectsInvalidConfigs) {
  GeneratorConfig cfg;
  cfg.num_cams = 1;
  EXPECT_THROW(generate_dataset(cfg), std::invalid_argument);
  cfg = GeneratorConfig{};
  cfg.occlusion_prob = 1.5;
  EXPECT_THROW(generate_dataset(cfg), std::invalid_argument);
}

TEST(Generator, WritesReadableDataset) {
  GeneratorConfig cfg;
  cfg.num_ids = 4;
  cfg.num_cams = 2;
  cfg.per_id_per_cam = 1;
  const auto ds = generate_dataset(cfg);
  const auto root = std::filesystem::temp_directory_path() / "stripereid_test_synth";
  std::filesystem::remove_all(root);
  write_dataset(ds, root);
  EXPECT_EQ(load_manifest(root / "manifest.csv"), ds.manifest);
  EXPECT_EQ(read_pnm(root / ds.manifest.records[3].image_path), ds.images[3]);
}

TEST(Augment, DisabledIsIdentity) {
  const auto img = random_image(1);
  SplitMix64 draw(3);
  AugmentRecord rec;
  EXPECT_EQ(augment(img, AugmentationConfig::disabled(), draw, &rec), img);
  EXPECT_FALSE(rec.flipped);
  EXPECT_FALSE(rec.erased);
  EXPECT_EQ(rec.zoom, 1.0);
}

TEST(Augment, FlipIsAnInvolutionAndUnitZoomCopies) {
  const auto img = random_image(2);
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
  EXPECT_EQ(flip_horizontal(img).at(1, 3, 0), img.at(1, 3, 7));
  EXPECT_EQ(zoom(img, 1.0), img);
}

TEST(Augment, ZoomInMagnifiesAboutTheCentre) {
  ImageF img = ImageF::blank(16, 8);
  for (std::int64_t y = 0; y < 16; ++y)
    for (std::int64_t x = 0; x < 8; ++x)
      for (std::int64_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<double>(y);
  const auto z = zoom(img, 2.0);
  // Rows near the top now show content from nearer the centre.
  EXPECT_GT(z.at(0, 0, 4), img.at(0, 0, 4));
  EXPECT_LT(z.at(0, 15, 4), img.at(0, 15, 4));
  const auto out = zoom(img, 0.5);
  EXPECT_EQ(out.at(0, 0, 0), 0.0);  // outside the source reads zero
}

TEST(Augment, EraseZeroesTheRecordedRegion) {
  AugmentationConfig cfg = AugmentationConfig::disabled();
  cfg.erase_prob = 1.0;
  const auto img = random_image(5, 32, 16);
  for (std::uint64_t s = 0; s < 50; ++s) {
    SplitMix64 draw(s);
    AugmentRecord rec;
    const auto out = augment(img, cfg, draw, &rec);
    ASSERT_TRUE(rec.erased);
    const double area = static_cast<double>(rec.erase_h * rec.erase_w) / (32.0 * 16.0);
    EXPECT_LE(area, 0.3);
    for (std::int64_t y = 0; y < 32; ++y)
      for (std::int64_t x = 0; x < 16; ++x) {
        const bool inside = y >= rec.erase_y && y < rec.erase_y + rec.erase_h && x >= rec.erase_x && x < rec.erase_x + rec.erase_w;
        EXPECT_EQ(out.at(2, y, x), inside ? 0.0 : img.at(2, y, x));
      }
  }
}

TEST(Augment, SameSeedSameDecisions) {
  const auto img = random_image(6);
  const AugmentationConfig cfg;
  SplitMix64 a(77), b(77);
  AugmentRecord ra, rb;
  EXPECT_EQ(augment(img, cfg, a, &ra), augment(img, cfg, b, &rb));
  EXPECT_EQ(ra.zoom, rb.zoom);
  EXPECT_EQ(a.state(), b.state());
}

TEST(ImagesToTensor, NormalizesAndStacks) {
  ImageF img = ImageF::blank(2, 1);
  img.at(0, 0, 0) = 0.5;
  img.at(2, 1, 0) = 1.0;
  const std::vector<ImageF> batch{img, img};
  const Tensor t = images_to_tensor(batch);
  EXPECT_EQ(t.shape(), (Shape{2, 3, 2, 1}));
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[1], -2.0);
  EXPECT_EQ(t[5], 2.0);
}

TEST(PkSampler, BatchesAreIdentityBalanced) {
  const auto ds = generate_dataset(GeneratorConfig{});
  const BatchSpec spec{4, 4};
  PkSampler sampler(ds.manifest, spec, 9);
  EXPECT_EQ(sampler.num_identities(), 16);
  EXPECT_EQ(sampler.batches_per_epoch(), 16);  // 256 images / 16
  for (std::int64_t epoch = 0; epoch < 2; ++epoch) {
    std::set<std::int64_t> visited;
    for (std::int64_t b = 0; b < sampler.batches_per_epoch(); ++b) {
      const auto idx = sampler.batch(epoch, b);
      ASSERT_EQ(idx.size(), 16u);
      std::set<std::size_t> distinct(idx.begin(), idx.end());
      EXPECT_EQ(distinct.size(), 16u);
      std::map<std::int64_t, int> per_id;
      for (const auto i : idx) {
        EXPECT_EQ(ds.manifest.records[i].split, Split::train);
        ++per_id[ds.manifest.records[i].person_id];
      }
      EXPECT_EQ(per_id.size(), 4u);
      for (const auto& [id, n] : per_id) EXPECT_EQ(n, 4);
      if (b < 4)
        for (const auto& [id, n] : per_id) visited.insert(id);
    }
    EXPECT_EQ(visited.size(), 16u);  // the first round covers every identity
  }
  EXPECT_EQ(sampler.batch(3, 5), pk_sample(ds.manifest, spec, 9, 3, 5));
  EXPECT_NE(sampler.batch(0, 0), sampler.batch(1, 0));
  EXPECT_THROW(sampler.batch(0, 16), std::out_of_range);
}

TEST(PkSampler, NeedsEnoughIdentities) {
  const auto ds = generate_dataset(GeneratorConfig{});
  EXPECT_THROW(PkSampler(ds.manifest, BatchSpec{17, 4}, 1), std::invalid_argument);
  EXPECT_THROW(PkSampler(ds.manifest, BatchSpec{4, 17}, 1), std::invalid_argument);
}

TEST(LabelMap, IsContiguousOverSortedTrainIds) {
  const auto ds = generate_dataset(GeneratorConfig{});
  const auto labels = train_label_map(ds.manifest);
  ASSERT_EQ(labels.size(), 16u);
  std::int64_t expect = 0;
  for (const auto& [id, label] : labels) EXPECT_EQ(label, expect++);
}
