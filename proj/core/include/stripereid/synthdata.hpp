#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stripereid/image.hpp"
#include "stripereid/rng.hpp"
#include "stripereid/tensor.hpp"

namespace stripereid::synth {

enum class Split { train, query, gallery };
Split parse_split(const std::string& name);
std::string to_string(Split split);

struct SampleRecord {
  std::int64_t person_id = 0;
  std::int64_t camera_id = 0;
  Split split = Split::train;
  std::string image_path;  // relative to the dataset root

  bool operator==(const SampleRecord&) const = default;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;

  std::vector<std::size_t> indices(Split split) const;
  bool operator==(const DatasetManifest&) const = default;
};

/// Thrown for malformed manifest rows; line() is 1-based and counts the header.
class ManifestParseError : public std::runtime_error {
 public:
  ManifestParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline constexpr const char* kManifestHeader = "person_id,camera_id,split,image_path";

std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Generator

/// Band order from the top: hair, torso, legs, feet.
inline constexpr std::array<double, 4> kBandHeights{0.15, 0.35, 0.35, 0.15};
/// Colour of occluding blocks. Never produced by the renderer otherwise.
inline constexpr std::uint8_t kOccluderGray = 128;
/// Minimum largest per-channel colour difference between any two identities.
inline constexpr double kMinIdentityColorGap = 48.0 / 255.0;

struct IdentityAppearance {
  std::array<std::array<double, 3>, 4> bands{};
  double texture_frequency = 1.0;
  double texture_phase = 0.0;
  double body_width = 0.5;  // fraction of image width
};

struct CameraProfile {
  std::array<double, 3> background{};
  std::array<double, 3> tint{};  // per-channel gain in [0.9, 1.1]
};

struct GeneratorConfig {
  std::int64_t num_ids = 32;
  std::int64_t num_cams = 4;
  std::int64_t per_id_per_cam = 4;
  double occlusion_prob = 0.0;
  std::int64_t height = 64;
  std::int64_t width = 32;
  double noise_std = 0.03;
  std::uint64_t seed = 1;

  void validate() const;
};

struct GeneratedDataset {
  DatasetManifest manifest;
  std::vector<Image8> images;  // aligned with manifest.records
  std::vector<bool> occluded;  // aligned with manifest.records
};

std::vector<IdentityAppearance> sample_identities(std::int64_t count, std::uint64_t seed);
std::vector<CameraProfile> sample_cameras(std::int64_t count, std::uint64_t seed);

/// Renders one person image. Exposed for tests; generate_dataset() drives it.
Image8 render_person(const IdentityAppearance& person, const CameraProfile& camera, const GeneratorConfig& config,
                     SplitMix64& draw, bool* occluded = nullptr);

GeneratedDataset generate_dataset(const GeneratorConfig& config);
/// Writes images/<id>_<cam>_<k>.ppm and manifest.csv under `root`.
void write_dataset(const GeneratedDataset& dataset, const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentationConfig {
  double flip_prob = 0.5;
  double zoom_min = 0.9;
  double zoom_max = 1.1;
  double erase_prob = 0.5;
  double erase_area_min = 0.02;
  double erase_area_max = 0.2;
  double erase_aspect_min = 0.3;
  double erase_aspect_max = 3.3;

  void validate() const;
  /// Configuration under which augment() is the identity.
  static AugmentationConfig disabled();
};

/// What augment() decided, for inspection and pairing checks.
struct AugmentRecord {
  bool flipped = false;
  double zoom = 1.0;
  bool erased = false;
  std::int64_t erase_y = 0, erase_x = 0, erase_h = 0, erase_w = 0;
};

ImageF flip_horizontal(const ImageF& image);
/// Bilinear rescale about the image centre; out-of-range samples read zero.
ImageF zoom(const ImageF& image, double factor);

/// Flip, then zoom, then erase, each drawn from `draw`. The flip and zoom
/// draws never depend on an earlier outcome; a degenerate zoom range
/// consumes no draw.
ImageF augment(const ImageF& image, const AugmentationConfig& config, SplitMix64& draw, AugmentRecord* record = nullptr);

/// Stacks images into a normalized [n,3,h,w] tensor: (x - 0.5) / 0.25.
Tensor images_to_tensor(std::span<const ImageF> images);

// ---------------------------------------------------------------------------
// PK sampling

struct BatchSpec {
  std::int64_t p = 8;
  std::int64_t k = 4;

  void validate() const;
  std::int64_t batch_size() const { return p * k; }
};

/// Identity-balanced batch sampler over the train split.
///
/// Each epoch walks seeded permutations of the eligible identities P at a
/// time, so every identity is visited before any repeats. K distinct images
/// are drawn per identity without replacement.
class PkSampler {
 public:
  PkSampler(const DatasetManifest& manifest, BatchSpec spec, std::uint64_t seed);

  std::int64_t batches_per_epoch() const noexcept { return batches_per_epoch_; }
  std::int64_t num_identities() const { return static_cast<std::int64_t>(identities_.size()); }
  /// Manifest indices for batch `position` of `epoch`, grouped by identity.
  std::vector<std::size_t> batch(std::int64_t epoch, std::int64_t position) const;

 private:
  BatchSpec spec_;
  std::uint64_t seed_;
  std::vector<std::int64_t> identities_;
  std::map<std::int64_t, std::vector<std::size_t>> images_;
  std::int64_t batches_per_round_ = 0;
  std::int64_t batches_per_epoch_ = 0;
};

std::vector<std::size_t> pk_sample(const DatasetManifest& manifest, const BatchSpec& spec, std::uint64_t seed,
                                   std::int64_t epoch, std::int64_t position);

/// Contiguous class labels for the train identities (sorted person ids).
std::map<std::int64_t, std::int64_t> train_label_map(const DatasetManifest& manifest);

}  // namespace stripereid::synth
