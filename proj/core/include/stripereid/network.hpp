#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stripereid/ops.hpp"
#include "stripereid/tensor.hpp"
#include "stripereid/topdrop.hpp"

namespace stripereid {
class Checkpoint;
}

namespace stripereid::net {

/// Which streams a model trains and how the drop stream builds its mask.
enum class Variant {
  full,          // global + top-drop + regularizer
  no_drop,       // global + regularizer
  no_reg,        // global + top-drop
  baseline_bdb,  // global + random batch-shared drop + regularizer
};

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant variant);

enum class Stream : std::size_t { global = 0, drop = 1, reg = 2 };
inline constexpr std::array<Stream, 3> kAllStreams{Stream::global, Stream::drop, Stream::reg};
std::string_view to_string(Stream stream);

bool stream_active(Variant variant, Stream stream);
/// Streams whose neck features form the retrieval embedding.
std::array<Stream, 2> embedding_streams(Variant variant);
/// Mask policy implied by the variant.
topdrop::DropMode drop_mode(Variant variant);

struct BackboneConfig {
  std::int64_t in_channels = 3;
  std::int64_t stem_channels = 16;
  std::vector<std::int64_t> stage_channels{16, 32, 64};
  std::vector<std::int64_t> stage_strides{2, 2, 1};
  std::int64_t input_height = 64;
  std::int64_t input_width = 32;

  void validate() const;
  /// Extents of the backbone output F for one image.
  topdrop::FeatureShape output_shape() const;
};

struct ModelConfig {
  BackboneConfig backbone;
  std::int64_t global_dim = 128;
  std::int64_t drop_dim = 128;
  std::int64_t num_classes = 16;
  Variant variant = Variant::full;
  /// height_ratio and p; the mode is derived from the variant.
  topdrop::DropConfig drop;
  /// Start every residual branch with a zero batch-norm scale.
  bool zero_init_residual = false;
  std::uint64_t init_seed = 1;

  void validate() const;
  std::int64_t embedding_dim() const;
};

/// Output of one stream for a batch.
struct StreamOutputs {
  Tensor pooled;            // pooled feature before any reduction [n, c]
  Tensor triplet_feature;   // pre-neck feature used by the triplet loss
  Tensor neck_feature;      // post-batch-norm feature used at inference
  Tensor logits;            // [n, num_classes]
};

struct ForwardOutputs {
  Tensor features;  // backbone output F
  Tensor g;         // bottleneck-pair output G (undefined when unused)
  std::vector<topdrop::TopDropMask> masks;
  std::array<std::optional<StreamOutputs>, 3> streams;

  const StreamOutputs& at(Stream s) const;
  std::size_t active_count() const;
};

struct ConvBn {
  Tensor weight;  // [cout, cin, k, k]
  Tensor gamma;
  Tensor beta;
  mutable BatchNormStats stats;
  Conv2dParams conv;

  Tensor forward(const Tensor& x, Mode mode) const;
};

struct Bottleneck {
  ConvBn reduce;
  ConvBn spatial;
  ConvBn expand;
  std::optional<ConvBn> shortcut;

  Tensor forward(const Tensor& x, Mode mode) const;
};

/// Batch norm followed by a bias-free linear classifier.
struct Neck {
  Tensor gamma;
  Tensor beta;
  mutable BatchNormStats stats;
  Tensor classifier;  // [d, num_classes]

  std::pair<Tensor, Tensor> forward(const Tensor& feature, Mode mode) const;
};

/// Linear reduction followed by batch norm and ReLU.
struct Reduction {
  Tensor weight;  // [in, out]
  Tensor gamma;
  Tensor beta;
  mutable BatchNormStats stats;

  Tensor forward(const Tensor& x, Mode mode) const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return config_.variant; }

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  /// Trainable tensors in a stable order.
  std::vector<NamedTensor> parameters() const;
  /// Batch-norm running statistics.
  std::vector<NamedTensor> buffers() const;
  void zero_grad();

  Tensor backbone_forward(const Tensor& images) const;
  Tensor bottleneck_pair(const Tensor& features) const;
  StreamOutputs global_stream(const Tensor& features) const;
  /// In eval mode the masks are ignored.
  StreamOutputs topdrop_stream(const Tensor& g, std::span<const topdrop::TopDropMask> masks) const;
  StreamOutputs reg_stream(const Tensor& g) const;
  std::pair<Tensor, Tensor> neck(Stream stream, const Tensor& feature) const;

  /// Masks the drop stream would use for this batch in train mode.
  std::vector<topdrop::TopDropMask> build_masks(const Tensor& features, std::uint64_t mask_seed) const;

  /// Full forward pass over all streams active for the variant. In train
  /// mode, `masks` overrides mask construction when non-empty.
  ForwardOutputs forward(const Tensor& images, std::uint64_t mask_seed = 0,
                         std::span<const topdrop::TopDropMask> masks = {}) const;

  /// Concatenated neck features of the embedding streams. Eval mode only.
  Tensor inference_embed(const Tensor& images) const;

  std::uint64_t mask_constructions() const noexcept { return mask_constructions_; }

  void save_to(Checkpoint& ckpt, const std::string& prefix = "model.") const;
  void load_from(const Checkpoint& ckpt, const std::string& prefix = "model.");

 private:
  void require_images(const Tensor& images) const;

  ModelConfig config_;
  Mode mode_ = Mode::train;
  ConvBn stem_;
  std::vector<Bottleneck> stages_;
  std::array<Bottleneck, 2> pair_;
  Reduction global_reduce_;
  Reduction drop_reduce_;
  std::array<Neck, 3> necks_;
  mutable std::uint64_t mask_constructions_ = 0;
};

}  // namespace stripereid::net
