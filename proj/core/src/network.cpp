#include "stripereid/network.hpp"

#include <cmath>
#include <stdexcept>

#include "stripereid/checkpoint.hpp"
#include "stripereid/rng.hpp"

namespace stripereid::net {

using topdrop::DropMode;
using topdrop::FeatureShape;
using topdrop::TopDropMask;

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::full;
  if (name == "no-drop" || name == "no_drop") return Variant::no_drop;
  if (name == "no-reg" || name == "no_reg") return Variant::no_reg;
  if (name == "baseline-bdb" || name == "baseline_bdb") return Variant::baseline_bdb;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "' (expected full|no-drop|no-reg|baseline-bdb)");
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::no_drop: return "no-drop";
    case Variant::no_reg: return "no-reg";
    case Variant::baseline_bdb: return "baseline-bdb";
  }
  return "?";
}

std::string_view to_string(Stream stream) {
  switch (stream) {
    case Stream::global: return "global";
    case Stream::drop: return "drop";
    case Stream::reg: return "reg";
  }
  return "?";
}

bool stream_active(Variant variant, Stream stream) {
  switch (stream) {
    case Stream::global: return true;
    case Stream::drop: return variant != Variant::no_drop;
    case Stream::reg: return variant != Variant::no_reg;
  }
  return false;
}

std::array<Stream, 2> embedding_streams(Variant variant) {
  if (variant == Variant::no_drop) return {Stream::global, Stream::reg};
  return {Stream::global, Stream::drop};
}

DropMode drop_mode(Variant variant) {
  switch (variant) {
    case Variant::full:
    case Variant::no_reg: return DropMode::top;
    case Variant::baseline_bdb: return DropMode::random;
    case Variant::no_drop: return DropMode::none;
  }
  return DropMode::none;
}

void BackboneConfig::validate() const {
  if (stage_channels.empty() || stage_channels.size() != stage_strides.size()) {
    throw std::invalid_argument("backbone: stage_channels and stage_strides must be non-empty and equal length");
  }
  if (stage_strides.back() != 1) throw std::invalid_argument("backbone: the final stage must have stride 1");
  if (output_shape().height < 4) throw std::invalid_argument("backbone: output feature height must be >= 4");
}

FeatureShape BackboneConfig::output_shape() const {
  // stem conv keeps the size (3x3, pad 1), then a 2x2/2 max pool.
  std::int64_t h = conv_output_extent(input_height, 3, 1, 1);
  std::int64_t w = conv_output_extent(input_width, 3, 1, 1);
  h = (h - 2) / 2 + 1;
  w = (w - 2) / 2 + 1;
  for (const auto s : stage_strides) {
    h = conv_output_extent(h, 3, s, 1);
    w = conv_output_extent(w, 3, s, 1);
  }
  return {stage_channels.back(), h, w};
}

void ModelConfig::validate() const {
  backbone.validate();
  if (global_dim < 1 || drop_dim < 1) throw std::invalid_argument("model: stream dims must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("model: need at least 2 identity classes");
  drop.validate();
}

std::int64_t ModelConfig::embedding_dim() const {
  std::int64_t d = 0;
  for (const auto s : embedding_streams(variant)) {
    d += s == Stream::global ? global_dim : s == Stream::drop ? drop_dim : backbone.stage_channels.back();
  }
  return d;
}

const StreamOutputs& ForwardOutputs::at(Stream s) const {
  const auto& o = streams[static_cast<std::size_t>(s)];
  if (!o) throw std::logic_error("stream '" + std::string(to_string(s)) + "' is not active");
  return *o;
}

std::size_t ForwardOutputs::active_count() const {
  std::size_t n = 0;
  for (const auto& s : streams) n += s.has_value();
  return n;
}

// ---------------------------------------------------------------------------
// Layers

Tensor ConvBn::forward(const Tensor& x, Mode mode) const {
  return batchnorm(conv2d(x, weight, conv), gamma, beta, stats, mode);
}

Tensor Bottleneck::forward(const Tensor& x, Mode mode) const {
  Tensor y = relu(reduce.forward(x, mode));
  y = relu(spatial.forward(y, mode));
  y = expand.forward(y, mode);
  const Tensor identity = shortcut ? shortcut->forward(x, mode) : x;
  return relu(add(y, identity));
}

std::pair<Tensor, Tensor> Neck::forward(const Tensor& feature, Mode mode) const {
  Tensor normed = batchnorm(feature, gamma, beta, stats, mode);
  Tensor logits = matmul(normed, classifier);
  return {normed, logits};
}

Tensor Reduction::forward(const Tensor& x, Mode mode) const {
  return relu(batchnorm(matmul(x, weight), gamma, beta, stats, mode));
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : seed_(seed) {}

  Tensor normal(const std::string& name, const Shape& shape, double stddev) const {
    Tensor t = scalar_mul(Tensor::randn(shape, derive_seed(seed_, name)), stddev);
    t.set_requires_grad(true);
    return t;
  }
  static Tensor constant(const Shape& shape, double v) {
    Tensor t = Tensor::full(shape, v);
    t.set_requires_grad(true);
    return t;
  }

  ConvBn conv_bn(const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t stride,
                 double gamma = 1.0) const {
    const double fan_in = static_cast<double>(cin * k * k);
    return ConvBn{normal(name + ".conv.weight", {cout, cin, k, k}, std::sqrt(2.0 / fan_in)),
                  constant({cout}, gamma), constant({cout}, 0.0), BatchNormStats::initial(cout),
                  Conv2dParams{stride, k / 2}};
  }

  Bottleneck bottleneck(const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t stride,
                        bool zero_residual) const {
    const auto mid = std::max<std::int64_t>(cout / 2, 1);
    Bottleneck b{conv_bn(name + ".reduce", cin, mid, 1, 1), conv_bn(name + ".spatial", mid, mid, 3, stride),
                 conv_bn(name + ".expand", mid, cout, 1, 1, zero_residual ? 0.0 : 1.0), std::nullopt};
    if (stride != 1 || cin != cout) b.shortcut = conv_bn(name + ".shortcut", cin, cout, 1, stride);
    return b;
  }

  Reduction reduction(const std::string& name, std::int64_t in, std::int64_t out) const {
    return Reduction{normal(name + ".weight", {in, out}, std::sqrt(2.0 / static_cast<double>(in))),
                     constant({out}, 1.0), constant({out}, 0.0), BatchNormStats::initial(out)};
  }

  Neck neck(const std::string& name, std::int64_t dim, std::int64_t classes) const {
    return Neck{constant({dim}, 1.0), constant({dim}, 0.0), BatchNormStats::initial(dim),
                normal(name + ".classifier", {dim, classes}, 0.001)};
  }

 private:
  std::uint64_t seed_;
};

void collect(std::vector<NamedTensor>& out, const std::string& name, const ConvBn& c) {
  out.push_back({name + ".conv.weight", c.weight});
  out.push_back({name + ".bn.gamma", c.gamma});
  out.push_back({name + ".bn.beta", c.beta});
}

void collect(std::vector<NamedTensor>& out, const std::string& name, const Bottleneck& b) {
  collect(out, name + ".reduce", b.reduce);
  collect(out, name + ".spatial", b.spatial);
  collect(out, name + ".expand", b.expand);
  if (b.shortcut) collect(out, name + ".shortcut", *b.shortcut);
}

void collect_stats(std::vector<NamedTensor>& out, const std::string& name, const BatchNormStats& s) {
  out.push_back({name + ".running_mean", s.running_mean});
  out.push_back({name + ".running_var", s.running_var});
}

void collect_stats(std::vector<NamedTensor>& out, const std::string& name, const Bottleneck& b) {
  collect_stats(out, name + ".reduce.bn", b.reduce.stats);
  collect_stats(out, name + ".spatial.bn", b.spatial.stats);
  collect_stats(out, name + ".expand.bn", b.expand.stats);
  if (b.shortcut) collect_stats(out, name + ".shortcut.bn", b.shortcut->stats);
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const Initializer init(config_.init_seed);
  const auto& bb = config_.backbone;
  stem_ = init.conv_bn("stem", bb.in_channels, bb.stem_channels, 3, 1);
  std::int64_t cin = bb.stem_channels;
  for (std::size_t i = 0; i < bb.stage_channels.size(); ++i) {
    stages_.push_back(init.bottleneck("stages." + std::to_string(i), cin, bb.stage_channels[i], bb.stage_strides[i],
                                      config_.zero_init_residual));
    cin = bb.stage_channels[i];
  }
  for (std::size_t i = 0; i < pair_.size(); ++i) {
    pair_[i] = init.bottleneck("pair." + std::to_string(i), cin, cin, 1, config_.zero_init_residual);
  }
  global_reduce_ = init.reduction("global_reduce", cin, config_.global_dim);
  drop_reduce_ = init.reduction("drop_reduce", cin, config_.drop_dim);
  necks_[0] = init.neck("neck.global", config_.global_dim, config_.num_classes);
  necks_[1] = init.neck("neck.drop", config_.drop_dim, config_.num_classes);
  necks_[2] = init.neck("neck.reg", cin, config_.num_classes);
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  collect(out, "stem", stem_);
  for (std::size_t i = 0; i < stages_.size(); ++i) collect(out, "stages." + std::to_string(i), stages_[i]);
  for (std::size_t i = 0; i < pair_.size(); ++i) collect(out, "pair." + std::to_string(i), pair_[i]);
  for (const auto& [name, r] : {std::pair<std::string, const Reduction*>{"global_reduce", &global_reduce_},
                                {"drop_reduce", &drop_reduce_}}) {
    out.push_back({name + ".weight", r->weight});
    out.push_back({name + ".bn.gamma", r->gamma});
    out.push_back({name + ".bn.beta", r->beta});
  }
  for (const auto s : kAllStreams) {
    const auto& n = necks_[static_cast<std::size_t>(s)];
    const std::string name = "neck." + std::string(to_string(s));
    out.push_back({name + ".bn.gamma", n.gamma});
    out.push_back({name + ".bn.beta", n.beta});
    out.push_back({name + ".classifier", n.classifier});
  }
  return out;
}

std::vector<NamedTensor> Model::buffers() const {
  std::vector<NamedTensor> out;
  collect_stats(out, "stem.bn", stem_.stats);
  for (std::size_t i = 0; i < stages_.size(); ++i) collect_stats(out, "stages." + std::to_string(i), stages_[i]);
  for (std::size_t i = 0; i < pair_.size(); ++i) collect_stats(out, "pair." + std::to_string(i), pair_[i]);
  collect_stats(out, "global_reduce.bn", global_reduce_.stats);
  collect_stats(out, "drop_reduce.bn", drop_reduce_.stats);
  for (const auto s : kAllStreams) {
    collect_stats(out, "neck." + std::string(to_string(s)) + ".bn", necks_[static_cast<std::size_t>(s)].stats);
  }
  return out;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

void Model::require_images(const Tensor& images) const {
  const auto& bb = config_.backbone;
  if (images.dim() != 4 || images.size(1) != bb.in_channels || images.size(2) != bb.input_height ||
      images.size(3) != bb.input_width) {
    throw ShapeError("model: expected images [n," + std::to_string(bb.in_channels) + "," +
                     std::to_string(bb.input_height) + "," + std::to_string(bb.input_width) + "], got " +
                     shape_to_string(images.shape()));
  }
}

Tensor Model::backbone_forward(const Tensor& images) const {
  require_images(images);
  Tensor x = maxpool2d(relu(stem_.forward(images, mode_)), 2, 2);
  for (const auto& stage : stages_) x = stage.forward(x, mode_);
  return x;
}

Tensor Model::bottleneck_pair(const Tensor& features) const {
  return pair_[1].forward(pair_[0].forward(features, mode_), mode_);
}

std::pair<Tensor, Tensor> Model::neck(Stream stream, const Tensor& feature) const {
  return necks_[static_cast<std::size_t>(stream)].forward(feature, mode_);
}

StreamOutputs Model::global_stream(const Tensor& features) const {
  StreamOutputs out;
  out.pooled = global_avg_pool(features);
  out.triplet_feature = global_reduce_.forward(out.pooled, mode_);
  std::tie(out.neck_feature, out.logits) = neck(Stream::global, out.triplet_feature);
  return out;
}

StreamOutputs Model::topdrop_stream(const Tensor& g, std::span<const TopDropMask> masks) const {
  StreamOutputs out;
  const Tensor dropped = (mode_ == Mode::train && !masks.empty()) ? topdrop::apply_mask(g, masks) : g;
  out.pooled = global_max_pool(dropped);
  out.triplet_feature = drop_reduce_.forward(out.pooled, mode_);
  std::tie(out.neck_feature, out.logits) = neck(Stream::drop, out.triplet_feature);
  return out;
}

StreamOutputs Model::reg_stream(const Tensor& g) const {
  StreamOutputs out;
  out.pooled = global_avg_pool(g);
  out.triplet_feature = out.pooled;
  std::tie(out.neck_feature, out.logits) = neck(Stream::reg, out.triplet_feature);
  return out;
}

std::vector<TopDropMask> Model::build_masks(const Tensor& features, std::uint64_t mask_seed) const {
  const auto mode = drop_mode(config_.variant);
  if (mode == DropMode::none) return {};
  ++mask_constructions_;
  if (mode == DropMode::top) return topdrop::top_drop_masks(features, config_.drop);
  const FeatureShape shape{features.size(1), features.size(2), features.size(3)};
  return {topdrop::batch_drop_mask(shape, config_.drop.height_ratio, mask_seed)};
}

ForwardOutputs Model::forward(const Tensor& images, std::uint64_t mask_seed,
                              std::span<const TopDropMask> masks) const {
  ForwardOutputs out;
  out.features = backbone_forward(images);
  out.streams[0] = global_stream(out.features);
  const bool need_g = stream_active(config_.variant, Stream::drop) || stream_active(config_.variant, Stream::reg);
  if (need_g) out.g = bottleneck_pair(out.features);
  if (stream_active(config_.variant, Stream::drop)) {
    if (mode_ == Mode::train) {
      out.masks = masks.empty() ? build_masks(out.features, mask_seed)
                                : std::vector<TopDropMask>(masks.begin(), masks.end());
    }
    out.streams[1] = topdrop_stream(out.g, out.masks);
  }
  if (stream_active(config_.variant, Stream::reg)) out.streams[2] = reg_stream(out.g);
  return out;
}

Tensor Model::inference_embed(const Tensor& images) const {
  if (mode_ != Mode::eval) throw std::logic_error("inference_embed requires eval mode");
  const Tensor features = backbone_forward(images);
  std::vector<Tensor> parts;
  Tensor g;
  for (const auto s : embedding_streams(config_.variant)) {
    if (s == Stream::global) {
      parts.push_back(global_stream(features).neck_feature);
      continue;
    }
    if (!g.defined()) g = bottleneck_pair(features);
    parts.push_back(s == Stream::drop ? topdrop_stream(g, {}).neck_feature : reg_stream(g).neck_feature);
  }
  return concat_columns(parts);
}

void Model::save_to(Checkpoint& ckpt, const std::string& prefix) const {
  for (const auto& p : parameters()) ckpt.put(prefix + p.name, p.tensor);
  for (const auto& b : buffers()) ckpt.put(prefix + b.name, b.tensor);
}

void Model::load_from(const Checkpoint& ckpt, const std::string& prefix) {
  for (auto& p : parameters()) ckpt.load_into(prefix + p.name, p.tensor);
  for (auto& b : buffers()) ckpt.load_into(prefix + b.name, b.tensor);
}

}  // namespace stripereid::net
