#include "stripereid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "stripereid/checkpoint.hpp"
#include "stripereid/rng.hpp"

namespace stripereid::train {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
}

std::uint64_t bits(double v) {
  std::uint64_t u = 0;
  static_assert(sizeof u == sizeof v);
  std::memcpy(&u, &v, sizeof u);
  return u;
}

std::vector<Tensor> parameter_tensors(const net::Model& model) {
  std::vector<Tensor> out;
  for (auto& p : model.parameters()) out.push_back(p.tensor);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  schedule.validate();
  batch.validate();
  augment.validate();
  drop.validate();
  if (!(margin >= 0.0)) throw std::invalid_argument("train: margin must be >= 0");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("train: label smoothing epsilon must be in [0, 1)");
  if (global_dim < 1 || drop_dim < 1) throw std::invalid_argument("train: reduced dimensions must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0)) {
    throw std::invalid_argument("train: invalid Adam hyperparameters");
  }
}

std::string TrainConfig::canonical() const {
  std::string s;
  auto kv = [&](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  kv("epochs", std::to_string(schedule.total_epochs));
  kv("base_lr", fmt(schedule.base_lr));
  kv("warmup_fraction", fmt(schedule.warmup_fraction));
  std::string ms;
  for (const double m : schedule.milestones) ms += (ms.empty() ? "" : ",") + fmt(m);
  kv("milestones", ms);
  kv("decay_factor", fmt(schedule.decay_factor));
  kv("adam_beta1", fmt(adam.beta1));
  kv("adam_beta2", fmt(adam.beta2));
  kv("adam_epsilon", fmt(adam.epsilon));
  kv("p", std::to_string(batch.p));
  kv("k", std::to_string(batch.k));
  kv("flip_prob", fmt(augment.flip_prob));
  kv("zoom_min", fmt(augment.zoom_min));
  kv("zoom_max", fmt(augment.zoom_max));
  kv("erase_prob", fmt(augment.erase_prob));
  kv("erase_area_min", fmt(augment.erase_area_min));
  kv("erase_area_max", fmt(augment.erase_area_max));
  kv("erase_aspect_min", fmt(augment.erase_aspect_min));
  kv("erase_aspect_max", fmt(augment.erase_aspect_max));
  kv("variant", std::string(net::to_string(variant)));
  kv("drop_ratio", fmt(drop.height_ratio));
  kv("drop_p", fmt(drop.p));
  kv("margin", fmt(margin));
  kv("epsilon", fmt(epsilon));
  kv("global_dim", std::to_string(global_dim));
  kv("drop_dim", std::to_string(drop_dim));
  kv("seed", std::to_string(seed));
  return s;
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(canonical()); }

// ---------------------------------------------------------------------------
// Data

TrainingSet TrainingSet::from_images(synth::DatasetManifest manifest, std::vector<ImageF> images) {
  if (manifest.records.size() != images.size()) throw std::invalid_argument("training set: image count != record count");
  TrainingSet set;
  const auto label_map = synth::train_label_map(manifest);
  for (const auto& r : manifest.records) {
    set.labels.push_back(r.split == synth::Split::train ? label_map.at(r.person_id) : -1);
  }
  for (const auto& img : images) {
    if (img.height != images.front().height || img.width != images.front().width) {
      throw ShapeError("training set: images differ in size");
    }
  }
  set.num_classes = static_cast<std::int64_t>(label_map.size());
  set.manifest = std::move(manifest);
  set.images = std::move(images);
  return set;
}

TrainingSet TrainingSet::from_generated(const synth::GeneratedDataset& dataset) {
  std::vector<ImageF> images;
  images.reserve(dataset.images.size());
  for (const auto& img : dataset.images) images.push_back(to_float(img));
  return from_images(dataset.manifest, std::move(images));
}

TrainingSet TrainingSet::load(const std::filesystem::path& root) {
  auto manifest = synth::load_manifest(root / "manifest.csv");
  std::vector<ImageF> images;
  images.reserve(manifest.records.size());
  for (const auto& r : manifest.records) images.push_back(to_float(read_pnm(root / r.image_path)));
  return from_images(std::move(manifest), std::move(images));
}

std::int64_t TrainingSet::image_height() const {
  if (images.empty()) throw std::logic_error("training set is empty");
  return images.front().height;
}

std::int64_t TrainingSet::image_width() const {
  if (images.empty()) throw std::logic_error("training set is empty");
  return images.front().width;
}

// ---------------------------------------------------------------------------
// Training

RunSeeds RunSeeds::from(std::uint64_t seed) {
  return {derive_seed(seed, "init"), derive_seed(seed, "sample"), derive_seed(seed, "augment"), derive_seed(seed, "mask")};
}

std::uint64_t RunSeeds::augment_batch(std::int64_t epoch, std::int64_t batch) const {
  return derive_seed(derive_seed(augment, static_cast<std::uint64_t>(epoch)), static_cast<std::uint64_t>(batch));
}

std::uint64_t RunSeeds::mask_batch(std::int64_t epoch, std::int64_t batch) const {
  return derive_seed(derive_seed(mask, static_cast<std::uint64_t>(epoch)), static_cast<std::uint64_t>(batch));
}

net::ModelConfig model_config(const TrainConfig& config, const TrainingSet& data) {
  net::ModelConfig mc;
  mc.backbone.input_height = data.image_height();
  mc.backbone.input_width = data.image_width();
  mc.global_dim = config.global_dim;
  mc.drop_dim = config.drop_dim;
  mc.num_classes = data.num_classes;
  mc.variant = config.variant;
  mc.drop = config.drop;
  mc.init_seed = RunSeeds::from(config.seed).init;
  return mc;
}

EpochMetrics train_epoch(net::Model& model, const TrainingSet& data, const TrainConfig& config, AdamState& state,
                         std::int64_t epoch) {
  if (model.mode() != Mode::train) throw std::logic_error("train_epoch: model must be in train mode");
  const auto seeds = RunSeeds::from(config.seed);
  const synth::PkSampler sampler(data.manifest, config.batch, seeds.sample);
  const net::LossConfig loss_cfg{config.margin, config.epsilon, {1.0, 1.0, 1.0}};
  auto params = parameter_tensors(model);

  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.lr = lr_at(epoch, config.schedule);
  metrics.batches = sampler.batches_per_epoch();
  metrics.augment_digest = 0xcbf29ce484222325ULL;
  const auto masks_before = model.mask_constructions();
  std::array<double, 3> stream_sum{};
  double total_sum = 0.0;

  for (std::int64_t b = 0; b < metrics.batches; ++b) {
    const auto indices = sampler.batch(epoch, b);
    SplitMix64 aug_rng(seeds.augment_batch(epoch, b));
    std::vector<ImageF> batch_images;
    std::vector<std::int64_t> labels;
    for (const auto i : indices) {
      synth::AugmentRecord rec;
      batch_images.push_back(synth::augment(data.images[i], config.augment, aug_rng, &rec));
      labels.push_back(data.labels[i]);
      auto& d = metrics.augment_digest;
      d = mix(d, static_cast<std::uint64_t>(i));
      d = mix(d, rec.flipped ? 1 : 0);
      d = mix(d, bits(rec.zoom));
      d = mix(d, rec.erased ? 1 : 0);
      for (const auto v : {rec.erase_y, rec.erase_x, rec.erase_h, rec.erase_w}) d = mix(d, static_cast<std::uint64_t>(v));
    }
    const Tensor input = synth::images_to_tensor(batch_images);

    model.zero_grad();
    Tape tape;
    net::LossBreakdown loss;
    try {
      Tape::Scope scope(tape);
      const auto out = model.forward(input, seeds.mask_batch(epoch, b));
      loss = net::total_loss(out, labels, loss_cfg);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " + e.what());
    }
    tape.backward(loss.total);
    adam_step(params, state, metrics.lr, config.adam);

    for (const auto s : net::kAllStreams) {
      const auto v = loss.stream_loss(s);
      if (v) stream_sum[static_cast<std::size_t>(s)] += *v;
    }
    total_sum += loss.total.item();
  }
  const double n = static_cast<double>(metrics.batches);
  for (const auto s : net::kAllStreams) {
    if (net::stream_active(config.variant, s)) metrics.stream_loss[static_cast<std::size_t>(s)] = stream_sum[static_cast<std::size_t>(s)] / n;
  }
  metrics.total_loss = total_sum / n;
  metrics.mask_constructions = model.mask_constructions() - masks_before;
  return metrics;
}

Trainer::Trainer(TrainConfig config, const TrainingSet& data)
    : config_(std::move(config)), data_(&data), model_((config_.validate(), model_config(config_, data))) {}

EpochMetrics Trainer::run_epoch() {
  if (finished()) throw std::logic_error("trainer: schedule already complete");
  model_.set_mode(Mode::train);
  auto m = train_epoch(model_, *data_, config_, state_, next_epoch());
  history_.push_back(m);
  return m;
}

void Trainer::fit(const std::function<void(const EpochMetrics&)>& on_epoch, std::optional<std::int64_t> stop_at) {
  const auto end = std::min(config_.schedule.total_epochs, stop_at.value_or(config_.schedule.total_epochs));
  while (next_epoch() < end) {
    const auto m = run_epoch();
    if (on_epoch) on_epoch(m);
  }
}

namespace {

void put_model_meta(Checkpoint& ckpt, const net::ModelConfig& mc) {
  ckpt.put_u64("meta.num_classes", static_cast<std::uint64_t>(mc.num_classes));
  ckpt.put_u64("meta.global_dim", static_cast<std::uint64_t>(mc.global_dim));
  ckpt.put_u64("meta.drop_dim", static_cast<std::uint64_t>(mc.drop_dim));
  ckpt.put_u64("meta.variant", static_cast<std::uint64_t>(mc.variant));
  ckpt.put_u64("meta.input_height", static_cast<std::uint64_t>(mc.backbone.input_height));
  ckpt.put_u64("meta.input_width", static_cast<std::uint64_t>(mc.backbone.input_width));
  ckpt.put("meta.drop_ratio", Tensor::scalar(mc.drop.height_ratio));
  ckpt.put("meta.drop_p", Tensor::scalar(mc.drop.p));
}

net::ModelConfig read_model_meta(const Checkpoint& ckpt) {
  net::ModelConfig mc;
  mc.num_classes = static_cast<std::int64_t>(ckpt.u64_scalar("meta.num_classes"));
  mc.global_dim = static_cast<std::int64_t>(ckpt.u64_scalar("meta.global_dim"));
  mc.drop_dim = static_cast<std::int64_t>(ckpt.u64_scalar("meta.drop_dim"));
  const auto variant = ckpt.u64_scalar("meta.variant");
  if (variant > static_cast<std::uint64_t>(net::Variant::baseline_bdb)) throw std::runtime_error("checkpoint: unknown variant");
  mc.variant = static_cast<net::Variant>(variant);
  mc.backbone.input_height = static_cast<std::int64_t>(ckpt.u64_scalar("meta.input_height"));
  mc.backbone.input_width = static_cast<std::int64_t>(ckpt.u64_scalar("meta.input_width"));
  mc.drop.height_ratio = ckpt.tensor("meta.drop_ratio").item();
  mc.drop.p = ckpt.tensor("meta.drop_p").item();
  return mc;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.put_u64("meta.config_hash", config_.hash());
  ckpt.put_u64("meta.epoch", static_cast<std::uint64_t>(next_epoch()));
  ckpt.put_u64("meta.seed", config_.seed);
  ckpt.put_u64("meta.rng_version", SplitMix64::kRngVersion);
  put_model_meta(ckpt, model_.config());
  model_.save_to(ckpt);

  ckpt.put_u64("adam.t", state_.t);
  for (std::size_t i = 0; i < state_.m.size(); ++i) {
    const Shape shape{static_cast<std::int64_t>(state_.m[i].size())};
    ckpt.put("adam.m." + std::to_string(i), Tensor(shape, state_.m[i]));
    ckpt.put("adam.v." + std::to_string(i), Tensor(shape, state_.v[i]));
  }

  if (!history_.empty()) {
    std::vector<double> values;
    std::vector<std::uint64_t> ints;
    for (const auto& h : history_) {
      values.push_back(h.lr);
      for (const auto& s : h.stream_loss) values.push_back(s.value_or(0.0));
      values.push_back(h.total_loss);
      ints.push_back(static_cast<std::uint64_t>(h.epoch));
      for (const auto& s : h.stream_loss) ints.push_back(s ? 1 : 0);
      ints.push_back(static_cast<std::uint64_t>(h.batches));
      ints.push_back(h.mask_constructions);
      ints.push_back(h.augment_digest);
    }
    ckpt.put("history.values", Tensor({static_cast<std::int64_t>(history_.size()), 5}, std::move(values)));
    ckpt.put_u64("history.ints", std::move(ints));
  }

  // Write next to the target and rename so a crash never leaves a torn file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  ckpt.save(tmp);
  std::filesystem::rename(tmp, path);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  const auto ckpt = Checkpoint::load(path);
  if (ckpt.u64_scalar("meta.config_hash") != config_.hash()) {
    throw std::runtime_error("checkpoint '" + path.string() + "' was written with a different training configuration");
  }
  if (ckpt.u64_scalar("meta.rng_version") != SplitMix64::kRngVersion) {
    throw std::runtime_error("checkpoint '" + path.string() + "' uses another random generator version");
  }
  model_.load_from(ckpt);

  AdamState state;
  state.t = ckpt.u64_scalar("adam.t");
  for (std::size_t i = 0; ckpt.contains("adam.m." + std::to_string(i)); ++i) {
    const Tensor m = ckpt.tensor("adam.m." + std::to_string(i));
    const Tensor v = ckpt.tensor("adam.v." + std::to_string(i));
    state.m.emplace_back(m.values().begin(), m.values().end());
    state.v.emplace_back(v.values().begin(), v.values().end());
  }

  std::vector<EpochMetrics> history;
  const auto epochs = static_cast<std::int64_t>(ckpt.u64_scalar("meta.epoch"));
  if (epochs > 0) {
    const Tensor stored = ckpt.tensor("history.values");
    const auto values = stored.values();
    const auto& ints = ckpt.u64("history.ints");
    if (values.size() != static_cast<std::size_t>(epochs * 5) || ints.size() != static_cast<std::size_t>(epochs * 7)) {
      throw std::runtime_error("checkpoint: history size does not match epoch count");
    }
    for (std::int64_t e = 0; e < epochs; ++e) {
      const auto* v = values.data() + e * 5;
      const auto* n = ints.data() + e * 7;
      EpochMetrics m;
      m.epoch = static_cast<std::int64_t>(n[0]);
      m.lr = v[0];
      for (std::size_t s = 0; s < 3; ++s) {
        if (n[1 + s]) m.stream_loss[s] = v[1 + s];
      }
      m.total_loss = v[4];
      m.batches = static_cast<std::int64_t>(n[4]);
      m.mask_constructions = n[5];
      m.augment_digest = n[6];
      history.push_back(m);
    }
  }
  state_ = std::move(state);
  history_ = std::move(history);
}

std::string format_history(const std::vector<EpochMetrics>& history) {
  std::string out = std::string(kHistoryHeader) + "\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + "," + fmt_short(h.lr);
    for (const auto& s : h.stream_loss) out += "," + (s ? fmt_short(*s) : std::string());
    out += "," + fmt_short(h.total_loss) + "\n";
  }
  return out;
}

eval::EmbeddingSet embed_split(const net::Model& model, const TrainingSet& data, synth::Split split,
                               std::int64_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("embed_split: batch_size must be >= 1");
  const auto indices = data.manifest.indices(split);
  if (indices.empty()) throw std::invalid_argument("embed_split: split '" + synth::to_string(split) + "' is empty");
  eval::EmbeddingSet set;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<ImageF> batch;
    for (auto k = start; k < end; ++k) batch.push_back(data.images[indices[k]]);
    const Tensor emb = model.inference_embed(synth::images_to_tensor(batch));
    const auto d = static_cast<std::size_t>(emb.size(1));
    for (auto k = start; k < end; ++k) {
      const auto& r = data.manifest.records[indices[k]];
      set.append(emb.values().subspan((k - start) * d, d), r.person_id, r.camera_id);
    }
  }
  return set;
}

net::Model load_model(const std::filesystem::path& checkpoint) {
  const auto ckpt = Checkpoint::load(checkpoint);
  net::Model model(read_model_meta(ckpt));
  model.load_from(ckpt);
  model.set_mode(Mode::eval);
  return model;
}

}  // namespace stripereid::train
