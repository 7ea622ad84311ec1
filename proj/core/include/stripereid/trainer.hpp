#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stripereid/eval.hpp"
#include "stripereid/image.hpp"
#include "stripereid/losses.hpp"
#include "stripereid/network.hpp"
#include "stripereid/schedule.hpp"
#include "stripereid/synthdata.hpp"

namespace stripereid::train {

struct TrainConfig {
  ScheduleConfig schedule;
  AdamConfig adam;
  synth::BatchSpec batch;
  synth::AugmentationConfig augment;
  net::Variant variant = net::Variant::full;
  topdrop::DropConfig drop;
  double margin = 0.3;
  double epsilon = 0.1;
  std::int64_t global_dim = 128;
  std::int64_t drop_dim = 128;
  std::uint64_t seed = 1;

  void validate() const;
  /// Stable textual form of every field; the basis of hash().
  std::string canonical() const;
  std::uint64_t hash() const;
};

/// Decoded train split with contiguous class labels.
struct TrainingSet {
  synth::DatasetManifest manifest;
  std::vector<ImageF> images;        // aligned with manifest.records
  std::vector<std::int64_t> labels;  // class label, or -1 outside the train split
  std::int64_t num_classes = 0;

  static TrainingSet from_images(synth::DatasetManifest manifest, std::vector<ImageF> images);
  static TrainingSet from_generated(const synth::GeneratedDataset& dataset);
  /// Reads manifest.csv and every referenced image under `root`.
  static TrainingSet load(const std::filesystem::path& root);

  std::int64_t image_height() const;
  std::int64_t image_width() const;
};

struct EpochMetrics {
  std::int64_t epoch = 0;
  double lr = 0.0;
  std::array<std::optional<double>, 3> stream_loss;  // mean over batches; empty for inactive streams
  double total_loss = 0.0;
  std::int64_t batches = 0;
  std::uint64_t mask_constructions = 0;
  /// Hash of every augmentation decision taken in the epoch.
  std::uint64_t augment_digest = 0;

  bool operator==(const EpochMetrics&) const = default;
};

/// Seeds of the independent random streams for one run.
struct RunSeeds {
  std::uint64_t init;
  std::uint64_t sample;
  std::uint64_t augment;
  std::uint64_t mask;

  static RunSeeds from(std::uint64_t seed);
  std::uint64_t augment_batch(std::int64_t epoch, std::int64_t batch) const;
  std::uint64_t mask_batch(std::int64_t epoch, std::int64_t batch) const;
};

net::ModelConfig model_config(const TrainConfig& config, const TrainingSet& data);

/// One pass over the PK batches of `epoch`. The model must be in train mode.
EpochMetrics train_epoch(net::Model& model, const TrainingSet& data, const TrainConfig& config, AdamState& state,
                         std::int64_t epoch);

/// Owns the model and optimizer for a full schedule and supports resuming.
class Trainer {
 public:
  Trainer(TrainConfig config, const TrainingSet& data);

  const TrainConfig& config() const noexcept { return config_; }
  net::Model& model() noexcept { return model_; }
  const net::Model& model() const noexcept { return model_; }
  const AdamState& optimizer() const noexcept { return state_; }
  const std::vector<EpochMetrics>& history() const noexcept { return history_; }
  std::int64_t next_epoch() const noexcept { return static_cast<std::int64_t>(history_.size()); }
  bool finished() const noexcept { return next_epoch() >= config_.schedule.total_epochs; }

  EpochMetrics run_epoch();
  /// Trains until the schedule ends, or until `stop_at` epochs are complete.
  void fit(const std::function<void(const EpochMetrics&)>& on_epoch = {}, std::optional<std::int64_t> stop_at = {});

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores model, optimizer and history. Throws if the checkpoint was
  /// written under a different configuration.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  TrainConfig config_;
  const TrainingSet* data_;
  net::Model model_;
  AdamState state_;
  std::vector<EpochMetrics> history_;
};

inline constexpr const char* kHistoryHeader = "epoch,lr,loss_global,loss_drop,loss_reg,loss_total";
std::string format_history(const std::vector<EpochMetrics>& history);

/// Eval-mode embeddings of every record in `split`, in manifest order.
eval::EmbeddingSet embed_split(const net::Model& model, const TrainingSet& data, synth::Split split,
                               std::int64_t batch_size = 64);

/// Rebuilds a model from a checkpoint, ready for inference (eval mode).
net::Model load_model(const std::filesystem::path& checkpoint);

}  // namespace stripereid::train
