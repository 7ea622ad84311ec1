#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stripereid/tensor.hpp"

namespace stripereid::train {

/// Warmup plus step decay, with every boundary given as a fraction of the run
/// so a short run keeps the shape of a long one.
struct ScheduleConfig {
  std::int64_t total_epochs = 40;
  double base_lr = 1e-3;
  double warmup_fraction = 0.125;
  std::vector<double> milestones{0.5, 0.75};
  double decay_factor = 0.1;

  void validate() const;
  std::int64_t warmup_epochs() const;
  std::vector<std::int64_t> milestone_epochs() const;
};

/// Learning rate used for the whole of `epoch` (0-based).
///
/// Rises linearly from base_lr / 10 to base_lr over the warmup epochs, then
/// is multiplied by decay_factor at each milestone epoch.
double lr_at(std::int64_t epoch, const ScheduleConfig& config);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update applied in place. A parameter without an
/// accumulated gradient is treated as having a zero gradient. Moments are
/// allocated on the first call.
void adam_step(std::span<Tensor> params, AdamState& state, double lr, const AdamConfig& config = {});

}  // namespace stripereid::train
