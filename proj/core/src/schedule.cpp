#include "stripereid/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace stripereid::train {

void ScheduleConfig::validate() const {
  if (total_epochs < 1) throw std::invalid_argument("schedule: total_epochs must be >= 1");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("schedule: base_lr must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw std::invalid_argument("schedule: decay_factor must be in (0, 1]");
  if (milestones.empty()) throw std::invalid_argument("schedule: at least one milestone is required");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (!(milestones[i] > 0.0 && milestones[i] < 1.0)) throw std::invalid_argument("schedule: milestones must be in (0, 1)");
    if (i > 0 && !(milestones[i] > milestones[i - 1])) {
      throw std::invalid_argument("schedule: milestones must be strictly increasing");
    }
  }
  if (!(warmup_fraction > 0.0 && warmup_fraction < milestones.front())) {
    throw std::invalid_argument("schedule: warmup_fraction must be in (0, first milestone)");
  }
}

std::int64_t ScheduleConfig::warmup_epochs() const {
  return std::llround(warmup_fraction * static_cast<double>(total_epochs));
}

std::vector<std::int64_t> ScheduleConfig::milestone_epochs() const {
  std::vector<std::int64_t> out;
  for (const double m : milestones) out.push_back(std::llround(m * static_cast<double>(total_epochs)));
  return out;
}

double lr_at(std::int64_t epoch, const ScheduleConfig& config) {
  config.validate();
  if (epoch < 0 || epoch >= config.total_epochs) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(config.total_epochs) + ")");
  }
  const auto warmup = config.warmup_epochs();
  if (epoch < warmup) {
    const double t = static_cast<double>(epoch) / static_cast<double>(warmup);
    return std::lerp(config.base_lr / 10.0, config.base_lr, t);
  }
  double lr = config.base_lr;
  for (const auto m : config.milestone_epochs()) {
    if (epoch >= m) lr *= config.decay_factor;
  }
  return lr;
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr, const AdamConfig& config) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("adam_step: invalid learning rate");
  if (state.m.empty() && state.t == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
      state.v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state holds " + std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != static_cast<std::size_t>(params[i].numel()) || state.v[i].size() != state.m[i].size()) {
      throw ShapeError("adam_step: moment size mismatch for parameter " + std::to_string(i));
    }
    if (params[i].has_grad()) {
      for (const double g : params[i].grad()) {
        if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i));
      }
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    const bool has_grad = params[i].has_grad();
    const auto grad = has_grad ? params[i].grad() : std::span<const double>{};
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = has_grad ? grad[k] : 0.0;
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
      values[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.epsilon);
    }
  }
}

}  // namespace stripereid::train
