#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stripereid/cli/run_config.hpp"
#include "stripereid/eval.hpp"
#include "stripereid/trainer.hpp"

namespace stripereid::cli {

std::vector<Setting> gendata_schema();
std::vector<Setting> train_schema();
std::vector<Setting> eval_schema();
std::vector<Setting> activations_schema();
std::vector<Setting> ablation_schema();

/// Name of the resolved-configuration echo written into every output directory.
inline constexpr const char* kConfigEcho = "config.txt";

int cmd_gendata(const RunConfig& config, std::ostream& log);
int cmd_train(const RunConfig& config, std::ostream& log);
int cmd_eval(const RunConfig& config, std::ostream& log);
int cmd_activations(const RunConfig& config, std::ostream& log);
int cmd_ablation(const RunConfig& config, std::ostream& log);

/// Training settings shared by train and ablation.
train::TrainConfig train_config_from(const RunConfig& config);

struct MetricSummary {
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t n = 0;
};
MetricSummary summarize(const std::string& metric, const std::vector<double>& values);

/// Parses the command line and runs one command. Returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stripereid::cli
