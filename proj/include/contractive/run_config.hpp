#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "contractive/data.hpp"
#include "contractive/training.hpp"

namespace contractive {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The fully-defaulted config document. It doubles as the schema: a user
/// document may only use keys present here, with values of the same JSON type
/// (any number for numbers; null or integer for task.permutation_seed).
nlohmann::json default_run_config();

/// Overlays `user` on the defaults, rejecting unknown keys and type mismatches
/// with the offending JSON path in the message, then checks value ranges.
nlohmann::json resolve_run_config(const nlohmann::json& user);

/// Same overlay against an arbitrary defaults document (no range checks).
nlohmann::json overlay_on_defaults(const nlohmann::json& defaults, const nlohmann::json& user);
nlohmann::json load_run_config(const std::filesystem::path& path);

/// Sets a dotted key ("training.epochs") from a string, parsed as JSON when
/// possible, as a plain string otherwise. The key must exist in the schema.
void set_config_value(nlohmann::json& cfg, const std::string& dotted, const std::string& value);

ArchitectureSpec architecture_from_config(const nlohmann::json& cfg);
OptimizerSpec optimizer_from_config(const nlohmann::json& cfg);
SequenceConfig sequence_from_config(const nlohmann::json& cfg);
SparseInitConfig sparse_init_from_config(const nlohmann::json& cfg);

/// Loads and sequentializes the configured dataset split; honours task.limit_*.
SequenceSet load_task_split(const nlohmann::json& cfg, Split split);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double skew_residual = 0.0;
  double wall_seconds = 0.0;
};

std::string training_log_header();
std::string training_log_line(const EpochRecord& r);

struct RunResult {
  Model model;
  std::vector<EpochRecord> history;
};

/// Builds the model from the resolved config and trains training.epochs
/// epochs, evaluating on `test` after each. Propagates InvariantViolation.
RunResult run_training(const nlohmann::json& cfg, const SequenceSet& train,
                       const SequenceSet& test,
                       const std::function<void(const EpochRecord&, const Model&)>& on_epoch = {});

}  // namespace contractive
