#pragma once

// Two-stage pipeline: supervised next-item fitting followed by preference
// alignment against a frozen reference, with SGD/Adam and per-epoch
// checkpoints.

#include "prefalign/data.hpp"
#include "prefalign/losses.hpp"
#include "prefalign/policy.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace prefalign {

enum class Stage { sft, align };
enum class OptimizerKind : std::uint8_t { sgd = 0, adam = 1 };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);
std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  RealMatrix first_moment;
  RealMatrix second_moment;
  std::uint64_t step = 0;
};

/// SGD: params -= lr * grads. Adam: bias-corrected moment update. Moments are
/// zero-initialized lazily on the first step.
void optimizer_step(RealMatrix& params, const RealMatrix& grads, OptimizerState& state,
                    const OptimizerConfig& config, double learning_rate);

struct TrainConfig {
  Stage stage = Stage::sft;
  Index epochs = 10;
  Index batch_size = 128;
  double learning_rate = 1e-2;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  AlignmentConfig align;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  /// false keeps the epoch-0 negative sets for every epoch.
  bool resample_negatives = true;

  void validate() const;
};

struct MetricRecord {
  Stage stage = Stage::sft;
  Index epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double mean_pos_reward = 0.0;
  double wall_ms = 0.0;

  /// Equality on every field except wall_ms.
  bool same_metrics(const MetricRecord& other) const;
};

struct Checkpoint {
  Policy policy;
  OptimizerState optimizer;
  OptimizerKind optimizer_kind = OptimizerKind::adam;
  /// Completed epochs.
  Index epoch = 0;
  std::vector<MetricRecord> metrics;
  std::optional<Policy> best_policy;
  Index best_epoch = 0;
  double best_valid_loss = 0.0;
};

struct TrainResult {
  /// Lowest-validation-loss policy for the SFT stage, final policy for alignment.
  Policy policy;
  Policy final_policy;
  std::vector<MetricRecord> metrics;
  Index selected_epoch = 0;
  OptimizerState optimizer;
};

struct TrainingData {
  ChronologicalSplit split;
  InteractionSets interacted;

  explicit TrainingData(ChronologicalSplit s);
};

using EpochCallback = std::function<void(const Checkpoint&)>;

/// Loss of one sample plus, optionally, its parameter gradient scaled by
/// `grad_scale` and accumulated into `grad`.
struct SampleLoss {
  double value = 0.0;
  double pos_reward = 0.0;
};

/// Evaluates one preference sample under `config`. dpo and bpr with K
/// negatives are computed as K separate pairs, each querying both items of the
/// pair; sdpo and softmax query the positive and all negatives once.
SampleLoss preference_sample_loss(const Policy& policy, const ReferencePolicy* reference,
                                  const PreferenceSample& sample, const AlignmentConfig& config,
                                  RealMatrix* grad = nullptr, double grad_scale = 1.0);

TrainResult run_sft_stage(Policy policy, const TrainingData& data, const TrainConfig& config,
                          const Checkpoint* resume = nullptr, const EpochCallback& on_epoch = {});

/// Throws std::invalid_argument when `reference` is null for dpo/sdpo.
TrainResult run_alignment_stage(Policy policy, const ReferencePolicy* reference,
                                const TrainingData& data, const TrainConfig& config,
                                const Checkpoint* resume = nullptr,
                                const EpochCallback& on_epoch = {});

/// Held-out next-item samples (history = all earlier interactions) with
/// `num_negatives` fixed negatives each.
std::vector<PreferenceSample> validation_samples(const TrainingData& data, Index num_negatives,
                                                 std::uint64_t seed);

/// Mean positive implicit reward over `samples`.
double mean_positive_reward(const Policy& policy, const ReferencePolicy& reference,
                            const std::vector<PreferenceSample>& samples, double beta);

}  // namespace prefalign
