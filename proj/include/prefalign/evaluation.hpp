#pragma once

// HR@1 over candidate sets, metric curves, the forward-evaluation cost model
// and hyperparameter sweeps.

#include "prefalign/data.hpp"
#include "prefalign/training.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace prefalign {

struct CurveSeries {
  std::vector<Index> epochs;
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  std::vector<double> mean_pos_reward;
};

struct EvalReport {
  double hr_at_1 = 0.0;
  std::vector<std::uint8_t> hits;
  /// Cases whose maximum score was shared by more than one candidate.
  Index ties = 0;
  /// NaN when no reference was supplied.
  double mean_pos_reward = 0.0;
  CurveSeries curves;

  Index cases() const { return static_cast<Index>(hits.size()); }
};

/// Scores aligned with case.candidates.items().
using CandidateScorer = std::function<RealVector(const EvalCase&)>;

/// Hit iff the top-scored candidate is the positive; ties go to the lowest
/// item index. Throws on an empty case list.
EvalReport hit_ratio_at_1(const CandidateScorer& scorer, const std::vector<EvalCase>& cases);

/// Policy log-probabilities as scores; with a reference, also reports the
/// mean implicit reward of the positives.
EvalReport hit_ratio_at_1(const Policy& policy, const std::vector<EvalCase>& cases,
                          const ReferencePolicy* reference = nullptr, double beta = 1.0);

CurveSeries track_curves(const std::vector<MetricRecord>& log);

struct CostModel {
  LossKind loss_kind = LossKind::sdpo;
  Index num_negatives = 1;
  /// Item evaluations of the policy network alone.
  Index policy_evals_per_sample = 0;
  /// Policy plus reference evaluations.
  Index forward_evals_per_sample = 0;

  Index total(Index samples) const { return forward_evals_per_sample * samples; }
};

/// sdpo: 2(K+1); dpo as K pairs: 4K; softmax: K+1; bpr as K pairs: 2K; sft: 1.
CostModel count_forward_evals(LossKind kind, Index num_negatives);
CostModel count_forward_evals(std::string_view kind, Index num_negatives);

enum class SweepAxis { beta, num_negatives };

std::string_view to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);

std::vector<double> default_sweep_values(SweepAxis axis);

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  double hr_at_1 = 0.0;
  double final_valid_loss = 0.0;
  double mean_pos_reward = 0.0;
};

struct SweepSetup {
  const TrainingData* data = nullptr;
  /// Starting point of every cell; also the frozen reference unless
  /// `uniform_reference` is set.
  const Policy* initial_policy = nullptr;
  bool uniform_reference = false;
  TrainConfig base;
  Index candidate_negatives = kDefaultCandidateNegatives;
  /// Seed for the shared test candidate sets.
  std::uint64_t eval_seed = 0;
  /// Worker threads; cells are independent and deterministic.
  unsigned threads = 1;
  /// Returns true for cells that should be skipped (already computed).
  std::function<bool(double value, std::uint64_t seed)> skip;
  /// Called once per finished cell, serialized.
  std::function<void(const SweepRow&)> on_row;
};

/// One alignment run per (value, seed). Rows come back in (value, seed) order.
std::vector<SweepRow> run_sweep(SweepAxis axis, const std::vector<double>& values,
                                const std::vector<std::uint64_t>& seeds, const SweepSetup& setup);

/// Fixed-point CSV helpers (header row, 6 decimals).
void write_report_csv(std::ostream& out, const EvalReport& report);
void write_hits_csv(std::ostream& out, const EvalReport& report, const std::vector<EvalCase>& cases);
void write_sweep_header(std::ostream& out, SweepAxis axis);
void write_sweep_row(std::ostream& out, const SweepRow& row);

}  // namespace prefalign
