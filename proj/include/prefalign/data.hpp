#pragma once

// Interaction logs, chronological splits, multi-negative preference samples,
// evaluation candidate sets and a synthetic generator with a known
// Plackett-Luce ground truth.

#include "prefalign/numerics.hpp"
#include "prefalign/preference_models.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace prefalign {

struct InteractionSequence {
  Index user_id = 0;
  std::vector<Index> items;
  std::vector<std::int64_t> timestamps;

  Index size() const { return static_cast<Index>(items.size()); }
  friend bool operator==(const InteractionSequence&, const InteractionSequence&) = default;
};

/// Sequences are indexed by dense user id; a user may have an empty sequence
/// in a split.
struct Dataset {
  Index item_count = 0;
  std::vector<InteractionSequence> sequences;

  Index user_count() const { return static_cast<Index>(sequences.size()); }
  Index interaction_count() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct IngestResult {
  Dataset dataset;
  /// original item id -> dense index, in dense-index order.
  std::vector<std::pair<std::string, Index>> item_mapping;
  std::vector<std::pair<std::string, Index>> user_mapping;
  Index dropped_users = 0;
};

/// Parses `user_id<TAB>item_id<TAB>timestamp` lines, groups by user (first
/// appearance order), sorts each user stably by timestamp and densifies ids.
/// Users with fewer than `min_interactions` interactions are dropped first.
IngestResult ingest_tsv(const std::filesystem::path& path, Index min_interactions = 0);

/// Writes dense ids back in the ingestion format, one user after another.
void write_tsv(const Dataset& dataset, const std::filesystem::path& path);

void write_mapping_csv(const std::vector<std::pair<std::string, Index>>& mapping,
                       const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct ChronologicalSplit {
  Dataset train;
  Dataset valid;
  Dataset test;
  /// Users with fewer than 3 interactions, placed entirely in train.
  std::vector<Index> short_users;
  /// Users with a test interaction but no validation interaction.
  std::vector<Index> valid_empty_users;
};

/// Per user: floor(train*n) to train, floor(valid*n) to valid, rest to test.
ChronologicalSplit chronological_split(const Dataset& dataset, SplitRatios ratios = {});

/// Reassembles full per-user sequences from a split.
Dataset merge_split(const ChronologicalSplit& split);

/// Sorted, deduplicated item set per user.
using InteractionSets = std::vector<std::vector<Index>>;
InteractionSets interaction_sets(const Dataset& dataset);

struct PreferenceSample {
  Index user_id = 0;
  std::vector<Index> history;
  Index positive = 0;
  std::vector<Index> negatives;

  /// positive followed by the negatives.
  std::vector<Index> candidates() const;
};

/// Draws `count` distinct items uniformly from the complement of `excluded`
/// (sorted) within 0..item_count-1.
std::vector<Index> sample_non_interacted(const std::vector<Index>& excluded, Index item_count,
                                         Index count, Rng& rng);

/// Splitmix-style mixing of a run seed with stream identifiers.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

/// Next-item samples from every training prefix position t >= 1, each with
/// `num_negatives` uniform negatives outside the user's full interaction set.
/// Negatives for user u are drawn from derive_seed(seed, u, epoch).
std::vector<PreferenceSample> build_preference_samples(const Dataset& train,
                                                       const InteractionSets& interacted,
                                                       Index num_negatives, std::uint64_t seed,
                                                       std::uint64_t epoch);

struct CandidateSet {
  Index positive = 0;
  std::vector<Index> negatives;

  Index size() const { return static_cast<Index>(negatives.size()) + 1; }
  /// positive followed by the negatives.
  std::vector<Index> items() const;
};

inline constexpr Index kDefaultCandidateNegatives = 20;

CandidateSet build_candidate_set(const std::vector<Index>& interacted, Index positive,
                                 Index item_count, Index size, Rng& rng);

/// One held-out next-item case: history, then a candidate set around the positive.
struct EvalCase {
  Index user_id = 0;
  std::vector<Index> history;
  CandidateSet candidates;
};

enum class HeldOut { valid, test };

/// One case per validation (or test) interaction; the history is every earlier
/// interaction of that user and negatives avoid the user's full item set.
std::vector<EvalCase> build_eval_cases(const ChronologicalSplit& split, HeldOut which,
                                       Index candidate_negatives, std::uint64_t seed);

struct SynthConfig {
  Index users = 500;
  Index items = 200;
  Index dim = 8;
  Index interactions_per_user = 30;
  std::uint64_t seed = 0;
  /// Multiplies the ground-truth dot products before the PL draws.
  double reward_scale = 20.0;
};

struct SynthResult {
  Dataset dataset;
  RealMatrix user_vectors;  // users x dim
  RealMatrix item_vectors;  // items x dim
  double reward_scale = 1.0;

  RealVector rewards(Index user) const {
    return reward_scale * (item_vectors * user_vectors.row(user).transpose());
  }
};

SynthResult synth_generate(const SynthConfig& config);

}  // namespace prefalign
