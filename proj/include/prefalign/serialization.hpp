#pragma once

// Binary parameter files and checkpoints, JSONL metric logs.
//
// Parameter file layout (little-endian):
//   char[5]  "PALN1"
//   uint8    kind     0 = tabular, 1 = embedding, 2 = raw matrix
//   uint8    pooling  0 = mean, 1 = last
//   uint64   item_count (rows for a raw matrix)
//   uint64   d        embedding width; user rows for tabular; cols for raw
//   float64  parameters, row-major
//
// A checkpoint is a parameter block followed by an "OPTS" section holding the
// optimizer state, the epoch counter, the best-so-far policy and the metric
// records.

#include "prefalign/policy.hpp"
#include "prefalign/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace prefalign {

inline constexpr char kParameterMagic[5] = {'P', 'A', 'L', 'N', '1'};
inline constexpr std::uint8_t kRawMatrixKind = 2;

void write_policy(std::ostream& out, const Policy& policy);
Policy read_policy(std::istream& in);
void save_policy(const std::filesystem::path& path, const Policy& policy);
Policy load_policy(const std::filesystem::path& path);

/// Arbitrary matrix in the parameter-file layout (kind 2).
void save_matrix(const std::filesystem::path& path, const RealMatrix& m);
RealMatrix load_matrix(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// {stage, epoch, train_loss, valid_loss, mean_pos_reward, wall_ms}; NaN as null.
std::string metric_to_json(const MetricRecord& record);
MetricRecord metric_from_json(const std::string& line);
void write_metric_log(const std::filesystem::path& path, const std::vector<MetricRecord>& log);
std::vector<MetricRecord> read_metric_log(const std::filesystem::path& path);

/// 64-bit FNV-1a over file bytes.
std::uint64_t file_fingerprint(const std::filesystem::path& path);

}  // namespace prefalign
