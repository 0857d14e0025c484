#include "prefalign/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace prefalign {

Index Dataset::interaction_count() const {
  Index n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

namespace {

struct RawRow {
  std::string user;
  std::string item;
  std::int64_t timestamp;
};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

bool parse_int(std::string_view text, std::int64_t& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

IngestResult ingest_tsv(const std::filesystem::path& path, Index min_interactions) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::vector<RawRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    std::int64_t user = 0, item = 0, ts = 0;
    if (fields.size() != 3 || !parse_int(fields[0], user) || !parse_int(fields[1], item) ||
        !parse_int(fields[2], ts)) {
      throw std::runtime_error(path.string() + ": malformed line " + std::to_string(line_no) +
                               " (expected user_id<TAB>item_id<TAB>timestamp)");
    }
    rows.push_back({std::string(fields[0]), std::string(fields[1]), ts});
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": empty file");

  // Group by user in first-appearance order.
  std::unordered_map<std::string, std::size_t> user_slot;
  std::vector<std::string> user_order;
  std::vector<std::vector<std::size_t>> per_user;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto [it, fresh] = user_slot.try_emplace(rows[r].user, per_user.size());
    if (fresh) {
      user_order.push_back(rows[r].user);
      per_user.emplace_back();
    }
    per_user[it->second].push_back(r);
  }

  IngestResult result;
  std::unordered_map<std::string, Index> item_index;
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    auto& idx = per_user[u];
    if (static_cast<Index>(idx.size()) < min_interactions) {
      ++result.dropped_users;
      continue;
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return rows[a].timestamp < rows[b].timestamp;
    });
    InteractionSequence seq;
    seq.user_id = static_cast<Index>(result.dataset.sequences.size());
    for (std::size_t r : idx) {
      auto [it, fresh] = item_index.try_emplace(rows[r].item, static_cast<Index>(item_index.size()));
      if (fresh) result.item_mapping.emplace_back(rows[r].item, it->second);
      seq.items.push_back(it->second);
      seq.timestamps.push_back(rows[r].timestamp);
    }
    result.user_mapping.emplace_back(user_order[u], seq.user_id);
    result.dataset.sequences.push_back(std::move(seq));
  }
  if (result.dataset.sequences.empty()) {
    throw std::runtime_error(path.string() + ": no users left after filtering");
  }
  result.dataset.item_count = static_cast<Index>(item_index.size());
  return result;
}

void write_tsv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& seq : dataset.sequences) {
    for (std::size_t k = 0; k < seq.items.size(); ++k) {
      out << seq.user_id << '\t' << seq.items[k] << '\t' << seq.timestamps[k] << '\n';
    }
  }
}

void write_mapping_csv(const std::vector<std::pair<std::string, Index>>& mapping,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "original_id,dense_index\n";
  for (const auto& [original, dense] : mapping) out << original << ',' << dense << '\n';
}

ChronologicalSplit chronological_split(const Dataset& dataset, SplitRatios ratios) {
  if (!(ratios.train > 0) || !(ratios.valid > 0) || !(ratios.test > 0) ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("chronological_split: ratios must be positive and sum to 1");
  }
  ChronologicalSplit split;
  for (Dataset* d : {&split.train, &split.valid, &split.test}) {
    d->item_count = dataset.item_count;
    d->sequences.resize(dataset.sequences.size());
  }
  constexpr double kSlack = 1e-9;  // 0.8 * 10 must floor to 8
  for (std::size_t u = 0; u < dataset.sequences.size(); ++u) {
    const auto& seq = dataset.sequences[u];
    const Index n = seq.size();
    Index n_train = n;
    Index n_valid = 0;
    if (n < 3) {
      split.short_users.push_back(seq.user_id);
    } else {
      n_train = static_cast<Index>(std::floor(ratios.train * static_cast<double>(n) + kSlack));
      n_valid = static_cast<Index>(std::floor(ratios.valid * static_cast<double>(n) + kSlack));
      if (n_valid == 0) split.valid_empty_users.push_back(seq.user_id);
    }
    auto take = [&](InteractionSequence& dst, Index begin, Index end) {
      dst.user_id = seq.user_id;
      dst.items.assign(seq.items.begin() + begin, seq.items.begin() + end);
      dst.timestamps.assign(seq.timestamps.begin() + begin, seq.timestamps.begin() + end);
    };
    take(split.train.sequences[u], 0, n_train);
    take(split.valid.sequences[u], n_train, n_train + n_valid);
    take(split.test.sequences[u], n_train + n_valid, n);
  }
  return split;
}

Dataset merge_split(const ChronologicalSplit& split) {
  Dataset out;
  out.item_count = split.train.item_count;
  out.sequences.resize(split.train.sequences.size());
  for (std::size_t u = 0; u < out.sequences.size(); ++u) {
    auto& dst = out.sequences[u];
    dst.user_id = split.train.sequences[u].user_id;
    for (const Dataset* part : {&split.train, &split.valid, &split.test}) {
      if (u >= part->sequences.size()) continue;
      const auto& s = part->sequences[u];
      dst.items.insert(dst.items.end(), s.items.begin(), s.items.end());
      dst.timestamps.insert(dst.timestamps.end(), s.timestamps.begin(), s.timestamps.end());
    }
  }
  return out;
}

InteractionSets interaction_sets(const Dataset& dataset) {
  InteractionSets sets(dataset.sequences.size());
  for (std::size_t u = 0; u < dataset.sequences.size(); ++u) {
    auto& s = sets[u];
    s = dataset.sequences[u].items;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  return sets;
}

std::vector<Index> PreferenceSample::candidates() const {
  std::vector<Index> out;
  out.reserve(negatives.size() + 1);
  out.push_back(positive);
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

std::vector<Index> CandidateSet::items() const {
  std::vector<Index> out;
  out.reserve(negatives.size() + 1);
  out.push_back(positive);
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

std::vector<Index> sample_non_interacted(const std::vector<Index>& excluded, Index item_count,
                                         Index count, Rng& rng) {
  std::vector<Index> pool;
  pool.reserve(static_cast<std::size_t>(item_count));
  auto ex = excluded.begin();
  for (Index i = 0; i < item_count; ++i) {
    while (ex != excluded.end() && *ex < i) ++ex;
    if (ex != excluded.end() && *ex == i) continue;
    pool.push_back(i);
  }
  if (count > static_cast<Index>(pool.size())) {
    throw std::invalid_argument("only " + std::to_string(pool.size()) +
                                " non-interacted items available, " + std::to_string(count) +
                                " requested");
  }
  // Partial Fisher-Yates.
  for (Index k = 0; k < count; ++k) {
    std::uniform_int_distribution<Index> pick(k, static_cast<Index>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(seed);
  h = mix(h ^ a);
  h = mix(h ^ b);
  return mix(h ^ c);
}

std::vector<PreferenceSample> build_preference_samples(const Dataset& train,
                                                       const InteractionSets& interacted,
                                                       Index num_negatives, std::uint64_t seed,
                                                       std::uint64_t epoch) {
  if (num_negatives < 1) throw std::invalid_argument("build_preference_samples: K must be >= 1");
  std::vector<PreferenceSample> samples;
  for (const auto& seq : train.sequences) {
    if (seq.items.size() < 2) continue;
    const auto& seen = interacted.at(static_cast<std::size_t>(seq.user_id));
    const Index available = train.item_count - static_cast<Index>(seen.size());
    if (num_negatives > available) {
      throw std::invalid_argument("K=" + std::to_string(num_negatives) + " too large for user " +
                                  std::to_string(seq.user_id) + " (" + std::to_string(available) +
                                  " non-interacted items)");
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(seq.user_id), epoch));
    for (std::size_t t = 1; t < seq.items.size(); ++t) {
      PreferenceSample s;
      s.user_id = seq.user_id;
      s.history.assign(seq.items.begin(), seq.items.begin() + static_cast<std::ptrdiff_t>(t));
      s.positive = seq.items[t];
      s.negatives = sample_non_interacted(seen, train.item_count, num_negatives, rng);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

CandidateSet build_candidate_set(const std::vector<Index>& interacted, Index positive,
                                 Index item_count, Index size, Rng& rng) {
  if (size < 0) throw std::invalid_argument("build_candidate_set: size must be >= 0");
  std::vector<Index> excluded = interacted;
  excluded.push_back(positive);
  std::sort(excluded.begin(), excluded.end());
  excluded.erase(std::unique(excluded.begin(), excluded.end()), excluded.end());
  CandidateSet set;
  set.positive = positive;
  set.negatives = sample_non_interacted(excluded, item_count, size, rng);
  return set;
}

std::vector<EvalCase> build_eval_cases(const ChronologicalSplit& split, HeldOut which,
                                       Index candidate_negatives, std::uint64_t seed) {
  const Dataset full = merge_split(split);
  const InteractionSets seen = interaction_sets(full);
  const Dataset& held = which == HeldOut::valid ? split.valid : split.test;
  std::vector<EvalCase> cases;
  for (std::size_t u = 0; u < held.sequences.size(); ++u) {
    const auto& target = held.sequences[u];
    if (target.items.empty()) continue;
    const auto& all = full.sequences[u].items;
    const std::size_t offset = all.size() - (which == HeldOut::valid
                                                 ? split.valid.sequences[u].items.size() +
                                                       split.test.sequences[u].items.size()
                                                 : split.test.sequences[u].items.size());
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(u), which == HeldOut::valid ? 1 : 2));
    for (std::size_t k = 0; k < target.items.size(); ++k) {
      const std::size_t pos = offset + k;
      if (pos == 0) continue;  // no history to condition on
      EvalCase c;
      c.user_id = target.user_id;
      c.history.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(pos));
      c.candidates = build_candidate_set(seen[u], all[pos], full.item_count, candidate_negatives, rng);
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

SynthResult synth_generate(const SynthConfig& config) {
  if (config.users < 1 || config.items < 2 || config.dim < 1 || config.interactions_per_user < 1) {
    throw std::invalid_argument("synth_generate: counts must be positive");
  }
  if (config.interactions_per_user > config.items) {
    throw std::invalid_argument("synth_generate: interactions_per_user exceeds item count");
  }
  SynthResult out;
  out.reward_scale = config.reward_scale;
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(config.dim)));
  out.user_vectors.resize(config.users, config.dim);
  out.item_vectors.resize(config.items, config.dim);
  for (Index i = 0; i < config.items; ++i)
    for (Index j = 0; j < config.dim; ++j) out.item_vectors(i, j) = normal(rng);
  for (Index u = 0; u < config.users; ++u)
    for (Index j = 0; j < config.dim; ++j) out.user_vectors(u, j) = normal(rng);

  out.dataset.item_count = config.items;
  out.dataset.sequences.resize(static_cast<std::size_t>(config.users));
  constexpr std::int64_t kEpoch = 1'600'000'000;
  for (Index u = 0; u < config.users; ++u) {
    Rng user_rng(derive_seed(config.seed, static_cast<std::uint64_t>(u), 0x5e9));
    auto& seq = out.dataset.sequences[static_cast<std::size_t>(u)];
    seq.user_id = u;
    seq.items = sample_ranking_prefix(out.rewards(u), config.interactions_per_user, user_rng);
    seq.timestamps.resize(seq.items.size());
    for (std::size_t t = 0; t < seq.items.size(); ++t) {
      seq.timestamps[t] = kEpoch + static_cast<std::int64_t>(u) * 86'400 + static_cast<std::int64_t>(t) * 60;
    }
  }
  return out;
}

}  // namespace prefalign
