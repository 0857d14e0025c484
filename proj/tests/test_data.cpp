#include <doctest.h>

#include "prefalign/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace prefalign;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
  const fs::path dir = fs::temp_directory_path() / "prefalign_test_data";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << contents;
  return p;
}

InteractionSequence sequence(Index user, Index n) {
  InteractionSequence s;
  s.user_id = user;
  for (Index t = 0; t < n; ++t) {
    s.items.push_back(t);
    s.timestamps.push_back(100 + t);
  }
  return s;
}

bool sorted_unique(std::vector<Index> v) {
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) == v.end();
}

}  // namespace

TEST_CASE("ingest sorts by timestamp and groups users") {
  const auto p = temp_file("a.tsv", "7\t100\t30\n7\t200\t10\n9\t100\t5\n7\t300\t20\n");
  const IngestResult r = ingest_tsv(p);
  REQUIRE(r.dataset.user_count() == 2);
  CHECK(r.dataset.item_count == 3);
  const auto& u0 = r.dataset.sequences[0];
  CHECK(u0.timestamps == std::vector<std::int64_t>{10, 20, 30});
  CHECK(r.item_mapping.front().first == "200");
  CHECK(u0.items == std::vector<Index>{0, 1, 2});
  CHECK(r.dataset.sequences[1].items == std::vector<Index>{2});
  CHECK(r.user_mapping[0].first == "7");
  CHECK(r.user_mapping[1].first == "9");
}

TEST_CASE("ingest errors") {
  CHECK_THROWS_WITH(ingest_tsv(temp_file("bad.tsv", "1\t2\t3\n1\tx\t4\n")), doctest::Contains("malformed line 2"));
  CHECK_THROWS_WITH(ingest_tsv(temp_file("empty.tsv", "")), doctest::Contains("empty file"));
  CHECK_THROWS(ingest_tsv("/nonexistent/file.tsv"));
}

TEST_CASE("ingest drops users below the minimum") {
  const auto p = temp_file("min.tsv", "1\t1\t1\n1\t2\t2\n2\t1\t1\n");
  const IngestResult r = ingest_tsv(p, 2);
  CHECK(r.dropped_users == 1);
  CHECK(r.dataset.user_count() == 1);
}

TEST_CASE("write and re-ingest round trip") {
  SynthConfig cfg;
  cfg.users = 20;
  cfg.items = 30;
  cfg.interactions_per_user = 6;
  cfg.seed = 3;
  const Dataset original = synth_generate(cfg).dataset;
  const fs::path p = temp_file("round.tsv", "");
  write_tsv(original, p);
  const IngestResult back = ingest_tsv(p);
  REQUIRE(back.dataset.user_count() == original.user_count());
  for (std::size_t u = 0; u < original.sequences.size(); ++u) {
    const auto& a = original.sequences[u];
    const auto& b = back.dataset.sequences[u];
    CHECK(a.timestamps == b.timestamps);
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t t = 0; t < a.items.size(); ++t) {
      CHECK(back.item_mapping[static_cast<std::size_t>(b.items[t])].first == std::to_string(a.items[t]));
    }
  }
}

TEST_CASE("chronological split") {
  Dataset d;
  d.item_count = 12;
  d.sequences = {sequence(0, 10), sequence(1, 5), sequence(2, 2)};
  const ChronologicalSplit s = chronological_split(d);
  CHECK(s.train.sequences[0].size() == 8);
  CHECK(s.valid.sequences[0].size() == 1);
  CHECK(s.test.sequences[0].size() == 1);
  CHECK(s.train.sequences[1].size() == 4);
  CHECK(s.valid.sequences[1].size() == 0);
  CHECK(s.test.sequences[1].size() == 1);
  CHECK(s.valid_empty_users == std::vector<Index>{1});
  CHECK(s.train.sequences[2].size() == 2);
  CHECK(s.short_users == std::vector<Index>{2});
  CHECK(merge_split(s) == d);

  for (std::size_t u = 0; u < 2; ++u) {
    const auto& tr = s.train.sequences[u].timestamps;
    const auto& te = s.test.sequences[u].timestamps;
    CHECK(tr.back() <= te.front());
  }
  CHECK_THROWS(chronological_split(d, {0.5, 0.1, 0.1}));
}

TEST_CASE("preference samples") {
  Dataset train;
  train.item_count = 20;
  InteractionSequence s;
  s.items = {4, 9, 2};
  s.timestamps = {1, 2, 3};
  train.sequences = {s};
  const InteractionSets interacted = {{2, 4, 9, 15}};
  const auto samples = build_preference_samples(train, interacted, 3, 42, 0);
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].history == std::vector<Index>{4});
  CHECK(samples[0].positive == 9);
  CHECK(samples[1].history == std::vector<Index>{4, 9});
  CHECK(samples[1].positive == 2);
  for (const auto& sample : samples) {
    CHECK(sample.negatives.size() == 3);
    CHECK(sorted_unique(sample.negatives));
    for (Index n : sample.negatives) {
      CHECK(!std::binary_search(interacted[0].begin(), interacted[0].end(), n));
    }
  }
  CHECK(build_preference_samples(train, interacted, 3, 42, 0)[1].negatives == samples[1].negatives);
  CHECK(build_preference_samples(train, interacted, 3, 42, 1)[1].negatives != samples[1].negatives);
  CHECK_THROWS_WITH(build_preference_samples(train, interacted, 17, 42, 0), doctest::Contains("user 0"));
}

TEST_CASE("candidate sets") {
  Rng rng(2);
  const std::vector<Index> interacted{1, 3, 5};
  for (int trial = 0; trial < 200; ++trial) {
    const CandidateSet c = build_candidate_set(interacted, 3, 40, kDefaultCandidateNegatives, rng);
    const auto items = c.items();
    CHECK(items.size() == 21);
    CHECK(std::count(items.begin(), items.end(), 3) == 1);
    CHECK(sorted_unique(items));
    for (Index n : c.negatives) CHECK(!std::binary_search(interacted.begin(), interacted.end(), n));
  }
  CHECK_THROWS(build_candidate_set(interacted, 3, 10, 8, rng));
}

TEST_CASE("evaluation cases") {
  SynthConfig cfg;
  cfg.users = 30;
  cfg.items = 60;
  cfg.interactions_per_user = 10;
  const ChronologicalSplit split = chronological_split(synth_generate(cfg).dataset);
  const auto cases = build_eval_cases(split, HeldOut::test, 20, 9);
  CHECK(cases.size() == 30);
  const InteractionSets sets = interaction_sets(merge_split(split));
  for (const auto& c : cases) {
    CHECK(c.history.size() == 9);
    CHECK(c.candidates.size() == 21);
    for (Index n : c.candidates.negatives) {
      const auto& mine = sets[static_cast<std::size_t>(c.user_id)];
      CHECK(!std::binary_search(mine.begin(), mine.end(), n));
    }
  }
  const auto again = build_eval_cases(split, HeldOut::test, 20, 9);
  CHECK(again[7].candidates.negatives == cases[7].candidates.negatives);
}

TEST_CASE("synthetic generator") {
  SynthConfig cfg;
  const SynthResult a = synth_generate(cfg);
  const SynthResult b = synth_generate(cfg);
  CHECK(a.dataset.interaction_count() == 15000);
  CHECK(a.dataset == b.dataset);
  CHECK(a.item_vectors == b.item_vectors);
  for (const auto& seq : a.dataset.sequences) CHECK(sorted_unique(seq.items));
  cfg.seed = 1;
  CHECK(!(synth_generate(cfg).dataset == a.dataset));
  cfg.interactions_per_user = 300;
  CHECK_THROWS(synth_generate(cfg));
}

TEST_CASE("seed derivation") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}
