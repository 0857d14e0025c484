#include <doctest.h>

#include "prefalign/training.hpp"

#include <cmath>

using namespace prefalign;

namespace {

InteractionSequence seq(Index user, std::vector<Index> items) {
  InteractionSequence s;
  s.user_id = user;
  s.items = std::move(items);
  for (std::size_t t = 0; t < s.items.size(); ++t) s.timestamps.push_back(static_cast<std::int64_t>(t));
  return s;
}

// Train-only split; valid and test are empty for every user.
TrainingData train_only(Index items, std::vector<InteractionSequence> seqs) {
  ChronologicalSplit split;
  split.train.item_count = split.valid.item_count = split.test.item_count = items;
  for (const auto& s : seqs) {
    split.train.sequences.push_back(s);
    split.valid.sequences.push_back(seq(s.user_id, {}));
    split.test.sequences.push_back(seq(s.user_id, {}));
  }
  return TrainingData(std::move(split));
}

TrainingData small_synthetic(std::uint64_t seed = 0) {
  SynthConfig cfg;
  cfg.users = 40;
  cfg.items = 30;
  cfg.dim = 4;
  cfg.interactions_per_user = 10;
  cfg.seed = seed;
  return TrainingData(chronological_split(synth_generate(cfg).dataset));
}

TrainConfig align_config(Index epochs = 2) {
  TrainConfig cfg;
  cfg.stage = Stage::align;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.align = {1.0, 3, LossKind::sdpo};
  return cfg;
}

}  // namespace

TEST_CASE("SGD step") {
  RealMatrix p = RealMatrix::Constant(1, 1, 1.0);
  OptimizerState st;
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::sgd;
  optimizer_step(p, RealMatrix::Constant(1, 1, 2.0), st, cfg, 0.1);
  CHECK(p(0, 0) == doctest::Approx(0.8));
  optimizer_step(p, RealMatrix::Zero(1, 1), st, cfg, 0.1);
  CHECK(p(0, 0) == doctest::Approx(0.8));
  CHECK(st.step == 2);
}

TEST_CASE("Adam first step has magnitude lr") {
  for (double g : {1e-3, 0.5, -40.0}) {
    RealMatrix p = RealMatrix::Zero(2, 2);
    OptimizerState st;
    optimizer_step(p, RealMatrix::Constant(2, 2, g), st, OptimizerConfig{}, 0.01);
    CHECK(std::abs(p(1, 0)) == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(p(1, 0) * g < 0.0);
  }
  RealMatrix p = RealMatrix::Ones(1, 3);
  OptimizerState st;
  optimizer_step(p, RealMatrix::Zero(1, 3), st, OptimizerConfig{}, 0.01);
  CHECK(p == RealMatrix::Ones(1, 3));
  CHECK(st.step == 1);
  CHECK_THROWS(optimizer_step(p, RealMatrix::Zero(2, 3), st, OptimizerConfig{}, 0.01));
}

TEST_CASE("tabular SFT reaches the entropy floor") {
  const TrainingData data =
      train_only(6, {seq(0, {0, 1, 2, 1, 2}), seq(1, {3, 4, 4, 4}), seq(2, {5, 0, 5, 0})});
  // positives per user: {1,2,1,2}, {4,4,4}, {0,5,0}
  const double h0 = std::log(2.0);
  const double h2 = -(2.0 / 3.0) * std::log(2.0 / 3.0) - (1.0 / 3.0) * std::log(1.0 / 3.0);
  const double floor = (4 * h0 + 0.0 + 3 * h2) / 10.0;

  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 64;
  cfg.learning_rate = 0.3;
  const TrainResult r = run_sft_stage(Policy::tabular(3, 6), data, cfg);
  CHECK(r.metrics.size() == 200);
  double total = 0.0;
  Index n = 0;
  for (const auto& s : data.split.train.sequences) {
    for (std::size_t t = 1; t < s.items.size(); ++t, ++n) {
      PreferenceSample sample{s.user_id, {s.items.begin(), s.items.begin() + static_cast<std::ptrdiff_t>(t)}, s.items[t], {}};
      total += preference_sample_loss(r.final_policy, nullptr, sample, {1.0, 1, LossKind::sft}).value;
    }
  }
  CHECK(n == 10);
  CHECK(total / n - floor <= 1e-3);
  CHECK(total / n >= floor - 1e-12);
}

TEST_CASE("SFT logs one record per epoch and is deterministic") {
  const TrainingData data = small_synthetic();
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 32;
  const Policy init = Policy::embedding(30, 4, 1);
  const TrainResult a = run_sft_stage(init, data, cfg);
  const TrainResult b = run_sft_stage(init, data, cfg);
  REQUIRE(a.metrics.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.metrics[i].epoch == static_cast<Index>(i + 1));
    CHECK(a.metrics[i].same_metrics(b.metrics[i]));
    CHECK(std::isfinite(a.metrics[i].valid_loss));
  }
  CHECK(a.final_policy.parameters() == b.final_policy.parameters());
  CHECK(a.policy.parameters() == b.policy.parameters());
  cfg.seed = 1;
  CHECK(run_sft_stage(init, data, cfg).final_policy.parameters() != a.final_policy.parameters());
}

TEST_CASE("SFT resume reproduces an uninterrupted run") {
  const TrainingData data = small_synthetic();
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 32;
  const Policy init = Policy::embedding(30, 4, 2);
  const TrainResult full = run_sft_stage(init, data, cfg);

  std::optional<Checkpoint> at2;
  run_sft_stage(init, data, cfg, nullptr, [&](const Checkpoint& c) {
    if (c.epoch == 2) at2 = c;
  });
  REQUIRE(at2);
  const TrainResult resumed = run_sft_stage(init, data, cfg, &*at2);
  CHECK(resumed.final_policy.parameters() == full.final_policy.parameters());
  CHECK(resumed.policy.parameters() == full.policy.parameters());
  CHECK(resumed.selected_epoch == full.selected_epoch);
  REQUIRE(resumed.metrics.size() == full.metrics.size());
  for (std::size_t i = 0; i < full.metrics.size(); ++i) CHECK(resumed.metrics[i].same_metrics(full.metrics[i]));
}

TEST_CASE("alignment keeps the reference frozen and is resumable") {
  const TrainingData data = small_synthetic(3);
  const Policy sft = Policy::embedding(30, 4, 3);
  const ReferencePolicy ref = snapshot_reference(sft);
  const auto hash = parameter_hash(ref.snapshot()->parameters());

  const auto valid = validation_samples(data, 3, 0);
  CHECK(mean_positive_reward(sft, ref, valid, 1.0) == 0.0);

  const TrainConfig cfg = align_config(3);
  std::optional<Checkpoint> at1;
  const TrainResult full = run_alignment_stage(sft, &ref, data, cfg, nullptr, [&](const Checkpoint& c) {
    if (c.epoch == 1) at1 = c;
    CHECK(parameter_hash(ref.snapshot()->parameters()) == hash);
  });
  CHECK(full.metrics.size() == 3);
  CHECK(full.final_policy.parameters() != sft.parameters());
  CHECK(parameter_hash(ref.snapshot()->parameters()) == hash);

  REQUIRE(at1);
  const TrainResult resumed = run_alignment_stage(sft, &ref, data, cfg, &*at1);
  CHECK(resumed.final_policy.parameters() == full.final_policy.parameters());
}

TEST_CASE("alignment loss and reference requirements") {
  const TrainingData data = small_synthetic();
  const Policy p = Policy::embedding(30, 4, 5);
  TrainConfig cfg = align_config(1);
  CHECK_THROWS_WITH(run_alignment_stage(p, nullptr, data, cfg), doctest::Contains("requires a reference"));
  cfg.align.loss_kind = LossKind::dpo;
  CHECK_THROWS_WITH(run_alignment_stage(p, nullptr, data, cfg), doctest::Contains("requires a reference"));
  for (LossKind kind : {LossKind::bpr, LossKind::softmax}) {
    cfg.align.loss_kind = kind;
    CHECK(run_alignment_stage(p, nullptr, data, cfg).metrics.size() == 1);
  }
  cfg.align.loss_kind = LossKind::sft;
  CHECK_THROWS(run_alignment_stage(p, nullptr, data, cfg));
  cfg.align.loss_kind = LossKind::sdpo;
  cfg.stage = Stage::sft;
  const ReferencePolicy ref = ReferencePolicy::uniform(30);
  CHECK_THROWS(run_alignment_stage(p, &ref, data, cfg));
}

TEST_CASE("fixed negatives reuse the first epoch's draw") {
  const TrainingData data = small_synthetic();
  const Policy p = Policy::embedding(30, 4, 6);
  const ReferencePolicy ref = snapshot_reference(p);
  TrainConfig cfg = align_config(2);
  const TrainResult resampled = run_alignment_stage(p, &ref, data, cfg);
  cfg.resample_negatives = false;
  const TrainResult fixed = run_alignment_stage(p, &ref, data, cfg);
  CHECK(resampled.metrics[0].same_metrics(fixed.metrics[0]));
  CHECK(!resampled.metrics[1].same_metrics(fixed.metrics[1]));
}

TEST_CASE("training config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_THROWS(cfg.validate());
  cfg.epochs = 1;
  cfg.learning_rate = -1;
  CHECK_THROWS(cfg.validate());
  CHECK(parse_stage("align") == Stage::align);
  CHECK(parse_optimizer_kind("sgd") == OptimizerKind::sgd);
  CHECK_THROWS(parse_optimizer_kind("rmsprop"));
}

TEST_CASE("clipping bounds the update") {
  const TrainingData data = small_synthetic();
  const Policy p = Policy::embedding(30, 4, 8);
  const ReferencePolicy ref = snapshot_reference(p);
  TrainConfig cfg = align_config(1);
  cfg.optimizer.kind = OptimizerKind::sgd;
  cfg.learning_rate = 1.0;
  cfg.batch_size = 100000;
  cfg.clip_norm = 1e-3;
  const TrainResult r = run_alignment_stage(p, &ref, data, cfg);
  CHECK((r.final_policy.parameters() - p.parameters()).norm() <= 1e-3 + 1e-12);
}
