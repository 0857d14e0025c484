#include "prefalign/training.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prefalign {

namespace {

// Named sub-seed streams.
constexpr std::uint64_t kNegativeStream = 0x6e6567;
constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kValidStream = 0x76616c;

}  // namespace

std::string_view to_string(Stage stage) { return stage == Stage::sft ? "sft" : "align"; }

Stage parse_stage(std::string_view name) {
  if (name == "sft") return Stage::sft;
  if (name == "align") return Stage::align;
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

void optimizer_step(RealMatrix& params, const RealMatrix& grads, OptimizerState& state,
                    const OptimizerConfig& config, double learning_rate) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw std::invalid_argument("optimizer_step: gradient shape mismatch");
  }
  ++state.step;
  if (config.kind == OptimizerKind::sgd) {
    params -= learning_rate * grads;
    return;
  }
  if (state.first_moment.size() == 0) {
    state.first_moment = RealMatrix::Zero(params.rows(), params.cols());
    state.second_moment = RealMatrix::Zero(params.rows(), params.cols());
  }
  if (state.first_moment.rows() != params.rows() || state.first_moment.cols() != params.cols()) {
    throw std::invalid_argument("optimizer_step: optimizer state shape mismatch");
  }
  const double t = static_cast<double>(state.step);
  state.first_moment = config.beta1 * state.first_moment + (1.0 - config.beta1) * grads;
  state.second_moment =
      config.beta2 * state.second_moment + (1.0 - config.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  params.array() -= learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + config.epsilon);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (clip_norm < 0.0) throw std::invalid_argument("clip_norm must be >= 0");
  align.validate();
}

bool MetricRecord::same_metrics(const MetricRecord& o) const {
  auto eq = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  return stage == o.stage && epoch == o.epoch && eq(train_loss, o.train_loss) &&
         eq(valid_loss, o.valid_loss) && eq(mean_pos_reward, o.mean_pos_reward);
}

TrainingData::TrainingData(ChronologicalSplit s)
    : split(std::move(s)), interacted(interaction_sets(merge_split(split))) {}

SampleLoss preference_sample_loss(const Policy& policy, const ReferencePolicy* reference,
                                  const PreferenceSample& sample, const AlignmentConfig& config,
                                  RealMatrix* grad, double grad_scale) {
  const Context ctx{sample.user_id, sample.history};
  const bool needs_reference = config.loss_kind == LossKind::dpo || config.loss_kind == LossKind::sdpo;
  if (needs_reference && reference == nullptr) {
    throw std::invalid_argument(std::string(to_string(config.loss_kind)) +
                                " loss requires a reference policy");
  }

  SampleLoss out;
  auto accumulate = [&](std::span<const Index> items, const LossOutput& loss, double weight) {
    out.value += weight * loss.value;
    if (grad != nullptr) policy.backprop(ctx, items, grad_scale * weight * loss.grad_policy_logp, *grad);
  };

  const auto k = static_cast<double>(sample.negatives.size());
  switch (config.loss_kind) {
    case LossKind::sft: {
      const std::array<Index, 1> items{sample.positive};
      LogProbTable t{policy.log_probs(ctx, items), RealVector::Zero(1), 0};
      accumulate(items, sft_nll(t), 1.0);
      out.pos_reward = reference ? implicit_reward(t.policy_logp(0),
                                                   reference->log_probs(ctx, items)(0), config.beta)
                                 : 0.0;
      return out;
    }
    case LossKind::sdpo:
    case LossKind::softmax: {
      const std::vector<Index> items = sample.candidates();
      LogProbTable t;
      t.policy_logp = policy.log_probs(ctx, items);
      t.positive = 0;
      if (config.loss_kind == LossKind::sdpo) {
        t.ref_logp = reference->log_probs(ctx, items);
        accumulate(items, sdpo_loss(t, config.beta), 1.0);
        out.pos_reward = implicit_reward(t.policy_logp(0), t.ref_logp(0), config.beta);
      } else {
        accumulate(items, softmax_ranking_loss(t.policy_logp, 0), 1.0);
      }
      return out;
    }
    case LossKind::dpo:
    case LossKind::bpr: {
      if (sample.negatives.empty()) throw std::invalid_argument("pairwise loss needs a negative");
      for (Index d : sample.negatives) {
        const std::array<Index, 2> items{sample.positive, d};
        LogProbTable t;
        t.policy_logp = policy.log_probs(ctx, items);
        t.positive = 0;
        if (config.loss_kind == LossKind::dpo) {
          t.ref_logp = reference->log_probs(ctx, items);
          accumulate(items, dpo_loss(t, config.beta), 1.0 / k);
          out.pos_reward = implicit_reward(t.policy_logp(0), t.ref_logp(0), config.beta);
        } else {
          accumulate(items, bpr_loss(t.policy_logp(0), t.policy_logp(1)), 1.0 / k);
        }
      }
      return out;
    }
  }
  throw std::invalid_argument("unknown loss kind");
}

std::vector<PreferenceSample> validation_samples(const TrainingData& data, Index num_negatives,
                                                 std::uint64_t seed) {
  std::vector<PreferenceSample> out;
  const auto cases = build_eval_cases(data.split, HeldOut::valid, std::max<Index>(num_negatives, 0),
                                      derive_seed(seed, kValidStream));
  out.reserve(cases.size());
  for (const auto& c : cases) {
    out.push_back({c.user_id, c.history, c.candidates.positive, c.candidates.negatives});
  }
  return out;
}

double mean_positive_reward(const Policy& policy, const ReferencePolicy& reference,
                            const std::vector<PreferenceSample>& samples, double beta) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& s : samples) {
    const Context ctx{s.user_id, s.history};
    const std::array<Index, 1> item{s.positive};
    total += implicit_reward(policy.full_log_probs(ctx)(s.positive),
                             reference.log_probs(ctx, item)(0), beta);
  }
  return total / static_cast<double>(samples.size());
}

namespace {

struct EpochOutcome {
  double train_loss = 0.0;
};

// One pass over `samples` in a seeded shuffled order, stepping the optimizer
// after every batch. Gradients are accumulated in sample order.
EpochOutcome run_epoch(Policy& policy, const ReferencePolicy* reference,
                       const std::vector<PreferenceSample>& samples, const AlignmentConfig& loss,
                       const TrainConfig& config, OptimizerState& opt, Index epoch) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(config.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);

  EpochOutcome out;
  RealMatrix grad = policy.zero_gradient();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    const double scale = 1.0 / static_cast<double>(end - start);
    grad.setZero();
    for (std::size_t b = start; b < end; ++b) {
      const auto& sample = samples[order[b]];
      const SampleLoss l = preference_sample_loss(policy, reference, sample, loss, &grad, scale);
      if (!std::isfinite(l.value)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                 std::to_string(order[b]) + " (user " +
                                 std::to_string(sample.user_id) + ")");
      }
      out.train_loss += l.value;
    }
    if (config.clip_norm > 0.0) {
      const double norm = grad.norm();
      if (norm > config.clip_norm) grad *= config.clip_norm / norm;
    }
    optimizer_step(policy.parameters(), grad, opt, config.optimizer, config.learning_rate);
  }
  out.train_loss /= static_cast<double>(std::max<std::size_t>(samples.size(), 1));
  return out;
}

double mean_loss(const Policy& policy, const ReferencePolicy* reference,
                 const std::vector<PreferenceSample>& samples, const AlignmentConfig& loss) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& s : samples) total += preference_sample_loss(policy, reference, s, loss).value;
  return total / static_cast<double>(samples.size());
}

std::vector<PreferenceSample> next_item_samples(const TrainingData& data) {
  std::vector<PreferenceSample> out;
  for (const auto& seq : data.split.train.sequences) {
    for (std::size_t t = 1; t < seq.items.size(); ++t) {
      PreferenceSample s;
      s.user_id = seq.user_id;
      s.history.assign(seq.items.begin(), seq.items.begin() + static_cast<std::ptrdiff_t>(t));
      s.positive = seq.items[t];
      out.push_back(std::move(s));
    }
  }
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

TrainResult run_sft_stage(Policy policy, const TrainingData& data, const TrainConfig& config,
                          const Checkpoint* resume, const EpochCallback& on_epoch) {
  config.validate();
  if (config.stage != Stage::sft) throw std::invalid_argument("run_sft_stage: stage must be sft");

  const AlignmentConfig loss{config.align.beta, config.align.num_negatives, LossKind::sft};
  const auto samples = next_item_samples(data);
  if (samples.empty()) throw std::invalid_argument("run_sft_stage: no training samples");
  const auto valid = validation_samples(data, 0, config.seed);
  const ReferencePolicy uniform = ReferencePolicy::uniform(policy.item_count());

  Checkpoint state{policy, {}, config.optimizer.kind, 0, {}, std::nullopt, 0,
                   std::numeric_limits<double>::infinity()};
  if (resume != nullptr) state = *resume;

  for (Index epoch = state.epoch; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const EpochOutcome e =
        run_epoch(state.policy, nullptr, samples, loss, config, state.optimizer, epoch);
    MetricRecord rec;
    rec.stage = Stage::sft;
    rec.epoch = epoch + 1;
    rec.train_loss = e.train_loss;
    rec.valid_loss = valid.empty() ? e.train_loss : mean_loss(state.policy, nullptr, valid, loss);
    rec.mean_pos_reward = mean_positive_reward(state.policy, uniform, valid, config.align.beta);
    rec.wall_ms = elapsed_ms(t0);
    state.metrics.push_back(rec);
    state.epoch = epoch + 1;
    if (!state.best_policy || rec.valid_loss < state.best_valid_loss) {
      state.best_policy = state.policy;
      state.best_epoch = rec.epoch;
      state.best_valid_loss = rec.valid_loss;
    }
    if (on_epoch) on_epoch(state);
  }
  TrainResult out{state.best_policy.value_or(state.policy), state.policy, state.metrics,
                  state.best_epoch, state.optimizer};
  return out;
}

TrainResult run_alignment_stage(Policy policy, const ReferencePolicy* reference,
                                const TrainingData& data, const TrainConfig& config,
                                const Checkpoint* resume, const EpochCallback& on_epoch) {
  config.validate();
  if (config.stage != Stage::align) {
    throw std::invalid_argument("run_alignment_stage: stage must be align");
  }
  const LossKind kind = config.align.loss_kind;
  if (kind == LossKind::sft) {
    throw std::invalid_argument("run_alignment_stage: loss must be one of dpo, sdpo, bpr, softmax");
  }
  if ((kind == LossKind::dpo || kind == LossKind::sdpo) && reference == nullptr) {
    throw std::invalid_argument(std::string(to_string(kind)) +
                                " alignment requires a reference policy (SFT snapshot or uniform)");
  }
  const ReferencePolicy uniform = ReferencePolicy::uniform(policy.item_count());
  const ReferencePolicy& reward_ref = reference ? *reference : uniform;
  const auto valid = validation_samples(data, config.align.num_negatives, config.seed);

  Checkpoint state{policy, {}, config.optimizer.kind, 0, {}, std::nullopt, 0, 0.0};
  if (resume != nullptr) state = *resume;

  for (Index epoch = state.epoch; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto samples = build_preference_samples(
        data.split.train, data.interacted, config.align.num_negatives,
        derive_seed(config.seed, kNegativeStream),
        config.resample_negatives ? static_cast<std::uint64_t>(epoch) : 0);
    if (samples.empty()) throw std::invalid_argument("run_alignment_stage: no training samples");
    const EpochOutcome e =
        run_epoch(state.policy, reference, samples, config.align, config, state.optimizer, epoch);
    MetricRecord rec;
    rec.stage = Stage::align;
    rec.epoch = epoch + 1;
    rec.train_loss = e.train_loss;
    rec.valid_loss = mean_loss(state.policy, reference, valid, config.align);
    rec.mean_pos_reward = mean_positive_reward(state.policy, reward_ref, valid, config.align.beta);
    rec.wall_ms = elapsed_ms(t0);
    state.metrics.push_back(rec);
    state.epoch = epoch + 1;
    if (on_epoch) on_epoch(state);
  }
  TrainResult out{state.policy, state.policy, state.metrics, state.epoch, state.optimizer};
  return out;
}

}  // namespace prefalign
