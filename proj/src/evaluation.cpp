#include "prefalign/evaluation.hpp"

#include <array>
#include <atomic>
#include <optional>
#include <cmath>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace prefalign {

EvalReport hit_ratio_at_1(const CandidateScorer& scorer, const std::vector<EvalCase>& cases) {
  if (cases.empty()) throw std::invalid_argument("hit_ratio_at_1: empty test set");
  EvalReport report;
  report.mean_pos_reward = std::numeric_limits<double>::quiet_NaN();
  report.hits.reserve(cases.size());
  Index total_hits = 0;
  for (const auto& c : cases) {
    const std::vector<Index> items = c.candidates.items();
    const RealVector s = scorer(c);
    if (s.size() != static_cast<Index>(items.size())) {
      throw std::invalid_argument("hit_ratio_at_1: scorer returned wrong number of scores");
    }
    const double top = s.maxCoeff();
    Index winner = -1;
    Index at_top = 0;
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (s(static_cast<Index>(k)) == top) {
        ++at_top;
        if (winner < 0 || items[k] < winner) winner = items[k];
      }
    }
    if (at_top > 1) ++report.ties;
    const bool hit = winner == c.candidates.positive;
    report.hits.push_back(hit ? 1 : 0);
    total_hits += hit ? 1 : 0;
  }
  report.hr_at_1 = static_cast<double>(total_hits) / static_cast<double>(cases.size());
  return report;
}

EvalReport hit_ratio_at_1(const Policy& policy, const std::vector<EvalCase>& cases,
                          const ReferencePolicy* reference, double beta) {
  EvalReport report = hit_ratio_at_1(
      [&](const EvalCase& c) -> RealVector {
        const std::vector<Index> items = c.candidates.items();
        const RealVector all = policy.scores({c.user_id, c.history});
        return all(Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>(
            items.data(), static_cast<Index>(items.size())));
      },
      cases);
  if (reference != nullptr) {
    double total = 0.0;
    for (const auto& c : cases) {
      const Context ctx{c.user_id, c.history};
      const std::array<Index, 1> item{c.candidates.positive};
      total += implicit_reward(policy.full_log_probs(ctx)(item[0]),
                               reference->log_probs(ctx, item)(0), beta);
    }
    report.mean_pos_reward = total / static_cast<double>(cases.size());
  }
  return report;
}

CurveSeries track_curves(const std::vector<MetricRecord>& log) {
  CurveSeries out;
  for (const auto& r : log) {
    out.epochs.push_back(r.epoch);
    out.train_loss.push_back(r.train_loss);
    out.valid_loss.push_back(r.valid_loss);
    out.mean_pos_reward.push_back(r.mean_pos_reward);
  }
  return out;
}

CostModel count_forward_evals(LossKind kind, Index num_negatives) {
  if (num_negatives < 1) throw std::invalid_argument("count_forward_evals: K must be >= 1");
  CostModel m;
  m.loss_kind = kind;
  m.num_negatives = num_negatives;
  switch (kind) {
    case LossKind::sdpo:
      m.policy_evals_per_sample = num_negatives + 1;
      m.forward_evals_per_sample = 2 * (num_negatives + 1);
      break;
    case LossKind::dpo:
      m.policy_evals_per_sample = 2 * num_negatives;
      m.forward_evals_per_sample = 4 * num_negatives;
      break;
    case LossKind::softmax:
      m.policy_evals_per_sample = m.forward_evals_per_sample = num_negatives + 1;
      break;
    case LossKind::bpr:
      m.policy_evals_per_sample = m.forward_evals_per_sample = 2 * num_negatives;
      break;
    case LossKind::sft:
      m.policy_evals_per_sample = m.forward_evals_per_sample = 1;
      break;
  }
  return m;
}

CostModel count_forward_evals(std::string_view kind, Index num_negatives) {
  return count_forward_evals(parse_loss_kind(kind), num_negatives);
}

std::string_view to_string(SweepAxis axis) {
  return axis == SweepAxis::beta ? "beta" : "negatives";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "beta") return SweepAxis::beta;
  if (name == "negatives" || name == "num_negatives") return SweepAxis::num_negatives;
  throw std::invalid_argument("unknown sweep axis '" + std::string(name) + "'");
}

std::vector<double> default_sweep_values(SweepAxis axis) {
  if (axis == SweepAxis::beta) return {0.1, 0.5, 1.0, 3.0, 5.0};
  return {1, 3, 5, 8, 10, 15};
}

std::vector<SweepRow> run_sweep(SweepAxis axis, const std::vector<double>& values,
                                const std::vector<std::uint64_t>& seeds, const SweepSetup& setup) {
  if (values.empty()) throw std::invalid_argument("run_sweep: no values");
  if (seeds.empty()) throw std::invalid_argument("run_sweep: no seeds");
  if (setup.data == nullptr || setup.initial_policy == nullptr) {
    throw std::invalid_argument("run_sweep: data and initial policy are required");
  }
  const auto cases =
      build_eval_cases(setup.data->split, HeldOut::test, setup.candidate_negatives, setup.eval_seed);
  const ReferencePolicy reference = setup.uniform_reference
                                        ? ReferencePolicy::uniform(setup.initial_policy->item_count())
                                        : snapshot_reference(*setup.initial_policy);

  struct Cell {
    double value;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double v : values)
    for (std::uint64_t s : seeds) cells.push_back({v, s});

  std::vector<std::optional<SweepRow>> rows(cells.size());
  std::mutex report_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell cell = cells[i];
      if (setup.skip && setup.skip(cell.value, cell.seed)) continue;
      try {
        TrainConfig cfg = setup.base;
        cfg.stage = Stage::align;
        cfg.seed = cell.seed;
        if (axis == SweepAxis::beta) {
          cfg.align.beta = cell.value;
        } else {
          cfg.align.num_negatives = static_cast<Index>(std::llround(cell.value));
        }
        const ReferencePolicy ref = reference;
        const TrainResult result =
            run_alignment_stage(*setup.initial_policy, &ref, *setup.data, cfg);
        const EvalReport report = hit_ratio_at_1(result.policy, cases, &ref, cfg.align.beta);
        SweepRow row{cell.value, cell.seed, report.hr_at_1,
                     result.metrics.empty() ? 0.0 : result.metrics.back().valid_loss,
                     report.mean_pos_reward};
        std::lock_guard lock(report_mutex);
        rows[i] = row;
        if (setup.on_row) setup.on_row(row);
      } catch (...) {
        std::lock_guard lock(report_mutex);
        if (!failure) failure = std::current_exception();
        next.store(cells.size());
      }
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(setup.threads,
                                                           static_cast<unsigned>(cells.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<SweepRow> out;
  for (auto& r : rows)
    if (r) out.push_back(*r);
  return out;
}

namespace {

std::ostream& fixed6(std::ostream& out, double v) {
  if (std::isnan(v)) return out << "nan";
  return out << std::fixed << std::setprecision(6) << v;
}

}  // namespace

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "hr_at_1,cases,hits,ties,mean_pos_reward\n";
  Index hits = 0;
  for (auto h : report.hits) hits += h;
  fixed6(out, report.hr_at_1) << ',' << report.cases() << ',' << hits << ',' << report.ties << ',';
  fixed6(out, report.mean_pos_reward) << '\n';
}

void write_hits_csv(std::ostream& out, const EvalReport& report, const std::vector<EvalCase>& cases) {
  out << "case,user_id,positive,hit\n";
  for (std::size_t i = 0; i < cases.size() && i < report.hits.size(); ++i) {
    out << i << ',' << cases[i].user_id << ',' << cases[i].candidates.positive << ','
        << static_cast<int>(report.hits[i]) << '\n';
  }
}

void write_sweep_header(std::ostream& out, SweepAxis axis) {
  out << to_string(axis) << ",seed,hr_at_1,final_valid_loss,mean_pos_reward\n";
}

void write_sweep_row(std::ostream& out, const SweepRow& row) {
  fixed6(out, row.value) << ',' << row.seed << ',';
  fixed6(out, row.hr_at_1) << ',';
  fixed6(out, row.final_valid_loss) << ',';
  fixed6(out, row.mean_pos_reward) << '\n';
}

}  // namespace prefalign
