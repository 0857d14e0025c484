#include "prefalign/cli.hpp"

#include "prefalign/evaluation.hpp"
#include "prefalign/gradcheck.hpp"
#include "prefalign/serialization.hpp"
#include "prefalign/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

namespace prefalign {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Named sub-seed streams derived from the run seed.
constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr std::uint64_t kUniformScorerStream = 0x756e6966;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_split_tsv(const Dataset& d, const fs::path& path) { write_tsv(d, path); }

Dataset read_dense_tsv(const fs::path& path, Index users, Index items) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Dataset d;
  d.item_count = items;
  d.sequences.resize(static_cast<std::size_t>(users));
  for (Index u = 0; u < users; ++u) d.sequences[static_cast<std::size_t>(u)].user_id = u;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Index u = -1, i = -1;
    std::int64_t ts = 0;
    if (!(fields >> u >> i >> ts) || u < 0 || u >= users || i < 0 || i >= items) {
      throw std::runtime_error(path.string() + ": malformed line " + std::to_string(line_no));
    }
    auto& seq = d.sequences[static_cast<std::size_t>(u)];
    seq.items.push_back(i);
    seq.timestamps.push_back(ts);
  }
  return d;
}

ordered_json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return ordered_json::parse(in);
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string dataset_fingerprint(const fs::path& dir) {
  std::uint64_t h = 0;
  for (const char* name : {"train.tsv", "valid.tsv", "test.tsv"}) {
    h = derive_seed(h, file_fingerprint(dir / name));
  }
  return hex64(h);
}

ordered_json effective_config(const CLI::App& cmd) {
  ordered_json cfg = ordered_json::object();
  for (const CLI::Option* opt : cmd.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      cfg[name] = r.size() == 1 ? ordered_json(r.front()) : ordered_json(r);
    } else if (opt->get_type_size() == 0) {
      cfg[name] = false;
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

/// Exactly one manifest per run directory, written before any work.
void write_manifest(const fs::path& dir, const std::string& command, const CLI::App& cmd,
                    const std::string& fingerprint, std::uint64_t seed, ordered_json extra = {}) {
  fs::create_directories(dir);
  ordered_json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["output_dir"] = dir.string();
  m["config"] = effective_config(cmd);
  m["dataset_fingerprint"] = fingerprint;
  m["seeds"] = {{"run", seed},
                {"init", derive_seed(seed, kInitStream)},
                {"eval", derive_seed(seed, kEvalStream)}};
  if (!extra.is_null()) m["report"] = std::move(extra);
  write_json(dir / "manifest.json", m);
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream s(text);
  std::string tok;
  while (std::getline(s, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + tok + "'");
    }
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_double_list(text)) out.push_back(static_cast<std::uint64_t>(v));
  return out;
}

unsigned worker_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PREFALIGN_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

// ----------------------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string output;
  Index min_interactions = 0;
};

int cmd_ingest(const IngestArgs& a, const CLI::App& cmd, std::ostream& out) {
  const IngestResult r = ingest_tsv(a.input, a.min_interactions);
  const ChronologicalSplit split = chronological_split(r.dataset);
  fs::create_directories(a.output);
  write_manifest(a.output, "ingest", cmd, hex64(file_fingerprint(a.input)), 0,
                 {{"users", r.dataset.user_count()},
                  {"items", r.dataset.item_count},
                  {"interactions", r.dataset.interaction_count()},
                  {"dropped_users", r.dropped_users}});
  save_dataset_dir(a.output, split, r.dropped_users);
  write_mapping_csv(r.item_mapping, fs::path(a.output) / "item_map.csv");
  write_mapping_csv(r.user_mapping, fs::path(a.output) / "user_map.csv");
  out << "ingested " << r.dataset.user_count() << " users, " << r.dataset.item_count << " items, "
      << r.dataset.interaction_count() << " interactions (" << r.dropped_users
      << " users dropped, " << split.short_users.size() << " short users kept in train)\n";
  return 0;
}

struct SynthArgs {
  Index users = 500;
  Index items = 200;
  Index dim = 8;
  Index per_user = 30;
  std::uint64_t seed = 0;
  double reward_scale = 20.0;
  std::string output;
};

int cmd_synth(const SynthArgs& a, const CLI::App& cmd, std::ostream& out) {
  SynthConfig cfg{a.users, a.items, a.dim, a.per_user, a.seed, a.reward_scale};
  write_manifest(a.output, "synth", cmd, "synthetic", a.seed);
  const SynthResult r = synth_generate(cfg);
  const ChronologicalSplit split = chronological_split(r.dataset);
  save_dataset_dir(a.output, split);
  write_tsv(r.dataset, fs::path(a.output) / "interactions.tsv");
  std::vector<std::pair<std::string, Index>> identity;
  for (Index i = 0; i < a.items; ++i) identity.emplace_back(std::to_string(i), i);
  write_mapping_csv(identity, fs::path(a.output) / "item_map.csv");
  save_matrix(fs::path(a.output) / "gt_items.bin", r.item_vectors);
  save_matrix(fs::path(a.output) / "gt_users.bin", r.user_vectors);
  ordered_json meta = read_json(fs::path(a.output) / "dataset.json");
  meta["reward_scale"] = a.reward_scale;
  write_json(fs::path(a.output) / "dataset.json", meta);
  out << "generated " << r.dataset.interaction_count() << " interactions for " << a.users
      << " users over " << a.items << " items\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string stage = "sft";
  std::string loss;
  double beta = 1.0;
  Index negatives = 3;
  std::uint64_t seed = 0;
  std::string output;
  Index epochs = 0;
  double lr = 1e-2;
  Index batch_size = 128;
  std::string optimizer = "adam";
  std::string policy = "embedding";
  Index dim = 8;
  std::string pooling = "mean";
  std::string init;
  std::string reference;
  double clip_norm = 0.0;
  bool fixed_negatives = false;
  bool resume = false;
};

TrainConfig to_train_config(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.stage = parse_stage(a.stage);
  const bool sft = cfg.stage == Stage::sft;
  cfg.align.loss_kind = parse_loss_kind(a.loss.empty() ? (sft ? "sft" : "sdpo") : a.loss);
  if (sft && cfg.align.loss_kind != LossKind::sft) {
    throw UsageError("--stage sft trains with --loss sft only");
  }
  if (!sft && cfg.align.loss_kind == LossKind::sft) {
    throw UsageError("--stage align needs --loss bpr|softmax|dpo|sdpo");
  }
  cfg.align.beta = a.beta;
  cfg.align.num_negatives = a.negatives;
  cfg.seed = a.seed;
  cfg.epochs = a.epochs > 0 ? a.epochs : (sft ? 200 : 3);
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch_size;
  cfg.optimizer.kind = parse_optimizer_kind(a.optimizer);
  cfg.clip_norm = a.clip_norm;
  cfg.resample_negatives = !a.fixed_negatives;
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a, const CLI::App& cmd, std::ostream& out) {
  const TrainConfig cfg = to_train_config(a);
  const fs::path dir = a.output;
  const ChronologicalSplit split = load_dataset_dir(a.data);
  const Index items = split.train.item_count;
  const Index users = split.train.user_count();

  std::optional<ReferencePolicy> reference;
  if (cfg.stage == Stage::align) {
    const LossKind k = cfg.align.loss_kind;
    if (a.reference.empty() && (k == LossKind::dpo || k == LossKind::sdpo)) {
      throw UsageError("--loss " + std::string(to_string(k)) +
                       " needs a reference policy: pass --reference <sft policy.bin> or --reference uniform");
    }
    if (a.reference == "uniform") {
      reference = ReferencePolicy::uniform(items);
    } else if (!a.reference.empty()) {
      reference = snapshot_reference(load_policy(a.reference));
    }
  }

  Policy initial = !a.init.empty() ? load_policy(a.init)
                   : parse_policy_kind(a.policy) == PolicyKind::tabular
                       ? Policy::tabular(users, items)
                       : Policy::embedding(items, a.dim, derive_seed(a.seed, kInitStream),
                                           parse_pooling(a.pooling));
  if (initial.item_count() != items) {
    throw UsageError("initial policy has " + std::to_string(initial.item_count()) +
                     " items, dataset has " + std::to_string(items));
  }

  std::optional<Checkpoint> resume_from;
  if (a.resume && fs::exists(dir / "checkpoint.bin")) resume_from = load_checkpoint(dir / "checkpoint.bin");
  write_manifest(dir, "train", cmd, dataset_fingerprint(a.data), a.seed);

  const TrainingData data(split);
  auto on_epoch = [&](const Checkpoint& c) {
    save_checkpoint(dir / "checkpoint.bin", c);
    write_metric_log(dir / "metrics.jsonl", c.metrics);
  };
  const Checkpoint* resume_ptr = resume_from ? &*resume_from : nullptr;
  const TrainResult result =
      cfg.stage == Stage::sft
          ? run_sft_stage(initial, data, cfg, resume_ptr, on_epoch)
          : run_alignment_stage(initial, reference ? &*reference : nullptr, data, cfg, resume_ptr,
                                on_epoch);
  write_metric_log(dir / "metrics.jsonl", result.metrics);
  save_policy(dir / "policy.bin", result.policy);
  save_policy(dir / "final.bin", result.final_policy);
  const auto& last = result.metrics.back();
  out << to_string(cfg.stage) << " (" << to_string(cfg.align.loss_kind) << ") finished "
      << result.metrics.size() << " epochs; selected epoch " << result.selected_epoch
      << ", last valid_loss " << last.valid_loss << ", mean_pos_reward " << last.mean_pos_reward
      << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  Index candidates = kDefaultCandidateNegatives;
  std::uint64_t seed = 0;
  std::string output;
  std::string scorer = "policy";
  std::string split = "test";
  std::string reference;
  double beta = 1.0;
};

int cmd_eval(const EvalArgs& a, const CLI::App& cmd, std::ostream& out) {
  const ChronologicalSplit split = load_dataset_dir(a.data);
  const HeldOut which = a.split == "valid" ? HeldOut::valid : HeldOut::test;
  if (a.split != "valid" && a.split != "test") throw UsageError("--split must be valid or test");
  const auto cases = build_eval_cases(split, which, a.candidates, derive_seed(a.seed, kEvalStream));
  if (cases.empty()) throw std::runtime_error("no evaluation cases in the " + a.split + " split");

  EvalReport report;
  if (a.scorer == "policy") {
    if (a.checkpoint.empty()) throw UsageError("--scorer policy needs --checkpoint");
    const Policy policy = load_policy(a.checkpoint);
    std::optional<ReferencePolicy> ref;
    if (a.reference == "uniform") ref = ReferencePolicy::uniform(policy.item_count());
    else if (!a.reference.empty()) ref = snapshot_reference(load_policy(a.reference));
    report = hit_ratio_at_1(policy, cases, ref ? &*ref : nullptr, a.beta);
  } else if (a.scorer == "uniform") {
    Rng rng(derive_seed(a.seed, kUniformScorerStream));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    report = hit_ratio_at_1(
        [&](const EvalCase& c) {
          RealVector s(c.candidates.size());
          for (Index i = 0; i < s.size(); ++i) s(i) = u(rng);
          return s;
        },
        cases);
  } else if (a.scorer == "ground-truth") {
    const RealMatrix items = load_matrix(fs::path(a.data) / "gt_items.bin");
    const RealMatrix users = load_matrix(fs::path(a.data) / "gt_users.bin");
    report = hit_ratio_at_1(
        [&](const EvalCase& c) {
          const auto ids = c.candidates.items();
          RealVector s(static_cast<Index>(ids.size()));
          for (std::size_t k = 0; k < ids.size(); ++k) {
            s(static_cast<Index>(k)) = items.row(ids[k]).dot(users.row(c.user_id));
          }
          return s;
        },
        cases);
  } else {
    throw UsageError("--scorer must be policy, uniform or ground-truth");
  }

  const fs::path dir = a.output;
  write_manifest(dir, "eval", cmd, dataset_fingerprint(a.data), a.seed);
  {
    std::ofstream f(dir / "report.csv");
    write_report_csv(f, report);
    std::ofstream h(dir / "hits.csv");
    write_hits_csv(h, report, cases);
  }
  out << "HR@1 = " << std::fixed << std::setprecision(6) << report.hr_at_1 << " over "
      << report.cases() << " cases (" << report.ties << " ties)\n";
  return 0;
}

struct GradcheckArgs {
  std::string loss = "all";
  Index trials = 100;
  double tolerance = 1e-6;
  std::string negatives = "1,2,3,5,8";
  std::uint64_t seed = 0;
  bool flip_sign = false;
  bool end_to_end = true;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (a.trials < 1) throw UsageError("--trials must be >= 1");
  std::vector<LossKind> kinds;
  if (a.loss == "all") {
    kinds = {LossKind::sft, LossKind::bpr, LossKind::softmax, LossKind::dpo, LossKind::sdpo};
  } else {
    kinds = {parse_loss_kind(a.loss)};
  }
  const GradCheckOptions opts{a.trials, a.seed, kDefaultFiniteDifferenceStep, a.flip_sign};
  bool all_ok = true;
  out << "loss,K,level,trials,max_error,worst_trial,worst_coordinate,status\n";
  auto report = [&](const GradCheckResult& r) {
    const bool ok = r.passed(a.tolerance);
    all_ok = all_ok && ok;
    out << to_string(r.loss_kind) << ',' << r.num_negatives << ',' << r.level << ',' << r.trials
        << ',' << std::scientific << std::setprecision(3) << r.max_error << std::defaultfloat
        << ',' << r.worst_trial << ',' << r.worst_coordinate << ',' << (ok ? "pass" : "FAIL")
        << '\n';
  };
  for (LossKind kind : kinds) {
    for (double kv : parse_double_list(a.negatives)) {
      const auto k = static_cast<Index>(kv);
      report(check_logp_gradients(kind, k, opts));
      if (a.end_to_end) {
        report(check_policy_gradients(PolicyKind::tabular, kind, k, opts));
        report(check_policy_gradients(PolicyKind::embedding, kind, k, opts));
      }
    }
  }
  out << (all_ok ? "gradcheck passed" : "gradcheck FAILED") << " at tolerance " << a.tolerance << '\n';
  return all_ok ? 0 : 1;
}

struct SweepArgs {
  std::string data;
  std::string init;
  std::string axis = "negatives";
  std::string values;
  std::string seeds = "0,1,2,3,4";
  std::string output;
  Index epochs = 3;
  double lr = 1e-2;
  Index batch_size = 128;
  std::string loss = "sdpo";
  double beta = 1.0;
  Index negatives = 3;
  std::string reference = "init";
  Index candidates = kDefaultCandidateNegatives;
  std::uint64_t eval_seed = 0;
};

int cmd_sweep(const SweepArgs& a, const CLI::App& cmd, std::ostream& out) {
  const SweepAxis axis = parse_sweep_axis(a.axis);
  const std::vector<double> values =
      a.values.empty() ? default_sweep_values(axis) : parse_double_list(a.values);
  const std::vector<std::uint64_t> seeds = parse_seed_list(a.seeds);
  if (values.empty() || seeds.empty()) throw UsageError("--values and --seeds must be non-empty");
  if (a.reference != "init" && a.reference != "uniform") throw UsageError("--reference must be init or uniform");

  const fs::path dir = a.output;
  const fs::path csv = dir / "sweep.csv";
  std::set<std::pair<std::string, std::uint64_t>> done;
  const bool resuming = fs::exists(csv);
  if (resuming) {
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::stringstream s(line);
      std::string value, seed;
      if (std::getline(s, value, ',') && std::getline(s, seed, ',')) {
        done.emplace(value, std::stoull(seed));
      }
    }
  }
  write_manifest(dir, "sweep", cmd, dataset_fingerprint(a.data), seeds.front());

  const TrainingData data(load_dataset_dir(a.data));
  const Policy initial = load_policy(a.init);
  SweepSetup setup;
  setup.data = &data;
  setup.initial_policy = &initial;
  setup.uniform_reference = a.reference == "uniform";
  setup.base.stage = Stage::align;
  setup.base.epochs = a.epochs;
  setup.base.learning_rate = a.lr;
  setup.base.batch_size = a.batch_size;
  setup.base.align = {a.beta, a.negatives, parse_loss_kind(a.loss)};
  setup.candidate_negatives = a.candidates;
  setup.eval_seed = a.eval_seed;
  setup.threads = worker_threads();

  auto key = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(6) << v;
    return s.str();
  };
  setup.skip = [&](double v, std::uint64_t seed) { return done.count({key(v), seed}) > 0; };
  std::ofstream file(csv, std::ios::app);
  if (!resuming) write_sweep_header(file, axis);
  Index written = 0;
  setup.on_row = [&](const SweepRow& row) {
    write_sweep_row(file, row);
    file.flush();
    ++written;
  };
  run_sweep(axis, values, seeds, setup);
  out << "sweep over " << to_string(axis) << ": " << written << " new cells, "
      << done.size() << " reused, written to " << csv.string() << '\n';
  return 0;
}

}  // namespace

void save_dataset_dir(const fs::path& dir, const ChronologicalSplit& split, Index dropped_users) {
  fs::create_directories(dir);
  write_split_tsv(split.train, dir / "train.tsv");
  write_split_tsv(split.valid, dir / "valid.tsv");
  write_split_tsv(split.test, dir / "test.tsv");
  ordered_json meta;
  meta["item_count"] = split.train.item_count;
  meta["user_count"] = split.train.user_count();
  meta["dropped_users"] = dropped_users;
  meta["short_users"] = split.short_users;
  meta["valid_empty_users"] = split.valid_empty_users;
  write_json(dir / "dataset.json", meta);
}

ChronologicalSplit load_dataset_dir(const fs::path& dir) {
  const ordered_json meta = read_json(dir / "dataset.json");
  const auto items = meta.at("item_count").get<Index>();
  const auto users = meta.at("user_count").get<Index>();
  ChronologicalSplit split;
  split.train = read_dense_tsv(dir / "train.tsv", users, items);
  split.valid = read_dense_tsv(dir / "valid.tsv", users, items);
  split.test = read_dense_tsv(dir / "test.tsv", users, items);
  split.short_users = meta.value("short_users", std::vector<Index>{});
  split.valid_empty_users = meta.value("valid_empty_users", std::vector<Index>{});
  return split;
}

std::vector<std::string> merge_config_file(const std::vector<std::string>& args,
                                           const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::set<std::string> given;
  for (const auto& a : args) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  std::vector<std::string> merged = args;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config" || given.count(key)) continue;
    if (value == "false") continue;
    merged.push_back("--" + key);
    if (value != "true") merged.push_back(value);
  }
  return merged;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args = raw_args;
  try {
    // --config is honoured for every subcommand; command-line flags win.
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--config") {
        const fs::path cfg = args[i + 1];
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                   args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
        args = merge_config_file(args, cfg);
        break;
      }
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"prefalign: multi-negative preference alignment toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Ingest a user/item/timestamp TSV and split it 8:1:1");
  c_ingest->add_option("--input", ingest.input, "Interaction TSV")->required();
  c_ingest->add_option("--output", ingest.output, "Dataset directory")->required();
  c_ingest->add_option("--min-interactions", ingest.min_interactions, "Drop users below this count")
      ->capture_default_str();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic dataset with a known PL ground truth");
  c_synth->add_option("--users", synth.users)->capture_default_str();
  c_synth->add_option("--items", synth.items)->capture_default_str();
  c_synth->add_option("--dim", synth.dim)->capture_default_str();
  c_synth->add_option("--per-user", synth.per_user)->capture_default_str();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--reward-scale", synth.reward_scale, "Multiplier on ground-truth dot products")
      ->capture_default_str();
  c_synth->add_option("--output", synth.output)->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Run the SFT or preference-alignment stage");
  c_train->add_option("--data", train.data, "Dataset directory")->required();
  c_train->add_option("--stage", train.stage)->capture_default_str()->check(CLI::IsMember({"sft", "align"}));
  c_train->add_option("--loss", train.loss, "sft|bpr|softmax|dpo|sdpo (default: sft for --stage sft, sdpo for align)")
      ->check(CLI::IsMember({"sft", "bpr", "softmax", "dpo", "sdpo"}));
  c_train->add_option("--beta", train.beta)->capture_default_str();
  c_train->add_option("--negatives", train.negatives)->capture_default_str();
  c_train->add_option("--seed", train.seed)->capture_default_str();
  c_train->add_option("--output", train.output, "Run directory")->required();
  c_train->add_option("--epochs", train.epochs, "Default 200 (sft) or 3 (align)");
  c_train->add_option("--lr", train.lr, "Learning rate")->capture_default_str();
  c_train->add_option("--batch-size", train.batch_size)->capture_default_str();
  c_train->add_option("--optimizer", train.optimizer)->capture_default_str()->check(CLI::IsMember({"sgd", "adam"}));
  c_train->add_option("--policy", train.policy)->capture_default_str()->check(CLI::IsMember({"tabular", "embedding"}));
  c_train->add_option("--dim", train.dim)->capture_default_str();
  c_train->add_option("--pooling", train.pooling)->capture_default_str()->check(CLI::IsMember({"mean", "last"}));
  c_train->add_option("--init", train.init, "Start from this policy file");
  c_train->add_option("--reference", train.reference, "Reference policy file, or 'uniform'");
  c_train->add_option("--clip-norm", train.clip_norm)->capture_default_str();
  c_train->add_flag("--fixed-negatives", train.fixed_negatives, "Keep epoch-0 negatives for every epoch");
  c_train->add_flag("--resume", train.resume, "Continue from <output>/checkpoint.bin");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "HR@1 over sampled candidate sets");
  c_eval->add_option("--checkpoint", eval.checkpoint, "Policy or checkpoint file");
  c_eval->add_option("--data", eval.data)->required();
  c_eval->add_option("--candidates", eval.candidates, "Negatives per candidate set")->capture_default_str();
  c_eval->add_option("--seed", eval.seed)->capture_default_str();
  c_eval->add_option("--output", eval.output)->required();
  c_eval->add_option("--scorer", eval.scorer)->capture_default_str()
      ->check(CLI::IsMember({"policy", "uniform", "ground-truth"}));
  c_eval->add_option("--split", eval.split)->capture_default_str();
  c_eval->add_option("--reference", eval.reference, "Reference for the implicit-reward column");
  c_eval->add_option("--beta", eval.beta)->capture_default_str();

  GradcheckArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  c_grad->add_option("--loss", grad.loss)->capture_default_str();
  c_grad->add_option("--trials", grad.trials)->capture_default_str();
  c_grad->add_option("--tolerance", grad.tolerance)->capture_default_str();
  c_grad->add_option("--negatives", grad.negatives, "Comma-separated K values")->capture_default_str();
  c_grad->add_option("--seed", grad.seed)->capture_default_str();
  c_grad->add_flag("--inject-sign-flip", grad.flip_sign, "Negate analytic gradients (checker self-test)");
  c_grad->add_flag("!--no-end-to-end", grad.end_to_end, "Skip the policy-level checks");

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Alignment runs across beta or negative counts");
  c_sweep->add_option("--data", sweep.data)->required();
  c_sweep->add_option("--init", sweep.init, "SFT policy every cell starts from")->required();
  c_sweep->add_option("--axis", sweep.axis)->capture_default_str()->check(CLI::IsMember({"beta", "negatives"}));
  c_sweep->add_option("--values", sweep.values, "Comma-separated; defaults per axis");
  c_sweep->add_option("--seeds", sweep.seeds)->capture_default_str();
  c_sweep->add_option("--output", sweep.output)->required();
  c_sweep->add_option("--epochs", sweep.epochs)->capture_default_str();
  c_sweep->add_option("--lr", sweep.lr)->capture_default_str();
  c_sweep->add_option("--batch-size", sweep.batch_size)->capture_default_str();
  c_sweep->add_option("--loss", sweep.loss)->capture_default_str();
  c_sweep->add_option("--beta", sweep.beta)->capture_default_str();
  c_sweep->add_option("--negatives", sweep.negatives)->capture_default_str();
  c_sweep->add_option("--reference", sweep.reference, "init or uniform")->capture_default_str();
  c_sweep->add_option("--candidates", sweep.candidates)->capture_default_str();
  c_sweep->add_option("--eval-seed", sweep.eval_seed)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, *c_ingest, out);
    if (c_synth->parsed()) return cmd_synth(synth, *c_synth, out);
    if (c_train->parsed()) return cmd_train(train, *c_train, out);
    if (c_eval->parsed()) return cmd_eval(eval, *c_eval, out);
    if (c_grad->parsed()) return cmd_gradcheck(grad, out);
    if (c_sweep->parsed()) return cmd_sweep(sweep, *c_sweep, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace prefalign
