#include <doctest.h>

#include "prefalign/serialization.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

using namespace prefalign;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "prefalign_test_serialization";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("policy round trip") {
  const Policy emb = Policy::embedding(7, 3, 11, Pooling::last);
  RealMatrix logits = RealMatrix::Random(4, 9);
  const Policy tab = Policy::from_parameters(PolicyKind::tabular, logits);
  for (const Policy* p : {&emb, &tab}) {
    std::stringstream buf;
    write_policy(buf, *p);
    const Policy back = read_policy(buf);
    CHECK(back.kind() == p->kind());
    CHECK(back.pooling() == p->pooling());
    CHECK(back.item_count() == p->item_count());
    CHECK(back.parameters() == p->parameters());
  }
  const fs::path f = scratch("emb.bin");
  save_policy(f, emb);
  CHECK(fs::file_size(f) == 5 + 2 + 16 + 7 * 3 * 8);
  CHECK(load_policy(f).parameters() == emb.parameters());
}

TEST_CASE("malformed parameter files") {
  std::stringstream junk("NOPE!....");
  CHECK_THROWS_WITH(read_policy(junk), doctest::Contains("bad magic"));
  std::stringstream buf;
  write_policy(buf, Policy::embedding(5, 2, 1));
  std::string bytes = buf.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_WITH(read_policy(cut), doctest::Contains("truncated"));
  const fs::path m = scratch("matrix.bin");
  save_matrix(m, RealMatrix::Identity(3, 2));
  CHECK(load_matrix(m) == RealMatrix::Identity(3, 2));
  CHECK_THROWS(load_policy(m));
}

TEST_CASE("checkpoint round trip") {
  Checkpoint c{Policy::embedding(6, 2, 3), {}, OptimizerKind::adam, 4, {}, std::nullopt, 2, 1.25};
  c.optimizer.first_moment = RealMatrix::Random(6, 2);
  c.optimizer.second_moment = RealMatrix::Random(6, 2).cwiseAbs();
  c.optimizer.step = 17;
  c.best_policy = Policy::embedding(6, 2, 9);
  c.metrics = {{Stage::sft, 1, 2.0, 2.5, std::numeric_limits<double>::quiet_NaN(), 10.0},
               {Stage::sft, 2, 1.5, 2.25, 0.125, 11.0}};
  const fs::path f = scratch("ckpt.bin");
  save_checkpoint(f, c);
  const Checkpoint back = load_checkpoint(f);
  CHECK(back.policy.parameters() == c.policy.parameters());
  CHECK(back.optimizer.first_moment == c.optimizer.first_moment);
  CHECK(back.optimizer.second_moment == c.optimizer.second_moment);
  CHECK(back.optimizer.step == 17);
  CHECK(back.epoch == 4);
  REQUIRE(back.best_policy);
  CHECK(back.best_policy->parameters() == c.best_policy->parameters());
  CHECK(back.best_epoch == 2);
  CHECK(back.best_valid_loss == 1.25);
  REQUIRE(back.metrics.size() == 2);
  CHECK(back.metrics[0].same_metrics(c.metrics[0]));
  CHECK(back.metrics[1].wall_ms == 11.0);

  Checkpoint sgd{Policy::tabular(2, 3), {}, OptimizerKind::sgd, 1, {}, std::nullopt, 0, 0.0};
  save_checkpoint(f, sgd);
  const Checkpoint s = load_checkpoint(f);
  CHECK(s.optimizer_kind == OptimizerKind::sgd);
  CHECK(s.optimizer.first_moment.size() == 0);
  CHECK(!s.best_policy);
  CHECK(load_policy(f).parameters() == sgd.policy.parameters());
}

TEST_CASE("metric log") {
  const MetricRecord r{Stage::align, 3, 0.1, 0.2, std::numeric_limits<double>::quiet_NaN(), 5.5};
  const std::string line = metric_to_json(r);
  CHECK(line == R"({"stage":"align","epoch":3,"train_loss":0.1,"valid_loss":0.2,"mean_pos_reward":null,"wall_ms":5.5})");
  CHECK(metric_from_json(line).same_metrics(r));

  const double awkward = 0.1 + 0.2;
  const fs::path f = scratch("metrics.jsonl");
  write_metric_log(f, {r, {Stage::align, 4, awkward, 1e-300, -3.0, 1.0}});
  const auto back = read_metric_log(f);
  REQUIRE(back.size() == 2);
  CHECK(back[1].train_loss == awkward);
  CHECK(back[1].valid_loss == 1e-300);
}

TEST_CASE("file fingerprint") {
  const fs::path a = scratch("fa.txt");
  const fs::path b = scratch("fb.txt");
  std::ofstream(a) << "hello";
  std::ofstream(b) << "hellp";
  CHECK(file_fingerprint(a) == file_fingerprint(a));
  CHECK(file_fingerprint(a) != file_fingerprint(b));
  std::ofstream(b) << "";
  CHECK(file_fingerprint(b) == 1469598103934665603ULL);
}
