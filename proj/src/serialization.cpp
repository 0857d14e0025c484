#include "prefalign/serialization.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace prefalign {

static_assert(std::endian::native == std::endian::little,
              "parameter files are written in host byte order, which must be little-endian");

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated parameter file");
  return value;
}

void put_rows(std::ostream& out, const RealMatrix& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()),
            static_cast<std::streamsize>(rm.size() * sizeof(double)));
}

RealMatrix get_rows(std::istream& in, Index rows, Index cols) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated parameter file");
  return rm;
}

struct Header {
  std::uint8_t kind;
  std::uint8_t pooling;
  std::uint64_t item_count;
  std::uint64_t d;
};

void put_header(std::ostream& out, const Header& h) {
  out.write(kParameterMagic, sizeof(kParameterMagic));
  put(out, h.kind);
  put(out, h.pooling);
  put(out, h.item_count);
  put(out, h.d);
}

Header get_header(std::istream& in) {
  char magic[sizeof(kParameterMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kParameterMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a parameter file (bad magic)");
  }
  Header h{};
  h.kind = get<std::uint8_t>(in);
  h.pooling = get<std::uint8_t>(in);
  h.item_count = get<std::uint64_t>(in);
  h.d = get<std::uint64_t>(in);
  if (h.kind > kRawMatrixKind || h.pooling > 1) throw std::runtime_error("unknown parameter kind");
  return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

constexpr char kOptimizerTag[4] = {'O', 'P', 'T', 'S'};

}  // namespace

void write_policy(std::ostream& out, const Policy& policy) {
  const auto& p = policy.parameters();
  put_header(out, {static_cast<std::uint8_t>(policy.kind()), static_cast<std::uint8_t>(policy.pooling()),
                   static_cast<std::uint64_t>(policy.item_count()),
                   static_cast<std::uint64_t>(policy.dimension())});
  put_rows(out, p);
}

Policy read_policy(std::istream& in) {
  const Header h = get_header(in);
  if (h.kind == kRawMatrixKind) throw std::runtime_error("parameter file holds a raw matrix, not a policy");
  const auto kind = static_cast<PolicyKind>(h.kind);
  const auto items = static_cast<Index>(h.item_count);
  const auto d = static_cast<Index>(h.d);
  RealMatrix m = kind == PolicyKind::tabular ? get_rows(in, d, items) : get_rows(in, items, d);
  return Policy::from_parameters(kind, std::move(m), static_cast<Pooling>(h.pooling));
}

void save_policy(const std::filesystem::path& path, const Policy& policy) {
  auto out = open_out(path);
  write_policy(out, policy);
}

Policy load_policy(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_policy(in);
}

void save_matrix(const std::filesystem::path& path, const RealMatrix& m) {
  auto out = open_out(path);
  put_header(out, {kRawMatrixKind, 0, static_cast<std::uint64_t>(m.rows()),
                   static_cast<std::uint64_t>(m.cols())});
  put_rows(out, m);
}

RealMatrix load_matrix(const std::filesystem::path& path) {
  auto in = open_in(path);
  const Header h = get_header(in);
  if (h.kind == static_cast<std::uint8_t>(PolicyKind::tabular)) {
    return get_rows(in, static_cast<Index>(h.d), static_cast<Index>(h.item_count));
  }
  return get_rows(in, static_cast<Index>(h.item_count), static_cast<Index>(h.d));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  auto out = open_out(path);
  write_policy(out, c.policy);
  out.write(kOptimizerTag, sizeof(kOptimizerTag));
  put(out, static_cast<std::uint8_t>(c.optimizer_kind));
  put(out, static_cast<std::uint64_t>(c.optimizer.step));
  const bool has_moments = c.optimizer.first_moment.size() > 0;
  put(out, static_cast<std::uint8_t>(has_moments));
  if (has_moments) {
    put_rows(out, c.optimizer.first_moment);
    put_rows(out, c.optimizer.second_moment);
  }
  put(out, static_cast<std::uint64_t>(c.epoch));
  put(out, static_cast<std::uint8_t>(c.best_policy.has_value()));
  if (c.best_policy) write_policy(out, *c.best_policy);
  put(out, static_cast<std::uint64_t>(c.best_epoch));
  put(out, c.best_valid_loss);
  put(out, static_cast<std::uint64_t>(c.metrics.size()));
  for (const auto& r : c.metrics) {
    put(out, static_cast<std::uint8_t>(r.stage == Stage::sft ? 0 : 1));
    put(out, static_cast<std::uint64_t>(r.epoch));
    put(out, r.train_loss);
    put(out, r.valid_loss);
    put(out, r.mean_pos_reward);
    put(out, r.wall_ms);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  Policy policy = read_policy(in);
  char tag[sizeof(kOptimizerTag)];
  in.read(tag, sizeof(tag));
  if (!in || std::memcmp(tag, kOptimizerTag, sizeof(tag)) != 0) {
    throw std::runtime_error(path.string() + ": missing optimizer section");
  }
  Checkpoint c{policy, {}, OptimizerKind::adam, 0, {}, std::nullopt, 0, 0.0};
  c.optimizer_kind = static_cast<OptimizerKind>(get<std::uint8_t>(in));
  c.optimizer.step = get<std::uint64_t>(in);
  if (get<std::uint8_t>(in) != 0) {
    const auto& p = policy.parameters();
    c.optimizer.first_moment = get_rows(in, p.rows(), p.cols());
    c.optimizer.second_moment = get_rows(in, p.rows(), p.cols());
  }
  c.epoch = static_cast<Index>(get<std::uint64_t>(in));
  if (get<std::uint8_t>(in) != 0) c.best_policy = read_policy(in);
  c.best_epoch = static_cast<Index>(get<std::uint64_t>(in));
  c.best_valid_loss = get<double>(in);
  const auto n = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    MetricRecord r;
    r.stage = get<std::uint8_t>(in) == 0 ? Stage::sft : Stage::align;
    r.epoch = static_cast<Index>(get<std::uint64_t>(in));
    r.train_loss = get<double>(in);
    r.valid_loss = get<double>(in);
    r.mean_pos_reward = get<double>(in);
    r.wall_ms = get<double>(in);
    c.metrics.push_back(r);
  }
  return c;
}

namespace {

nlohmann::json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

double from_json_number(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string metric_to_json(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["stage"] = std::string(to_string(r.stage));
  j["epoch"] = r.epoch;
  j["train_loss"] = number_or_null(r.train_loss);
  j["valid_loss"] = number_or_null(r.valid_loss);
  j["mean_pos_reward"] = number_or_null(r.mean_pos_reward);
  j["wall_ms"] = number_or_null(r.wall_ms);
  return j.dump();
}

MetricRecord metric_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  MetricRecord r;
  r.stage = parse_stage(j.at("stage").get<std::string>());
  r.epoch = j.at("epoch").get<Index>();
  r.train_loss = from_json_number(j.at("train_loss"));
  r.valid_loss = from_json_number(j.at("valid_loss"));
  r.mean_pos_reward = from_json_number(j.at("mean_pos_reward"));
  r.wall_ms = from_json_number(j.at("wall_ms"));
  return r;
}

void write_metric_log(const std::filesystem::path& path, const std::vector<MetricRecord>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : log) out << metric_to_json(r) << '\n';
}

std::vector<MetricRecord> read_metric_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<MetricRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(metric_from_json(line));
  }
  return out;
}

std::uint64_t file_fingerprint(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace prefalign
