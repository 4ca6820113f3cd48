#include "fedsynth/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>

namespace fedsynth {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_unsigned(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config: '" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config: '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + std::string(key) + "' expects true/false");
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class E, class Parse>
E parse_enum(std::string_view key, std::string_view v, Parse parse) {
  try {
    return parse(v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: " + std::string(key) + ": " + e.what());
  }
}

std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::compare_transports: return "compare_transports";
    case Experiment::lr_sweep: return "lr_sweep";
    case Experiment::double_distill: return "double_distill";
  }
  return "";
}

Experiment parse_experiment(std::string_view s) {
  if (s == "compare_transports") return Experiment::compare_transports;
  if (s == "lr_sweep") return Experiment::lr_sweep;
  if (s == "double_distill") return Experiment::double_distill;
  throw std::invalid_argument("unknown experiment '" + std::string(s) + "'");
}

DatasetKind parse_dataset(std::string_view s) {
  if (s == "blobs") return DatasetKind::blobs;
  if (s == "idx_files") return DatasetKind::idx_files;
  throw std::invalid_argument("unknown dataset '" + std::string(s) + "'");
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(name, member)                                                                      \
  Field {                                                                                              \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_unsigned<std::size_t>(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                                   \
  }
#define REAL_FIELD(name, member)                                                         \
  Field {                                                                                 \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_real(name, v); },     \
        [](const RunConfig& c) { return fmt(c.member); }                                 \
  }
#define STRING_FIELD(name, member)                                                  \
  Field {                                                                            \
    name, [](RunConfig& c, std::string_view v) { c.member = std::string(v); },      \
        [](const RunConfig& c) { return c.member; }                                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"experiment", [](RunConfig& c, std::string_view v) { c.experiment = parse_enum<Experiment>("experiment", v, parse_experiment); },
       [](const RunConfig& c) { return std::string(to_string(c.experiment)); }},
      {"dataset", [](RunConfig& c, std::string_view v) { c.dataset = parse_enum<DatasetKind>("dataset", v, parse_dataset); },
       [](const RunConfig& c) { return std::string(c.dataset == DatasetKind::blobs ? "blobs" : "idx_files"); }},
      {"master_seed", [](RunConfig& c, std::string_view v) { c.master_seed = parse_unsigned<std::uint64_t>("master_seed", v); },
       [](const RunConfig& c) { return std::to_string(c.master_seed); }},
      STRING_FIELD("output_dir", output_dir),
      STRING_FIELD("arch", arch),
      {"activation", [](RunConfig& c, std::string_view v) { c.activation = parse_enum<nn::Activation>("activation", v, nn::parse_activation); },
       [](const RunConfig& c) { return std::string(nn::to_string(c.activation)); }},
      SIZE_FIELD("blobs_classes", blobs_classes),
      SIZE_FIELD("blobs_points_per_class", blobs_points_per_class),
      SIZE_FIELD("blobs_test_per_class", blobs_test_per_class),
      SIZE_FIELD("blobs_dim", blobs_dim),
      REAL_FIELD("blobs_spread", blobs_spread),
      STRING_FIELD("idx_train_images", idx_train_images),
      STRING_FIELD("idx_train_labels", idx_train_labels),
      STRING_FIELD("idx_test_images", idx_test_images),
      STRING_FIELD("idx_test_labels", idx_test_labels),
      SIZE_FIELD("idx_train_limit", idx_train_limit),
      SIZE_FIELD("idx_test_limit", idx_test_limit),
      SIZE_FIELD("num_clients", fed.num_clients),
      SIZE_FIELD("cohort_size", fed.cohort_size),
      SIZE_FIELD("rounds", fed.rounds),
      {"partition", [](RunConfig& c, std::string_view v) { c.fed.partition = parse_enum<fed::Partition>("partition", v, fed::parse_partition); },
       [](const RunConfig& c) { return std::string(fed::to_string(c.fed.partition)); }},
      SIZE_FIELD("shards_per_client", fed.shards_per_client),
      SIZE_FIELD("shard_size", fed.shard_size),
      SIZE_FIELD("local_epochs", fed.local_epochs),
      SIZE_FIELD("local_batch_size", fed.local_batch_size),
      REAL_FIELD("local_lr", fed.local_lr),
      {"transport", [](RunConfig& c, std::string_view v) { c.fed.transport = parse_enum<fed::Transport>("transport", v, fed::parse_transport); },
       [](const RunConfig& c) { return std::string(fed::to_string(c.fed.transport)); }},
      {"include_etas", [](RunConfig& c, std::string_view v) { c.fed.include_etas = parse_bool("include_etas", v); },
       [](const RunConfig& c) { return std::string(c.fed.include_etas ? "true" : "false"); }},
      SIZE_FIELD("num_synth_batches", distill.num_synth_batches),
      SIZE_FIELD("synth_batch_size", distill.synth_batch_size),
      SIZE_FIELD("synth_epochs", distill.synth_epochs),
      REAL_FIELD("distill_lr", distill.distill_lr),
      SIZE_FIELD("distill_steps", distill.distill_steps),
      {"meta_optimizer", [](RunConfig& c, std::string_view v) { c.distill.meta_optimizer = parse_enum<distill::MetaOptimizer>("meta_optimizer", v, distill::parse_meta_optimizer); },
       [](const RunConfig& c) { return std::string(distill::to_string(c.distill.meta_optimizer)); }},
      {"loss_variant", [](RunConfig& c, std::string_view v) { c.distill.loss_variant = parse_enum<distill::MetaLoss>("loss_variant", v, distill::parse_meta_loss); },
       [](const RunConfig& c) { return std::string(distill::to_string(c.distill.loss_variant)); }},
      {"init_scheme", [](RunConfig& c, std::string_view v) { c.distill.init_scheme = parse_enum<distill::InitScheme>("init_scheme", v, distill::parse_init_scheme); },
       [](const RunConfig& c) { return std::string(distill::to_string(c.distill.init_scheme)); }},
      REAL_FIELD("lr_decay", distill.lr_decay),
      SIZE_FIELD("reverse_num_batches", reverse.num_batches),
      SIZE_FIELD("reverse_batch_size", reverse.batch_size),
      SIZE_FIELD("reverse_synth_epochs", reverse.synth_epochs),
      SIZE_FIELD("reverse_distill_steps", reverse.distill_steps),
      SIZE_FIELD("reverse_num_seeds", reverse.num_seeds),
      REAL_FIELD("reverse_distill_lr", reverse.distill_lr),
      REAL_FIELD("reverse_failure_threshold", reverse.failure_threshold),
      {"lr_grid",
       [](RunConfig& c, std::string_view v) {
         c.lr_grid.clear();
         while (!v.empty()) {
           const auto comma = v.find(',');
           c.lr_grid.push_back(parse_real("lr_grid", trim(v.substr(0, comma))));
           if (comma == std::string_view::npos) break;
           v.remove_prefix(comma + 1);
         }
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.lr_grid.size(); ++i) s += (i ? "," : "") + fmt(c.lr_grid[i]);
         return s;
       }},
  };
  return table;
}

#undef SIZE_FIELD
#undef REAL_FIELD
#undef STRING_FIELD

}  // namespace

void RunConfig::validate() const {
  try {
    arch_descriptor();
    fed.validate();
    distill.validate();
    reverse.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto a = arch_descriptor();
  if (dataset == DatasetKind::blobs) {
    if (blobs_classes < 2 || blobs_points_per_class == 0 || blobs_test_per_class == 0 || blobs_dim == 0)
      throw ConfigError("config: blobs sizes must be positive (and at least two classes)");
    if (!(blobs_spread >= 0.0)) throw ConfigError("config: blobs_spread must be nonnegative");
    if (a.input_dim != blobs_dim || a.num_classes != blobs_classes)
      throw ConfigError("config: arch " + arch + " does not match the blobs dimension/classes");
  } else if (idx_train_images.empty() || idx_train_labels.empty() || idx_test_images.empty() ||
             idx_test_labels.empty()) {
    throw ConfigError("config: idx_files dataset needs all four idx_* paths");
  }
  if (experiment == Experiment::lr_sweep) {
    if (lr_grid.empty()) throw ConfigError("config: lr_grid is empty");
    for (double v : lr_grid)
      if (!(v > 0.0)) throw ConfigError("config: lr_grid values must be positive");
  }
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields())
    if (f.key == key) {
      f.set(cfg, trim(value));
      return;
    }
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_snapshot(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace fedsynth
