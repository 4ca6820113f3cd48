#include "fedsynth/accounting.hpp"
#include "fedsynth/blobs.hpp"
#include "fedsynth/config.hpp"
#include "fedsynth/experiment.hpp"
#include "fedsynth/fedsim.hpp"
#include "fedsynth/idx.hpp"
#include "fedsynth/metrics.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace fedsynth;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

// Two 4x4 images: the first counts 0..15, the second is 255 - 16 * i.
struct IdxPair {
  std::vector<std::uint8_t> images, labels;
  IdxPair() {
    put_be32(images, 0x00000803);
    put_be32(images, 2);
    put_be32(images, 4);
    put_be32(images, 4);
    for (int i = 0; i < 16; ++i) images.push_back(static_cast<std::uint8_t>(i));
    for (int i = 0; i < 16; ++i) images.push_back(static_cast<std::uint8_t>(255 - 16 * i));
    put_be32(labels, 0x00000801);
    put_be32(labels, 2);
    labels.push_back(7);
    labels.push_back(1);
  }
};

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fedsynth_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

IdxError::Kind idx_kind(const IdxPair& pair) {
  try {
    parse_idx(pair.images, pair.labels);
  } catch (const IdxError& e) {
    return e.kind();
  }
  FAIL("no IdxError thrown");
  return IdxError::Kind::io;
}

}  // namespace

TEST_CASE("payload float accounting") {
  CommCost c{50, 784, 10, false, 25, 1663370};
  CHECK(payload_float_count(c) == 39701);
  CHECK(payload_ratio(c) == doctest::Approx(0.02387).epsilon(1e-4));
  CHECK(payload_float_count({0, 784, 10, false, 0, 0}) == 1);
  c.include_etas = true;
  CHECK(payload_float_count(c) == 39726);
  CHECK_THROWS(payload_ratio({50, 784, 10, false, 0, 0}));
}

TEST_CASE("blobs fixture") {
  Rng rng(1);
  const Dataset d = make_blobs(3, 200, 2, 0.6, rng);
  CHECK(d.size() == 600);
  CHECK(d.dim() == 2);
  CHECK(d.label_histogram() == std::vector<std::size_t>{200, 200, 200});

  Rng r0(2);
  const Matrix means = make_blob_means(3, 2, r0);
  CHECK((means.rowwise().norm().array() - 2.0).abs().maxCoeff() <= 1e-12);
  const Dataset flat = sample_blobs(means, 5, 0.0, r0);
  for (std::size_t i = 0; i < flat.size(); ++i)
    CHECK(flat.X.row(static_cast<Eigen::Index>(i)) == means.row(flat.labels[i]));

  Rng r1(3), r2(3);
  const Dataset a = make_blobs(4, 10, 5, 0.3, r1), b = make_blobs(4, 10, 5, 0.3, r2);
  CHECK(a.X == b.X);
  CHECK(a.labels == b.labels);
}

TEST_CASE("a 2-16-3 MLP fits tight blobs") {
  Rng rng(4);
  const Dataset d = make_blobs(3, 200, 2, 0.2, rng);
  ClientShard all{0, d.X, d.labels, 0};
  const auto w0 = nn::init_from_seed(nn::parse_arch("2-16-3"), 5);
  fed::FedConfig cfg;
  cfg.local_epochs = 50;
  cfg.local_lr = 0.05;
  Rng sgd(6);
  const Vector w = w0.values - fed::local_update(all, w0, cfg, sgd);
  const double acc = nn::accuracy(w0.arch, w, d.X, d.labels);
  MESSAGE("train accuracy " << acc);
  CHECK(acc >= 0.99);
}

TEST_CASE("IDX parsing of a hand-built pair") {
  const IdxPair pair;
  const Dataset d = parse_idx(pair.images, pair.labels, 10);
  CHECK(d.size() == 2);
  CHECK(d.dim() == 16);
  CHECK(d.num_classes == 10);
  CHECK(d.labels == std::vector<int>{7, 1});
  for (int i = 0; i < 16; ++i) {
    CHECK(d.X(0, i) == static_cast<double>(i) / 255.0);
    CHECK(d.X(1, i) == static_cast<double>(255 - 16 * i) / 255.0);
  }
  CHECK(parse_idx(pair.images, pair.labels).num_classes == 8);
  CHECK_THROWS(parse_idx(pair.images, pair.labels, 5));  // label 7 out of range
}

TEST_CASE("IDX validation errors") {
  SUBCASE("labels with the image magic") {
    IdxPair p;
    p.labels[3] = 0x03;
    CHECK(idx_kind(p) == IdxError::Kind::bad_magic);
  }
  SUBCASE("images with the label magic") {
    IdxPair p;
    p.images[3] = 0x01;
    CHECK(idx_kind(p) == IdxError::Kind::bad_magic);
  }
  SUBCASE("count mismatch") {
    IdxPair p;
    p.labels[7] = 3;
    p.labels.push_back(2);
    CHECK(idx_kind(p) == IdxError::Kind::dim_mismatch);
  }
  SUBCASE("missing file") {
    try {
      load_idx("/nonexistent/images", "/nonexistent/labels");
      FAIL("expected an error");
    } catch (const IdxError& e) {
      CHECK(e.kind() == IdxError::Kind::io);
    }
  }
}

TEST_CASE("IDX parser rejects every truncation and survives garbage") {
  const IdxPair full;
  for (std::size_t len = 0; len < full.images.size(); ++len) {
    IdxPair p;
    p.images.resize(len);
    CHECK_THROWS_AS(parse_idx(p.images, p.labels), IdxError);
  }
  for (std::size_t len = 0; len < full.labels.size(); ++len) {
    IdxPair p;
    p.labels.resize(len);
    CHECK_THROWS_AS(parse_idx(p.images, p.labels), IdxError);
  }
  // Huge declared dimensions must not allocate or read past the buffer.
  IdxPair huge;
  huge.images[4] = huge.images[5] = 0xff;
  huge.images[8] = huge.images[9] = 0xff;
  CHECK_THROWS_AS(parse_idx(huge.images, huge.labels), IdxError);

  Rng rng(7);
  int parsed = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    IdxPair p;
    const std::size_t flips = 1 + rng.index(4);
    for (std::size_t k = 0; k < flips; ++k) {
      auto& buf = rng.uniform() < 0.7 ? p.images : p.labels;
      buf[rng.index(buf.size())] = static_cast<std::uint8_t>(rng.index(256));
    }
    if (rng.uniform() < 0.3) p.images.resize(rng.index(p.images.size() + 1));
    try {
      parse_idx(p.images, p.labels);
      ++parsed;
    } catch (const IdxError&) {
    } catch (const std::invalid_argument&) {
    }
  }
  MESSAGE(parsed << " of 2000 mutated inputs parsed");
}

TEST_CASE("load_idx reads files from disk") {
  const IdxPair pair;
  const fs::path dir = scratch_dir("idx");
  std::ofstream(dir / "img", std::ios::binary).write(reinterpret_cast<const char*>(pair.images.data()),
                                                      static_cast<std::streamsize>(pair.images.size()));
  std::ofstream(dir / "lab", std::ios::binary).write(reinterpret_cast<const char*>(pair.labels.data()),
                                                      static_cast<std::streamsize>(pair.labels.size()));
  const Dataset d = load_idx((dir / "img").string(), (dir / "lab").string(), 10);
  CHECK(d.labels == std::vector<int>{7, 1});
}

TEST_CASE("config parsing") {
  const RunConfig cfg = parse_config(
      "# comment\n"
      "experiment = lr_sweep\n"
      "\n"
      "master_seed = 42   # trailing comment\n"
      "num_clients = 20\n"
      "cohort_size = 5\n"
      "transport = synthetic\n"
      "lr_grid = 0.05, 0.5\n"
      "include_etas = true\n");
  CHECK(cfg.experiment == Experiment::lr_sweep);
  CHECK(cfg.master_seed == 42);
  CHECK(cfg.fed.num_clients == 20);
  CHECK(cfg.fed.transport == fed::Transport::synthetic);
  CHECK(cfg.fed.include_etas);
  CHECK(cfg.lr_grid == std::vector<double>{0.05, 0.5});
  CHECK(cfg.distill.distill_steps == 300);

  CHECK_THROWS_AS(parse_config("num_clientz = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("num_clients = three\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("num_clients\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("partition = dirichlet\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("num_clients = 5\ncohort_size = 6\n").validate(), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config"), ConfigError);
}

TEST_CASE("config snapshot round-trips every key") {
  RunConfig cfg;
  cfg.master_seed = 18446744073709551615ull;
  cfg.distill.distill_lr = 0.1 + 0.2;  // not exactly representable in short decimal
  cfg.fed.local_lr = 1e-7;
  cfg.reverse.failure_threshold = 2.0 / 3.0;
  cfg.lr_grid = {0.03, 1.0 / 3.0};
  cfg.output_dir = "some dir/with spaces";
  cfg.activation = nn::Activation::tanh;
  const std::string snap = to_snapshot(cfg);
  const RunConfig back = parse_config(snap);
  CHECK(to_snapshot(back) == snap);
  CHECK(back.distill.distill_lr == cfg.distill.distill_lr);
  CHECK(back.reverse.failure_threshold == cfg.reverse.failure_threshold);
  CHECK(back.master_seed == cfg.master_seed);
  CHECK(back.output_dir == cfg.output_dir);
  std::set<std::string> keys;
  std::istringstream lines(snap);
  for (std::string line; std::getline(lines, line);)
    if (!line.empty() && line[0] != '#') keys.insert(line.substr(0, line.find(' ')));
  for (const auto& k : config_keys()) CHECK(keys.count(k) == 1);
}

TEST_CASE("metrics JSON lines round-trip and diff") {
  RoundMetrics a;
  a.round = 3;
  a.test_accuracy = 0.1 + 0.2;
  a.test_loss = 1.25;
  a.upload_floats = 1255;
  a.download_floats = 99;
  a.distill_losses = {0.01, 0.5};
  a.cohort = {1, 4};
  a.decoder_calls = 3010;
  a.wall_ms = 1234;
  const RoundMetrics b = from_json_line(to_json_line(a));
  CHECK(to_json_line(b) == to_json_line(a));
  CHECK(b.test_accuracy == a.test_accuracy);
  CHECK(b.wall_ms == 0);
  CHECK(to_json_line(a).find("wall_ms") == std::string::npos);
  CHECK_FALSE(b.server_fit_error.has_value());
  a.server_fit_error = 0.25;
  CHECK(from_json_line(to_json_line(a)).server_fit_error == 0.25);

  RoundMetrics c = a;
  c.test_accuracy = 0.5;
  c.upload_floats = 99;
  const auto rows = diff_metrics({a}, {c});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].accuracy_diff == 0.5 - a.test_accuracy);
  CHECK(rows[0].upload_diff == 99 - 1255);
  RoundMetrics d = a;
  d.round = 4;
  CHECK_THROWS(diff_metrics({a}, {d}));
  CHECK_THROWS(from_json_line("{\"round\": \"x\"}"));
}

namespace {

RunConfig tiny_config(const fs::path& out) {
  RunConfig cfg;
  cfg.output_dir = out.string();
  cfg.blobs_points_per_class = 40;
  cfg.blobs_test_per_class = 20;
  cfg.fed.num_clients = 6;
  cfg.fed.cohort_size = 2;
  cfg.fed.rounds = 2;
  cfg.fed.local_epochs = 1;
  cfg.distill.distill_steps = 10;
  cfg.reverse.distill_steps = 10;
  cfg.reverse.num_seeds = 2;
  return cfg;
}

}  // namespace

TEST_CASE("compare_transports with an exact decode gives a zero difference series") {
  const fs::path dir = scratch_dir("exact");
  const RunConfig cfg = tiny_config(dir);
  fed::RoundOptions opts;
  opts.decode_override = [](const ClientShard&, const nn::ModelParams&, const Vector& theta) { return theta; };
  const auto outcome = run_experiment(cfg, opts);
  const auto full = read_metrics((dir / "full_gradient.jsonl").string());
  const auto synth = read_metrics((dir / "synthetic.jsonl").string());
  for (const auto& row : diff_metrics(full, synth)) {
    CHECK(row.accuracy_diff == 0.0);
    CHECK(row.loss_diff == 0.0);
  }
  CHECK(fs::exists(dir / "difference.csv"));
  CHECK(fs::exists(dir / "config.snapshot"));
}

TEST_CASE("experiments write their files and rerun byte-identically") {
  for (auto experiment : {Experiment::compare_transports, Experiment::lr_sweep, Experiment::double_distill}) {
    const fs::path a = scratch_dir("rerun_a"), b = scratch_dir("rerun_b");
    RunConfig cfg = tiny_config(a);
    cfg.experiment = experiment;
    const auto first = run_experiment(cfg);
    RunConfig again = parse_config(slurp(a / "config.snapshot"));
    again.output_dir = b.string();
    const auto second = run_experiment(again);
    REQUIRE(first.files.size() == second.files.size());
    CHECK_FALSE(first.files.empty());
    for (const auto& f : first.files) {
      const fs::path name = fs::path(f).filename();
      if (name == "config.snapshot" || name.string().find(".timing.") != std::string::npos) continue;
      CHECK_MESSAGE(slurp(a / name) == slurp(b / name), name);
    }
  }
}

TEST_CASE("prepare_data does not depend on transport or distillation settings") {
  RunConfig a = tiny_config(scratch_dir("prep"));
  RunConfig b = a;
  b.fed.transport = fed::Transport::synthetic;
  b.distill.distill_lr = 0.9;
  b.fed.local_lr = 0.5;
  const auto da = prepare_data(a), db = prepare_data(b);
  REQUIRE(da.clients.size() == db.clients.size());
  for (std::size_t i = 0; i < da.clients.size(); ++i) {
    CHECK(da.clients[i].X == db.clients[i].X);
    CHECK(da.clients[i].rng_seed == db.clients[i].rng_seed);
  }
  CHECK(initial_model(da.arch, 5).values == initial_model(db.arch, 5).values);
}
