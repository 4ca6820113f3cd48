#include "fedsynth/blobs.hpp"
#include "fedsynth/distill.hpp"
#include "fedsynth/fedsim.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cstring>
#include <numeric>

using namespace fedsynth;
using distill::DistillConfig;

namespace {

bool bit_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool bit_equal(const SyntheticPayload& a, const SyntheticPayload& b) {
  if (a.batches.size() != b.batches.size() || a.schedule != b.schedule || a.H != b.H || !(a.arch == b.arch)) return false;
  for (std::size_t i = 0; i < a.batches.size(); ++i) {
    if (!bit_equal(a.batches[i].X, b.batches[i].X) || !bit_equal(a.batches[i].Y, b.batches[i].Y) ||
        a.batches[i].eta != b.batches[i].eta)
      return false;
  }
  return true;
}

// A 200-point, 3-class, 2-D blobs client and the 2-16-3 model.
struct BlobsClient {
  ClientShard client;
  nn::ModelParams w0;
  Vector theta;

  explicit BlobsClient(std::uint64_t seed) {
    Rng rng(seed);
    const Dataset data = make_blobs(3, 67, 2, 0.6, rng);
    client.client_id = 0;
    client.X = data.X.topRows(200);
    client.labels.assign(data.labels.begin(), data.labels.begin() + 200);
    client.rng_seed = seed;
    w0 = nn::init_from_seed(nn::parse_arch("2-16-3"), seed + 1);
    fed::FedConfig fed;
    Rng local(seed + 2);
    theta = fed::local_update(client, w0, fed, local);
  }
};

SyntheticPayload random_payload(const nn::ArchDescriptor& arch, std::size_t B, std::size_t b, std::size_t epochs,
                                double H, Rng& rng) {
  SyntheticPayload p;
  p.arch = arch;
  p.H = H;
  for (std::size_t i = 0; i < B; ++i)
    p.batches.push_back({oracle::random_matrix(rng, static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(arch.input_dim)),
                         oracle::random_simplex_rows(rng, static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(arch.num_classes)),
                         0.01 + 0.1 * rng.uniform()});
  p.schedule = epoch_schedule(B, epochs);
  return p;
}

}  // namespace

TEST_CASE("epoch_schedule repeats every batch in order") {
  CHECK(epoch_schedule(3, 2) == std::vector<std::size_t>{0, 1, 2, 0, 1, 2});
  CHECK(epoch_schedule(1, 1) == std::vector<std::size_t>{0});
}

TEST_CASE("update_from_synthetic with H = 0 is the zero vector") {
  Rng rng(1);
  const auto arch = nn::parse_arch("2-8-3");
  const auto p = random_payload(arch, 2, 3, 2, 0.0, rng);
  CHECK(distill::update_from_synthetic(p, nn::init_from_seed(arch, 4)).isZero(0));
}

TEST_CASE("update_from_synthetic is eta-invariant at M = 1") {
  Rng rng(2);
  const auto arch = nn::parse_arch("2-8-3");
  const auto w0 = nn::init_from_seed(arch, 5);
  auto p = random_payload(arch, 1, 4, 1, 1.7, rng);
  const Vector a = distill::update_from_synthetic(p, w0);
  for (double k : {1e-3, 0.5, 40.0}) {
    auto q = p;
    q.batches[0].eta *= k;
    CHECK(oracle::rel_error(distill::update_from_synthetic(q, w0), a) <= 1e-14);
  }
  const Vector r = nn::grad(w0, p.batches[0].X, p.batches[0].Y);
  CHECK(oracle::rel_error(a, Vector(1.7 * r / r.norm())) <= 1e-14);
}

TEST_CASE("decoded norm equals H") {
  Rng rng(3);
  const auto arch = nn::parse_arch("3-6-4", nn::Activation::tanh);
  for (int trial = 0; trial < 30; ++trial) {
    const double H = trial == 0 ? 1e-6 : std::exp(6.0 * rng.uniform() - 3.0);
    const auto p = random_payload(arch, 1 + rng.index(4), 1 + rng.index(5), 1 + rng.index(3), H, rng);
    const Vector g = distill::update_from_synthetic(p, nn::init_from_seed(arch, trial));
    CHECK(std::abs(g.norm() - H) <= 1e-9 * std::max(1.0, H));
  }
}

TEST_CASE("update_from_synthetic rejects inconsistent payloads") {
  Rng rng(4);
  const auto arch = nn::parse_arch("2-8-3");
  auto p = random_payload(arch, 2, 3, 1, 1.0, rng);
  const auto w0 = nn::init_from_seed(nn::parse_arch("2-4-3"), 1);
  CHECK_THROWS_AS(distill::update_from_synthetic(p, w0), ShapeError);
  p.schedule.push_back(7);
  CHECK_THROWS_AS(distill::update_from_synthetic(p, nn::init_from_seed(arch, 1)), ShapeError);
}

TEST_CASE("param_sq_loss") {
  Vector a(2), z = Vector::Zero(2);
  a << 1, 2;
  CHECK(distill::param_sq_loss(a, a) == 0.0);
  CHECK(distill::param_sq_loss(a, z) == 5.0);
  Rng rng(5);
  const Vector u = oracle::random_vector(rng, 1000), v = oracle::random_vector(rng, 1000);
  double naive = 0.0;
  for (int i = 0; i < 1000; ++i) naive += (u[i] - v[i]) * (u[i] - v[i]);
  CHECK(std::abs(distill::param_sq_loss(u, v) - naive) <= 1e-12 * naive);
  CHECK_THROWS_AS(distill::param_sq_loss(u, a), ShapeError);
}

TEST_CASE("function_kl_loss") {
  Rng rng(6);
  const auto arch = nn::parse_arch("2-3-2", nn::Activation::relu);
  auto w0 = nn::init_from_seed(arch, 3);
  // Hidden unit 0: zero incoming weights and bias -1, so it never fires.
  w0.values[0] = 0.0;
  w0.values[1] = 0.0;
  w0.values[6] = -1.0;
  const Matrix X = oracle::random_matrix(rng, 20, 2, 3.0);
  Vector theta = oracle::random_vector(rng, 17, 0.05);
  theta[0] = theta[1] = theta[6] = 0.0;  // keep unit 0 dead in w0 - theta

  CHECK(distill::function_kl_loss(X, w0, theta, theta) == 0.0);

  SUBCASE("perturbing weights out of a dead unit changes nothing") {
    Vector g = theta;
    g[9 + 0] += 0.8;  // output row 0, column of hidden unit 0
    g[9 + 3] -= 1.1;  // output row 1, same column
    CHECK(distill::function_kl_loss(X, w0, theta, g) <= 1e-15);
    CHECK(distill::param_sq_loss(theta, g) > 1.0);
  }
  SUBCASE("compositional oracle") {
    const Vector g = theta + oracle::random_vector(rng, 17, 0.3);
    const Matrix y_true = nn::forward(arch, w0.values - theta, X);
    const Matrix y_fit = nn::forward(arch, w0.values - g, X);
    const double expected = nn::kl_loss(y_fit, y_true);
    CHECK(expected > 0.0);
    CHECK(std::abs(distill::function_kl_loss(X, w0, theta, g) - expected) <= 1e-12 * expected);
  }
}

TEST_CASE("project_simplex") {
  Matrix Y(4, 3);
  Y << 0.2, 0.3, 0.5,      //
      -0.2, 0.5, 0.7,      //
      -1.0, -2.0, -0.5,    //
      5.0, 0.0, 5.0;
  const Matrix P = distill::project_simplex(Y);
  CHECK((P.row(0) - Y.row(0)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(P(1, 0) == doctest::Approx(1e-6 / 1.200001).epsilon(1e-9));
  CHECK(P(1, 1) == doctest::Approx(0.41667).epsilon(1e-4));
  CHECK(P(1, 2) == doctest::Approx(0.58333).epsilon(1e-4));
  CHECK((P.row(2).array() - 1.0 / 3.0).abs().maxCoeff() <= 1e-15);
  CHECK((P.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(P.minCoeff() >= 0.0);
}

TEST_CASE("BestTracker keeps the argmin and the earlier payload on ties") {
  Rng rng(7);
  const auto arch = nn::parse_arch("2-4-3");
  std::vector<SyntheticPayload> cands;
  for (int i = 0; i < 4; ++i) cands.push_back(random_payload(arch, 1, 2, 1, 1.0, rng));
  distill::BestTracker t;
  CHECK(t.empty());
  CHECK(t.offer(cands[0], 3.0, Vector::Zero(1)));
  CHECK(t.offer(cands[1], 1.0, Vector::Zero(1)));
  CHECK_FALSE(t.offer(cands[2], 2.0, Vector::Zero(1)));
  CHECK_FALSE(t.offer(cands[3], 1.0, Vector::Zero(1)));
  CHECK(bit_equal(t.payload(), cands[1]));
  CHECK(t.score() == 1.0);
  CHECK(t.offers() == 4);
}

TEST_CASE("track_best scores candidates by client cross-entropy") {
  BlobsClient bc(10);
  Rng rng(8);
  distill::BestTracker t;
  const auto p = random_payload(bc.w0.arch, 2, 5, 1, bc.theta.norm(), rng);
  CHECK(distill::track_best(t, p, bc.client, bc.w0));
  const Vector g = distill::update_from_synthetic(p, bc.w0);
  CHECK(t.score() == distill::client_ce(bc.client, bc.w0, g));
  CHECK(t.score() == nn::cross_entropy(bc.w0.arch, bc.w0.values - g, bc.client.X, bc.client.labels));
}

TEST_CASE("client_update with a zero update sends H = 0") {
  BlobsClient bc(11);
  DistillConfig cfg;
  cfg.distill_steps = 5;
  Rng rng(9);
  const auto r = distill::client_update(bc.client, bc.w0, Vector::Zero(bc.theta.size()), cfg, rng);
  CHECK(r.payload.H == 0.0);
  CHECK(distill::update_from_synthetic(r.payload, bc.w0).isZero(0));
}

TEST_CASE("client_update is deterministic and keeps the payload invariants") {
  BlobsClient bc(12);
  DistillConfig cfg;
  cfg.distill_steps = 40;
  Rng a(100), b(100);
  const auto ra = distill::client_update(bc.client, bc.w0, bc.theta, cfg, a);
  const auto rb = distill::client_update(bc.client, bc.w0, bc.theta, cfg, b);
  CHECK(bit_equal(ra.payload, rb.payload));
  CHECK(bit_equal(ra.decoded, rb.decoded));
  CHECK(ra.payload.H == bc.theta.norm());
  CHECK(ra.payload.batches.size() == 5);
  CHECK(ra.payload.num_steps() == 25);
  for (const auto& batch : ra.payload.batches) {
    CHECK(batch.X.rows() == 10);
    CHECK((batch.Y.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
    CHECK(batch.Y.minCoeff() >= 0.0);
    CHECK(batch.Y.maxCoeff() <= 1.0);
    CHECK(batch.eta > 0.0);
  }
  CHECK(bit_equal(distill::update_from_synthetic(ra.payload, bc.w0), ra.decoded));
}

TEST_CASE("payload round-trips bit-exactly and decodes identically") {
  BlobsClient bc(13);
  DistillConfig cfg;
  cfg.distill_steps = 10;
  Rng rng(3);
  const auto r = distill::client_update(bc.client, bc.w0, bc.theta, cfg, rng);
  const std::string bytes = serialize_payload(r.payload);
  const auto back = deserialize_payload(bytes);
  CHECK(bit_equal(back, r.payload));
  CHECK(serialize_payload(back) == bytes);
  CHECK(bit_equal(distill::update_from_synthetic(back, bc.w0), r.decoded));
  CHECK_THROWS(deserialize_payload(bytes.substr(0, bytes.size() - 1)));
  CHECK_THROWS(deserialize_payload("{\"format\":\"nope\"}\n"));
}

TEST_CASE("client_update fits a blobs client to within 5% relative error") {
  BlobsClient bc(14);
  DistillConfig cfg;  // B=5, b=10, epochs=5, alpha=0.2, T=300, adam, param_sq
  cfg.eta_init = 0.02;
  Rng rng(derive_seed(14, "distill", 0));
  const auto r = distill::client_update(bc.client, bc.w0, bc.theta, cfg, rng);
  const double rel = r.final_param_sq / bc.theta.squaredNorm();
  MESSAGE("relative param_sq " << rel);
  CHECK(rel < 0.05);
}

TEST_CASE("meta-optimization improves on the initial payload in 20 of 20 runs") {
  DistillConfig cfg;
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    BlobsClient bc(1000 + seed);
    Rng rng(seed);
    const auto r = distill::client_update(bc.client, bc.w0, bc.theta, cfg, rng);
    if (r.final_param_sq < r.initial_param_sq) ++improved;
  }
  CHECK(improved == 20);
}

TEST_CASE("best-tracked client CE never increases over meta-steps") {
  BlobsClient bc(15);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t steps : {1u, 5u, 20u, 60u}) {
    DistillConfig cfg;
    cfg.distill_steps = steps;
    Rng rng(77);
    const auto r = distill::client_update(bc.client, bc.w0, bc.theta, cfg, rng);
    CHECK(r.best_score <= previous);
    previous = r.best_score;
  }
}

TEST_CASE("non-default meta-losses, optimizers and init schemes keep the payload invariants") {
  BlobsClient bc(16);
  DistillConfig cfg;
  cfg.distill_steps = 60;
  SUBCASE("function_kl") { cfg.loss_variant = distill::MetaLoss::function_kl; }
  SUBCASE("gd") {
    cfg.meta_optimizer = distill::MetaOptimizer::gd;
    cfg.distill_lr = 0.5;
  }
  SUBCASE("sample_real") { cfg.init_scheme = distill::InitScheme::sample_real; }
  Rng rng(5);
  const auto r = distill::client_update(bc.client, bc.w0, bc.theta, cfg, rng);
  CHECK(r.best_score == distill::client_ce(bc.client, bc.w0, r.decoded));
  for (const auto& batch : r.payload.batches) {
    CHECK((batch.Y.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
    CHECK(batch.eta >= distill::kEtaFloor);
  }
  CHECK(std::abs(r.decoded.norm() - bc.theta.norm()) <= 1e-9 * std::max(1.0, bc.theta.norm()));
}

TEST_CASE("DistillConfig validation and enum parsing") {
  DistillConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.distill_steps = 0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.distill_lr = -1.0;
  CHECK_THROWS(cfg.validate());
  CHECK(distill::parse_meta_loss("function_kl") == distill::MetaLoss::function_kl);
  CHECK(distill::to_string(distill::MetaOptimizer::adam) == "adam");
  CHECK_THROWS(distill::parse_init_scheme("uniform"));
}
