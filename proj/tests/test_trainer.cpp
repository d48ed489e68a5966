// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "ueo/errors.hpp"
#include "ueo/metrics.hpp"
#include "ueo/synth.hpp"
#include "ueo/trainer.hpp"

using namespace ueo;

namespace {

struct Fixture {
  SynthData data;
  ClassHead head;
  Matrix pool;
};

Fixture make_fixture(double noise, std::uint64_t seed = 0, std::uint32_t per_class = 20,
                     double prototype_noise = 0.0) {
  SynthConfig sc;
  sc.prototype_noise = prototype_noise;
  sc.d = 32;
  sc.n_classes = 6;
  sc.per_class = per_class;
  sc.noise_sigma = noise;
  sc.seed = seed;
  Fixture f{generate(sc), {}, {}};
  const auto spec = make_shift_spec(ShiftKind::kClosed, 6, 6, 0, 0);
  HeadConfig hc;
  hc.prompt_length = 2;
  hc.context_dim = 4;
  f.head = build_head(f.data.prototypes, spec.predefined, hc);
  f.pool = f.data.train.to_matrix();
  return f;
}

double mean_entropy(const Matrix& p) {
  double h = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (double v : p.row(i))
      if (v > 0.0) h -= v * std::log(v);
  }
  return h / static_cast<double>(p.rows());
}

std::uint64_t fnv1a(const std::vector<double>& v) {
  std::uint64_t h = 1469598103934665603ull;
  for (double x : v) {
    unsigned char b[sizeof(double)];
    std::memcpy(b, &x, sizeof(double));
    for (unsigned char c : b) h = (h ^ c) * 1099511628211ull;
  }
  return h;
}

}  // namespace

TEST_CASE("cosine_lr examples and monotonicity") {
  CHECK(cosine_lr(0, 100, 1e-4) == 1e-4);
  CHECK(std::abs(cosine_lr(100, 100, 1e-4)) < 1e-20);
  CHECK(cosine_lr(50, 100, 1e-4) == doctest::Approx(5e-5).epsilon(1e-12));
  double prev = cosine_lr(0, 37, 2.0);
  for (std::size_t t = 1; t <= 37; ++t) {
    const double lr = cosine_lr(t, 37, 2.0);
    CHECK(lr <= prev);
    CHECK(lr >= 0.0);
    prev = lr;
  }
}

TEST_CASE("epochs = 0 returns the initial state") {
  const auto f = make_fixture(0.1);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto r = train(f.pool, f.head, cfg);
  CHECK(r.state.adapter == ModelState::initial(f.head).adapter);
  CHECK(r.state.adapter.is_identity());
  CHECK(r.log.rows.empty());
}

TEST_CASE("training is deterministic in the seed") {
  const auto f = make_fixture(0.1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  const auto a = train(f.pool, f.head, cfg);
  const auto b = train(f.pool, f.head, cfg);
  CHECK(a.state.adapter == b.state.adapter);
  CHECK(a.log.to_csv() == b.log.to_csv());
  cfg.seed = 6;
  CHECK_FALSE(train(f.pool, f.head, cfg).state.adapter == a.state.adapter);
}

TEST_CASE("log rows follow the schedule") {
  const auto f = make_fixture(0.1);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 50;  // 120 samples -> 3 batches per epoch, last one short
  cfg.lr = 1e-3;
  const auto r = train(f.pool, f.head, cfg);
  REQUIRE(r.log.rows.size() == 12);
  for (std::size_t t = 0; t < 12; ++t) {
    CHECK(r.log.rows[t].step == t);
    CHECK(r.log.rows[t].epoch == t / 3);
    CHECK(r.log.rows[t].lr == cosine_lr(t, 12, 1e-3));
    CHECK(std::isfinite(r.log.rows[t].loss));
    CHECK(r.log.rows[t].mean_w > 0.0);
    CHECK(r.log.rows[t].mean_w <= 1.0);
  }
  const auto csv = r.log.to_csv();
  CHECK(csv.rfind("step,epoch,lr,loss,mean_w,mean_entropy\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}

TEST_CASE("entmin lowers mean test entropy on the separable benchmark") {
  // Prototypes off the class means keep the initial predictions away from saturation.
  const auto f = make_fixture(0.05, 1, 30, 0.3);
  TrainConfig cfg;
  cfg.loss.method = LossMethod::kEntMin;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.lr = 1e-3;
  const auto test = f.data.test.to_matrix();
  const double before = mean_entropy(predict_probs(ModelState::initial(f.head), test));
  const auto r = train(f.pool, f.head, cfg);
  const double after = mean_entropy(predict_probs(r.state, test));
  CHECK(after < before);
}

TEST_CASE("disabled parameter groups stay bit-unchanged") {
  const auto f = make_fixture(0.2);
  const auto init = ModelState::initial(f.head).adapter;
  struct Case {
    bool prompt, scale, shift;
  };
  for (const Case c : {Case{true, false, false}, Case{false, true, false}, Case{false, false, true},
                       Case{true, true, false}, Case{false, true, true}}) {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.lr = 1e-2;
    cfg.param_groups = {c.prompt, c.scale, c.shift};
    const auto a = train(f.pool, f.head, cfg).state.adapter;
    CHECK((a.context == init.context) == !c.prompt);
    CHECK((a.scale == init.scale) == !c.scale);
    CHECK((a.shift == init.shift) == !c.shift);
  }
}

TEST_CASE("the frozen reference's predictions do not change during training") {
  const auto f = make_fixture(0.2);
  const auto probe = f.data.test.to_matrix();
  const auto ref = ModelState::reference(f.head);
  const auto before = fnv1a(predict_probs(ref, probe).data());
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 1e-2;
  const auto r = train(f.pool, f.head, cfg);
  CHECK(fnv1a(predict_probs(ref, probe).data()) == before);
  CHECK(fnv1a(predict_probs(ModelState::reference(r.state.head), probe).data()) == before);
  CHECK_FALSE(r.state.frozen_reference);
}

TEST_CASE("momentum and every method train without error") {
  const auto f = make_fixture(0.2);
  std::vector<double> oracle(f.pool.rows(), 1.0);
  for (std::size_t i = 0; i < oracle.size(); i += 3) oracle[i] = 0.0;
  for (auto m : kAllLossMethods) {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 1e-3;
    cfg.momentum = 0.9;
    cfg.loss.method = m;
    const auto r = train(f.pool, f.head, cfg, oracle);
    CHECK_FALSE(r.state.adapter.is_identity());
  }
}

TEST_CASE("train rejects invalid input") {
  const auto f = make_fixture(0.2);
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(Matrix(4, 5, 1.0), f.head, cfg), ValidationError);
  CHECK_THROWS_AS(train(Matrix(), f.head, cfg), ValidationError);
  cfg.loss.method = LossMethod::kUeoOracle;
  CHECK_THROWS_AS(train(f.pool, f.head, cfg), ValidationError);
  cfg = TrainConfig{};
  cfg.lr = 0.0;
  CHECK_THROWS_AS(train(f.pool, f.head, cfg), ValidationError);
  cfg = TrainConfig{};
  cfg.param_groups = {false, false, false};
  CHECK_THROWS_AS(train(f.pool, f.head, cfg), ValidationError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(f.pool, f.head, cfg), ValidationError);
}

TEST_CASE("a non-finite gradient aborts with the step index") {
  // A subnormal temperature overflows the backward pass on the first batch.
  Matrix base(2, 3, 0.0);
  base(0, 0) = 1.0;
  base(1, 1) = 1.0;
  const auto head = ClassHead::build(base, 0, 0, 0, 1e-310);
  Matrix pool(1, 3, 0.0);
  pool(0, 0) = 1e-310;
  pool(0, 1) = 3e-310;
  pool(0, 2) = 1.0;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.loss.method = LossMethod::kEntMin;
  cfg.param_groups = {false, true, true};
  CHECK_THROWS_WITH_AS(train(pool, head, cfg), doctest::Contains("at step 0"), NumericalError);
}

TEST_CASE("batches of one sample are accepted with a warning") {
  const auto f = make_fixture(0.2);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  cfg.lr = 1e-3;
  const auto r = train(f.pool.gather_rows(std::vector<std::size_t>{0, 7, 13}), f.head, cfg);
  CHECK(r.log.rows.size() == 3);
  CHECK_FALSE(r.log.warnings.empty());
  // Batch of one with the default UEO loss: the two terms cancel at beta = 1.
  for (const auto& row : r.log.rows) CHECK(std::abs(row.loss) < 1e-12);
}

TEST_CASE("TrainConfig JSON round trip") {
  TrainConfig cfg;
  cfg.lr = 3e-4;
  cfg.epochs = 7;
  cfg.batch_size = 32;
  cfg.seed = 11;
  cfg.param_groups = {true, false, true};
  cfg.loss.method = LossMethod::kInfoMax;
  cfg.shuffle = false;
  const auto back = train_config_from_json(nlohmann::json::parse(to_json(cfg).dump()));
  CHECK(back.lr == cfg.lr);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.seed == cfg.seed);
  CHECK(back.param_groups == cfg.param_groups);
  CHECK(back.loss.method == cfg.loss.method);
  CHECK(back.shuffle == cfg.shuffle);
}
