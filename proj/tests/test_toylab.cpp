// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/toylab.hpp"

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ltau/io.hpp"
#include "test_support.hpp"

using namespace ltau;
using toy::Activation;
using toy::TaskSpec;
using toy::ToyModel;
using toy::TrainConfig;

namespace {

TaskSpec tiny_spec() {
  TaskSpec spec;
  spec.num_train = 100;
  spec.num_val = 50;
  spec.num_test_id = 50;
  spec.num_test_ood = 20;
  return spec;
}

}  // namespace

TEST_SUITE_BEGIN("toylab");

TEST_CASE("task generation is bit-identical under the same seed") {
  const auto spec = tiny_spec();
  const auto a = toy::generate_task(spec, 7);
  const auto b = toy::generate_task(spec, 7);
  CHECK(a.train.x == b.train.x);
  CHECK(a.train.y == b.train.y);
  CHECK(a.test_ood.x == b.test_ood.x);

  const auto c = toy::generate_task(spec, 8);
  CHECK(a.train.x != c.train.x);
}

TEST_CASE("OOD points lie outside the in-domain box") {
  const auto task = toy::generate_task(tiny_spec(), 3);
  for (std::size_t i = 0; i < task.test_ood.rows; ++i)
    for (const double v : task.test_ood.input(i)) {
      CHECK(v >= task.spec.ood_lo);
      CHECK(v <= task.spec.ood_hi);
      CHECK(v > task.spec.id_hi);  // disjoint by construction
    }
  for (std::size_t i = 0; i < task.test_id.rows; ++i)
    for (const double v : task.test_id.input(i))
      CHECK(v <= task.spec.id_hi);
}

TEST_CASE("per-region noise matches the configured scale") {
  TaskSpec spec = tiny_spec();
  spec.num_train = 10000;
  const auto task = toy::generate_task(spec, 11);

  std::vector<double> sq_sum(spec.num_regions(), 0.0);
  std::vector<std::size_t> count(spec.num_regions(), 0);
  for (std::size_t i = 0; i < task.train.rows; ++i) {
    const double noise = task.train.y[i] - toy::target_fn(task.train.input(i));
    sq_sum[task.train.region[i]] += noise * noise;
    ++count[task.train.region[i]];
  }
  for (std::size_t r = 0; r < spec.num_regions(); ++r) {
    REQUIRE(count[r] > 100);
    const double std_r = std::sqrt(sq_sum[r] / static_cast<double>(count[r]));
    CHECK(std_r == doctest::Approx(spec.region_sigma[r]).epsilon(0.05));
  }
}

TEST_CASE("training basics") {
  const auto task = toy::generate_task(tiny_spec(), 21);
  auto model = ToyModel::init(task.spec.input_dim, 21);

  SUBCASE("one epoch yields a one-row trajectory") {
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 1;
    const auto result = toy::train(model, task, cfg);
    CHECK(result.trajectory.num_epochs == 1);
    CHECK(result.trajectory.num_samples == 100);
    for (const float e : result.trajectory.errors) CHECK(e >= 0.0f);
    CHECK(result.descriptors.num_samples == 100);
    CHECK(result.descriptors.dim == 32);
  }

  SUBCASE("all-ones weights equal the unweighted run bit-exactly") {
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 2;
    const auto plain = toy::train(model, task, cfg);
    const std::vector<double> ones(task.train.rows, 1.0);
    const auto weighted = toy::train(model, task, cfg, ones);
    CHECK(plain.trajectory.errors == weighted.trajectory.errors);
    CHECK(plain.descriptors.vectors == weighted.descriptors.vectors);
    CHECK(plain.final_val_mae == weighted.final_val_mae);
  }

  SUBCASE("training reduces the error") {
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.seed = 3;
    const auto result = toy::train(model, task, cfg);
    const auto first = result.trajectory.epoch_row(0);
    const auto last = result.trajectory.epoch_row(cfg.epochs - 1);
    const double first_mae =
        std::accumulate(first.begin(), first.end(), 0.0) / 100.0;
    const double last_mae =
        std::accumulate(last.begin(), last.end(), 0.0) / 100.0;
    CHECK(last_mae < first_mae);
    CHECK(result.final_train_mae == doctest::Approx(last_mae).epsilon(1e-12));
  }

  SUBCASE("reruns are bit-identical") {
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 9;
    const auto a = toy::train(model, task, cfg);
    const auto b = toy::train(model, task, cfg);
    CHECK(a.trajectory.errors == b.trajectory.errors);
    CHECK(a.descriptors.vectors == b.descriptors.vectors);
    CHECK(a.model.w1 == b.model.w1);
  }

  SUBCASE("divergence reports the epoch") {
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.seed = 4;
    cfg.learning_rate = 1e6;  // guaranteed blow-up
    CHECK_THROWS_WITH_AS(toy::train(model, task, cfg),
                         doctest::Contains("epoch"), std::runtime_error);
  }
}

TEST_CASE("gradient checks") {
  SplitMix64 rng(33);

  SUBCASE("identity activation makes the loss polynomial: near-exact match") {
    // quadratic in each parameter, so central differences carry no
    // truncation error; a wide step leaves only rounding noise
    const auto model = ToyModel::init(3, 5, Activation::identity);
    std::vector<double> xs(3 * 3), ts(3);
    for (double& v : xs) v = rng.uniform(-1.0, 1.0);
    for (double& t : ts) t = rng.uniform(-1.0, 1.0);
    CHECK(toy::finite_difference_gradcheck(model, xs, ts, 1e-2) < 1e-9);
  }

  SUBCASE("default model matches central differences") {
    const auto model = ToyModel::init(2, 6);
    const std::size_t n = 100;
    std::vector<double> xs(n * 2), ts(n);
    for (double& v : xs) v = rng.uniform(-1.0, 1.0);
    for (double& t : ts) t = rng.uniform(-1.5, 1.5);
    CHECK(toy::finite_difference_gradcheck(model, xs, ts) < 1e-4);
  }

  SUBCASE("symmetric hidden units receive symmetric gradients") {
    auto model = ToyModel::init(2, 8);
    // make units 0 and 1 of both hidden layers identical
    for (std::size_t i = 0; i < model.input_dim; ++i)
      model.w1[1 * model.input_dim + i] = model.w1[0 * model.input_dim + i];
    model.b1[1] = model.b1[0];
    // equal columns 0,1 (same downstream influence), then equal rows 0,1
    // (same unit-2 behavior); the 2x2 corner ends up constant
    for (std::size_t k = 0; k < ToyModel::kWidth; ++k)
      model.w2[k * ToyModel::kWidth + 1] = model.w2[k * ToyModel::kWidth + 0];
    for (std::size_t j = 0; j < ToyModel::kWidth; ++j)
      model.w2[1 * ToyModel::kWidth + j] = model.w2[0 * ToyModel::kWidth + j];
    model.b2[1] = model.b2[0];
    model.w3[1] = model.w3[0];

    const std::vector<double> x(2, 0.0);  // zero input
    const auto g = toy::gradient(model, x, 0.7);
    CHECK(g.b1[0] == g.b1[1]);
    CHECK(g.b2[0] == g.b2[1]);
    CHECK(g.w3[0] == g.w3[1]);
  }
}

TEST_CASE("model serialization round-trips exactly") {
  test::TempDir dir("toy_model");
  const auto task = toy::generate_task(tiny_spec(), 2);
  auto model = ToyModel::init(2, 44);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 44;
  const auto result = toy::train(model, task, cfg);

  toy::save_model(dir.file("m.json"), result.model);
  const auto back = toy::load_model(dir.file("m.json"));
  CHECK(back.w1 == result.model.w1);
  CHECK(back.b1 == result.model.b1);
  CHECK(back.w2 == result.model.w2);
  CHECK(back.b2 == result.model.b2);
  CHECK(back.w3 == result.model.w3);
  CHECK(back.b3 == result.model.b3);

  CHECK_THROWS_AS(toy::load_model(dir.file("missing.json")), std::runtime_error);
  io::write_text(dir.file("bad.json"), "{\"kind\": \"other\"}");
  CHECK_THROWS_AS(toy::load_model(dir.file("bad.json")), std::runtime_error);
}

TEST_CASE("trajectories written by a short run load back with the right shape") {
  test::TempDir dir("toy_errs");
  const auto task = toy::generate_task(tiny_spec(), 64);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 64;
  const auto result = toy::train(ToyModel::init(2, 64), task, cfg);

  write_trajectory_log(dir.file("run.errs"), result.trajectory);
  const auto log = read_trajectory_log(dir.file("run.errs"));
  CHECK(log.num_epochs == 5);
  CHECK(log.num_samples == 100);
  for (const float e : log.errors) CHECK(e >= 0.0f);

  write_descriptor_set(dir.file("run.desc"), result.descriptors);
  const auto desc = read_descriptor_set(dir.file("run.desc"));
  CHECK(desc.dim == 32);
}

TEST_SUITE_END();
