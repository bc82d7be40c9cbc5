// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/reweight.hpp"

#include <cmath>

#include "doctest.h"
#include "test_support.hpp"

using namespace ltau;

TEST_SUITE_BEGIN("reweight");

namespace {

ErrorTrajectoryLog single_sample(std::vector<float> values) {
  ErrorTrajectoryLog log;
  log.num_epochs = values.size();
  log.num_samples = 1;
  log.errors = std::move(values);
  return log;
}

}  // namespace

TEST_CASE("difficulty counts epochs strictly below the reference MAE") {
  SUBCASE("always below") {
    const auto scores = reweight::difficulty(single_sample({0.1f, 0.1f}), 0.5);
    CHECK(scores.d[0] == 1.0);
  }
  SUBCASE("always above") {
    const auto scores = reweight::difficulty(single_sample({0.9f, 0.9f}), 0.5);
    CHECK(scores.d[0] == 0.0);
  }
  SUBCASE("half below") {
    const auto scores = reweight::difficulty(single_sample({0.1f, 0.3f}), 0.2);
    CHECK(scores.d[0] == 0.5);
  }
  SUBCASE("exactly at the MAE counts as not-below") {
    const auto scores = reweight::difficulty(single_sample({0.5f, 0.1f}), 0.5);
    CHECK(scores.d[0] == 0.5);
  }
}

TEST_CASE("default reference is the final-epoch MAE") {
  ErrorTrajectoryLog log;
  log.num_epochs = 2;
  log.num_samples = 2;
  // final epoch errors: 0.2 and 0.6 -> MAE 0.4
  log.errors = {1.0f, 0.1f, 0.2f, 0.6f};
  const auto scores = reweight::difficulty(log);
  CHECK(scores.reference_mae == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(scores.d[0] == 0.5);  // 1.0 above, 0.2 below
  CHECK(scores.d[1] == 0.5);  // 0.1 below, 0.6 above
}

TEST_CASE("weight formulas") {
  reweight::DifficultyScores scores;
  scores.d = {1.0, 0.0, 0.5};

  SUBCASE("hard scheme at d=1 gives weight one") {
    const auto w = reweight::weights(scores, reweight::hard_scheme(4.5));
    CHECK(w[0] == 1.0);
    CHECK(w[1] == doctest::Approx(std::exp(4.5)).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(90.0171313005).epsilon(1e-9));
  }

  SUBCASE("easy scheme at d=1 gives e^lambda") {
    const auto w = reweight::weights(scores, reweight::easy_scheme(2.0));
    CHECK(w[0] == doctest::Approx(std::exp(2.0)).epsilon(1e-12));
    CHECK(w[0] == doctest::Approx(7.38905609893).epsilon(1e-9));
    CHECK(w[1] == 1.0);
  }

  SUBCASE("uniform ignores difficulty") {
    const auto w = reweight::weights(scores, reweight::uniform_scheme());
    CHECK(w == std::vector<double>{1.0, 1.0, 1.0});
  }

  SUBCASE("lambda zero collapses both schemes to uniform") {
    CHECK(reweight::weights(scores, reweight::hard_scheme(0.0)) ==
          std::vector<double>{1.0, 1.0, 1.0});
    CHECK(reweight::weights(scores, reweight::easy_scheme(0.0)) ==
          std::vector<double>{1.0, 1.0, 1.0});
  }
}

TEST_CASE("weight monotonicity and bounds") {
  SplitMix64 rng(6);
  reweight::DifficultyScores scores;
  for (int i = 0; i < 200; ++i) scores.d.push_back(rng.uniform());
  std::sort(scores.d.begin(), scores.d.end());

  const auto hard = reweight::weights(scores, reweight::hard_scheme());
  const auto easy = reweight::weights(scores, reweight::easy_scheme());
  for (std::size_t i = 1; i < scores.d.size(); ++i) {
    CHECK(hard[i] <= hard[i - 1]);  // non-increasing in d
    CHECK(easy[i] >= easy[i - 1]);  // non-decreasing in d
  }
  for (const double w : hard) {
    CHECK(w >= 1.0);
    CHECK(w <= std::exp(reweight::kLambdaHard));
  }
  for (const double w : easy) {
    CHECK(w >= 1.0);
    CHECK(w <= std::exp(reweight::kLambdaEasy));
  }
}

TEST_SUITE_END();
