// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "ltau/trajlog.hpp"

namespace ltau::reweight {

// Per-sample ease score: the fraction of epochs a sample's error stayed
// strictly below the reference MAE. d = 1 is a consistently easy sample.
struct DifficultyScores {
  std::vector<double> d;  // each in [0, 1]
  double reference_mae = 0.0;
};

// Reference defaults to the final-epoch mean absolute training error.
DifficultyScores difficulty(const ErrorTrajectoryLog& trajectory,
                            std::optional<double> reference_mae = std::nullopt);

enum class WeightKind { uniform, upweight_easy, upweight_hard };

struct WeightScheme {
  WeightKind kind = WeightKind::uniform;
  double lambda = 0.0;
};

inline constexpr double kLambdaEasy = 2.0;
inline constexpr double kLambdaHard = 4.5;

inline WeightScheme uniform_scheme() { return {WeightKind::uniform, 0.0}; }
inline WeightScheme easy_scheme(double lambda = kLambdaEasy) {
  return {WeightKind::upweight_easy, lambda};
}
inline WeightScheme hard_scheme(double lambda = kLambdaHard) {
  return {WeightKind::upweight_hard, lambda};
}

// upweight_easy: w = exp(lambda * d); upweight_hard: w = exp(lambda * (1-d));
// uniform: all ones. Raw weights lie in [1, e^lambda]; consumers that feed a
// loss normalize them to mean 1 first (toylab::train does).
std::vector<double> weights(const DifficultyScores& scores,
                            const WeightScheme& scheme);

}  // namespace ltau::reweight
