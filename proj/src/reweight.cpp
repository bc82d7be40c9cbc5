// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/reweight.hpp"

#include <cmath>
#include <stdexcept>

namespace ltau::reweight {

DifficultyScores difficulty(const ErrorTrajectoryLog& trajectory,
                            std::optional<double> reference_mae) {
  const std::size_t e = trajectory.num_epochs;
  const std::size_t n = trajectory.num_samples;
  if (e < 1 || n < 1)
    throw std::invalid_argument("difficulty needs a non-empty trajectory");

  double mae;
  if (reference_mae) {
    mae = *reference_mae;
    if (!(mae >= 0.0)) throw std::invalid_argument("reference MAE must be >= 0");
  } else {
    const auto last = trajectory.epoch_row(e - 1);
    double sum = 0.0;
    for (const float v : last) sum += static_cast<double>(v);
    mae = sum / static_cast<double>(n);
  }

  DifficultyScores scores;
  scores.reference_mae = mae;
  scores.d.assign(n, 0.0);
  std::vector<std::uint32_t> below(n, 0);
  for (std::size_t t = 0; t < e; ++t) {
    const auto row = trajectory.epoch_row(t);
    for (std::size_t i = 0; i < n; ++i)
      if (static_cast<double>(row[i]) < mae) ++below[i];  // ties count as not-below
  }
  const double inv = 1.0 / static_cast<double>(e);
  for (std::size_t i = 0; i < n; ++i)
    scores.d[i] = static_cast<double>(below[i]) * inv;
  return scores;
}

std::vector<double> weights(const DifficultyScores& scores,
                            const WeightScheme& scheme) {
  if (scheme.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  std::vector<double> w(scores.d.size(), 1.0);
  switch (scheme.kind) {
    case WeightKind::uniform:
      break;
    case WeightKind::upweight_easy:
      for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = std::exp(scheme.lambda * scores.d[i]);
      break;
    case WeightKind::upweight_hard:
      for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = std::exp(scheme.lambda * (1.0 - scores.d[i]));
      break;
  }
  return w;
}

}  // namespace ltau::reweight
