// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ltau/knn.hpp"
#include "ltau/trajlog.hpp"

namespace ltau::uq {

inline constexpr std::size_t kDefaultNeighbors = 10;
inline constexpr double kDefaultOodQuantile = 0.99;

// Distance cutoff separating in-domain from out-of-domain queries, fitted
// from the training set's self-excluded first-nearest-neighbor distances.
// `degenerate` marks a fit whose cutoff collapsed to zero (duplicate-heavy
// training data); such a cutoff flags every distinct query as OOD.
struct OodThreshold {
  double cutoff = 0.0;
  std::optional<double> quantile;  // set when fitted, absent for manual cutoffs
  bool degenerate = false;
};

inline OodThreshold manual_threshold(double cutoff) {
  if (!(cutoff > 0.0))
    throw std::invalid_argument("manual OOD cutoff must be positive");
  return OodThreshold{cutoff, std::nullopt, false};
}

// Unweighted per-bin mean of the neighbors' rows; stays normalized because
// it is a convex combination of normalized rows.
std::vector<double> average_pdfs(const PdfBank& bank,
                                 const knn::NeighborList& neighbors);

// Expectation of the histogram with each bin represented by its midpoint.
double expected_error(std::span<const double> pdf, const BinGrid& grid);

// Upper edge of the first bin where the CDF reaches `confidence`;
// confidence 0 maps to the bottom edge by convention.
double confidence_threshold(std::span<const double> pdf, const BinGrid& grid,
                            double confidence);

struct UqEstimate {
  std::vector<double> pdf;
  double expected_error = 0.0;
  double nn1_distance = 0.0;
  std::vector<std::uint32_t> neighbor_ids;
  std::optional<bool> ood_flag;  // absent when no threshold was configured
};

// Full query path: latent k-NN search, neighbor-PDF average, expectation,
// and the 1-NN distance as the OOD signal. OOD-flagged queries still get an
// estimate; the flag is advisory.
template <typename Index>
UqEstimate estimate(std::span<const float> query_descriptor, const Index& index,
                    const PdfBank& bank, std::size_t k = kDefaultNeighbors,
                    const std::optional<OodThreshold>& threshold = std::nullopt) {
  if (index.size() != bank.num_samples)
    throw std::invalid_argument(
        "index and pdf bank cover different sample counts");
  const knn::NeighborList neighbors = index.search(query_descriptor, k);

  UqEstimate est;
  est.pdf = average_pdfs(bank, neighbors);
  est.expected_error = uq::expected_error(est.pdf, bank.grid);
  est.nn1_distance = neighbors.distances.front();
  est.neighbor_ids = neighbors.ids;
  if (threshold)
    est.ood_flag = est.nn1_distance > threshold->cutoff;
  return est;
}

// Self-excluded 1-NN distance of every training point, cut at the given
// quantile (nearest-rank). The index must be built over `train`.
template <typename Index>
OodThreshold fit_ood_threshold(const DescriptorSet& train, const Index& index,
                               double quantile = kDefaultOodQuantile);

std::vector<double> self_excluded_nn1_distances(const DescriptorSet& train,
                                                const knn::FlatIndex& index);
std::vector<double> self_excluded_nn1_distances(const DescriptorSet& train,
                                                const knn::HnswIndex& index);

OodThreshold threshold_from_distances(std::vector<double> distances,
                                      double quantile);

template <typename Index>
OodThreshold fit_ood_threshold(const DescriptorSet& train, const Index& index,
                               double quantile) {
  return threshold_from_distances(self_excluded_nn1_distances(train, index),
                                  quantile);
}

}  // namespace ltau::uq
