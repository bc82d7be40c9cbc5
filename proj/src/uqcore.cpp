// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/uqcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ltau::uq {

std::vector<double> average_pdfs(const PdfBank& bank,
                                 const knn::NeighborList& neighbors) {
  if (neighbors.size() == 0)
    throw std::invalid_argument("cannot average an empty neighbor list");
  const std::size_t b = bank.num_bins();
  std::vector<double> out(b, 0.0);
  for (const std::uint32_t id : neighbors.ids) {
    if (id >= bank.num_samples)
      throw std::invalid_argument("neighbor id " + std::to_string(id) +
                                  " outside pdf bank");
    const auto row = bank.row(id);
    for (std::size_t j = 0; j < b; ++j) out[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(neighbors.size());
  for (double& v : out) v *= inv;
  return out;
}

double expected_error(std::span<const double> pdf, const BinGrid& grid) {
  if (pdf.size() != grid.num_bins())
    throw std::invalid_argument("pdf length does not match bin grid");
  double e = 0.0;
  for (std::size_t b = 0; b < pdf.size(); ++b) e += pdf[b] * grid.center(b);
  return e;
}

double confidence_threshold(std::span<const double> pdf, const BinGrid& grid,
                            double confidence) {
  if (pdf.size() != grid.num_bins())
    throw std::invalid_argument("pdf length does not match bin grid");
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw std::invalid_argument("confidence must lie in [0, 1]");
  if (confidence == 0.0) return grid.edges.front();

  double cdf = 0.0;
  for (std::size_t b = 0; b < pdf.size(); ++b) {
    cdf += pdf[b];
    if (cdf >= confidence) return grid.edges[b + 1];
  }
  // Rounding can leave the final CDF a hair under the requested level.
  return grid.edges.back();
}

namespace {

template <typename Index>
std::vector<double> nn1_impl(const DescriptorSet& train, const Index& index) {
  if (train.num_samples < 2)
    throw std::invalid_argument(
        "need at least two training points to fit an OOD threshold");
  if (index.size() != train.num_samples || index.dim() != train.dim)
    throw std::invalid_argument("OOD fit: index does not match descriptor set");

  std::vector<double> distances(train.num_samples);
  for (std::size_t i = 0; i < train.num_samples; ++i) {
    const auto nb = index.search(train.row(i), 2);
    double d = nb.distances.back();
    for (std::size_t j = 0; j < nb.size(); ++j) {
      if (nb.ids[j] != i) {
        d = nb.distances[j];
        break;
      }
    }
    distances[i] = d;
  }
  return distances;
}

}  // namespace

std::vector<double> self_excluded_nn1_distances(const DescriptorSet& train,
                                                const knn::FlatIndex& index) {
  return nn1_impl(train, index);
}

std::vector<double> self_excluded_nn1_distances(const DescriptorSet& train,
                                                const knn::HnswIndex& index) {
  return nn1_impl(train, index);
}

OodThreshold threshold_from_distances(std::vector<double> distances,
                                      double quantile) {
  if (!(quantile > 0.0 && quantile <= 1.0))
    throw std::invalid_argument("OOD quantile must lie in (0, 1]");
  std::sort(distances.begin(), distances.end());
  const std::size_t n = distances.size();
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(quantile * static_cast<double>(n)));
  const std::size_t idx = std::min(n - 1, rank > 0 ? rank - 1 : 0);

  OodThreshold t;
  t.cutoff = distances[idx];
  t.quantile = quantile;
  t.degenerate = !(t.cutoff > 0.0);
  return t;
}

}  // namespace ltau::uq
