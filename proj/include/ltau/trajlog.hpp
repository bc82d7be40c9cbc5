// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace ltau {

// Per-sample, per-epoch scalar training errors, shape (E, N), row-major.
// Row t holds the errors of all N samples at the end of epoch t+1.
struct ErrorTrajectoryLog {
  std::size_t num_epochs = 0;
  std::size_t num_samples = 0;
  std::vector<float> errors;  // (E, N)

  float at(std::size_t epoch, std::size_t sample) const {
    return errors[epoch * num_samples + sample];
  }
  std::span<const float> epoch_row(std::size_t epoch) const {
    return {errors.data() + epoch * num_samples, num_samples};
  }
};

enum class BinSpacing { linear, logarithmic };

// Shared histogram support: B bins over B+1 strictly increasing edges.
// Bin b covers [edges[b], edges[b+1]); the last bin is closed at the top,
// and out-of-range values are clipped into the boundary bins.
struct BinGrid {
  std::vector<double> edges;
  BinSpacing spacing = BinSpacing::linear;

  std::size_t num_bins() const { return edges.empty() ? 0 : edges.size() - 1; }
  double eps_max() const { return edges.back(); }
  double center(std::size_t b) const { return 0.5 * (edges[b] + edges[b + 1]); }
  std::size_t bin_of(double x) const;
};

// Per-sample normalized error histograms over a shared grid; rows sum to 1.
// Probabilities are kept in double precision in memory (the on-disk payload
// is f32le like every other container).
struct PdfBank {
  BinGrid grid;
  std::size_t num_samples = 0;
  std::vector<double> pdfs;  // (N, B)

  std::size_t num_bins() const { return grid.num_bins(); }
  std::span<const double> row(std::size_t i) const {
    return {pdfs.data() + i * num_bins(), num_bins()};
  }
};

// (N, D) latent descriptors, float32 like the on-disk format.
struct DescriptorSet {
  std::size_t num_samples = 0;
  std::size_t dim = 0;
  std::vector<float> vectors;  // (N, D)

  std::span<const float> row(std::size_t i) const {
    return {vectors.data() + i * dim, dim};
  }
};

inline constexpr std::size_t kDefaultNumBins = 100;

// --- trajectory logs (*.errs) ---

ErrorTrajectoryLog read_trajectory_log(const std::filesystem::path& path);
void write_trajectory_log(const std::filesystem::path& path,
                          const ErrorTrajectoryLog& log);

// eps_max defaults to the maximum error observed in the trajectory; pass an
// explicit value to override. Logarithmic spacing places num_bins bins
// between the smallest positive observed error and eps_max and prepends one
// underflow bin [0, min_positive), so the grid has num_bins+1 bins total.
BinGrid make_bin_grid(const ErrorTrajectoryLog& trajectory,
                      std::size_t num_bins, BinSpacing spacing,
                      std::optional<double> explicit_eps_max = std::nullopt);

// Histogram of epochs burn_in+1..E per sample, normalized per row.
// Errors >= eps_max land in the top bin; errors below the first edge land in
// the bottom bin, so every observation is counted exactly once.
PdfBank build_pdf_bank(const ErrorTrajectoryLog& trajectory,
                       const BinGrid& grid, std::size_t burn_in = 0);

// --- pdf banks (*.pdfb) and descriptor sets (*.desc) ---

void write_pdf_bank(const std::filesystem::path& path, const PdfBank& bank);
PdfBank read_pdf_bank(const std::filesystem::path& path);

void write_descriptor_set(const std::filesystem::path& path,
                          const DescriptorSet& set);
DescriptorSet read_descriptor_set(const std::filesystem::path& path);

}  // namespace ltau
