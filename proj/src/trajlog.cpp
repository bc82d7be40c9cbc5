// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/trajlog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "ltau/io.hpp"

namespace ltau {

namespace {

void validate_errors(const ErrorTrajectoryLog& log) {
  if (log.num_epochs < 1 || log.num_samples < 1)
    throw std::invalid_argument("trajectory log must have E >= 1 and N >= 1");
  if (log.errors.size() != log.num_epochs * log.num_samples)
    throw std::invalid_argument("trajectory payload size inconsistent with shape");
  for (std::size_t i = 0; i < log.errors.size(); ++i) {
    const float v = log.errors[i];
    if (!std::isfinite(v) || v < 0.0f) {
      const std::size_t epoch = i / log.num_samples;
      const std::size_t sample = i % log.num_samples;
      throw std::runtime_error(
          "invalid error value at epoch " + std::to_string(epoch) + ", sample " +
          std::to_string(sample) + " (flat index " + std::to_string(i) +
          "): " + std::to_string(v));
    }
  }
}

}  // namespace

std::size_t BinGrid::bin_of(double x) const {
  // upper_bound gives the first edge > x; the bin is one to its left.
  // Clamping implements both the top-bin clip for x >= eps_max and the
  // bottom-bin clip for x < edges[0].
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  const auto idx = static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
  const auto last = static_cast<std::ptrdiff_t>(num_bins()) - 1;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, last));
}

ErrorTrajectoryLog read_trajectory_log(const std::filesystem::path& path) {
  auto loaded = io::read_matrix(path, "errs");
  ErrorTrajectoryLog log;
  log.num_epochs = loaded.mat.rows;
  log.num_samples = loaded.mat.cols;
  log.errors = std::move(loaded.mat.data);
  validate_errors(log);
  return log;
}

void write_trajectory_log(const std::filesystem::path& path,
                          const ErrorTrajectoryLog& log) {
  validate_errors(log);
  io::MatrixF32 m;
  m.rows = log.num_epochs;
  m.cols = log.num_samples;
  m.data = log.errors;
  io::write_matrix(path, m, "errs");
}

BinGrid make_bin_grid(const ErrorTrajectoryLog& trajectory,
                      std::size_t num_bins, BinSpacing spacing,
                      std::optional<double> explicit_eps_max) {
  if (num_bins < 1) throw std::invalid_argument("num_bins must be >= 1");
  validate_errors(trajectory);

  double max_err = 0.0;
  double min_pos = std::numeric_limits<double>::infinity();
  for (const float v : trajectory.errors) {
    max_err = std::max(max_err, static_cast<double>(v));
    if (v > 0.0f) min_pos = std::min(min_pos, static_cast<double>(v));
  }
  const double eps_max = explicit_eps_max.value_or(max_err);
  if (!std::isfinite(eps_max) || eps_max <= 0.0)
    throw std::runtime_error(
        "cannot build a bin grid: eps_max must be positive (all-zero "
        "trajectory under the train_max policy?)");

  BinGrid grid;
  grid.spacing = spacing;
  if (spacing == BinSpacing::linear) {
    grid.edges.resize(num_bins + 1);
    for (std::size_t i = 0; i <= num_bins; ++i)
      grid.edges[i] = eps_max * static_cast<double>(i) / static_cast<double>(num_bins);
    grid.edges.front() = 0.0;
    grid.edges.back() = eps_max;
  } else {
    if (!std::isfinite(min_pos))
      throw std::runtime_error(
          "logarithmic bin grid needs a positive lower edge, but the "
          "trajectory contains no positive errors");
    if (min_pos >= eps_max)
      throw std::runtime_error(
          "logarithmic bin grid is degenerate: smallest positive error " +
          io::format_double(min_pos) + " is not below eps_max " +
          io::format_double(eps_max));
    const double lo = std::log10(min_pos);
    const double hi = std::log10(eps_max);
    grid.edges.resize(num_bins + 2);
    grid.edges[0] = 0.0;  // underflow bin for exact zeros / sub-minimum errors
    for (std::size_t i = 0; i <= num_bins; ++i)
      grid.edges[i + 1] = std::pow(
          10.0, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(num_bins));
    grid.edges[1] = min_pos;
    grid.edges.back() = eps_max;
  }

  for (std::size_t i = 0; i + 1 < grid.edges.size(); ++i)
    if (!(grid.edges[i] < grid.edges[i + 1]))
      throw std::runtime_error("bin edges are not strictly increasing");
  return grid;
}

PdfBank build_pdf_bank(const ErrorTrajectoryLog& trajectory,
                       const BinGrid& grid, std::size_t burn_in) {
  validate_errors(trajectory);
  if (grid.num_bins() < 1) throw std::invalid_argument("empty bin grid");
  if (burn_in >= trajectory.num_epochs)
    throw std::invalid_argument("burn_in must be < num_epochs");

  const std::size_t n = trajectory.num_samples;
  const std::size_t b = grid.num_bins();
  const std::size_t epochs_used = trajectory.num_epochs - burn_in;

  std::vector<std::uint32_t> counts(n * b, 0);
  for (std::size_t e = burn_in; e < trajectory.num_epochs; ++e) {
    const auto row = trajectory.epoch_row(e);
    for (std::size_t i = 0; i < n; ++i)
      ++counts[i * b + grid.bin_of(static_cast<double>(row[i]))];
  }

  PdfBank bank;
  bank.grid = grid;
  bank.num_samples = n;
  bank.pdfs.resize(n * b);
  const double denom = static_cast<double>(epochs_used);
  for (std::size_t i = 0; i < n * b; ++i)
    bank.pdfs[i] = static_cast<double>(counts[i]) / denom;
  return bank;
}

void write_pdf_bank(const std::filesystem::path& path, const PdfBank& bank) {
  const std::size_t b = bank.num_bins();
  if (bank.pdfs.size() != bank.num_samples * b)
    throw std::invalid_argument("pdf bank payload size inconsistent with shape");

  nlohmann::json extra;
  auto edges = nlohmann::json::array();
  for (const double e : bank.grid.edges) edges.push_back(io::format_double(e));
  extra["edges"] = std::move(edges);
  extra["spacing"] =
      bank.grid.spacing == BinSpacing::linear ? "linear" : "logarithmic";

  io::MatrixF32 m;
  m.rows = bank.num_samples;
  m.cols = b;
  m.data.resize(bank.pdfs.size());
  for (std::size_t i = 0; i < bank.pdfs.size(); ++i)
    m.data[i] = static_cast<float>(bank.pdfs[i]);
  io::write_matrix(path, m, "pdfb", extra);
}

PdfBank read_pdf_bank(const std::filesystem::path& path) {
  auto loaded = io::read_matrix(path, "pdfb");
  if (!loaded.meta.contains("edges") || !loaded.meta.contains("spacing"))
    throw std::runtime_error("pdf bank sidecar missing bin grid");

  PdfBank bank;
  for (const auto& e : loaded.meta["edges"])
    bank.grid.edges.push_back(io::parse_double(e.get<std::string>()));
  const std::string spacing = loaded.meta["spacing"];
  if (spacing == "linear")
    bank.grid.spacing = BinSpacing::linear;
  else if (spacing == "logarithmic")
    bank.grid.spacing = BinSpacing::logarithmic;
  else
    throw std::runtime_error("unknown bin spacing '" + spacing + "'");

  if (loaded.mat.cols != bank.grid.num_bins())
    throw std::runtime_error("pdf bank column count does not match bin grid");
  for (std::size_t i = 0; i + 1 < bank.grid.edges.size(); ++i)
    if (!(bank.grid.edges[i] < bank.grid.edges[i + 1]))
      throw std::runtime_error("pdf bank grid edges are not strictly increasing");

  bank.num_samples = loaded.mat.rows;
  bank.pdfs.assign(loaded.mat.data.begin(), loaded.mat.data.end());

  // Row sums live within float32 rounding of 1; anything worse is corruption.
  const std::size_t b = bank.grid.num_bins();
  for (std::size_t i = 0; i < bank.num_samples; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) sum += bank.pdfs[i * b + j];
    if (std::abs(sum - 1.0) > 1e-4)
      throw std::runtime_error("pdf bank row " + std::to_string(i) +
                               " is not normalized (sum " + io::format_double(sum) +
                               ")");
  }
  return bank;
}

void write_descriptor_set(const std::filesystem::path& path,
                          const DescriptorSet& set) {
  if (set.vectors.size() != set.num_samples * set.dim)
    throw std::invalid_argument("descriptor payload size inconsistent with shape");
  for (const float v : set.vectors)
    if (!std::isfinite(v))
      throw std::runtime_error("descriptor set contains a non-finite entry");
  io::MatrixF32 m;
  m.rows = set.num_samples;
  m.cols = set.dim;
  m.data = set.vectors;
  io::write_matrix(path, m, "desc");
}

DescriptorSet read_descriptor_set(const std::filesystem::path& path) {
  auto loaded = io::read_matrix(path, "desc");
  DescriptorSet set;
  set.num_samples = loaded.mat.rows;
  set.dim = loaded.mat.cols;
  set.vectors = std::move(loaded.mat.data);
  for (const float v : set.vectors)
    if (!std::isfinite(v))
      throw std::runtime_error("descriptor set contains a non-finite entry");
  return set;
}

}  // namespace ltau
