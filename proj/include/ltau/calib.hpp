// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ltau/trajlog.hpp"

namespace ltau::calib {

double pearson(std::span<const double> x, std::span<const double> y);

// Rank correlation; ties get average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

// One UQ method's view of a test set: a scalar uncertainty and a true error
// per point, the per-point predicted-distribution variance (for sharpness),
// and the per-point error threshold at a given confidence level.
struct MethodPredictions {
  std::vector<double> uncertainties;
  std::vector<double> true_errors;
  std::vector<double> variances;
  std::function<double(std::size_t point, double confidence)> threshold_at;
};

struct CurvePoint {
  double confidence;  // requested level c
  double observed;    // fraction of true errors within the c-interval
};

// 101 uniform confidence levels, 0 to 1 inclusive.
std::vector<double> default_levels();

std::vector<CurvePoint> calibration_curve(const MethodPredictions& preds,
                                          std::span<const double> levels);

struct Areas {
  double over = 0.0;   // curve below the diagonal: overconfidence
  double under = 0.0;  // curve above the diagonal: underconfidence
  double total = 0.0;  // over + under
};

// Trapezoidal areas between the curve and the ideal diagonal.
Areas miscalibration_areas(std::span<const CurvePoint> curve);

// Variance of a histogram over bin midpoints.
double pdf_variance(std::span<const double> pdf, const BinGrid& grid);

// sqrt of the mean predicted-distribution variance.
double sharpness_from_variances(std::span<const double> variances);
double sharpness(const std::vector<std::vector<double>>& pdfs,
                 const BinGrid& grid);

enum class ThresholdKind {
  half_normal,  // P(|e| <= t) = c for zero-mean Gaussian e: t = sigma*sqrt2*erfinv(c)
  gaussian_z,   // one-sided z-score t = sigma * Phi^-1(c), floored at 0
};

// Per-point error threshold under the Gaussian-spread assumption.
// confidence 1 yields +infinity.
double gaussian_threshold(double sigma, double confidence,
                          ThresholdKind kind = ThresholdKind::half_normal);

// sqrt2 * erfinv(c); exposed for reuse and testing.
double half_normal_quantile(double confidence);

// Ensemble predictions: `models` stacked (points x components) blocks.
struct EnsembleTensor {
  std::size_t models = 0;
  std::size_t points = 0;
  std::size_t components = 0;
  std::vector<float> data;  // (models, points, components)

  float at(std::size_t m, std::size_t p, std::size_t c) const {
    return data[(m * points + p) * components + c];
  }
};

// Baseline UQ: uncertainty = per-point std over models (population),
// averaged over components; true error = L2 norm of (mean prediction -
// truth). `truths` is (points x components) row-major.
MethodPredictions ensemble_uncertainty(
    const EnsembleTensor& predictions, std::span<const float> truths,
    ThresholdKind kind = ThresholdKind::half_normal);

// LTAU predictions from per-query estimated PDFs on the training grid.
MethodPredictions ltau_predictions(std::vector<std::vector<double>> pdfs,
                                   const BinGrid& grid,
                                   std::vector<double> true_errors);

struct CalibrationReport {
  double pearson = 0.0;
  double spearman = 0.0;
  std::vector<CurvePoint> curve;
  double area_over = 0.0;
  double area_under = 0.0;
  double area_total = 0.0;
  double sharpness = 0.0;
};

CalibrationReport evaluate(const MethodPredictions& preds,
                           std::span<const double> levels);

}  // namespace ltau::calib
