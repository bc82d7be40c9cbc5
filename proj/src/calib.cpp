// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/calib.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "ltau/uqcore.hpp"

namespace ltau::calib {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("correlation inputs differ in length");
  if (x.size() < 2)
    throw std::invalid_argument("correlation needs at least two points");
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Average ranks, 1-based; tied runs share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v[a] != v[b] ? v[a] < v[b] : a < b;
  });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = shared;
    i = j;
  }
  return ranks;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw std::invalid_argument("correlation undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::vector<double> default_levels() {
  std::vector<double> levels(101);
  for (std::size_t i = 0; i < levels.size(); ++i)
    levels[i] = static_cast<double>(i) / 100.0;
  return levels;
}

std::vector<CurvePoint> calibration_curve(const MethodPredictions& preds,
                                          std::span<const double> levels) {
  if (!preds.threshold_at)
    throw std::invalid_argument("calibration curve needs a threshold function");
  const std::size_t n = preds.true_errors.size();
  if (n == 0) throw std::invalid_argument("calibration curve needs test points");

  std::vector<CurvePoint> curve;
  curve.reserve(levels.size());
  for (const double c : levels) {
    std::size_t within = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (preds.true_errors[i] <= preds.threshold_at(i, c)) ++within;
    curve.push_back({c, static_cast<double>(within) / static_cast<double>(n)});
  }
  return curve;
}

Areas miscalibration_areas(std::span<const CurvePoint> curve) {
  if (curve.size() < 2)
    throw std::invalid_argument("miscalibration areas need at least two curve points");
  Areas a;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double dc = curve[i + 1].confidence - curve[i].confidence;
    if (dc < 0.0) throw std::invalid_argument("curve must be sorted by confidence");
    const double over0 = std::max(curve[i].confidence - curve[i].observed, 0.0);
    const double over1 = std::max(curve[i + 1].confidence - curve[i + 1].observed, 0.0);
    const double under0 = std::max(curve[i].observed - curve[i].confidence, 0.0);
    const double under1 = std::max(curve[i + 1].observed - curve[i + 1].confidence, 0.0);
    a.over += 0.5 * (over0 + over1) * dc;
    a.under += 0.5 * (under0 + under1) * dc;
  }
  a.total = a.over + a.under;
  return a;
}

double pdf_variance(std::span<const double> pdf, const BinGrid& grid) {
  if (pdf.size() != grid.num_bins())
    throw std::invalid_argument("pdf length does not match bin grid");
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t b = 0; b < pdf.size(); ++b) {
    const double c = grid.center(b);
    m1 += pdf[b] * c;
    m2 += pdf[b] * c * c;
  }
  return std::max(m2 - m1 * m1, 0.0);
}

double sharpness_from_variances(std::span<const double> variances) {
  if (variances.empty())
    throw std::invalid_argument("sharpness needs at least one distribution");
  return std::sqrt(mean(variances));
}

double sharpness(const std::vector<std::vector<double>>& pdfs,
                 const BinGrid& grid) {
  std::vector<double> variances;
  variances.reserve(pdfs.size());
  for (const auto& pdf : pdfs) variances.push_back(pdf_variance(pdf, grid));
  return sharpness_from_variances(variances);
}

namespace {

// erfinv via the Giles (2012) polynomial, polished with two Newton steps on
// std::erf; accurate to a few ulp over (-1, 1).
double erf_inv(double x) {
  if (x <= -1.0 || x >= 1.0)
    throw std::invalid_argument("erf_inv domain is (-1, 1)");
  if (x == 0.0) return 0.0;

  double w = -std::log((1.0 - x) * (1.0 + x));
  double p;
  if (w < 6.25) {
    w -= 3.125;
    p = -3.6444120640178196996e-21;
    p = -1.685059138182016589e-19 + p * w;
    p = 1.2858480715256400167e-18 + p * w;
    p = 1.115787767802518096e-17 + p * w;
    p = -1.333171662854620906e-16 + p * w;
    p = 2.0972767875968561637e-17 + p * w;
    p = 6.6376381343583238325e-15 + p * w;
    p = -4.0545662729752068639e-14 + p * w;
    p = -8.1519341976054721522e-14 + p * w;
    p = 2.6335093153082322977e-12 + p * w;
    p = -1.2975133253453532498e-11 + p * w;
    p = -5.4154120542946279317e-11 + p * w;
    p = 1.051212273321532285e-09 + p * w;
    p = -4.1126339803469836976e-09 + p * w;
    p = -2.9070369957882005086e-08 + p * w;
    p = 4.2347877827932403518e-07 + p * w;
    p = -1.3654692000834678645e-06 + p * w;
    p = -1.3882523362786468719e-05 + p * w;
    p = 0.0001867342080340571352 + p * w;
    p = -0.00074070253416626697512 + p * w;
    p = -0.0060336708714301490533 + p * w;
    p = 0.24015818242558961693 + p * w;
    p = 1.6536545626831027356 + p * w;
  } else if (w < 16.0) {
    w = std::sqrt(w) - 3.25;
    p = 2.2137376921775787049e-09;
    p = 9.0756561938885390979e-08 + p * w;
    p = -2.7517406297064545428e-07 + p * w;
    p = 1.8239629214389227755e-08 + p * w;
    p = 1.5027403968909827627e-06 + p * w;
    p = -4.013867526981546569e-06 + p * w;
    p = 2.9234449089955446044e-06 + p * w;
    p = 1.2475304481671778723e-05 + p * w;
    p = -4.7318229009055733981e-05 + p * w;
    p = 6.8284851459573175448e-05 + p * w;
    p = 2.4031110387097893999e-05 + p * w;
    p = -0.0003550375203628474796 + p * w;
    p = 0.00095328937973738049703 + p * w;
    p = -0.0016882755560235047313 + p * w;
    p = 0.0024914420961078508066 + p * w;
    p = -0.0037512085075692412107 + p * w;
    p = 0.005370914553590063617 + p * w;
    p = 1.0052589676941592334 + p * w;
    p = 3.0838856104922207635 + p * w;
  } else {
    w = std::sqrt(w) - 5.0;
    p = -2.7109920616438573243e-11;
    p = -2.5556418169965252055e-10 + p * w;
    p = 1.5076572693500548083e-09 + p * w;
    p = -3.7894654401267369937e-09 + p * w;
    p = 7.6157012080783393804e-09 + p * w;
    p = -1.4960026627149240478e-08 + p * w;
    p = 2.9147953450901080826e-08 + p * w;
    p = -6.7711997758452339498e-08 + p * w;
    p = 2.2900482228026654717e-07 + p * w;
    p = -9.9298272942317002539e-07 + p * w;
    p = 4.5260625972231537039e-06 + p * w;
    p = -1.9681778105531670567e-05 + p * w;
    p = 7.5995277030017761139e-05 + p * w;
    p = -0.00021503011930044477347 + p * w;
    p = -0.00013871931833623122026 + p * w;
    p = 1.0103004648645343977 + p * w;
    p = 4.8499064014085844221 + p * w;
  }
  double r = p * x;

  // Newton refinement: f(r) = erf(r) - x, f'(r) = 2/sqrt(pi) * exp(-r^2).
  constexpr double two_over_sqrt_pi = 1.1283791670955125739;
  for (int it = 0; it < 2; ++it) {
    const double err = std::erf(r) - x;
    r -= err / (two_over_sqrt_pi * std::exp(-r * r));
  }
  return r;
}

}  // namespace

double half_normal_quantile(double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw std::invalid_argument("confidence must lie in [0, 1]");
  if (confidence == 0.0) return 0.0;
  if (confidence == 1.0) return std::numeric_limits<double>::infinity();
  return std::numbers::sqrt2 * erf_inv(confidence);
}

double gaussian_threshold(double sigma, double confidence, ThresholdKind kind) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw std::invalid_argument("confidence must lie in [0, 1]");
  if (confidence == 1.0) return std::numeric_limits<double>::infinity();

  double z;
  if (kind == ThresholdKind::half_normal) {
    z = half_normal_quantile(confidence);
  } else {
    // one-sided standard-normal quantile, floored at zero for error
    // magnitudes (negative thresholds capture nothing anyway)
    z = confidence > 0.5 ? std::numbers::sqrt2 * erf_inv(2.0 * confidence - 1.0)
                         : 0.0;
  }
  return sigma * z;
}

MethodPredictions ensemble_uncertainty(const EnsembleTensor& predictions,
                                       std::span<const float> truths,
                                       ThresholdKind kind) {
  const std::size_t m = predictions.models;
  const std::size_t n = predictions.points;
  const std::size_t comps = predictions.components;
  if (m < 2)
    throw std::invalid_argument("ensemble baseline needs at least two models");
  if (comps < 1 || n < 1)
    throw std::invalid_argument("ensemble tensor has an empty axis");
  if (predictions.data.size() != m * n * comps)
    throw std::invalid_argument("ensemble tensor size inconsistent with shape");
  if (truths.size() != n * comps)
    throw std::invalid_argument("truth matrix does not match ensemble tensor");

  MethodPredictions out;
  out.uncertainties.resize(n);
  out.true_errors.resize(n);
  out.variances.resize(n);

  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t p = 0; p < n; ++p) {
    double std_sum = 0.0;
    double err_sq = 0.0;
    for (std::size_t c = 0; c < comps; ++c) {
      double s = 0.0;
      for (std::size_t mm = 0; mm < m; ++mm)
        s += static_cast<double>(predictions.at(mm, p, c));
      const double mu = s * inv_m;
      double var = 0.0;
      for (std::size_t mm = 0; mm < m; ++mm) {
        const double d = static_cast<double>(predictions.at(mm, p, c)) - mu;
        var += d * d;
      }
      var *= inv_m;  // population variance
      std_sum += std::sqrt(var);
      const double e = mu - static_cast<double>(truths[p * comps + c]);
      err_sq += e * e;
    }
    const double sigma = std_sum / static_cast<double>(comps);
    out.uncertainties[p] = sigma;
    out.variances[p] = sigma * sigma;
    out.true_errors[p] = std::sqrt(err_sq);
  }

  auto sigmas = out.uncertainties;
  out.threshold_at = [sigmas = std::move(sigmas), kind](std::size_t i, double c) {
    return gaussian_threshold(sigmas[i], c, kind);
  };
  return out;
}

MethodPredictions ltau_predictions(std::vector<std::vector<double>> pdfs,
                                   const BinGrid& grid,
                                   std::vector<double> true_errors) {
  if (pdfs.size() != true_errors.size())
    throw std::invalid_argument("pdf count does not match true-error count");
  if (pdfs.empty()) throw std::invalid_argument("no predictions supplied");

  MethodPredictions out;
  out.true_errors = std::move(true_errors);
  out.uncertainties.reserve(pdfs.size());
  out.variances.reserve(pdfs.size());
  for (const auto& pdf : pdfs) {
    out.uncertainties.push_back(uq::expected_error(pdf, grid));
    out.variances.push_back(pdf_variance(pdf, grid));
  }
  auto shared = std::make_shared<std::vector<std::vector<double>>>(std::move(pdfs));
  out.threshold_at = [shared, grid](std::size_t i, double c) {
    return uq::confidence_threshold((*shared)[i], grid, c);
  };
  return out;
}

CalibrationReport evaluate(const MethodPredictions& preds,
                           std::span<const double> levels) {
  CalibrationReport report;
  report.pearson = pearson(preds.uncertainties, preds.true_errors);
  report.spearman = spearman(preds.uncertainties, preds.true_errors);
  report.curve = calibration_curve(preds, levels);
  const Areas a = miscalibration_areas(report.curve);
  report.area_over = a.over;
  report.area_under = a.under;
  report.area_total = a.total;
  report.sharpness = sharpness_from_variances(preds.variances);
  return report;
}

}  // namespace ltau::calib
