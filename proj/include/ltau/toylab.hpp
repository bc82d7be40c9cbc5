// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ltau/trajlog.hpp"

namespace ltau::toy {

// Synthetic heteroscedastic regression task. Inputs are sampled uniformly
// from the in-domain box; targets are a fixed sum of sinusoids plus Gaussian
// noise whose scale is keyed to the region index derived from the first
// input coordinate. The out-of-domain split lives in a disjoint shifted box.
struct TaskSpec {
  std::size_t input_dim = 2;
  std::size_t num_train = 5000;
  std::size_t num_val = 1000;
  std::size_t num_test_id = 5000;
  std::size_t num_test_ood = 1000;
  std::vector<double> region_sigma = {0.01, 0.05, 0.15, 0.45};
  double ood_sigma = 0.15;
  double id_lo = -1.0, id_hi = 1.0;
  double ood_lo = 1.5, ood_hi = 3.5;

  std::size_t num_regions() const { return region_sigma.size(); }
};

struct Split {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> x;  // (rows, dim)
  std::vector<double> y;
  std::vector<std::uint32_t> region;  // num_regions() marks the OOD region

  std::span<const double> input(std::size_t i) const {
    return {x.data() + i * dim, dim};
  }
};

struct ToyTask {
  TaskSpec spec;
  std::uint64_t seed = 0;
  Split train, val, test_id, test_ood;
};

// Noise-free target value.
double target_fn(std::span<const double> x);

// Region of an in-domain point (equal slices of the first coordinate).
std::uint32_t region_of(const TaskSpec& spec, double x0);

ToyTask generate_task(const TaskSpec& spec, std::uint64_t seed);

enum class Activation { tanh_act, identity };

// Two hidden layers of width 32; the latent descriptor is the activation of
// the second hidden layer.
struct ToyModel {
  static constexpr std::size_t kWidth = 32;

  std::size_t input_dim = 0;
  Activation activation = Activation::tanh_act;
  std::vector<double> w1, b1;  // (kWidth, input_dim), (kWidth)
  std::vector<double> w2, b2;  // (kWidth, kWidth), (kWidth)
  std::vector<double> w3;      // (kWidth)
  double b3 = 0.0;

  static ToyModel init(std::size_t input_dim, std::uint64_t seed,
                       Activation activation = Activation::tanh_act);

  double forward(std::span<const double> x) const;
  // Also captures both hidden activations (h2 is the latent descriptor).
  double forward(std::span<const double> x, std::span<double> h1,
                 std::span<double> h2) const;

  std::size_t num_params() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + 1;
  }
};

void save_model(const std::filesystem::path& path, const ToyModel& model);
ToyModel load_model(const std::filesystem::path& path);

// Parameter gradients of the squared error (y - target)^2 for one sample.
struct ToyGradients {
  std::vector<double> w1, b1, w2, b2, w3;
  double b3 = 0.0;
};

ToyGradients gradient(const ToyModel& model, std::span<const double> x,
                      double target);

// Max relative deviation between analytic gradients and central differences
// over the given samples.
double finite_difference_gradcheck(const ToyModel& model,
                                   std::span<const double> inputs,
                                   std::span<const double> targets,
                                   double step = 1e-5);

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;  // drives batch shuffling only
};

struct TrainResult {
  ToyModel model;
  ErrorTrajectoryLog trajectory;  // |prediction - target| per epoch end
  DescriptorSet descriptors;      // train-set latents after the final epoch
  double final_train_mae = 0.0;
  double final_val_mae = 0.0;
};

// Mini-batch SGD on weighted MSE. Sample weights (empty = uniform) are
// normalized to mean 1 before use. Fully deterministic given seeds; throws
// with the epoch index if the loss stops being finite.
TrainResult train(ToyModel model, const ToyTask& task, const TrainConfig& config,
                  std::span<const double> sample_weights = {});

DescriptorSet extract_descriptors(const ToyModel& model, const Split& split);

// |prediction - target| per row.
std::vector<double> absolute_errors(const ToyModel& model, const Split& split);

}  // namespace ltau::toy
