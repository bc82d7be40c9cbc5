// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/toylab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "ltau/io.hpp"
#include "ltau/rng.hpp"

namespace ltau::toy {

namespace {

constexpr std::uint64_t kDataStream = 0x7a11;
constexpr std::uint64_t kInitStream = 0x1417;

double activate(Activation a, double z) {
  return a == Activation::tanh_act ? std::tanh(z) : z;
}

// derivative expressed through the activation value
double activate_grad(Activation a, double h) {
  return a == Activation::tanh_act ? 1.0 - h * h : 1.0;
}

Split sample_split(const TaskSpec& spec, SplitMix64& rng, std::size_t rows,
                   bool ood) {
  Split s;
  s.rows = rows;
  s.dim = spec.input_dim;
  s.x.resize(rows * spec.input_dim);
  s.y.resize(rows);
  s.region.resize(rows);
  const double lo = ood ? spec.ood_lo : spec.id_lo;
  const double hi = ood ? spec.ood_hi : spec.id_hi;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < spec.input_dim; ++j)
      s.x[i * spec.input_dim + j] = rng.uniform(lo, hi);
    const std::uint32_t r =
        ood ? static_cast<std::uint32_t>(spec.num_regions())
            : region_of(spec, s.x[i * spec.input_dim]);
    const double sigma = ood ? spec.ood_sigma : spec.region_sigma[r];
    s.region[i] = r;
    s.y[i] = target_fn(s.input(i)) + sigma * rng.normal();
  }
  return s;
}

}  // namespace

double target_fn(std::span<const double> x) {
  double y = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j)
    y += std::sin((2.0 + static_cast<double>(j)) * x[j] + 0.7 * static_cast<double>(j)) /
         (1.0 + static_cast<double>(j));
  y += 0.5 * std::sin(1.5 * x.front() * x.back());
  return y;
}

std::uint32_t region_of(const TaskSpec& spec, double x0) {
  const double t = (x0 - spec.id_lo) / (spec.id_hi - spec.id_lo);
  const auto r = static_cast<std::int64_t>(
      std::floor(t * static_cast<double>(spec.num_regions())));
  return static_cast<std::uint32_t>(
      std::clamp<std::int64_t>(r, 0, static_cast<std::int64_t>(spec.num_regions()) - 1));
}

ToyTask generate_task(const TaskSpec& spec, std::uint64_t seed) {
  if (spec.input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (spec.region_sigma.empty())
    throw std::invalid_argument("need at least one region sigma");
  for (const double s : spec.region_sigma)
    if (!(s > 0.0)) throw std::invalid_argument("region sigmas must be positive");
  if (!(spec.id_hi > spec.id_lo) || !(spec.ood_hi > spec.ood_lo))
    throw std::invalid_argument("sampling boxes must have positive extent");
  if (spec.ood_lo < spec.id_hi && spec.id_lo < spec.ood_hi)
    throw std::invalid_argument("ID and OOD boxes must be disjoint");

  ToyTask task;
  task.spec = spec;
  task.seed = seed;
  SplitMix64 rng(mix_seed(seed, kDataStream));
  task.train = sample_split(spec, rng, spec.num_train, false);
  task.val = sample_split(spec, rng, spec.num_val, false);
  task.test_id = sample_split(spec, rng, spec.num_test_id, false);
  task.test_ood = sample_split(spec, rng, spec.num_test_ood, true);
  return task;
}

ToyModel ToyModel::init(std::size_t input_dim, std::uint64_t seed,
                        Activation activation) {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  ToyModel m;
  m.input_dim = input_dim;
  m.activation = activation;
  m.w1.resize(kWidth * input_dim);
  m.b1.assign(kWidth, 0.0);
  m.w2.resize(kWidth * kWidth);
  m.b2.assign(kWidth, 0.0);
  m.w3.resize(kWidth);
  m.b3 = 0.0;

  SplitMix64 rng(mix_seed(seed, kInitStream));
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& v : m.w1) v = rng.uniform(-s1, s1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(kWidth));
  for (double& v : m.w2) v = rng.uniform(-s2, s2);
  for (double& v : m.w3) v = rng.uniform(-s2, s2);
  return m;
}

double ToyModel::forward(std::span<const double> x) const {
  double h1[kWidth], h2[kWidth];
  return forward(x, h1, h2);
}

double ToyModel::forward(std::span<const double> x, std::span<double> h1,
                         std::span<double> h2) const {
  if (x.size() != input_dim)
    throw std::invalid_argument("input dimension mismatch");
  for (std::size_t j = 0; j < kWidth; ++j) {
    double z = b1[j];
    const double* row = w1.data() + j * input_dim;
    for (std::size_t i = 0; i < input_dim; ++i) z += row[i] * x[i];
    h1[j] = activate(activation, z);
  }
  for (std::size_t k = 0; k < kWidth; ++k) {
    double z = b2[k];
    const double* row = w2.data() + k * kWidth;
    for (std::size_t j = 0; j < kWidth; ++j) z += row[j] * h1[j];
    h2[k] = activate(activation, z);
  }
  double y = b3;
  for (std::size_t k = 0; k < kWidth; ++k) y += w3[k] * h2[k];
  return y;
}

namespace {

// Backprop of d/dparams [ scale * (y - target)^2 ] into `out`; returns the
// prediction so callers reuse the forward pass.
double accumulate_gradient(const ToyModel& m, std::span<const double> x,
                           double target, double scale, ToyGradients& out) {
  constexpr std::size_t w = ToyModel::kWidth;
  double h1[w], h2[w];
  const double y = m.forward(x, h1, h2);
  const double dy = 2.0 * scale * (y - target);

  double dz2[w];
  for (std::size_t k = 0; k < w; ++k) {
    out.w3[k] += dy * h2[k];
    dz2[k] = dy * m.w3[k] * activate_grad(m.activation, h2[k]);
  }
  out.b3 += dy;

  double dh1[w] = {};
  for (std::size_t k = 0; k < w; ++k) {
    const double* row = m.w2.data() + k * w;
    double* grow = out.w2.data() + k * w;
    for (std::size_t j = 0; j < w; ++j) {
      grow[j] += dz2[k] * h1[j];
      dh1[j] += dz2[k] * row[j];
    }
    out.b2[k] += dz2[k];
  }

  for (std::size_t j = 0; j < w; ++j) {
    const double dz1 = dh1[j] * activate_grad(m.activation, h1[j]);
    double* grow = out.w1.data() + j * m.input_dim;
    for (std::size_t i = 0; i < m.input_dim; ++i) grow[i] += dz1 * x[i];
    out.b1[j] += dz1;
  }
  return y;
}

ToyGradients zero_gradients(const ToyModel& m) {
  ToyGradients g;
  g.w1.assign(m.w1.size(), 0.0);
  g.b1.assign(m.b1.size(), 0.0);
  g.w2.assign(m.w2.size(), 0.0);
  g.b2.assign(m.b2.size(), 0.0);
  g.w3.assign(m.w3.size(), 0.0);
  g.b3 = 0.0;
  return g;
}

void apply_update(ToyModel& m, const ToyGradients& g, double step) {
  for (std::size_t i = 0; i < m.w1.size(); ++i) m.w1[i] -= step * g.w1[i];
  for (std::size_t i = 0; i < m.b1.size(); ++i) m.b1[i] -= step * g.b1[i];
  for (std::size_t i = 0; i < m.w2.size(); ++i) m.w2[i] -= step * g.w2[i];
  for (std::size_t i = 0; i < m.b2.size(); ++i) m.b2[i] -= step * g.b2[i];
  for (std::size_t i = 0; i < m.w3.size(); ++i) m.w3[i] -= step * g.w3[i];
  m.b3 -= step * g.b3;
}

}  // namespace

ToyGradients gradient(const ToyModel& model, std::span<const double> x,
                      double target) {
  ToyGradients g = zero_gradients(model);
  accumulate_gradient(model, x, target, 1.0, g);
  return g;
}

double finite_difference_gradcheck(const ToyModel& model,
                                   std::span<const double> inputs,
                                   std::span<const double> targets,
                                   double step) {
  if (targets.empty() || inputs.size() != targets.size() * model.input_dim)
    throw std::invalid_argument("gradcheck inputs inconsistent with targets");

  double worst = 0.0;
  ToyModel probe = model;
  const auto check = [&](double* param, double analytic,
                         std::span<const double> x, double t) {
    const double saved = *param;
    *param = saved + step;
    const double up = probe.forward(x) - t;
    *param = saved - step;
    const double dn = probe.forward(x) - t;
    *param = saved;
    const double numeric = (up * up - dn * dn) / (2.0 * step);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, rel);
  };

  for (std::size_t s = 0; s < targets.size(); ++s) {
    const std::span<const double> x(inputs.data() + s * model.input_dim,
                                    model.input_dim);
    const double t = targets[s];
    const ToyGradients g = gradient(model, x, t);
    for (std::size_t i = 0; i < g.w1.size(); ++i) check(&probe.w1[i], g.w1[i], x, t);
    for (std::size_t i = 0; i < g.b1.size(); ++i) check(&probe.b1[i], g.b1[i], x, t);
    for (std::size_t i = 0; i < g.w2.size(); ++i) check(&probe.w2[i], g.w2[i], x, t);
    for (std::size_t i = 0; i < g.b2.size(); ++i) check(&probe.b2[i], g.b2[i], x, t);
    for (std::size_t i = 0; i < g.w3.size(); ++i) check(&probe.w3[i], g.w3[i], x, t);
    check(&probe.b3, g.b3, x, t);
  }
  return worst;
}

TrainResult train(ToyModel model, const ToyTask& task, const TrainConfig& config,
                  std::span<const double> sample_weights) {
  const std::size_t n = task.train.rows;
  if (n < 1) throw std::invalid_argument("empty training split");
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (model.input_dim != task.train.dim)
    throw std::invalid_argument("model input dimension does not match task");

  std::vector<double> weights(n, 1.0);
  if (!sample_weights.empty()) {
    if (sample_weights.size() != n)
      throw std::invalid_argument("sample weight count does not match train size");
    const double m =
        std::accumulate(sample_weights.begin(), sample_weights.end(), 0.0) /
        static_cast<double>(n);
    if (!(m > 0.0)) throw std::invalid_argument("sample weights must have positive mean");
    for (std::size_t i = 0; i < n; ++i) weights[i] = sample_weights[i] / m;
  }

  TrainResult result;
  result.trajectory.num_epochs = config.epochs;
  result.trajectory.num_samples = n;
  result.trajectory.errors.resize(config.epochs * n);

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    SplitMix64 shuffle_rng(mix_seed(config.seed, epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, n);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      ToyGradients grads = zero_gradients(model);
      for (std::size_t b = begin; b < end; ++b) {
        const std::uint32_t i = order[b];
        const double pred =
            accumulate_gradient(model, task.train.input(i), task.train.y[i],
                                weights[i] * inv_batch, grads);
        const double diff = pred - task.train.y[i];
        epoch_loss += weights[i] * diff * diff;
      }
      apply_update(model, grads, config.learning_rate);
    }
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("training diverged at epoch " +
                               std::to_string(epoch + 1) + " (non-finite loss)");

    float* row = result.trajectory.errors.data() + epoch * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double err = std::abs(model.forward(task.train.input(i)) - task.train.y[i]);
      if (!std::isfinite(err))
        throw std::runtime_error("training diverged at epoch " +
                                 std::to_string(epoch + 1) + " (non-finite error)");
      row[i] = static_cast<float>(err);
    }
  }

  result.descriptors = extract_descriptors(model, task.train);

  const auto last = result.trajectory.epoch_row(config.epochs - 1);
  double train_sum = 0.0;
  for (const float v : last) train_sum += static_cast<double>(v);
  result.final_train_mae = train_sum / static_cast<double>(n);

  const auto val_errors = absolute_errors(model, task.val);
  result.final_val_mae =
      std::accumulate(val_errors.begin(), val_errors.end(), 0.0) /
      static_cast<double>(val_errors.size());

  result.model = std::move(model);
  return result;
}

DescriptorSet extract_descriptors(const ToyModel& model, const Split& split) {
  DescriptorSet set;
  set.num_samples = split.rows;
  set.dim = ToyModel::kWidth;
  set.vectors.resize(split.rows * ToyModel::kWidth);
  double h1[ToyModel::kWidth], h2[ToyModel::kWidth];
  for (std::size_t i = 0; i < split.rows; ++i) {
    model.forward(split.input(i), h1, h2);
    float* out = set.vectors.data() + i * ToyModel::kWidth;
    for (std::size_t k = 0; k < ToyModel::kWidth; ++k)
      out[k] = static_cast<float>(h2[k]);
  }
  return set;
}

std::vector<double> absolute_errors(const ToyModel& model, const Split& split) {
  std::vector<double> errors(split.rows);
  for (std::size_t i = 0; i < split.rows; ++i)
    errors[i] = std::abs(model.forward(split.input(i)) - split.y[i]);
  return errors;
}

namespace {

nlohmann::json doubles_to_json(std::span<const double> v) {
  auto arr = nlohmann::json::array();
  for (const double x : v) arr.push_back(io::format_double(x));
  return arr;
}

std::vector<double> doubles_from_json(const nlohmann::json& arr,
                                      std::size_t expect) {
  if (!arr.is_array() || arr.size() != expect)
    throw std::runtime_error("model file: wrong parameter block size");
  std::vector<double> v;
  v.reserve(expect);
  for (const auto& e : arr) v.push_back(io::parse_double(e.get<std::string>()));
  return v;
}

}  // namespace

void save_model(const std::filesystem::path& path, const ToyModel& model) {
  nlohmann::json j;
  j["kind"] = "toy-model";
  j["input_dim"] = model.input_dim;
  j["width"] = ToyModel::kWidth;
  j["activation"] =
      model.activation == Activation::tanh_act ? "tanh" : "identity";
  j["w1"] = doubles_to_json(model.w1);
  j["b1"] = doubles_to_json(model.b1);
  j["w2"] = doubles_to_json(model.w2);
  j["b2"] = doubles_to_json(model.b2);
  j["w3"] = doubles_to_json(model.w3);
  j["b3"] = io::format_double(model.b3);
  io::write_text(path, j.dump(2) + "\n");
}

ToyModel load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt model file " + path.string() + ": " + e.what());
  }
  if (!j.contains("kind") || j["kind"] != "toy-model")
    throw std::runtime_error("not a toy model file: " + path.string());
  if (j.at("width").get<std::size_t>() != ToyModel::kWidth)
    throw std::runtime_error("model file: unsupported width");

  ToyModel m;
  m.input_dim = j.at("input_dim").get<std::size_t>();
  if (m.input_dim < 1) throw std::runtime_error("model file: bad input_dim");
  const std::string act = j.at("activation").get<std::string>();
  if (act == "tanh")
    m.activation = Activation::tanh_act;
  else if (act == "identity")
    m.activation = Activation::identity;
  else
    throw std::runtime_error("model file: unknown activation '" + act + "'");

  constexpr std::size_t w = ToyModel::kWidth;
  m.w1 = doubles_from_json(j.at("w1"), w * m.input_dim);
  m.b1 = doubles_from_json(j.at("b1"), w);
  m.w2 = doubles_from_json(j.at("w2"), w * w);
  m.b2 = doubles_from_json(j.at("b2"), w);
  m.w3 = doubles_from_json(j.at("w3"), w);
  m.b3 = io::parse_double(j.at("b3").get<std::string>());
  return m;
}

}  // namespace ltau::toy
