// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ltau/calib.hpp"
#include "ltau/io.hpp"
#include "ltau/knn.hpp"
#include "ltau/reweight.hpp"
#include "ltau/toylab.hpp"
#include "ltau/trajlog.hpp"
#include "ltau/uqcore.hpp"

namespace {

using ltau::BinSpacing;
using ltau::DescriptorSet;
using ltau::ErrorTrajectoryLog;
using ltau::PdfBank;

std::string fmt(double v) { return ltau::io::format_double(v); }

void write_report(const std::filesystem::path& path, const nlohmann::json& j) {
  ltau::io::write_text(path, j.dump(2) + "\n");
}

ltau::io::MatrixF32 doubles_to_f32(const std::vector<double>& v,
                                   std::size_t rows, std::size_t cols) {
  ltau::io::MatrixF32 m;
  m.rows = rows;
  m.cols = cols;
  m.data.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    m.data[i] = static_cast<float>(v[i]);
  return m;
}

// Per-query true errors: an errs container with a single epoch row.
std::vector<double> read_truth_vector(const std::filesystem::path& path) {
  const ErrorTrajectoryLog log = ltau::read_trajectory_log(path);
  if (log.num_epochs != 1)
    throw std::runtime_error("truth file must have exactly one row, found " +
                             std::to_string(log.num_epochs));
  std::vector<double> t(log.num_samples);
  for (std::size_t i = 0; i < log.num_samples; ++i)
    t[i] = static_cast<double>(log.errors[i]);
  return t;
}

int run_build_pdfs(const std::string& errs_path, const std::string& out_path,
                   std::size_t bins, const std::string& spacing,
                   std::optional<double> eps_max, std::size_t burn_in) {
  const auto log = ltau::read_trajectory_log(errs_path);
  const BinSpacing sp =
      spacing == "linear" ? BinSpacing::linear : BinSpacing::logarithmic;
  const auto grid = ltau::make_bin_grid(log, bins, sp, eps_max);
  const auto bank = ltau::build_pdf_bank(log, grid, burn_in);
  ltau::write_pdf_bank(out_path, bank);
  return 0;
}

int run_build_index(const std::string& desc_path, const std::string& out_path,
                    bool flat, const ltau::knn::HnswParams& params,
                    std::uint64_t seed) {
  auto desc = ltau::read_descriptor_set(desc_path);
  if (flat) {
    ltau::knn::FlatIndex index(std::move(desc));
    ltau::knn::serialize_index(out_path, index);
  } else {
    ltau::knn::HnswIndex index(std::move(desc), params, seed);
    ltau::knn::serialize_index(out_path, index);
  }
  return 0;
}

int run_predict(const std::string& index_path, const std::string& bank_path,
                const std::string& queries_path, const std::string& out_csv,
                std::size_t k, std::optional<std::uint32_t> ef_search,
                std::optional<double> ood_cutoff,
                const std::string& ood_json_path, bool with_pdf,
                const std::string& out_pdfb) {
  const auto any = ltau::knn::deserialize_index(index_path);
  const auto bank = ltau::read_pdf_bank(bank_path);
  const auto queries = ltau::read_descriptor_set(queries_path);

  // shape checks before any work
  if (bank.num_samples != any.size())
    throw std::runtime_error("pdf bank covers " + std::to_string(bank.num_samples) +
                             " samples but the index holds " +
                             std::to_string(any.size()));
  if (queries.dim != any.dim())
    throw std::runtime_error("query dimension " + std::to_string(queries.dim) +
                             " does not match index dimension " +
                             std::to_string(any.dim()));

  if (k > any.size()) {
    std::fprintf(stderr, "warning: k=%zu exceeds index size %zu; clamping\n", k,
                 any.size());
    k = any.size();
  }

  std::optional<ltau::uq::OodThreshold> threshold;
  if (ood_cutoff) threshold = ltau::uq::manual_threshold(*ood_cutoff);
  if (!ood_json_path.empty()) {
    const auto j = nlohmann::json::parse(ltau::io::read_text(ood_json_path));
    ltau::uq::OodThreshold t;
    t.cutoff = j.at("cutoff").get<double>();
    t.degenerate = j.value("degenerate", false);
    if (j.contains("quantile")) t.quantile = j["quantile"].get<double>();
    threshold = t;
  }

  std::string csv = "query_id,expected_error,nn1_distance,ood_flag";
  if (with_pdf) csv += ",pdf";
  csv += "\n";

  std::vector<double> est_pdfs;  // optional (Q, B) dump
  const std::size_t b = bank.num_bins();
  if (!out_pdfb.empty()) est_pdfs.reserve(queries.num_samples * b);

  for (std::size_t q = 0; q < queries.num_samples; ++q) {
    ltau::uq::UqEstimate est;
    if (const auto* h = std::get_if<ltau::knn::HnswIndex>(&any.index)) {
      if (ef_search) {
        // route the explicit beam width through a search-capable wrapper
        struct EfView {
          const ltau::knn::HnswIndex* h;
          std::uint32_t ef;
          std::size_t size() const { return h->size(); }
          std::size_t dim() const { return h->dim(); }
          ltau::knn::NeighborList search(std::span<const float> qv,
                                         std::size_t kk) const {
            return h->search(qv, kk, ef);
          }
        };
        est = ltau::uq::estimate(queries.row(q), EfView{h, *ef_search}, bank, k,
                                 threshold);
      } else {
        est = ltau::uq::estimate(queries.row(q), *h, bank, k, threshold);
      }
    } else {
      est = ltau::uq::estimate(queries.row(q),
                               std::get<ltau::knn::FlatIndex>(any.index), bank,
                               k, threshold);
    }

    csv += std::to_string(q);
    csv += ',';
    csv += fmt(est.expected_error);
    csv += ',';
    csv += fmt(est.nn1_distance);
    csv += ',';
    csv += est.ood_flag ? (*est.ood_flag ? "true" : "false") : "";
    if (with_pdf) {
      auto arr = nlohmann::json::array();
      for (const double p : est.pdf) arr.push_back(fmt(p));
      const std::string dumped = arr.dump();
      std::string quoted = ",\"";
      for (const char ch : dumped) {  // CSV-escape embedded quotes
        quoted += ch;
        if (ch == '"') quoted += '"';
      }
      quoted += '"';
      csv += quoted;
    }
    csv += '\n';
    if (!out_pdfb.empty())
      est_pdfs.insert(est_pdfs.end(), est.pdf.begin(), est.pdf.end());
  }

  ltau::io::write_text(out_csv, csv);

  if (!out_pdfb.empty()) {
    PdfBank est_bank;
    est_bank.grid = bank.grid;
    est_bank.num_samples = queries.num_samples;
    est_bank.pdfs = std::move(est_pdfs);
    ltau::write_pdf_bank(out_pdfb, est_bank);
  }
  return 0;
}

int run_calibrate(const std::string& pdfb_path, const std::string& ensemble_path,
                  const std::string& truths_path, const std::string& report_path,
                  const std::string& curve_path, const std::string& mode) {
  if (pdfb_path.empty() == ensemble_path.empty())
    throw std::runtime_error("calibrate needs exactly one of --pdfb / --ensemble");

  ltau::calib::MethodPredictions preds;
  nlohmann::json config;
  config["truths"] = truths_path;

  if (!pdfb_path.empty()) {
    const auto bank = ltau::read_pdf_bank(pdfb_path);
    auto truths = read_truth_vector(truths_path);
    if (truths.size() != bank.num_samples)
      throw std::runtime_error("truth count " + std::to_string(truths.size()) +
                               " does not match pdf count " +
                               std::to_string(bank.num_samples));
    std::vector<std::vector<double>> pdfs(bank.num_samples);
    for (std::size_t i = 0; i < bank.num_samples; ++i) {
      const auto row = bank.row(i);
      pdfs[i].assign(row.begin(), row.end());
    }
    preds = ltau::calib::ltau_predictions(std::move(pdfs), bank.grid,
                                          std::move(truths));
    config["method"] = "ltau";
    config["pdfb"] = pdfb_path;
  } else {
    const auto loaded = ltau::io::read_matrix(ensemble_path, "ens");
    if (!loaded.meta.contains("models"))
      throw std::runtime_error("ensemble sidecar missing 'models'");
    ltau::calib::EnsembleTensor tensor;
    tensor.models = loaded.meta["models"].get<std::size_t>();
    tensor.components = loaded.mat.cols;
    if (tensor.models == 0 || loaded.mat.rows % tensor.models != 0)
      throw std::runtime_error("ensemble rows not divisible by model count");
    tensor.points = loaded.mat.rows / tensor.models;
    tensor.data = loaded.mat.data;

    const auto truths = ltau::io::read_matrix(truths_path, "mat");
    if (truths.mat.rows != tensor.points || truths.mat.cols != tensor.components)
      throw std::runtime_error("truth matrix shape does not match ensemble tensor");

    const auto kind = mode == "zscore" ? ltau::calib::ThresholdKind::gaussian_z
                                       : ltau::calib::ThresholdKind::half_normal;
    preds = ltau::calib::ensemble_uncertainty(tensor, truths.mat.data, kind);
    config["method"] = "ensemble";
    config["ensemble"] = ensemble_path;
    config["threshold_mode"] = mode;
  }

  const auto levels = ltau::calib::default_levels();
  const auto report = ltau::calib::evaluate(preds, levels);

  nlohmann::json j;
  j["config"] = config;
  j["n_test"] = preds.true_errors.size();
  j["pearson"] = report.pearson;
  j["spearman"] = report.spearman;
  j["area_over"] = report.area_over;
  j["area_under"] = report.area_under;
  j["area_total"] = report.area_total;
  j["sharpness"] = report.sharpness;
  write_report(report_path, j);

  if (!curve_path.empty()) {
    std::string csv = "confidence,observed_fraction\n";
    for (const auto& p : report.curve)
      csv += fmt(p.confidence) + "," + fmt(p.observed) + "\n";
    ltau::io::write_text(curve_path, csv);
  }
  return 0;
}

int run_ood_threshold(const std::string& desc_path, const std::string& index_path,
                      double quantile, const std::string& out_path) {
  const auto desc = ltau::read_descriptor_set(desc_path);
  const auto any = ltau::knn::deserialize_index(index_path);

  ltau::uq::OodThreshold t;
  if (const auto* h = std::get_if<ltau::knn::HnswIndex>(&any.index))
    t = ltau::uq::fit_ood_threshold(desc, *h, quantile);
  else
    t = ltau::uq::fit_ood_threshold(
        desc, std::get<ltau::knn::FlatIndex>(any.index), quantile);

  nlohmann::json j;
  j["config"] = {{"desc", desc_path}, {"index", index_path}, {"quantile", quantile}};
  j["cutoff"] = t.cutoff;
  j["quantile"] = quantile;
  j["degenerate"] = t.degenerate;
  j["n"] = desc.num_samples;
  write_report(out_path, j);
  return 0;
}

int run_reweight(const std::string& errs_path, const std::string& scheme_name,
                 std::optional<double> lambda, const std::string& out_path) {
  const auto log = ltau::read_trajectory_log(errs_path);
  const auto scores = ltau::reweight::difficulty(log);

  ltau::reweight::WeightScheme scheme;
  if (scheme_name == "uniform") {
    scheme = ltau::reweight::uniform_scheme();
  } else if (scheme_name == "easy") {
    scheme = ltau::reweight::easy_scheme(lambda.value_or(ltau::reweight::kLambdaEasy));
  } else if (scheme_name == "hard") {
    scheme = ltau::reweight::hard_scheme(lambda.value_or(ltau::reweight::kLambdaHard));
  } else {
    throw std::runtime_error("unknown scheme '" + scheme_name + "'");
  }

  const auto w = ltau::reweight::weights(scores, scheme);
  nlohmann::json extra;
  extra["scheme"] = scheme_name;
  extra["lambda"] = scheme.lambda;
  extra["reference_mae"] = fmt(scores.reference_mae);
  ltau::io::write_matrix(out_path, doubles_to_f32(w, w.size(), 1), "weights",
                         extra);
  return 0;
}

int run_toy_train(const std::string& outdir, std::uint64_t seed,
                  const ltau::toy::TaskSpec& spec,
                  const ltau::toy::TrainConfig& config,
                  const std::string& weights_path) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  const fs::path dir(outdir);

  const auto task = ltau::toy::generate_task(spec, seed);
  auto model = ltau::toy::ToyModel::init(spec.input_dim, seed);

  std::vector<double> weights;
  if (!weights_path.empty()) {
    const auto loaded = ltau::io::read_matrix(weights_path, "weights");
    if (loaded.mat.rows != spec.num_train || loaded.mat.cols != 1)
      throw std::runtime_error("weights file shape does not match train size");
    weights.assign(loaded.mat.data.begin(), loaded.mat.data.end());
  }

  const auto result = ltau::toy::train(std::move(model), task, config, weights);

  ltau::write_trajectory_log(dir / "train.errs", result.trajectory);
  ltau::write_descriptor_set(dir / "train.desc", result.descriptors);
  ltau::write_descriptor_set(dir / "test_id.desc",
                             extract_descriptors(result.model, task.test_id));
  ltau::write_descriptor_set(dir / "test_ood.desc",
                             extract_descriptors(result.model, task.test_ood));

  const auto id_errors = ltau::toy::absolute_errors(result.model, task.test_id);
  const auto ood_errors = ltau::toy::absolute_errors(result.model, task.test_ood);
  ltau::io::write_matrix(dir / "test_id.errs",
                         doubles_to_f32(id_errors, 1, id_errors.size()), "errs");
  ltau::io::write_matrix(dir / "test_ood.errs",
                         doubles_to_f32(ood_errors, 1, ood_errors.size()), "errs");
  ltau::io::write_matrix(dir / "test_id.inputs",
                         doubles_to_f32(task.test_id.x, task.test_id.rows,
                                        task.test_id.dim),
                         "mat");
  ltau::io::write_matrix(dir / "test_ood.inputs",
                         doubles_to_f32(task.test_ood.x, task.test_ood.rows,
                                        task.test_ood.dim),
                         "mat");
  ltau::toy::save_model(dir / "model.json", result.model);

  nlohmann::json j;
  j["seed"] = seed;
  j["config"] = {{"epochs", config.epochs},
                 {"learning_rate", config.learning_rate},
                 {"batch_size", config.batch_size},
                 {"input_dim", spec.input_dim},
                 {"num_train", spec.num_train},
                 {"num_val", spec.num_val},
                 {"num_test_id", spec.num_test_id},
                 {"num_test_ood", spec.num_test_ood},
                 {"weights", weights_path}};
  j["region_sigma"] = spec.region_sigma;
  j["ood_sigma"] = spec.ood_sigma;
  j["final_train_mae"] = result.final_train_mae;
  j["final_val_mae"] = result.final_val_mae;
  j["test_id_region"] = task.test_id.region;
  write_report(dir / "task.json", j);
  return 0;
}

int run_bench(const std::string& index_path, const std::string& queries_path,
              std::size_t k, std::uint32_t ef_search, std::size_t repeats,
              const std::string& model_path, const std::string& inputs_path,
              unsigned threads, const std::string& out_path) {
  using clock = std::chrono::steady_clock;
  const auto any = ltau::knn::deserialize_index(index_path);
  const auto queries = ltau::read_descriptor_set(queries_path);
  if (queries.dim != any.dim())
    throw std::runtime_error("query dimension does not match index dimension");

  const auto time_batch = [&]() {
    const auto t0 = clock::now();
    if (const auto* h = std::get_if<ltau::knn::HnswIndex>(&any.index)) {
      struct EfView {
        const ltau::knn::HnswIndex* h;
        std::uint32_t ef;
        std::size_t size() const { return h->size(); }
        ltau::knn::NeighborList search(std::span<const float> q,
                                       std::size_t kk) const {
          return h->search(q, kk, ef);
        }
      };
      ltau::knn::batch_search(EfView{h, ef_search}, queries, k, threads);
    } else {
      ltau::knn::batch_search(std::get<ltau::knn::FlatIndex>(any.index), queries,
                              k, threads);
    }
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  time_batch();  // warm-up
  std::vector<double> runs;
  for (std::size_t r = 0; r < repeats; ++r) runs.push_back(time_batch());
  const double best_ms = *std::min_element(runs.begin(), runs.end());

  nlohmann::json j;
  j["config"] = {{"index", index_path}, {"queries", queries_path},
                 {"k", k},             {"ef_search", ef_search},
                 {"repeats", repeats}, {"threads", threads}};
  j["kind"] = any.kind() == ltau::knn::IndexKind::flat ? "flat" : "hnsw";
  j["n"] = any.size();
  j["num_queries"] = queries.num_samples;
  j["runs_ms"] = runs;
  j["best_ms"] = best_ms;
  j["queries_per_second"] =
      static_cast<double>(queries.num_samples) / (best_ms / 1000.0);
  j["mean_latency_us"] =
      best_ms * 1000.0 / static_cast<double>(queries.num_samples);

  if (!model_path.empty()) {
    if (inputs_path.empty())
      throw std::runtime_error("--model needs --inputs for forward-pass timing");
    const auto model = ltau::toy::load_model(model_path);
    const auto inputs = ltau::io::read_matrix(inputs_path, "mat");
    if (inputs.mat.cols != model.input_dim)
      throw std::runtime_error("inputs file does not match model input_dim");
    std::vector<double> x(inputs.mat.cols);
    const auto t0 = clock::now();
    double sink = 0.0;
    for (std::size_t i = 0; i < inputs.mat.rows; ++i) {
      const auto row = inputs.mat.row(i);
      for (std::size_t c = 0; c < row.size(); ++c)
        x[c] = static_cast<double>(row[c]);
      sink += model.forward(x);
    }
    const double forward_ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    const double uq_ms =
        best_ms * static_cast<double>(inputs.mat.rows) /
        static_cast<double>(queries.num_samples);
    j["forward_ms"] = forward_ms;
    j["forward_sink"] = sink;  // defeats dead-code elimination
    j["uq_share_percent"] = 100.0 * uq_ms / (uq_ms + forward_ms);
  }
  write_report(out_path, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ltau: uncertainty quantification for regression models from "
      "training-error trajectories and latent-space nearest neighbors"};
  app.require_subcommand(1);
  std::function<int()> action;

  // --- build-pdfs ---
  {
    auto* cmd = app.add_subcommand(
        "build-pdfs", "Convert an error-trajectory log into per-sample PDFs");
    auto errs = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto bins = std::make_shared<std::size_t>(ltau::kDefaultNumBins);
    auto spacing = std::make_shared<std::string>("log");
    auto eps_max = std::make_shared<double>(0.0);
    auto burn_in = std::make_shared<std::size_t>(0);
    cmd->add_option("--errs", *errs, "input trajectory log")->required();
    cmd->add_option("--out", *out, "output pdf bank")->required();
    cmd->add_option("--bins", *bins, "number of bins (log spacing adds an underflow bin)");
    cmd->add_option("--spacing", *spacing, "bin spacing: log or linear")
        ->check(CLI::IsMember({"log", "linear"}));
    auto* eps_opt = cmd->add_option("--eps-max", *eps_max,
                                    "explicit top edge (default: max observed error)");
    cmd->add_option("--burn-in", *burn_in, "epochs to skip at the start");
    cmd->callback([=, &action]() {
      action = [=]() {
        return run_build_pdfs(*errs, *out, *bins, *spacing,
                              eps_opt->count() ? std::optional<double>(*eps_max)
                                               : std::nullopt,
                              *burn_in);
      };
    });
  }

  // --- build-index ---
  {
    auto* cmd = app.add_subcommand("build-index",
                                   "Build a flat or HNSW index over descriptors");
    auto desc = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto flat = std::make_shared<bool>(false);
    auto hnsw = std::make_shared<bool>(false);
    auto params = std::make_shared<ltau::knn::HnswParams>();
    auto seed = std::make_shared<std::uint64_t>(0);
    cmd->add_option("--desc", *desc, "input descriptor set")->required();
    cmd->add_option("--out", *out, "output index file")->required();
    cmd->add_flag("--flat", *flat, "exact brute-force index");
    cmd->add_flag("--hnsw", *hnsw, "approximate HNSW index");
    cmd->add_option("--m", params->m, "HNSW links per node");
    cmd->add_option("--ef-construction", params->ef_construction,
                    "HNSW construction beam width");
    cmd->add_option("--ef-search", params->ef_search, "HNSW default search beam");
    cmd->add_option("--seed", *seed, "level-assignment RNG seed");
    cmd->callback([=, &action]() {
      action = [=]() {
        if (*flat == *hnsw)
          throw std::runtime_error("pick exactly one of --flat / --hnsw");
        return run_build_index(*desc, *out, *flat, *params, *seed);
      };
    });
  }

  // --- predict ---
  {
    auto* cmd = app.add_subcommand(
        "predict", "Estimate error PDFs and scalar UQ for query descriptors");
    auto index = std::make_shared<std::string>();
    auto pdfb = std::make_shared<std::string>();
    auto queries = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto k = std::make_shared<std::size_t>(ltau::uq::kDefaultNeighbors);
    auto ef = std::make_shared<std::uint32_t>(0);
    auto cutoff = std::make_shared<double>(0.0);
    auto ood_json = std::make_shared<std::string>();
    auto with_pdf = std::make_shared<bool>(false);
    auto out_pdfb = std::make_shared<std::string>();
    cmd->add_option("--index", *index, "index file")->required();
    cmd->add_option("--pdfb", *pdfb, "training pdf bank")->required();
    cmd->add_option("--queries", *queries, "query descriptor set")->required();
    cmd->add_option("--out", *out, "output CSV")->required();
    cmd->add_option("--k", *k, "neighbors to average");
    auto* ef_opt = cmd->add_option("--ef-search", *ef, "HNSW search beam override");
    auto* cut_opt = cmd->add_option("--ood-cutoff", *cutoff, "manual OOD distance cutoff");
    cmd->add_option("--ood-json", *ood_json, "cutoff JSON from ood-threshold");
    cmd->add_flag("--with-pdf", *with_pdf, "append the full pdf as a JSON column");
    cmd->add_option("--out-pdfb", *out_pdfb, "also write estimated PDFs as a bank");
    cmd->callback([=, &action]() {
      action = [=]() {
        return run_predict(*index, *pdfb, *queries, *out, *k,
                           ef_opt->count() ? std::optional<std::uint32_t>(*ef)
                                           : std::nullopt,
                           cut_opt->count() ? std::optional<double>(*cutoff)
                                            : std::nullopt,
                           *ood_json, *with_pdf, *out_pdfb);
      };
    });
  }

  // --- calibrate ---
  {
    auto* cmd = app.add_subcommand(
        "calibrate", "Correlations, calibration curve, areas, and sharpness");
    auto pdfb = std::make_shared<std::string>();
    auto ens = std::make_shared<std::string>();
    auto truths = std::make_shared<std::string>();
    auto report = std::make_shared<std::string>();
    auto curve = std::make_shared<std::string>();
    auto mode = std::make_shared<std::string>("half-normal");
    cmd->add_option("--pdfb", *pdfb, "estimated per-query pdf bank (LTAU mode)");
    cmd->add_option("--ensemble", *ens, "ensemble prediction tensor (Ensemble mode)");
    cmd->add_option("--truths", *truths, "true errors / truth matrix")->required();
    cmd->add_option("--out-report", *report, "output report JSON")->required();
    cmd->add_option("--out-curve", *curve, "output calibration-curve CSV");
    cmd->add_option("--threshold-mode", *mode,
                    "ensemble threshold rule: half-normal or zscore")
        ->check(CLI::IsMember({"half-normal", "zscore"}));
    cmd->callback([=, &action]() {
      action = [=]() {
        return run_calibrate(*pdfb, *ens, *truths, *report, *curve, *mode);
      };
    });
  }

  // --- ood-threshold ---
  {
    auto* cmd = app.add_subcommand(
        "ood-threshold", "Fit the OOD distance cutoff from training 1-NN distances");
    auto desc = std::make_shared<std::string>();
    auto index = std::make_shared<std::string>();
    auto quantile = std::make_shared<double>(ltau::uq::kDefaultOodQuantile);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--desc", *desc, "training descriptor set")->required();
    cmd->add_option("--index", *index, "index built over the same descriptors")
        ->required();
    cmd->add_option("--quantile", *quantile, "cutoff quantile");
    cmd->add_option("--out", *out, "output cutoff JSON")->required();
    cmd->callback([=, &action]() {
      action = [=]() { return run_ood_threshold(*desc, *index, *quantile, *out); };
    });
  }

  // --- reweight ---
  {
    auto* cmd = app.add_subcommand(
        "reweight", "Difficulty-based per-sample loss weights from a trajectory");
    auto errs = std::make_shared<std::string>();
    auto scheme = std::make_shared<std::string>();
    auto lambda = std::make_shared<double>(0.0);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--errs", *errs, "input trajectory log")->required();
    cmd->add_option("--scheme", *scheme, "uniform, easy, or hard")
        ->required()
        ->check(CLI::IsMember({"uniform", "easy", "hard"}));
    auto* lam_opt = cmd->add_option("--lambda", *lambda, "exponent scale");
    cmd->add_option("--out", *out, "output weights container")->required();
    cmd->callback([=, &action]() {
      action = [=]() {
        return run_reweight(*errs, *scheme,
                            lam_opt->count() ? std::optional<double>(*lambda)
                                             : std::nullopt,
                            *out);
      };
    });
  }

  // --- toy-train ---
  {
    auto* cmd = app.add_subcommand(
        "toy-train", "Train the synthetic regression task and emit logs");
    auto outdir = std::make_shared<std::string>();
    auto seed = std::make_shared<std::uint64_t>(0);
    auto spec = std::make_shared<ltau::toy::TaskSpec>();
    auto config = std::make_shared<ltau::toy::TrainConfig>();
    auto weights = std::make_shared<std::string>();
    cmd->add_option("--outdir", *outdir, "output directory")->required();
    cmd->add_option("--seed", *seed, "master seed (data, init, shuffling)");
    cmd->add_option("--train", spec->num_train, "training samples");
    cmd->add_option("--val", spec->num_val, "validation samples");
    cmd->add_option("--test-id", spec->num_test_id, "in-domain test samples");
    cmd->add_option("--test-ood", spec->num_test_ood, "out-of-domain test samples");
    cmd->add_option("--input-dim", spec->input_dim, "input dimension");
    cmd->add_option("--epochs", config->epochs, "training epochs");
    cmd->add_option("--lr", config->learning_rate, "SGD learning rate");
    cmd->add_option("--batch", config->batch_size, "mini-batch size");
    cmd->add_option("--weights", *weights, "per-sample weights container");
    cmd->callback([=, &action]() {
      action = [=]() {
        config->seed = *seed;
        return run_toy_train(*outdir, *seed, *spec, *config, *weights);
      };
    });
  }

  // --- bench ---
  {
    auto* cmd = app.add_subcommand(
        "bench", "Batch-query throughput and UQ share of prediction time");
    auto index = std::make_shared<std::string>();
    auto queries = std::make_shared<std::string>();
    auto k = std::make_shared<std::size_t>(ltau::uq::kDefaultNeighbors);
    auto ef = std::make_shared<std::uint32_t>(16);
    auto repeats = std::make_shared<std::size_t>(3);
    auto model = std::make_shared<std::string>();
    auto inputs = std::make_shared<std::string>();
    auto threads = std::make_shared<unsigned>(1);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--index", *index, "index file")->required();
    cmd->add_option("--queries", *queries, "query descriptor set")->required();
    cmd->add_option("--k", *k, "neighbors per query");
    cmd->add_option("--ef-search", *ef, "HNSW search beam");
    cmd->add_option("--repeats", *repeats, "timed repetitions");
    cmd->add_option("--model", *model, "toy model for forward-pass share");
    cmd->add_option("--inputs", *inputs, "raw inputs matching the model");
    cmd->add_option("--threads", *threads, "batch worker threads");
    cmd->add_option("--out", *out, "output JSON")->required();
    cmd->callback([=, &action]() {
      action = [=]() {
        return run_bench(*index, *queries, *k, *ef, *repeats, *model, *inputs,
                         *threads, *out);
      };
    });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    return action ? action() : 1;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = e.what();
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 1;
  }
}
