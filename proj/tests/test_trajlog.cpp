// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/trajlog.hpp"

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ltau/io.hpp"
#include "test_support.hpp"

using namespace ltau;

TEST_SUITE_BEGIN("trajlog");

TEST_CASE("trajectory log round-trips bit-exactly") {
  test::TempDir dir("traj_rt");
  ErrorTrajectoryLog log;
  log.num_epochs = 2;
  log.num_samples = 3;
  log.errors = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
  write_trajectory_log(dir.file("a.errs"), log);

  const auto back = read_trajectory_log(dir.file("a.errs"));
  CHECK(back.num_epochs == 2);
  CHECK(back.num_samples == 3);
  CHECK(back.errors == log.errors);
  CHECK(back.at(0, 2) == 0.3f);
  CHECK(back.at(1, 0) == 0.4f);
}

TEST_CASE("payload length inconsistent with sidecar is rejected") {
  test::TempDir dir("traj_sz");
  ErrorTrajectoryLog log;
  log.num_epochs = 2;
  log.num_samples = 3;
  log.errors.assign(6, 0.5f);
  write_trajectory_log(dir.file("a.errs"), log);

  auto bytes = io::read_bytes(dir.file("a.errs"));
  bytes.resize(bytes.size() - 4);
  io::write_bytes(dir.file("a.errs"), bytes);
  CHECK_THROWS_WITH_AS(read_trajectory_log(dir.file("a.errs")),
                       doctest::Contains("size mismatch"), std::runtime_error);
}

TEST_CASE("NaN and negative entries are rejected with the offending index") {
  test::TempDir dir("traj_bad");
  io::MatrixF32 m;
  m.rows = 2;
  m.cols = 2;

  m.data = {0.1f, 0.2f, std::nanf(""), 0.4f};
  io::write_matrix(dir.file("nan.errs"), m, "errs");
  CHECK_THROWS_WITH_AS(read_trajectory_log(dir.file("nan.errs")),
                       doctest::Contains("flat index 2"), std::runtime_error);

  m.data = {0.1f, -0.2f, 0.3f, 0.4f};
  io::write_matrix(dir.file("neg.errs"), m, "errs");
  CHECK_THROWS_WITH_AS(read_trajectory_log(dir.file("neg.errs")),
                       doctest::Contains("flat index 1"), std::runtime_error);
}

TEST_CASE("linear bin grids") {
  ErrorTrajectoryLog log;
  log.num_epochs = 1;
  log.num_samples = 3;
  log.errors = {0.5f, 2.0f, 1.0f};

  SUBCASE("train_max policy ends at the observed maximum") {
    const auto grid = make_bin_grid(log, 4, BinSpacing::linear);
    REQUIRE(grid.edges.size() == 5);
    const double expect[] = {0.0, 0.5, 1.0, 1.5, 2.0};
    for (int i = 0; i < 5; ++i) CHECK(grid.edges[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(grid.eps_max() == 2.0);
  }

  SUBCASE("explicit eps_max") {
    const auto grid = make_bin_grid(log, 2, BinSpacing::linear, 1.0);
    REQUIRE(grid.edges.size() == 3);
    CHECK(grid.edges[0] == 0.0);
    CHECK(grid.edges[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(grid.edges[2] == 1.0);
  }
}

TEST_CASE("logarithmic grid gets an underflow bin") {
  ErrorTrajectoryLog log;
  log.num_epochs = 1;
  log.num_samples = 3;
  log.errors = {1e-4f, 0.0f, 1.0f};

  const auto grid = make_bin_grid(log, 4, BinSpacing::logarithmic, 1.0);
  REQUIRE(grid.num_bins() == 5);  // 4 log bins + underflow
  CHECK(grid.edges[0] == 0.0);

  // independent oracle: hand-computed log10 ladder from the smallest
  // positive error to eps_max
  const double min_pos = static_cast<double>(1e-4f);
  for (int i = 0; i <= 4; ++i) {
    const double expect =
        std::pow(10.0, std::log10(min_pos) +
                           (std::log10(1.0) - std::log10(min_pos)) * i / 4.0);
    CHECK(grid.edges[i + 1] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(grid.edges[1] == min_pos);
  CHECK(grid.edges.back() == 1.0);
}

TEST_CASE("all-zero trajectory cannot produce a grid") {
  ErrorTrajectoryLog log;
  log.num_epochs = 2;
  log.num_samples = 2;
  log.errors.assign(4, 0.0f);
  CHECK_THROWS_AS(make_bin_grid(log, 4, BinSpacing::logarithmic),
                  std::runtime_error);
  CHECK_THROWS_AS(make_bin_grid(log, 4, BinSpacing::linear), std::runtime_error);
  // positive lower edge exists but eps_max below it
  log.errors = {0.5f, 0.5f, 0.5f, 0.5f};
  CHECK_THROWS_AS(make_bin_grid(log, 4, BinSpacing::logarithmic, 0.1),
                  std::runtime_error);
}

TEST_CASE("pdf bank rows are the stated histograms") {
  ErrorTrajectoryLog log;
  log.num_epochs = 3;
  log.num_samples = 1;

  SUBCASE("one sample per bin") {
    log.errors = {0.1f, 0.2f, 0.3f};
    BinGrid grid{{0.0, 0.15, 0.25, 0.35}, BinSpacing::linear};
    const auto bank = build_pdf_bank(log, grid, 0);
    REQUIRE(bank.num_bins() == 3);
    for (int b = 0; b < 3; ++b)
      CHECK(bank.pdfs[b] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("single bin") {
    log.num_epochs = 2;
    log.errors = {0.5f, 0.5f};
    BinGrid grid{{0.0, 1.0}, BinSpacing::linear};
    const auto bank = build_pdf_bank(log, grid, 0);
    REQUIRE(bank.num_bins() == 1);
    CHECK(bank.pdfs[0] == 1.0);
  }

  SUBCASE("errors at or above eps_max are clipped into the top bin") {
    log.num_epochs = 2;
    log.errors = {0.1f, 9.9f};
    BinGrid grid{{0.0, 0.5, 1.0}, BinSpacing::linear};
    const auto bank = build_pdf_bank(log, grid, 0);
    CHECK(bank.pdfs[0] == 0.5);
    CHECK(bank.pdfs[1] == 0.5);
  }
}

TEST_CASE("burn-in drops the first epochs") {
  ErrorTrajectoryLog log;
  log.num_epochs = 4;
  log.num_samples = 1;
  log.errors = {9.0f, 9.0f, 0.1f, 0.1f};
  BinGrid grid{{0.0, 1.0, 10.0}, BinSpacing::linear};

  const auto all = build_pdf_bank(log, grid, 0);
  CHECK(all.pdfs[0] == 0.5);
  const auto late = build_pdf_bank(log, grid, 2);
  CHECK(late.pdfs[0] == 1.0);
  CHECK(late.pdfs[1] == 0.0);
  CHECK_THROWS_AS(build_pdf_bank(log, grid, 4), std::invalid_argument);
}

TEST_CASE("pdf bank properties over random trajectories") {
  // normalization, count conservation against an independent counting
  // oracle, and permutation equivariance
  SplitMix64 rng(202);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t epochs = 1 + rng.bounded(20);
    const std::size_t n = 1 + rng.bounded(30);
    const auto log = test::random_trajectory(epochs, n, rng.next());
    const auto grid =
        make_bin_grid(log, 1 + rng.bounded(12),
                      trial % 2 ? BinSpacing::linear : BinSpacing::logarithmic);
    const auto bank = build_pdf_bank(log, grid, 0);
    const std::size_t b = grid.num_bins();

    for (std::size_t i = 0; i < n; ++i) {
      const auto row = bank.row(i);
      const double sum = std::accumulate(row.begin(), row.end(), 0.0);
      CHECK(std::abs(sum - 1.0) <= 1e-9);

      // oracle: count every epoch's error by direct edge comparison
      std::vector<std::uint32_t> counts(b, 0);
      for (std::size_t e = 0; e < epochs; ++e) {
        const double x = log.at(e, i);
        std::size_t bin = b - 1;
        for (std::size_t j = 0; j < b; ++j)
          if (x >= grid.edges[j] && x < grid.edges[j + 1]) {
            bin = j;
            break;
          }
        ++counts[bin];
      }
      CHECK(std::accumulate(counts.begin(), counts.end(), 0u) == epochs);
      for (std::size_t j = 0; j < b; ++j)
        CHECK(row[j] == static_cast<double>(counts[j]) / static_cast<double>(epochs));
    }

    // permuting sample columns permutes rows identically
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    ErrorTrajectoryLog shuffled = log;
    for (std::size_t e = 0; e < epochs; ++e)
      for (std::size_t i = 0; i < n; ++i)
        shuffled.errors[e * n + i] = log.at(e, perm[i]);
    const auto shuffled_bank = build_pdf_bank(shuffled, grid, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = shuffled_bank.row(i);
      const auto bref = bank.row(perm[i]);
      CHECK(std::equal(a.begin(), a.end(), bref.begin()));
    }
  }
}

TEST_CASE("pdf bank and descriptor set round-trips") {
  test::TempDir dir("bank_rt");

  // counts over a power-of-two epoch count give f32-exact probabilities
  ErrorTrajectoryLog log;
  log.num_epochs = 8;
  log.num_samples = 2;
  log.errors = {0.1f, 0.9f, 0.1f, 0.9f, 0.1f, 0.2f, 0.6f, 0.9f,
                0.1f, 0.9f, 0.3f, 0.9f, 0.7f, 0.2f, 0.6f, 0.9f};
  BinGrid grid{{0.0, 0.25, 0.5, 1.0}, BinSpacing::linear};
  const auto bank = build_pdf_bank(log, grid, 0);

  write_pdf_bank(dir.file("a.pdfb"), bank);
  const auto back = read_pdf_bank(dir.file("a.pdfb"));
  CHECK(back.num_samples == bank.num_samples);
  CHECK(back.grid.edges == bank.grid.edges);  // edges round-trip exactly
  CHECK(back.pdfs == bank.pdfs);

  auto desc = test::random_descriptors(4, 32, 99);
  write_descriptor_set(dir.file("a.desc"), desc);
  const auto desc_back = read_descriptor_set(dir.file("a.desc"));
  CHECK(desc_back.num_samples == 4);
  CHECK(desc_back.dim == 32);
  CHECK(desc_back.vectors == desc.vectors);
}

TEST_CASE("truncated bank payload is a corruption error") {
  test::TempDir dir("bank_tr");
  const auto log = test::random_trajectory(4, 3, 7);
  const auto grid = make_bin_grid(log, 4, BinSpacing::linear);
  write_pdf_bank(dir.file("a.pdfb"), build_pdf_bank(log, grid, 0));

  auto bytes = io::read_bytes(dir.file("a.pdfb"));
  bytes.resize(bytes.size() / 2);
  io::write_bytes(dir.file("a.pdfb"), bytes);
  CHECK_THROWS_AS(read_pdf_bank(dir.file("a.pdfb")), std::runtime_error);
}

TEST_CASE("unnormalized bank rows are rejected on read") {
  test::TempDir dir("bank_norm");
  io::MatrixF32 m;
  m.rows = 1;
  m.cols = 2;
  m.data = {0.3f, 0.3f};
  nlohmann::json extra;
  extra["edges"] = {"0", "0.5", "1"};
  extra["spacing"] = "linear";
  io::write_matrix(dir.file("bad.pdfb"), m, "pdfb", extra);
  CHECK_THROWS_WITH_AS(read_pdf_bank(dir.file("bad.pdfb")),
                       doctest::Contains("not normalized"), std::runtime_error);
}

TEST_SUITE_END();
