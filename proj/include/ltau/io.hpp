// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ltau::io {

// Row-major float32 matrix, the in-memory image of the on-disk container.
struct MatrixF32 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;  // rows * cols, row-major

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const float> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  std::span<float> row(std::size_t r) {
    return {data.data() + r * cols, cols};
  }
};

// All container payloads are raw little-endian float32, row-major, with a
// UTF-8 JSON sidecar at <path>.json carrying at least
//   {"rows": R, "cols": C, "dtype": "f32le", "kind": "<kind>"}
// plus format-specific extras (e.g. bin edges for PDF banks).
std::filesystem::path sidecar_path(const std::filesystem::path& payload);

void write_matrix(const std::filesystem::path& path, const MatrixF32& m,
                  std::string_view kind,
                  const nlohmann::json& extra = nlohmann::json::object());

struct LoadedMatrix {
  MatrixF32 mat;
  nlohmann::json meta;
};

// Reads payload + sidecar; verifies dtype, kind, and that the payload byte
// length equals rows*cols*4.
LoadedMatrix read_matrix(const std::filesystem::path& path,
                         std::string_view expect_kind);

// Shortest decimal form that round-trips the exact double (used for bin
// edges and other f64 metadata stored in JSON as strings).
std::string format_double(double v);
double parse_double(std::string_view s);

void write_bytes(const std::filesystem::path& path,
                 std::span<const char> bytes);
std::vector<char> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace ltau::io
