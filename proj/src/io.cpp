// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "container formats assume a little-endian host");
static_assert(sizeof(float) == 4);

namespace ltau::io {

std::filesystem::path sidecar_path(const std::filesystem::path& payload) {
  std::filesystem::path p = payload;
  p += ".json";
  return p;
}

void write_bytes(const std::filesystem::path& path,
                 std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write: " + path.string());
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(buf.data(), size);
  if (!in) throw std::runtime_error("short read: " + path.string());
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_bytes(path, std::span<const char>(text.data(), text.size()));
}

void write_matrix(const std::filesystem::path& path, const MatrixF32& m,
                  std::string_view kind, const nlohmann::json& extra) {
  if (m.data.size() != m.rows * m.cols)
    throw std::invalid_argument("write_matrix: payload size inconsistent with shape");

  nlohmann::json meta = extra;
  meta["rows"] = m.rows;
  meta["cols"] = m.cols;
  meta["dtype"] = "f32le";
  meta["kind"] = std::string(kind);

  write_bytes(path,
              std::span<const char>(reinterpret_cast<const char*>(m.data.data()),
                                    m.data.size() * sizeof(float)));
  write_text(sidecar_path(path), meta.dump(2) + "\n");
}

LoadedMatrix read_matrix(const std::filesystem::path& path,
                         std::string_view expect_kind) {
  const auto side = sidecar_path(path);
  if (!std::filesystem::exists(side))
    throw std::runtime_error("missing sidecar: " + side.string());

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(side));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt sidecar " + side.string() + ": " + e.what());
  }

  for (const char* key : {"rows", "cols", "dtype", "kind"})
    if (!meta.contains(key))
      throw std::runtime_error("sidecar " + side.string() + " missing field '" +
                               key + "'");
  if (meta["dtype"] != "f32le")
    throw std::runtime_error("unsupported dtype in " + side.string());
  if (meta["kind"] != expect_kind)
    throw std::runtime_error("kind mismatch in " + side.string() + ": expected '" +
                             std::string(expect_kind) + "', found '" +
                             meta["kind"].get<std::string>() + "'");

  LoadedMatrix out;
  out.meta = meta;
  out.mat.rows = meta["rows"].get<std::size_t>();
  out.mat.cols = meta["cols"].get<std::size_t>();

  const auto bytes = read_bytes(path);
  const std::size_t expect = out.mat.rows * out.mat.cols * sizeof(float);
  if (bytes.size() != expect)
    throw std::runtime_error("payload size mismatch in " + path.string() + ": " +
                             std::to_string(bytes.size()) + " bytes, sidecar implies " +
                             std::to_string(expect));

  out.mat.data.resize(out.mat.rows * out.mat.cols);
  if (!bytes.empty())
    std::memcpy(out.mat.data.data(), bytes.data(), bytes.size());
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("malformed float literal: '" + std::string(s) + "'");
  return v;
}

}  // namespace ltau::io
