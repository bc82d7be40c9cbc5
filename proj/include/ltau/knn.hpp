// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <thread>
#include <variant>
#include <vector>

#include "ltau/trajlog.hpp"

namespace ltau::knn {

// Squared Euclidean distance; AVX2 path when compiled in, unrolled scalar
// otherwise. Accumulation order is fixed, so results are run-to-run stable.
float l2_sqr(const float* a, const float* b, std::size_t d);

// k nearest neighbors: ids distinct, distances (true L2, not squared)
// ascending, exact ties ordered by ascending id.
struct NeighborList {
  std::vector<std::uint32_t> ids;
  std::vector<float> distances;

  std::size_t size() const { return ids.size(); }
};

// Exact brute-force index over an immutable descriptor set.
class FlatIndex {
 public:
  explicit FlatIndex(DescriptorSet descriptors);

  NeighborList search(std::span<const float> query, std::size_t k) const;

  std::size_t size() const { return data_.num_samples; }
  std::size_t dim() const { return data_.dim; }
  const DescriptorSet& descriptors() const { return data_; }
  // Payload footprint of the stored vectors, for capacity checks.
  std::size_t memory_bytes() const { return data_.vectors.size() * sizeof(float); }

 private:
  DescriptorSet data_;
};

struct HnswParams {
  std::uint32_t m = 32;                // out-links per node (2m at layer 0)
  std::uint32_t ef_construction = 40;  // beam width while inserting
  std::uint32_t ef_search = 16;        // default beam width while searching
};

struct AnyIndex;
AnyIndex deserialize_index(const std::filesystem::path& path);

// Hierarchical navigable small-world graph over the descriptor set.
// Construction is sequential and fully determined by (data, params, seed):
// levels come from a splitmix64 stream with the geometric 1/ln(m) rule, and
// neighbor sets from the standard closest-first diversity heuristic (pruned
// candidates are kept to fill spare slots). A post-build pass restores
// layer-0 reachability from the entry point if pruning disconnected a node,
// so a search with ef >= n sees every node.
class HnswIndex {
 public:
  HnswIndex(DescriptorSet descriptors, HnswParams params, std::uint64_t seed);

  // Uses ef = max(params.ef_search, k).
  NeighborList search(std::span<const float> query, std::size_t k) const;
  NeighborList search(std::span<const float> query, std::size_t k,
                      std::uint32_t ef_search) const;

  std::size_t size() const { return data_.num_samples; }
  std::size_t dim() const { return data_.dim; }
  const HnswParams& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }
  const DescriptorSet& descriptors() const { return data_; }
  std::int32_t max_level() const { return max_level_; }

  // Structural accessors for validation and serialization.
  std::int32_t level_of(std::size_t id) const { return levels_[id]; }
  std::span<const std::uint32_t> links(std::size_t id, std::int32_t layer) const;
  std::uint32_t entry_point() const { return entry_; }
  bool all_reachable() const;  // layer-0 BFS from the entry point

 private:
  friend struct AnyIndex;
  friend AnyIndex deserialize_index(const std::filesystem::path&);
  HnswIndex() = default;

  std::uint32_t max_links(std::int32_t layer) const {
    return layer == 0 ? 2 * params_.m : params_.m;
  }
  std::vector<std::uint32_t>& link_list(std::size_t id, std::int32_t layer) {
    return links_[link_offsets_[id] + static_cast<std::size_t>(layer)];
  }
  const std::vector<std::uint32_t>& link_list(std::size_t id,
                                              std::int32_t layer) const {
    return links_[link_offsets_[id] + static_cast<std::size_t>(layer)];
  }

  float dist(std::size_t a, std::size_t b) const;
  float dist(const float* q, std::size_t b) const;

  struct Scored {
    float distance;
    std::uint32_t id;
  };
  std::uint32_t greedy_descend(const float* q, std::uint32_t start,
                               std::int32_t from_layer,
                               std::int32_t to_layer) const;
  // extra_seed widens the beam's starting set; the public layer-0 search
  // passes the entry point so that ef >= n covers every node the entry
  // reaches (the graph is only guaranteed connected from the entry).
  std::vector<Scored> search_layer(const float* q, std::uint32_t start,
                                   std::size_t ef, std::int32_t layer,
                                   std::optional<std::uint32_t> extra_seed =
                                       std::nullopt) const;
  std::vector<Scored> select_neighbors(std::vector<Scored> candidates,
                                       std::size_t m) const;
  void insert(std::uint32_t id);
  void repair_connectivity();

  DescriptorSet data_;
  HnswParams params_;
  std::uint64_t seed_ = 0;
  std::vector<std::int32_t> levels_;
  std::vector<std::size_t> link_offsets_;          // per node, into links_
  std::vector<std::vector<std::uint32_t>> links_;  // one list per (node, layer)
  std::uint32_t entry_ = 0;
  std::int32_t max_level_ = 0;
};

// --- serialization (magic "LTAUIDX1", kind byte, JSON header, payload) ---

void serialize_index(const std::filesystem::path& path, const FlatIndex& index);
void serialize_index(const std::filesystem::path& path, const HnswIndex& index);

enum class IndexKind : std::uint8_t { flat = 0, hnsw = 1 };

// Either index kind behind one search surface, for file-driven callers.
struct AnyIndex {
  std::variant<FlatIndex, HnswIndex> index;

  NeighborList search(std::span<const float> query, std::size_t k) const;
  NeighborList search(std::span<const float> query, std::size_t k,
                      std::uint32_t ef_search) const;
  std::size_t size() const;
  std::size_t dim() const;
  IndexKind kind() const {
    return index.index() == 0 ? IndexKind::flat : IndexKind::hnsw;
  }
};

AnyIndex deserialize_index(const std::filesystem::path& path);

// Searches every row of `queries`; results are positionally identical to a
// sequential loop no matter how many worker threads run.
template <typename Index>
std::vector<NeighborList> batch_search(const Index& index,
                                       const DescriptorSet& queries,
                                       std::size_t k, unsigned threads = 1) {
  std::vector<NeighborList> out(queries.num_samples);
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      out[i] = index.search(queries.row(i), k);
  };
  if (threads <= 1 || queries.num_samples < 2) {
    worker(0, queries.num_samples);
    return out;
  }
  const std::size_t q = queries.num_samples;
  const unsigned used = std::min<unsigned>(threads, static_cast<unsigned>(q));
  std::vector<std::thread> pool;
  pool.reserve(used);
  for (unsigned t = 0; t < used; ++t) {
    const std::size_t begin = q * t / used;
    const std::size_t end = q * (t + 1) / used;
    pool.emplace_back(worker, begin, end);
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace ltau::knn
