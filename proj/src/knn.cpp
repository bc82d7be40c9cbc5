// Copyright 2026 The ltau Authors
// SPDX-License-Identifier: Apache-2.0

#include "ltau/knn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "ltau/io.hpp"
#include "ltau/rng.hpp"

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace ltau::knn {

#if defined(__AVX2__)

float l2_sqr(const float* a, const float* b, std::size_t d) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= d; i += 16) {
    const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc0 = _mm256_fmadd_ps(d0, d0, acc0);
    const __m256 d1 =
        _mm256_sub_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8));
    acc1 = _mm256_fmadd_ps(d1, d1, acc1);
  }
  for (; i + 8 <= d; i += 8) {
    const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc0 = _mm256_fmadd_ps(d0, d0, acc0);
  }
  acc0 = _mm256_add_ps(acc0, acc1);
  __m128 lo = _mm256_castps256_ps128(acc0);
  lo = _mm_add_ps(lo, _mm256_extractf128_ps(acc0, 1));
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  float res = _mm_cvtss_f32(lo);
  for (; i < d; ++i) {
    const float t = a[i] - b[i];
    res += t * t;
  }
  return res;
}

#else

float l2_sqr(const float* a, const float* b, std::size_t d) {
  float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
  std::size_t i = 0;
  for (; i + 4 <= d; i += 4) {
    const float t0 = a[i] - b[i];
    const float t1 = a[i + 1] - b[i + 1];
    const float t2 = a[i + 2] - b[i + 2];
    const float t3 = a[i + 3] - b[i + 3];
    s0 += t0 * t0;
    s1 += t1 * t1;
    s2 += t2 * t2;
    s3 += t3 * t3;
  }
  float res = (s0 + s1) + (s2 + s3);
  for (; i < d; ++i) {
    const float t = a[i] - b[i];
    res += t * t;
  }
  return res;
}

#endif

namespace {

struct ScoredPair {
  float distance;
  std::uint32_t id;
  friend bool operator<(const ScoredPair& x, const ScoredPair& y) {
    return x.distance != y.distance ? x.distance < y.distance : x.id < y.id;
  }
  friend bool operator>(const ScoredPair& x, const ScoredPair& y) { return y < x; }
};

NeighborList to_neighbor_list(std::vector<ScoredPair> scored, std::size_t k) {
  std::sort(scored.begin(), scored.end());
  if (scored.size() > k) scored.resize(k);
  NeighborList out;
  out.ids.reserve(scored.size());
  out.distances.reserve(scored.size());
  for (const auto& s : scored) {
    out.ids.push_back(s.id);
    out.distances.push_back(std::sqrt(s.distance));
  }
  return out;
}

void check_query(std::size_t query_dim, std::size_t index_dim, std::size_t k) {
  if (query_dim != index_dim)
    throw std::invalid_argument("query dimension " + std::to_string(query_dim) +
                                " does not match index dimension " +
                                std::to_string(index_dim));
  if (k < 1) throw std::invalid_argument("k must be >= 1");
}

// Epoch-stamped visited marks, reused across searches on the same thread.
struct VisitedMarks {
  std::vector<std::uint32_t> stamp;
  std::uint32_t epoch = 0;

  void reset(std::size_t n) {
    if (stamp.size() < n) stamp.resize(n, 0);
    if (++epoch == 0) {
      std::fill(stamp.begin(), stamp.end(), 0);
      epoch = 1;
    }
  }
  bool test_and_set(std::uint32_t i) {
    if (stamp[i] == epoch) return true;
    stamp[i] = epoch;
    return false;
  }
};

thread_local VisitedMarks tls_visited;

}  // namespace

// --- FlatIndex ----------------------------------------------------------

FlatIndex::FlatIndex(DescriptorSet descriptors) : data_(std::move(descriptors)) {
  if (data_.num_samples < 1)
    throw std::invalid_argument("cannot build an index over an empty descriptor set");
  if (data_.dim < 1) throw std::invalid_argument("descriptor dimension must be >= 1");
  if (data_.vectors.size() != data_.num_samples * data_.dim)
    throw std::invalid_argument("descriptor payload size inconsistent with shape");
}

NeighborList FlatIndex::search(std::span<const float> query, std::size_t k) const {
  check_query(query.size(), data_.dim, k);
  const std::size_t keep = std::min(k, data_.num_samples);

  // Bounded max-heap of the best (distance, id) pairs seen so far.
  std::priority_queue<ScoredPair> best;
  for (std::uint32_t i = 0; i < data_.num_samples; ++i) {
    const float d = l2_sqr(query.data(), data_.row(i).data(), data_.dim);
    const ScoredPair cand{d, i};
    if (best.size() < keep) {
      best.push(cand);
    } else if (cand < best.top()) {
      best.pop();
      best.push(cand);
    }
  }

  std::vector<ScoredPair> scored;
  scored.reserve(best.size());
  while (!best.empty()) {
    scored.push_back(best.top());
    best.pop();
  }
  return to_neighbor_list(std::move(scored), keep);
}

// --- HnswIndex ----------------------------------------------------------

float HnswIndex::dist(std::size_t a, std::size_t b) const {
  return l2_sqr(data_.row(a).data(), data_.row(b).data(), data_.dim);
}

float HnswIndex::dist(const float* q, std::size_t b) const {
  return l2_sqr(q, data_.row(b).data(), data_.dim);
}

std::span<const std::uint32_t> HnswIndex::links(std::size_t id,
                                                std::int32_t layer) const {
  const auto& l = link_list(id, layer);
  return {l.data(), l.size()};
}

HnswIndex::HnswIndex(DescriptorSet descriptors, HnswParams params,
                     std::uint64_t seed)
    : data_(std::move(descriptors)), params_(params), seed_(seed) {
  if (data_.num_samples < 1)
    throw std::invalid_argument("cannot build an index over an empty descriptor set");
  if (data_.dim < 1) throw std::invalid_argument("descriptor dimension must be >= 1");
  if (data_.vectors.size() != data_.num_samples * data_.dim)
    throw std::invalid_argument("descriptor payload size inconsistent with shape");
  if (params_.m < 2) throw std::invalid_argument("hnsw m must be >= 2");
  if (params_.ef_construction < 1)
    throw std::invalid_argument("ef_construction must be >= 1");

  const std::size_t n = data_.num_samples;
  levels_.resize(n);
  SplitMix64 rng(seed_);
  const double mult = 1.0 / std::log(static_cast<double>(params_.m));
  for (std::size_t i = 0; i < n; ++i)
    levels_[i] =
        static_cast<std::int32_t>(std::floor(-std::log(rng.uniform_pos()) * mult));

  link_offsets_.resize(n);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    link_offsets_[i] = total;
    total += static_cast<std::size_t>(levels_[i]) + 1;
  }
  links_.resize(total);

  entry_ = 0;
  max_level_ = levels_[0];
  for (std::uint32_t i = 1; i < n; ++i) insert(i);
  repair_connectivity();
}

std::uint32_t HnswIndex::greedy_descend(const float* q, std::uint32_t start,
                                        std::int32_t from_layer,
                                        std::int32_t to_layer) const {
  std::uint32_t cur = start;
  float dcur = dist(q, cur);
  for (std::int32_t layer = from_layer; layer >= to_layer; --layer) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (const std::uint32_t nb : link_list(cur, layer)) {
        const float dn = dist(q, nb);
        if (dn < dcur || (dn == dcur && nb < cur)) {
          dcur = dn;
          cur = nb;
          improved = true;
        }
      }
    }
  }
  return cur;
}

std::vector<HnswIndex::Scored> HnswIndex::search_layer(
    const float* q, std::uint32_t start, std::size_t ef, std::int32_t layer,
    std::optional<std::uint32_t> extra_seed) const {
  VisitedMarks& visited = tls_visited;
  visited.reset(data_.num_samples);

  std::priority_queue<ScoredPair, std::vector<ScoredPair>, std::greater<ScoredPair>>
      candidates;                        // closest first
  std::priority_queue<ScoredPair> found; // farthest first, capped at ef

  const float d0 = dist(q, start);
  candidates.push({d0, start});
  found.push({d0, start});
  visited.test_and_set(start);
  if (extra_seed && !visited.test_and_set(*extra_seed)) {
    const float ds = dist(q, *extra_seed);
    candidates.push({ds, *extra_seed});
    found.push({ds, *extra_seed});
    if (found.size() > ef) found.pop();
  }

  while (!candidates.empty()) {
    const ScoredPair cur = candidates.top();
    if (found.size() >= ef && found.top() < cur) break;
    candidates.pop();

    for (const std::uint32_t nb : link_list(cur.id, layer)) {
      if (visited.test_and_set(nb)) continue;
      const float dn = dist(q, nb);
      const ScoredPair cand{dn, nb};
      if (found.size() < ef || cand < found.top()) {
        candidates.push(cand);
        found.push(cand);
        if (found.size() > ef) found.pop();
      }
    }
  }

  std::vector<Scored> out;
  out.reserve(found.size());
  while (!found.empty()) {
    out.push_back({found.top().distance, found.top().id});
    found.pop();
  }
  std::reverse(out.begin(), out.end());  // ascending (distance, id)
  return out;
}

std::vector<HnswIndex::Scored> HnswIndex::select_neighbors(
    std::vector<Scored> candidates, std::size_t m) const {
  if (candidates.size() <= m) return candidates;

  std::vector<Scored> selected, pruned;
  selected.reserve(m);
  for (const Scored& c : candidates) {
    if (selected.size() >= m) break;
    bool diverse = true;
    for (const Scored& s : selected) {
      if (dist(c.id, s.id) < c.distance) {
        diverse = false;
        break;
      }
    }
    (diverse ? selected : pruned).push_back(c);
  }
  // keep pruned candidates to fill spare slots (closest first)
  for (const Scored& p : pruned) {
    if (selected.size() >= m) break;
    selected.push_back(p);
  }
  return selected;
}

void HnswIndex::insert(std::uint32_t id) {
  const float* q = data_.row(id).data();
  const std::int32_t level = levels_[id];

  std::uint32_t cur = entry_;
  if (level < max_level_) cur = greedy_descend(q, entry_, max_level_, level + 1);

  for (std::int32_t layer = std::min(level, max_level_); layer >= 0; --layer) {
    auto candidates = search_layer(q, cur, params_.ef_construction, layer);
    cur = candidates.front().id;

    const auto selected = select_neighbors(std::move(candidates), params_.m);
    auto& own = link_list(id, layer);
    own.reserve(selected.size());
    for (const Scored& s : selected) own.push_back(s.id);

    for (const Scored& s : selected) {
      auto& nb_links = link_list(s.id, layer);
      nb_links.push_back(id);
      const std::uint32_t cap = max_links(layer);
      if (nb_links.size() > cap) {
        std::vector<Scored> shrink;
        shrink.reserve(nb_links.size());
        for (const std::uint32_t t : nb_links) shrink.push_back({dist(s.id, t), t});
        std::sort(shrink.begin(), shrink.end(), [](const Scored& x, const Scored& y) {
          return x.distance != y.distance ? x.distance < y.distance : x.id < y.id;
        });
        const auto kept = select_neighbors(std::move(shrink), cap);
        nb_links.clear();
        for (const Scored& kpt : kept) nb_links.push_back(kpt.id);
      }
    }
  }

  if (level > max_level_) {
    entry_ = id;
    max_level_ = level;
  }
}

bool HnswIndex::all_reachable() const {
  const std::size_t n = data_.num_samples;
  std::vector<char> reach(n, 0);
  std::vector<std::uint32_t> stack{entry_};
  reach[entry_] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const std::uint32_t c = stack.back();
    stack.pop_back();
    for (const std::uint32_t nb : link_list(c, 0)) {
      if (!reach[nb]) {
        reach[nb] = 1;
        ++count;
        stack.push_back(nb);
      }
    }
  }
  return count == n;
}

void HnswIndex::repair_connectivity() {
  const std::size_t n = data_.num_samples;
  if (n <= 1) return;

  std::vector<char> reach(n);
  std::vector<std::uint32_t> stack;
  const auto bfs = [&]() {
    std::fill(reach.begin(), reach.end(), 0);
    stack.assign(1, entry_);
    reach[entry_] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      const std::uint32_t c = stack.back();
      stack.pop_back();
      for (const std::uint32_t nb : link_list(c, 0))
        if (!reach[nb]) {
          reach[nb] = 1;
          ++count;
          stack.push_back(nb);
        }
    }
    return count;
  };

  // Pruning can strand nodes on duplicate-heavy data. Splice each stranded
  // node u next to its nearest reachable neighbor r; if r's list is full,
  // the displaced link moves into u's list so nothing reachable is lost and
  // the reachable set grows every iteration.
  const auto farthest_of = [&](const std::vector<std::uint32_t>& list,
                               std::uint32_t from) {
    std::size_t worst = 0;
    float worst_d = -1.0f;
    for (std::size_t j = 0; j < list.size(); ++j) {
      const float d = dist(from, list[j]);
      if (d > worst_d || (d == worst_d && list[j] > list[worst])) {
        worst_d = d;
        worst = j;
      }
    }
    return worst;
  };

  for (std::size_t iter = 0; iter < n; ++iter) {
    if (bfs() == n) return;

    std::uint32_t u = 0;
    while (reach[u]) ++u;

    std::uint32_t best = entry_;
    float best_d = std::numeric_limits<float>::infinity();
    for (std::uint32_t r = 0; r < n; ++r) {
      if (!reach[r]) continue;
      const float d = dist(u, r);
      if (d < best_d || (d == best_d && r < best)) {
        best_d = d;
        best = r;
      }
    }

    auto& rl = link_list(best, 0);
    if (rl.size() >= max_links(0)) {
      const std::size_t slot = farthest_of(rl, best);
      const std::uint32_t displaced = rl[slot];
      rl[slot] = u;
      auto& ul = link_list(u, 0);
      if (std::find(ul.begin(), ul.end(), displaced) == ul.end()) {
        // safe to evict from u: nothing reachable routed through u before
        if (ul.size() >= max_links(0))
          ul.erase(ul.begin() +
                   static_cast<std::ptrdiff_t>(farthest_of(ul, u)));
        ul.push_back(displaced);
      }
    } else {
      rl.push_back(u);
    }

    auto& ul = link_list(u, 0);
    if (ul.size() < max_links(0) &&
        std::find(ul.begin(), ul.end(), best) == ul.end())
      ul.push_back(best);
  }
}

NeighborList HnswIndex::search(std::span<const float> query, std::size_t k) const {
  return search(query, k,
                std::max(params_.ef_search,
                         static_cast<std::uint32_t>(std::min(k, size()))));
}

NeighborList HnswIndex::search(std::span<const float> query, std::size_t k,
                               std::uint32_t ef_search) const {
  check_query(query.size(), data_.dim, k);
  if (static_cast<std::size_t>(ef_search) < std::min(k, size()))
    throw std::invalid_argument("ef_search must be >= k");

  const float* q = query.data();
  const std::uint32_t start =
      max_level_ > 0 ? greedy_descend(q, entry_, max_level_, 1) : entry_;
  auto found = search_layer(q, start, ef_search, 0, entry_);

  std::vector<ScoredPair> scored;
  scored.reserve(found.size());
  for (const Scored& s : found) scored.push_back({s.distance, s.id});
  return to_neighbor_list(std::move(scored), std::min(k, size()));
}

// --- serialization ------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'T', 'A', 'U', 'I', 'D', 'X', '1'};

void put_raw(std::string& buf, const void* p, std::size_t n) {
  if (n == 0) return;
  buf.append(static_cast<const char*>(p), n);
}
void put_u8(std::string& buf, std::uint8_t v) { put_raw(buf, &v, 1); }
void put_u32(std::string& buf, std::uint32_t v) { put_raw(buf, &v, 4); }
void put_u64(std::string& buf, std::uint64_t v) { put_raw(buf, &v, 8); }
void put_i32(std::string& buf, std::int32_t v) { put_raw(buf, &v, 4); }

struct Cursor {
  const char* p;
  std::size_t left;

  void take(void* out, std::size_t n) {
    if (left < n) throw std::runtime_error("truncated index file");
    if (n > 0) std::memcpy(out, p, n);
    p += n;
    left -= n;
  }
  std::uint8_t u8() { std::uint8_t v; take(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; take(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; take(&v, 8); return v; }
  std::int32_t i32() { std::int32_t v; take(&v, 4); return v; }
};

void put_header(std::string& buf, IndexKind kind, const nlohmann::json& header) {
  put_raw(buf, kMagic, sizeof(kMagic));
  put_u8(buf, static_cast<std::uint8_t>(kind));
  const std::string h = header.dump();
  put_u64(buf, h.size());
  buf.append(h);
}

void put_descriptors(std::string& buf, const DescriptorSet& d) {
  put_raw(buf, d.vectors.data(), d.vectors.size() * sizeof(float));
}

DescriptorSet take_descriptors(Cursor& c, std::size_t n, std::size_t dim) {
  DescriptorSet d;
  d.num_samples = n;
  d.dim = dim;
  d.vectors.resize(n * dim);
  c.take(d.vectors.data(), d.vectors.size() * sizeof(float));
  return d;
}

}  // namespace

void serialize_index(const std::filesystem::path& path, const FlatIndex& index) {
  nlohmann::json header;
  header["dim"] = index.dim();
  header["n"] = index.size();
  std::string buf;
  put_header(buf, IndexKind::flat, header);
  put_descriptors(buf, index.descriptors());
  io::write_bytes(path, std::span<const char>(buf.data(), buf.size()));
}

void serialize_index(const std::filesystem::path& path, const HnswIndex& index) {
  nlohmann::json header;
  header["dim"] = index.dim();
  header["n"] = index.size();
  header["m"] = index.params().m;
  header["ef_construction"] = index.params().ef_construction;
  header["ef_search"] = index.params().ef_search;
  header["seed"] = index.seed();
  header["entry"] = index.entry_point();
  header["max_level"] = index.max_level();

  std::string buf;
  put_header(buf, IndexKind::hnsw, header);
  put_descriptors(buf, index.descriptors());
  for (std::size_t i = 0; i < index.size(); ++i) put_i32(buf, index.level_of(i));
  for (std::size_t i = 0; i < index.size(); ++i) {
    for (std::int32_t layer = 0; layer <= index.level_of(i); ++layer) {
      const auto l = index.links(i, layer);
      put_u32(buf, static_cast<std::uint32_t>(l.size()));
      put_raw(buf, l.data(), l.size() * sizeof(std::uint32_t));
    }
  }
  io::write_bytes(path, std::span<const char>(buf.data(), buf.size()));
}

AnyIndex deserialize_index(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  Cursor c{bytes.data(), bytes.size()};

  char magic[8];
  c.take(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not an ltau index file (bad magic): " + path.string());

  const std::uint8_t kind = c.u8();
  const std::uint64_t hlen = c.u64();
  if (hlen > c.left) throw std::runtime_error("truncated index file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(std::string_view(c.p, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("corrupt index header: ") + e.what());
  }
  c.p += hlen;
  c.left -= hlen;

  const std::size_t n = header.at("n").get<std::size_t>();
  const std::size_t dim = header.at("dim").get<std::size_t>();
  if (n < 1 || dim < 1) throw std::runtime_error("corrupt index header: bad shape");

  if (kind == static_cast<std::uint8_t>(IndexKind::flat)) {
    auto d = take_descriptors(c, n, dim);
    if (c.left != 0) throw std::runtime_error("trailing bytes in index file");
    return AnyIndex{FlatIndex(std::move(d))};
  }
  if (kind != static_cast<std::uint8_t>(IndexKind::hnsw))
    throw std::runtime_error("unknown index kind byte");

  HnswIndex idx;
  idx.data_ = take_descriptors(c, n, dim);
  idx.params_.m = header.at("m").get<std::uint32_t>();
  idx.params_.ef_construction = header.at("ef_construction").get<std::uint32_t>();
  idx.params_.ef_search = header.at("ef_search").get<std::uint32_t>();
  idx.seed_ = header.at("seed").get<std::uint64_t>();
  idx.entry_ = header.at("entry").get<std::uint32_t>();
  idx.max_level_ = header.at("max_level").get<std::int32_t>();
  if (idx.entry_ >= n) throw std::runtime_error("corrupt index: entry out of range");

  idx.levels_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    idx.levels_[i] = c.i32();
    if (idx.levels_[i] < 0) throw std::runtime_error("corrupt index: negative level");
  }
  idx.link_offsets_.resize(n);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx.link_offsets_[i] = total;
    total += static_cast<std::size_t>(idx.levels_[i]) + 1;
  }
  idx.links_.resize(total);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::int32_t layer = 0; layer <= idx.levels_[i]; ++layer) {
      const std::uint32_t count = c.u32();
      if (count > n) throw std::runtime_error("corrupt index: link count out of range");
      auto& l = idx.link_list(i, layer);
      l.resize(count);
      c.take(l.data(), count * sizeof(std::uint32_t));
      for (const std::uint32_t t : l)
        if (t >= n) throw std::runtime_error("corrupt index: link id out of range");
    }
  }
  if (c.left != 0) throw std::runtime_error("trailing bytes in index file");
  return AnyIndex{std::move(idx)};
}

NeighborList AnyIndex::search(std::span<const float> query, std::size_t k) const {
  return std::visit([&](const auto& i) { return i.search(query, k); }, index);
}

NeighborList AnyIndex::search(std::span<const float> query, std::size_t k,
                              std::uint32_t ef_search) const {
  if (const auto* h = std::get_if<HnswIndex>(&index))
    return h->search(query, k, ef_search);
  return std::get<FlatIndex>(index).search(query, k);
}

std::size_t AnyIndex::size() const {
  return std::visit([](const auto& i) { return i.size(); }, index);
}

std::size_t AnyIndex::dim() const {
  return std::visit([](const auto& i) { return i.dim(); }, index);
}

}  // namespace ltau::knn
