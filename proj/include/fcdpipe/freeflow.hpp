#pragma once

// Free-flow speeds: per-cell 1-D k-means speed clusters, per-edge weighted
// quantile over the pooled clusters of its intersecting cells, and the
// optional normalization against the signalized limit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fcdpipe/grid.hpp"
#include "fcdpipe/io.hpp"
#include "fcdpipe/parallel.hpp"
#include "fcdpipe/random.hpp"
#include "fcdpipe/roadgraph.hpp"
#include "fcdpipe/sjoin.hpp"
#include "fcdpipe/taggr.hpp"

namespace fcdpipe {

struct Cluster {
  double center = 0.0;  // median of the members, kph
  std::uint64_t size = 0;
  friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct KMeansOptions {
  int k = 5;
  int max_iterations = 100;
  std::uint64_t seed = 0;
};

namespace detail {

inline double median_of_sorted(std::span<const double> xs) {
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace detail

/// Deterministic 1-D k-means. Seeding picks one sample uniformly from the
/// seeded generator, then repeatedly the sample farthest from all chosen
/// centers (first in sorted order on ties), stopping early once every
/// sample coincides with a center. Lloyd iterations run until assignments
/// stabilize. Each cluster reports the median of its members. The result is
/// sorted by center and padded with {0, 0} to exactly k entries; empty input
/// gives an empty list.
inline std::vector<Cluster> cluster_cell(std::span<const double> samples, const KMeansOptions& opt = {}) {
  if (samples.empty()) return {};
  std::vector<double> xs(samples.begin(), samples.end());
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();

  Rng rng(opt.seed);
  std::vector<double> centers{xs[uniform_index(rng, n)]};
  while (static_cast<int>(centers.size()) < opt.k) {
    double best = 0.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (double c : centers) d = std::min(d, std::abs(xs[i] - c));
      if (d > best) {
        best = d;
        best_i = i;
      }
    }
    if (best == 0.0) break;
    centers.push_back(xs[best_i]);
  }
  std::sort(centers.begin(), centers.end());

  const std::size_t k = centers.size();
  std::vector<std::size_t> assign(n, k);
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (std::abs(xs[i] - centers[c]) < std::abs(xs[i] - centers[best])) best = c;
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += xs[i];
      ++cnt[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (cnt[c] > 0) centers[c] = sum[c] / static_cast<double>(cnt[c]);
  }

  // Sorted samples with sorted centers give contiguous members per cluster.
  std::vector<Cluster> out;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> members;
    for (std::size_t i = 0; i < n; ++i)
      if (assign[i] == c) members.push_back(xs[i]);
    if (members.empty()) continue;
    out.push_back({detail::median_of_sorted(members), members.size()});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Cluster& a, const Cluster& b) { return a.center < b.center; });
  while (static_cast<int>(out.size()) < opt.k) out.push_back({0.0, 0});
  return out;
}

/// Center of the first cluster (ascending center) whose cumulative size
/// share reaches q. Zero-size clusters carry no weight; no weight at all
/// returns `fallback`.
inline double weighted_quantile(std::vector<Cluster> clusters, double q = 0.8, double fallback = 20.0) {
  std::erase_if(clusters, [](const Cluster& c) { return c.size == 0; });
  if (clusters.empty()) return fallback;
  std::stable_sort(clusters.begin(), clusters.end(),
                   [](const Cluster& a, const Cluster& b) { return a.center < b.center; });
  double total = 0.0;
  for (const Cluster& c : clusters) total += static_cast<double>(c.size);
  const double target = q * total - 1e-9 * total;
  double cum = 0.0;
  for (const Cluster& c : clusters) {
    cum += static_cast<double>(c.size);
    if (cum >= target) return c.center;
  }
  return clusters.back().center;
}

// ---------------------------------------------------------------------------
// Per-cell cluster tensor, shape (rows, cols, 4, k, 2)

class CellClusters {
 public:
  CellClusters() = default;
  CellClusters(int rows, int cols, int k)
      : rows_(rows), cols_(cols), k_(k), data_(static_cast<std::size_t>(rows) * cols * 4 * k) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int k() const { return k_; }

  std::span<Cluster> at(int row, int col, Heading h) {
    return {data_.data() + offset(row, col, h), static_cast<std::size_t>(k_)};
  }
  std::span<const Cluster> at(int row, int col, Heading h) const {
    return {data_.data() + offset(row, col, h), static_cast<std::size_t>(k_)};
  }
  const std::vector<Cluster>& data() const { return data_; }

  friend bool operator==(const CellClusters&, const CellClusters&) = default;

 private:
  std::size_t offset(int row, int col, Heading h) const {
    return ((static_cast<std::size_t>(row) * cols_ + col) * 4 + index_of(h)) * k_;
  }
  int rows_ = 0;
  int cols_ = 0;
  int k_ = 5;
  std::vector<Cluster> data_;
};

/// Uniform sample of `count` distinct days (all of them when fewer exist),
/// returned in sorted order.
inline std::vector<std::string> sample_days(std::vector<std::string> days, std::size_t count,
                                            std::uint64_t seed) {
  std::sort(days.begin(), days.end());
  if (days.size() <= count) return days;
  Rng rng(seed);
  std::vector<std::size_t> idx(days.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  shuffle(idx, rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(days[i]);
  return out;
}

/// Clusters every (row, col, heading) over all speeds of the given days.
/// Each cell's seed is derived from `opt.seed` and the cell index, so the
/// output is independent of `jobs`.
inline CellClusters compute_cell_clusters(const std::vector<AggMovieDay>& days,
                                          const KMeansOptions& opt = {}, int jobs = 1) {
  if (days.empty()) throw std::invalid_argument("compute_cell_clusters: no days given");
  const int rows = days.front().rows();
  const int cols = days.front().cols();
  for (const auto& d : days)
    if (d.rows() != rows || d.cols() != cols)
      throw std::invalid_argument("compute_cell_clusters: days have different grid shapes");
  CellClusters out(rows, cols, opt.k);
  const std::size_t cells = static_cast<std::size_t>(rows) * cols * 4;
  parallel_for(cells, jobs, [&](std::size_t idx) {
    const int h = static_cast<int>(idx % 4);
    const int col = static_cast<int>((idx / 4) % cols);
    const int row = static_cast<int>(idx / 4 / cols);
    std::vector<double> samples;
    for (const auto& d : days)
      for (int b = 0; b < d.bins(); ++b) {
        const float s = d.speed(b, row, col, static_cast<Heading>(h));
        if (!std::isnan(s)) samples.push_back(s);
      }
    KMeansOptions cell_opt = opt;
    cell_opt.seed = splitmix64(opt.seed ^ splitmix64(idx));
    auto clusters = cluster_cell(samples, cell_opt);
    auto dst = out.at(row, col, static_cast<Heading>(h));
    for (std::size_t i = 0; i < clusters.size() && i < dst.size(); ++i) dst[i] = clusters[i];
  });
  return out;
}

inline void write_cell_clusters(const CellClusters& cc, const std::filesystem::path& path) {
  Container c;
  c.header = {{"kind", "cell_clusters"},
              {"dtype", "f64"},
              {"shape", {cc.rows(), cc.cols(), 4, cc.k(), 2}},
              {"heading_order", {"NE", "SE", "SW", "NW"}},
              {"last_axis", {"center", "size"}}};
  c.payload.resize(cc.data().size() * 16);
  char* p = c.payload.data();
  for (const Cluster& cl : cc.data()) {
    const double size = static_cast<double>(cl.size);
    std::memcpy(p, &cl.center, 8);
    std::memcpy(p + 8, &size, 8);
    p += 16;
  }
  write_container(path, c);
}

inline CellClusters read_cell_clusters(const std::filesystem::path& path) {
  const Container c = read_container(path);
  CellClusters cc;
  try {
    if (c.header.at("kind") != "cell_clusters") throw FormatError("cell clusters: wrong container kind");
    const auto& shape = c.header.at("shape");
    if (shape.size() != 5 || shape[2] != 4 || shape[4] != 2)
      throw FormatError("cell clusters: unexpected shape " + shape.dump());
    cc = CellClusters(shape[0].get<int>(), shape[1].get<int>(), shape[3].get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cell clusters: malformed header: ") + e.what());
  }
  if (c.payload.size() != cc.data().size() * 16)
    throw FormatError("cell clusters: payload size does not match shape");
  const char* p = c.payload.data();
  for (int r = 0; r < cc.rows(); ++r)
    for (int col = 0; col < cc.cols(); ++col)
      for (Heading h : kHeadings)
        for (Cluster& cl : cc.at(r, col, h)) {
          double size = 0.0;
          std::memcpy(&cl.center, p, 8);
          std::memcpy(&size, p + 8, 8);
          cl.size = static_cast<std::uint64_t>(size);
          p += 16;
        }
  return cc;
}

// ---------------------------------------------------------------------------
// Per-edge free flow

struct FreeFlowParams {
  double quantile = 0.8;
  double fallback_kph = 20.0;
};

inline double free_flow_edge(const std::vector<CellFraction>& cells, const CellClusters& clusters,
                             double speed_limit, const FreeFlowParams& p = {}) {
  std::vector<Cluster> pooled;
  for (const CellFraction& cf : cells)
    for (const Cluster& c : clusters.at(cf.row, cf.col, cf.heading))
      if (c.size > 0) pooled.push_back(c);
  return std::min(weighted_quantile(std::move(pooled), p.quantile, p.fallback_kph), speed_limit);
}

/// Keeps ff within [20, sl] and at least 0.6 sl; below sl = 5 the upper
/// bound is dropped.
inline double normalize_free_flow(double ff, double sl) {
  if (sl >= 5.0) return std::max(std::min(std::max(ff, 20.0), sl), 0.6 * sl);
  return std::max(std::max(ff, 20.0), 0.6 * sl);
}

using FreeFlowTable = std::map<EdgeKey, double>;

inline FreeFlowTable free_flow_graph(const RoadGraph& g, const Intersections& inter,
                                     const CellClusters& clusters, const FreeFlowParams& p = {}) {
  FreeFlowTable out;
  static const std::vector<CellFraction> none;
  for (const Edge& e : g.edges) {
    const auto it = inter.find(e.key());
    out[e.key()] = free_flow_edge(it == inter.end() ? none : it->second, clusters, e.speed_kph, p);
  }
  return out;
}

inline std::string free_flow_to_csv(const FreeFlowTable& t) {
  std::string out = "u,v,gkey,free_flow_kph\n";
  for (const auto& [k, ff] : t)
    out += std::to_string(k.u) + ',' + std::to_string(k.v) + ',' + std::to_string(k.gkey) + ',' +
           format_double(ff) + '\n';
  return out;
}

inline FreeFlowTable free_flow_from_csv(std::string text, const std::string& source) {
  CsvReader reader(std::move(text), {"u", "v", "gkey", "free_flow_kph"}, source);
  FreeFlowTable out;
  std::vector<std::string_view> f;
  while (reader.next(f))
    out[{parse_int<NodeId>(f[0]), parse_int<NodeId>(f[1]), parse_int<std::uint64_t>(f[2])}] =
        parse_double(f[3]);
  return out;
}

inline void write_free_flow(const FreeFlowTable& t, const std::filesystem::path& path) {
  write_file_atomic(path, free_flow_to_csv(t));
}

inline FreeFlowTable read_free_flow(const std::filesystem::path& path) {
  return free_flow_from_csv(read_file(path), path.string());
}

}  // namespace fcdpipe
