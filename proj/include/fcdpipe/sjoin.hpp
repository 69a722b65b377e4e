#pragma once

// Spatial join of road edges against the directed grid cells.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "fcdpipe/grid.hpp"
#include "fcdpipe/io.hpp"
#include "fcdpipe/parallel.hpp"
#include "fcdpipe/roadgraph.hpp"

namespace fcdpipe {

struct JoinParams {
  double step = 0.0001;       // degrees
  double pos_margin = 0.0005;  // degrees
  double ang_margin = 10.0;    // degrees

  void validate() const {
    if (!(step > 0.0)) throw ConfigError("join: step must be positive");
    if (!(pos_margin >= 0.0)) throw ConfigError("join: pos_margin must be non-negative");
    if (!(ang_margin >= 0.0 && ang_margin < 45.0))
      throw ConfigError("join: ang_margin must lie in [0, 45)");
  }
};

class HeadingSet {
 public:
  constexpr HeadingSet() = default;
  constexpr explicit HeadingSet(std::uint8_t bits) : bits_(bits & 0xF) {}
  constexpr void insert(Heading h) { bits_ |= std::uint8_t(1u << index_of(h)); }
  constexpr bool contains(Heading h) const { return (bits_ >> index_of(h)) & 1u; }
  constexpr int size() const { return std::popcount(bits_); }
  constexpr std::uint8_t bits() const { return bits_; }
  friend constexpr bool operator==(HeadingSet, HeadingSet) = default;

  std::vector<Heading> members() const {
    std::vector<Heading> out;
    for (Heading h : kHeadings)
      if (contains(h)) out.push_back(h);
    return out;
  }

 private:
  std::uint8_t bits_ = 0;
};

/// Bearing in plain degree space: 0 = north, 90 = east.
inline double planar_bearing(LatLon from, LatLon to) {
  return normalize_angle(std::atan2(to.lon - from.lon, to.lat - from.lat) * 180.0 / std::numbers::pi);
}

/// The quadrant containing `bearing`, plus a neighbouring quadrant when the
/// shared boundary is within `ang_margin` degrees.
inline HeadingSet headings_for(double bearing, double ang_margin) {
  const double b = normalize_angle(bearing);
  const Heading own = heading_quadrant(b);
  HeadingSet set;
  set.insert(own);
  const double lower = 90.0 * index_of(own);
  if (b - lower <= ang_margin) set.insert(static_cast<Heading>((index_of(own) + 3) % 4));
  if (lower + 90.0 - b <= ang_margin) set.insert(static_cast<Heading>((index_of(own) + 1) % 4));
  return set;
}

struct SamplePoint {
  LatLon pos;
  double bearing = 0.0;
};

/// Points at most `step` degrees apart along the polyline, both endpoints
/// included. Each point carries the bearing of the leg it starts; a vertex
/// therefore takes the bearing of the outgoing leg and the final endpoint
/// that of the last leg.
inline std::vector<SamplePoint> interpolate(const std::vector<LatLon>& geometry, double step) {
  std::vector<SamplePoint> out;
  double last_bearing = 0.0;
  for (std::size_t i = 1; i < geometry.size(); ++i) {
    const LatLon a = geometry[i - 1];
    const LatLon b = geometry[i];
    const double dlat = b.lat - a.lat;
    const double dlon = b.lon - a.lon;
    const double len = std::hypot(dlat, dlon);
    if (len == 0.0) continue;
    const double bearing = planar_bearing(a, b);
    const long n = std::max(1L, static_cast<long>(std::ceil(len / step - 1e-9)));
    for (long k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(n);
      out.push_back({{a.lat + t * dlat, a.lon + t * dlon}, bearing});
    }
    last_bearing = bearing;
  }
  if (!geometry.empty()) {
    if (out.empty()) out.push_back({geometry.front(), last_bearing});
    out.push_back({geometry.back(), last_bearing});
  }
  return out;
}

struct CellFraction {
  int row = 0;
  int col = 0;
  Heading heading = Heading::NE;
  double fraction = 0.0;
  friend bool operator==(const CellFraction&, const CellFraction&) = default;
};

/// Cells (rows/cols) whose rectangle lies within Chebyshev distance
/// `margin` of the point, clamped to the grid.
struct CellRange {
  int row_lo = 0, row_hi = -1, col_lo = 0, col_hi = -1;
  bool empty() const { return row_lo > row_hi || col_lo > col_hi; }
};

inline CellRange cells_within(LatLon p, double margin, const GridConfig& cfg) {
  constexpr double eps = 1e-9;
  const double y = (cfg.lat_max - p.lat) / cfg.cell_size;
  const double x = (p.lon - cfg.lon_min) / cfg.cell_size;
  const double m = margin / cfg.cell_size;
  CellRange r;
  r.row_lo = static_cast<int>(std::max(0.0, std::ceil(y - m - 1.0 - eps)));
  r.row_hi = static_cast<int>(std::min<double>(cfg.rows - 1, std::floor(y + m + eps)));
  r.col_lo = static_cast<int>(std::max(0.0, std::ceil(x - m - 1.0 - eps)));
  r.col_hi = static_cast<int>(std::min<double>(cfg.cols - 1, std::floor(x + m + eps)));
  return r;
}

/// Directed cells of one edge geometry. A sample point attributes to its
/// containing cell; cells within the positional margin are added with no
/// attribution. Both are tagged with headings_for(point bearing). Fractions
/// are attributions divided by the total number of sample points, so points
/// outside the grid lower the sum. Sorted by (row, col, heading).
inline std::vector<CellFraction> intersecting_cells(const std::vector<LatLon>& geometry,
                                                    const GridConfig& cfg, const JoinParams& jp = {}) {
  const auto samples = interpolate(geometry, jp.step);
  std::map<std::tuple<int, int, int>, std::size_t> hits;
  for (const SamplePoint& s : samples) {
    const HeadingSet hs = headings_for(s.bearing, jp.ang_margin);
    const CellRange range = cells_within(s.pos, jp.pos_margin, cfg);
    if (!range.empty()) {
      for (int r = range.row_lo; r <= range.row_hi; ++r)
        for (int c = range.col_lo; c <= range.col_hi; ++c)
          for (Heading h : hs.members()) hits.try_emplace({r, c, index_of(h)}, 0);
    }
    if (const auto cell = cell_of(s.pos.lat, s.pos.lon, cfg))
      for (Heading h : hs.members()) ++hits[{cell->row, cell->col, index_of(h)}];
  }
  std::vector<CellFraction> out;
  out.reserve(hits.size());
  const double total = static_cast<double>(samples.size());
  for (const auto& [key, count] : hits) {
    const auto [r, c, h] = key;
    out.push_back({r, c, static_cast<Heading>(h), count / total});
  }
  return out;
}

inline std::vector<CellFraction> intersecting_cells(const Edge& edge, const GridConfig& cfg,
                                                    const JoinParams& jp = {}) {
  return intersecting_cells(edge.geometry, cfg, jp);
}

// ---------------------------------------------------------------------------
// Whole-graph join and CSV persistence

using Intersections = std::map<EdgeKey, std::vector<CellFraction>>;

inline Intersections join_graph(const RoadGraph& g, const GridConfig& cfg, const JoinParams& jp,
                                int jobs = 1) {
  jp.validate();
  std::vector<std::vector<CellFraction>> per_edge(g.edges.size());
  parallel_for(g.edges.size(), jobs,
               [&](std::size_t i) { per_edge[i] = intersecting_cells(g.edges[i], cfg, jp); });
  Intersections out;
  for (std::size_t i = 0; i < g.edges.size(); ++i) out[g.edges[i].key()] = std::move(per_edge[i]);
  return out;
}

inline const std::vector<std::string>& intersections_csv_header() {
  static const std::vector<std::string> h = {"u", "v", "gkey", "row", "col", "heading", "fraction"};
  return h;
}

/// Edges without any cell are written as nothing; readers see them as absent.
inline std::string intersections_to_csv(const Intersections& in) {
  std::string out = "u,v,gkey,row,col,heading,fraction\n";
  for (const auto& [key, cells] : in) {
    const std::string prefix =
        std::to_string(key.u) + ',' + std::to_string(key.v) + ',' + std::to_string(key.gkey) + ',';
    for (const CellFraction& cf : cells)
      out += prefix + std::to_string(cf.row) + ',' + std::to_string(cf.col) + ',' +
             std::string(to_string(cf.heading)) + ',' + format_double(cf.fraction) + '\n';
  }
  return out;
}

inline Intersections intersections_from_csv(std::string text, const std::string& source) {
  CsvReader reader(std::move(text), intersections_csv_header(), source);
  Intersections out;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    const EdgeKey key{parse_int<NodeId>(f[0]), parse_int<NodeId>(f[1]), parse_int<std::uint64_t>(f[2])};
    out[key].push_back({parse_int<int>(f[3]), parse_int<int>(f[4]),
                        heading_from_string(f[5]), parse_double(f[6])});
  }
  return out;
}

inline void write_intersections(const Intersections& in, const std::filesystem::path& path) {
  write_file_atomic(path, intersections_to_csv(in));
}

inline Intersections read_intersections(const std::filesystem::path& path) {
  return intersections_from_csv(read_file(path), path.string());
}

}  // namespace fcdpipe
