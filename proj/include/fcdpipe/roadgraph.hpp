#pragma once

// Directed road multigraph loaded from a portable JSON-text file.
//
// {"nodes": [{"id": 1, "lat": .., "lon": ..}, ...],
//  "edges": [{"u": 1, "v": 2, "geometry": [[lat, lon], ...], "highway": "primary",
//             "maxspeed": [50, 60]}, ...]}
//
// "geometry" defaults to the straight line between the endpoint nodes and
// "maxspeed" to the empty list.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fcdpipe/grid.hpp"
#include "fcdpipe/io.hpp"

namespace fcdpipe {

using NodeId = std::int64_t;

struct EdgeKey {
  NodeId u = 0;
  NodeId v = 0;
  std::uint64_t gkey = 0;
  friend bool operator==(const EdgeKey&, const EdgeKey&) = default;
  friend auto operator<=>(const EdgeKey&, const EdgeKey&) = default;
};

struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  std::uint64_t gkey = 0;
  std::vector<LatLon> geometry;
  std::string highway;
  double speed_kph = 0.0;
  double length_m = 0.0;

  EdgeKey key() const { return {u, v, gkey}; }
};

struct RoadGraph {
  std::map<NodeId, LatLon> nodes;
  std::vector<Edge> edges;

  std::optional<std::size_t> find(const EdgeKey& k) const {
    for (std::size_t i = 0; i < edges.size(); ++i)
      if (edges[i].key() == k) return i;
    return std::nullopt;
  }
};

enum class GraphErrorKind {
  Malformed,
  DanglingNode,
  DegenerateGeometry,
  EndpointMismatch,
  ZeroLength,
  DuplicateEdge,
  InvalidMaxspeed,
};

class GraphError : public std::runtime_error {
 public:
  GraphError(GraphErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  GraphErrorKind kind() const { return kind_; }

 private:
  GraphErrorKind kind_;
};

inline constexpr double kEarthRadiusM = 6371008.8;

inline double haversine_m(LatLon a, LatLon b) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(s)));
}

inline double polyline_length_m(const std::vector<LatLon>& geometry) {
  double len = 0.0;
  for (std::size_t i = 1; i < geometry.size(); ++i) len += haversine_m(geometry[i - 1], geometry[i]);
  return len;
}

/// FNV-1a over the little-endian bytes of every (lat, lon) double in order.
inline std::uint64_t gkey(const std::vector<LatLon>& geometry) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d == 0.0 ? 0.0 : d);  // fold -0.0
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  };
  for (const LatLon& p : geometry) {
    mix(p.lat);
    mix(p.lon);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Speed limits

enum class MaxspeedPolicy { Mean, Max };

inline MaxspeedPolicy maxspeed_policy_from_string(const std::string& s) {
  if (s == "mean") return MaxspeedPolicy::Mean;
  if (s == "max") return MaxspeedPolicy::Max;
  throw ConfigError("maxspeed policy must be 'mean' or 'max', got '" + s + "'");
}

/// Per-class fallback limits for edges without a maxspeed tag. The values
/// are stand-ins typical of urban Europe, not measured data.
struct MaxspeedDefaults {
  std::map<std::string, double> by_class = {
      {"motorway", 120.0},     {"motorway_link", 80.0}, {"trunk", 100.0},
      {"trunk_link", 60.0},    {"primary", 50.0},       {"primary_link", 50.0},
      {"secondary", 50.0},     {"secondary_link", 50.0}, {"tertiary", 50.0},
      {"tertiary_link", 40.0}, {"unclassified", 40.0},  {"residential", 30.0},
      {"living_street", 10.0}, {"service", 20.0},
  };
  double fallback = 50.0;

  double lookup(const std::string& highway) const {
    auto it = by_class.find(highway);
    return it == by_class.end() ? fallback : it->second;
  }
};

inline double resolve_maxspeed(const std::vector<double>& raw, const std::string& highway,
                               MaxspeedPolicy policy, const MaxspeedDefaults& defaults = {}) {
  for (double r : raw)
    if (!(r > 0.0) || !std::isfinite(r))
      throw GraphError(GraphErrorKind::InvalidMaxspeed,
                       "maxspeed values must be positive, got " + format_double(r));
  if (raw.empty()) return defaults.lookup(highway);
  if (policy == MaxspeedPolicy::Max) return *std::max_element(raw.begin(), raw.end());
  return std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
}

// ---------------------------------------------------------------------------
// Loading

struct GraphLoadOptions {
  MaxspeedPolicy policy = MaxspeedPolicy::Mean;
  MaxspeedDefaults defaults;
  double endpoint_tolerance_deg = 1e-9;
};

namespace detail {

inline double parse_maxspeed_value(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      return parse_double(v.get<std::string>());
    } catch (const FormatError&) {
    }
  }
  throw GraphError(GraphErrorKind::InvalidMaxspeed, "unparseable maxspeed value " + v.dump());
}

}  // namespace detail

inline RoadGraph graph_from_json(const nlohmann::json& j, const GraphLoadOptions& opts = {}) {
  RoadGraph g;
  try {
    for (const auto& n : j.at("nodes")) {
      const NodeId id = n.at("id").get<NodeId>();
      if (!g.nodes.emplace(id, LatLon{n.at("lat").get<double>(), n.at("lon").get<double>()}).second)
        throw GraphError(GraphErrorKind::Malformed, "duplicate node id " + std::to_string(id));
    }
    std::set<EdgeKey> seen;
    std::size_t index = 0;
    for (const auto& e : j.at("edges")) {
      const std::string where = "edge #" + std::to_string(index++);
      Edge edge;
      edge.u = e.at("u").get<NodeId>();
      edge.v = e.at("v").get<NodeId>();
      const auto nu = g.nodes.find(edge.u);
      const auto nv = g.nodes.find(edge.v);
      if (nu == g.nodes.end() || nv == g.nodes.end())
        throw GraphError(GraphErrorKind::DanglingNode,
                         where + ": references unknown node " +
                             std::to_string(nu == g.nodes.end() ? edge.u : edge.v));
      if (e.contains("geometry")) {
        for (const auto& pt : e.at("geometry")) {
          if (!pt.is_array() || pt.size() != 2)
            throw GraphError(GraphErrorKind::Malformed, where + ": geometry points must be [lat, lon]");
          edge.geometry.push_back({pt[0].get<double>(), pt[1].get<double>()});
        }
      } else {
        edge.geometry = {nu->second, nv->second};
      }
      if (edge.geometry.size() < 2)
        throw GraphError(GraphErrorKind::DegenerateGeometry, where + ": geometry needs at least 2 points");
      auto near = [&](LatLon a, LatLon b) {
        return std::abs(a.lat - b.lat) <= opts.endpoint_tolerance_deg &&
               std::abs(a.lon - b.lon) <= opts.endpoint_tolerance_deg;
      };
      if (!near(edge.geometry.front(), nu->second) || !near(edge.geometry.back(), nv->second))
        throw GraphError(GraphErrorKind::EndpointMismatch,
                         where + ": geometry endpoints do not coincide with nodes u/v");
      edge.length_m = polyline_length_m(edge.geometry);
      if (!(edge.length_m > 0.0))
        throw GraphError(GraphErrorKind::ZeroLength, where + ": geometry has zero length");
      edge.highway = e.value("highway", std::string("unclassified"));
      std::vector<double> raw;
      if (e.contains("maxspeed") && !e.at("maxspeed").is_null()) {
        const auto& ms = e.at("maxspeed");
        if (ms.is_array())
          for (const auto& v : ms) raw.push_back(detail::parse_maxspeed_value(v));
        else
          raw.push_back(detail::parse_maxspeed_value(ms));
      }
      edge.speed_kph = resolve_maxspeed(raw, edge.highway, opts.policy, opts.defaults);
      edge.gkey = gkey(edge.geometry);
      if (!seen.insert(edge.key()).second)
        throw GraphError(GraphErrorKind::DuplicateEdge,
                         where + ": duplicate (u, v, gkey) triplet (" + std::to_string(edge.u) +
                             ", " + std::to_string(edge.v) + ", " + std::to_string(edge.gkey) + ")");
      g.edges.push_back(std::move(edge));
    }
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(GraphErrorKind::Malformed, std::string("graph file: ") + e.what());
  }
  return g;
}

inline RoadGraph load_graph(const std::filesystem::path& path, const GraphLoadOptions& opts = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(GraphErrorKind::Malformed, path.string() + ": " + e.what());
  }
  return graph_from_json(j, opts);
}

/// Serializes with the resolved limit as a single-element maxspeed list, so
/// reloading under either policy yields the same graph.
inline nlohmann::json graph_to_json(const RoadGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [id, p] : g.nodes) nodes.push_back({{"id", id}, {"lat", p.lat}, {"lon", p.lon}});
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : g.edges) {
    nlohmann::json geom = nlohmann::json::array();
    for (const LatLon& p : e.geometry) geom.push_back({p.lat, p.lon});
    edges.push_back({{"u", e.u},
                     {"v", e.v},
                     {"geometry", geom},
                     {"highway", e.highway},
                     {"maxspeed", {e.speed_kph}}});
  }
  return {{"nodes", nodes}, {"edges", edges}};
}

inline void write_graph(const RoadGraph& g, const std::filesystem::path& path) {
  write_file_atomic(path, graph_to_json(g).dump(1) + "\n");
}

}  // namespace fcdpipe
