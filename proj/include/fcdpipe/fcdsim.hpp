#pragma once

// Synthetic probe generation and the independent binning oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "fcdpipe/grid.hpp"
#include "fcdpipe/random.hpp"
#include "fcdpipe/roadgraph.hpp"
#include "fcdpipe/segspeed.hpp"
#include "fcdpipe/sjoin.hpp"
#include "fcdpipe/spotbin.hpp"

namespace fcdpipe {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double harmonic_mean(std::span<const double> speeds) {
  if (speeds.empty()) throw std::invalid_argument("harmonic_mean: empty speed set");
  double inv = 0.0;
  for (double v : speeds) {
    if (!(v > 0.0)) throw std::invalid_argument("harmonic_mean: speeds must be positive");
    inv += 1.0 / v;
  }
  return static_cast<double>(speeds.size()) / inv;
}

inline double arithmetic_mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("arithmetic_mean: empty set");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------
// Position along a polyline

/// Point and leg bearing at arc-length fraction `f` in [0, 1]; legs are
/// weighted by their haversine length.
inline SamplePoint point_along(const std::vector<LatLon>& geometry, double f) {
  std::vector<double> legs;
  double total = 0.0;
  for (std::size_t i = 1; i < geometry.size(); ++i) {
    legs.push_back(haversine_m(geometry[i - 1], geometry[i]));
    total += legs.back();
  }
  double target = std::clamp(f, 0.0, 1.0) * total;
  for (std::size_t i = 0; i < legs.size(); ++i) {
    const bool last = i + 1 == legs.size();
    if (legs[i] == 0.0 && !last) continue;
    if (target <= legs[i] || last) {
      const double t = legs[i] > 0.0 ? std::clamp(target / legs[i], 0.0, 1.0) : 0.0;
      const LatLon a = geometry[i];
      const LatLon b = geometry[i + 1];
      return {{a.lat + t * (b.lat - a.lat), a.lon + t * (b.lon - a.lon)}, planar_bearing(a, b)};
    }
    target -= legs[i];
  }
  return {geometry.back(), 0.0};
}

// ---------------------------------------------------------------------------
// Fleets

struct VehicleClass {
  double speed_kph = 50.0;
  int count = 1;
};

/// Idealized fleet on one edge: every vehicle covers the whole edge inside
/// the time window and emits r = round(c / v) readings, or exactly
/// `fixed_readings` when set.
struct FleetSpec {
  std::vector<VehicleClass> vehicles;
  double probe_constant = 120.0;
  EdgeKey route;
  double t_start = 0.0;
  double headway_s = 0.0;  // start offset between consecutive vehicles
  int fixed_readings = 0;

  void validate() const {
    if (!(probe_constant > 0.0)) throw SimulationError("fleet: probe constant must be positive");
    for (const auto& vc : vehicles) {
      if (!(vc.speed_kph > 0.0)) throw SimulationError("fleet: vehicle speeds must be positive");
      if (vc.count < 0) throw SimulationError("fleet: vehicle counts must be non-negative");
    }
    if (fixed_readings < 0) throw SimulationError("fleet: fixed_readings must be non-negative");
  }
};

inline int readings_for(double speed_kph, const FleetSpec& spec) {
  if (spec.fixed_readings > 0) return spec.fixed_readings;
  return std::max(1, static_cast<int>(std::lround(spec.probe_constant / speed_kph)));
}

inline ProbeSet simulate_probes(const FleetSpec& spec, const RoadGraph& graph, const GridConfig& cfg) {
  spec.validate();
  const auto idx = graph.find(spec.route);
  if (!idx) throw SimulationError("fleet: route edge not found in graph");
  const Edge& edge = graph.edges[*idx];
  for (const LatLon& p : edge.geometry)
    if (!cell_of(p.lat, p.lon, cfg)) throw SimulationError("fleet: route leaves the grid bounding box");

  ProbeSet out;
  int vehicle = 0;
  for (const VehicleClass& vc : spec.vehicles) {
    const int r = readings_for(vc.speed_kph, spec);
    const double traversal_s = edge.length_m / (vc.speed_kph / 3.6);
    for (int n = 0; n < vc.count; ++n, ++vehicle) {
      const double start = spec.t_start + vehicle * spec.headway_s;
      for (int i = 0; i < r; ++i) {
        const double f = (i + 0.5) / r;
        const SamplePoint sp = point_along(edge.geometry, f);
        out.push_back({start + f * traversal_s, sp.pos.lat, sp.pos.lon, sp.bearing, vc.speed_kph});
      }
    }
  }
  return out;
}

inline FleetSpec fleet_from_json(const nlohmann::json& j) {
  FleetSpec s;
  try {
    for (const auto& v : j.at("vehicles"))
      s.vehicles.push_back({v.at("speed_kph").get<double>(), v.value("count", 1)});
    s.probe_constant = j.value("probe_constant", 120.0);
    const auto& r = j.at("route");
    s.route = {r.at("u").get<NodeId>(), r.at("v").get<NodeId>(), r.value("gkey", std::uint64_t{0})};
    s.t_start = j.value("t_start", 0.0);
    s.headway_s = j.value("headway_s", 0.0);
    s.fixed_readings = j.value("fixed_readings", 0);
  } catch (const nlohmann::json::exception& e) {
    throw SimulationError(std::string("fleet spec: ") + e.what());
  }
  return s;
}

/// Resolves a route given only by (u, v) when the scenario omits gkey and
/// the pair is unambiguous.
inline void resolve_route(FleetSpec& spec, const RoadGraph& g) {
  if (g.find(spec.route)) return;
  std::vector<const Edge*> hits;
  for (const Edge& e : g.edges)
    if (e.u == spec.route.u && e.v == spec.route.v) hits.push_back(&e);
  if (hits.size() == 1 && spec.route.gkey == 0) spec.route = hits.front()->key();
}

// ---------------------------------------------------------------------------
// Brute-force binning oracle
//
// Groups probes by their projected key in an ordered map and evaluates the
// volume and speed formulas per group directly, without the flat
// sort-and-reduce pass or the grid encoders used by bin_probes.

struct OracleBin {
  std::int64_t count = 0;
  double mean_speed = 0.0;
  int volume_code = 0;
  int speed_code = 0;
};

using OracleKey = std::tuple<int, int, int, int>;  // bin, row, col, heading

inline std::map<OracleKey, OracleBin> brute_force_bin(const ProbeSet& probes, const GridConfig& cfg,
                                                      const EncodingParams& enc = {}) {
  auto project = [&](const Probe& p) -> std::optional<OracleKey> {
    if (!std::isfinite(p.t) || !std::isfinite(p.lat) || !std::isfinite(p.lon) ||
        !std::isfinite(p.angle) || !std::isfinite(p.speed))
      return std::nullopt;
    if (p.t < 0.0 || p.t >= 86400.0) return std::nullopt;
    const auto cell = cell_of(p.lat, p.lon, cfg);
    if (!cell) return std::nullopt;
    const int bin = static_cast<int>(std::floor(p.t / (86400.0 / cfg.bins_per_day)));
    double a = std::fmod(p.angle, 360.0);
    if (a < 0) a += 360.0;
    if (a >= 360.0) a = 0.0;
    const int heading = a < 90.0 ? 0 : a < 180.0 ? 1 : a < 270.0 ? 2 : 3;
    return OracleKey{bin, cell->row, cell->col, heading};
  };

  std::map<OracleKey, std::vector<double>> members;
  for (const Probe& p : probes)
    if (auto k = project(p)) members[*k].push_back(std::min(std::max(p.speed, 0.0), enc.speed_cap));

  std::map<OracleKey, OracleBin> out;
  for (auto& [key, speeds] : members) {
    std::sort(speeds.begin(), speeds.end());
    double sum = 0.0;
    for (double s : speeds) sum += s;
    OracleBin b;
    b.count = static_cast<std::int64_t>(speeds.size());
    b.mean_speed = sum / static_cast<double>(speeds.size());
    const double above =
        std::min(std::max(static_cast<double>(b.count - enc.privacy_threshold), 0.0),
                 static_cast<double>(enc.volume_cutoff));
    b.volume_code = std::min(255, static_cast<int>(std::lround(above * 255.0 / enc.volume_scale_divisor)));
    b.speed_code = b.volume_code > 0
                       ? std::max(1, static_cast<int>(std::lround(b.mean_speed * 255.0 / enc.speed_cap)))
                       : 0;
    out[key] = b;
  }
  return out;
}

/// Movie tensor described by the oracle bins.
inline MovieDay oracle_movie(const std::map<OracleKey, OracleBin>& bins, const GridConfig& cfg,
                             const EncodingParams& enc, const std::string& day) {
  MovieDay m(day, cfg.bins_per_day, cfg.rows, cfg.cols, enc);
  for (const auto& [key, b] : bins) {
    const auto [bin, row, col, h] = key;
    m.set(bin, row, col, static_cast<Heading>(h), static_cast<std::uint8_t>(b.volume_code),
          static_cast<std::uint8_t>(b.speed_code));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Coverage by edge orientation

enum class OrientationClass { Axis, Diagonal, Other };

inline OrientationClass orientation_of(const Edge& e, double window_deg = 10.0) {
  const double b = planar_bearing(e.geometry.front(), e.geometry.back());
  const double to_axis = std::abs(std::remainder(b, 90.0));
  const double to_diag = std::abs(std::remainder(b - 45.0, 90.0));
  if (to_axis <= window_deg) return OrientationClass::Axis;
  if (to_diag <= window_deg) return OrientationClass::Diagonal;
  return OrientationClass::Other;
}

struct Coverage {
  double axis = 0.0;
  double diagonal = 0.0;
  double other = 0.0;
  std::size_t axis_edges = 0;
  std::size_t diagonal_edges = 0;
  std::size_t other_edges = 0;
};

/// Share of (edge, day, bin) slots carrying an unfiltered speed, split by
/// edge orientation. Days are those present in `records` (at least one).
inline Coverage coverage_by_orientation(const std::vector<SegmentRecord>& records, const RoadGraph& g,
                                        int bins_per_day, double window_deg = 10.0) {
  std::set<std::string> days;
  for (const auto& r : records) days.insert(r.day);
  const double day_count = std::max<std::size_t>(1, days.size());

  std::map<EdgeKey, OrientationClass> cls;
  Coverage cov;
  for (const Edge& e : g.edges) {
    const auto c = orientation_of(e, window_deg);
    cls[e.key()] = c;
    (c == OrientationClass::Axis ? cov.axis_edges
     : c == OrientationClass::Diagonal ? cov.diagonal_edges
                                       : cov.other_edges)++;
  }
  std::set<std::tuple<std::string, int, EdgeKey>> slots;
  for (const auto& r : records)
    if (r.has_data() && !r.filtered && cls.contains(r.key)) slots.insert({r.day, r.t, r.key});
  std::size_t axis = 0, diag = 0, other = 0;
  for (const auto& [day, t, key] : slots) {
    switch (cls[key]) {
      case OrientationClass::Axis: ++axis; break;
      case OrientationClass::Diagonal: ++diag; break;
      case OrientationClass::Other: ++other; break;
    }
  }
  auto share = [&](std::size_t hits, std::size_t edges) {
    return edges == 0 ? 0.0 : hits / (static_cast<double>(edges) * bins_per_day * day_count);
  };
  cov.axis = share(axis, cov.axis_edges);
  cov.diagonal = share(diag, cov.diagonal_edges);
  cov.other = share(other, cov.other_edges);
  return cov;
}

// ---------------------------------------------------------------------------
// Background traffic

/// Probes spread uniformly over the bounding box, the day, all headings and
/// the given speed range.
inline ProbeSet uniform_probes(const GridConfig& cfg, std::size_t n, std::uint64_t seed,
                               double speed_lo = 5.0, double speed_hi = 100.0) {
  Rng rng(seed);
  ProbeSet out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Probe p;
    p.t = uniform_real(rng, 0.0, 86400.0);
    p.lat = uniform_real(rng, cfg.lat_min, cfg.lat_max);
    p.lon = uniform_real(rng, cfg.lon_min, cfg.lon_max);
    p.angle = uniform_real(rng, 0.0, 360.0);
    p.speed = uniform_real(rng, speed_lo, speed_hi);
    out.push_back(p);
  }
  return out;
}

/// One vehicle traversal emitting a reading every `interval_s` seconds
/// (first reading at a random phase), with Gaussian speed and heading noise.
struct Trip {
  std::size_t edge = 0;
  double t_start = 0.0;
  double speed_kph = 0.0;
};

inline void emit_trip(const Edge& e, const Trip& trip, double interval_s, double heading_noise_deg,
                      Rng& rng, ProbeSet& out) {
  const double traversal_s = e.length_m / (trip.speed_kph / 3.6);
  for (double dt = uniform01(rng) * interval_s; dt < traversal_s; dt += interval_s) {
    const double t = trip.t_start + dt;
    if (t >= 86400.0) break;
    const SamplePoint sp = point_along(e.geometry, dt / traversal_s);
    Probe p;
    p.t = t;
    p.lat = sp.pos.lat;
    p.lon = sp.pos.lon;
    p.angle = normalize_angle(sp.bearing + heading_noise_deg * normal01(rng));
    p.speed = std::max(0.0, trip.speed_kph * (1.0 + 0.05 * normal01(rng)));
    out.push_back(p);
  }
}

}  // namespace fcdpipe
