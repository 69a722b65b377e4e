#pragma once

// Stage orchestration over an output directory, plus the synthetic city
// and the end-to-end demo.
//
// Artifacts under output_dir:
//   movies/<day>.movie         bin
//   agg/<day>.agg              dp01
//   cell_clusters.tensor       dp02
//   road_graph.json            dp03-load
//   intersecting_cells.csv     dp04
//   free_flow.csv              dp05
//   speeds/<day>.csv           dp06

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fcdpipe/compare.hpp"
#include "fcdpipe/fcdsim.hpp"
#include "fcdpipe/freeflow.hpp"
#include "fcdpipe/grid.hpp"
#include "fcdpipe/io.hpp"
#include "fcdpipe/parallel.hpp"
#include "fcdpipe/random.hpp"
#include "fcdpipe/roadgraph.hpp"
#include "fcdpipe/segspeed.hpp"
#include "fcdpipe/sjoin.hpp"
#include "fcdpipe/spotbin.hpp"
#include "fcdpipe/taggr.hpp"
#include <json.hpp>

namespace fcdpipe {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::string city = "city";
  GridConfig grid;
  EncodingParams encoding;
  JoinParams join;
  FilterPolicy filter;
  bool normalize_free_flow = false;
  MaxspeedPolicy maxspeed_policy = MaxspeedPolicy::Mean;
  std::uint64_t seed = 0;
  int agg_factor = 3;
  int jobs = 1;
  int cluster_k = 5;
  int cluster_days = 20;
  FreeFlowParams free_flow;
  fs::path graph_path;
  fs::path probe_dir;
  fs::path output_dir;
};

inline std::string to_string(MaxspeedPolicy p) { return p == MaxspeedPolicy::Max ? "max" : "mean"; }

/// Relative paths are resolved against `base_dir`.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
  PipelineConfig c;
  auto path_of = [&](const nlohmann::json& paths, const char* key) -> fs::path {
    if (!paths.contains(key)) return {};
    fs::path p = paths.at(key).get<std::string>();
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  try {
    c.city = j.value("city", c.city);
    if (!j.contains("grid")) throw ConfigError("pipeline config: missing 'grid'");
    const GridFileConfig g = grid_config_from_json(j.at("grid"));
    c.grid = g.grid;
    c.encoding = g.encoding;
    c.seed = j.value("seed", std::uint64_t{0});
    c.agg_factor = j.value("agg_factor", 3);
    if (j.contains("join")) {
      const auto& jj = j.at("join");
      c.join.step = jj.value("step", c.join.step);
      c.join.pos_margin = jj.value("pos_margin", c.join.pos_margin);
      c.join.ang_margin = jj.value("ang_margin", c.join.ang_margin);
    }
    c.filter.interpretation = filter_from_string(j.value("filter", std::string("paired")));
    c.normalize_free_flow = j.value("normalize_freeflow", false);
    c.maxspeed_policy = maxspeed_policy_from_string(j.value("maxspeed_policy", std::string("mean")));
    if (j.contains("cluster")) {
      c.cluster_k = j.at("cluster").value("k", c.cluster_k);
      c.cluster_days = j.at("cluster").value("days", c.cluster_days);
    }
    if (j.contains("free_flow")) {
      c.free_flow.quantile = j.at("free_flow").value("quantile", c.free_flow.quantile);
      c.free_flow.fallback_kph = j.at("free_flow").value("default", c.free_flow.fallback_kph);
    }
    const nlohmann::json paths = j.value("paths", nlohmann::json::object());
    c.graph_path = path_of(paths, "graph");
    c.probe_dir = path_of(paths, "probe_dir");
    c.output_dir = path_of(paths, "output_dir");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.join.validate();
  c.filter.validate();
  if (c.agg_factor <= 0 || c.grid.bins_per_day % c.agg_factor != 0)
    throw ConfigError("pipeline config: agg_factor must divide bins_per_day");
  if (c.cluster_k <= 0 || c.cluster_days <= 0)
    throw ConfigError("pipeline config: cluster k and days must be positive");
  return c;
}

/// Paths are written as given; callers choose relative or absolute.
inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
  return {{"city", c.city},
          {"grid", grid_config_to_json(c.grid, c.encoding)},
          {"seed", c.seed},
          {"agg_factor", c.agg_factor},
          {"join", {{"step", c.join.step}, {"pos_margin", c.join.pos_margin}, {"ang_margin", c.join.ang_margin}}},
          {"filter", to_string(c.filter.interpretation)},
          {"normalize_freeflow", c.normalize_free_flow},
          {"maxspeed_policy", to_string(c.maxspeed_policy)},
          {"cluster", {{"k", c.cluster_k}, {"days", c.cluster_days}}},
          {"free_flow", {{"quantile", c.free_flow.quantile}, {"default", c.free_flow.fallback_kph}}},
          {"paths",
           {{"graph", c.graph_path.generic_string()},
            {"probe_dir", c.probe_dir.generic_string()},
            {"output_dir", c.output_dir.generic_string()}}}};
}

inline PipelineConfig load_pipeline_config(const fs::path& path) {
  return pipeline_config_from_json(read_json_file(path.string()), path.parent_path());
}

// ---------------------------------------------------------------------------
// Stages

enum class Stage { Bin, Aggregate, Cluster, LoadGraph, Join, FreeFlow, Speeds };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::Bin: return "bin";
    case Stage::Aggregate: return "dp01";
    case Stage::Cluster: return "dp02";
    case Stage::LoadGraph: return "dp03-load";
    case Stage::Join: return "dp04";
    case Stage::FreeFlow: return "dp05";
    case Stage::Speeds: return "dp06";
  }
  return "?";
}

inline Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::Bin, Stage::Aggregate, Stage::Cluster, Stage::LoadGraph, Stage::Join,
                   Stage::FreeFlow, Stage::Speeds})
    if (to_string(st) == s) return st;
  throw ConfigError("unknown stage '" + s + "'");
}

/// Failure inside a stage, or a missing upstream artifact (`required` then
/// names the stage that produces it).
class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, std::string required, const std::string& msg)
      : std::runtime_error(to_string(stage) + ": " + msg), stage_(stage), required_(std::move(required)) {}
  Stage stage() const { return stage_; }
  const std::string& required() const { return required_; }

 private:
  Stage stage_;
  std::string required_;
};

struct Artifacts {
  fs::path root;
  fs::path movies() const { return root / "movies"; }
  fs::path agg() const { return root / "agg"; }
  fs::path clusters() const { return root / "cell_clusters.tensor"; }
  fs::path graph() const { return root / "road_graph.json"; }
  fs::path intersections() const { return root / "intersecting_cells.csv"; }
  fs::path free_flow() const { return root / "free_flow.csv"; }
  fs::path speeds() const { return root / "speeds"; }
};

struct StageResult {
  Stage stage = Stage::Bin;
  std::vector<fs::path> written;
  std::string summary;
};

namespace detail {

/// Files in `dir` with extension `ext`, sorted by name.
inline std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline void require_file(Stage stage, const fs::path& p, Stage producer) {
  if (!fs::is_regular_file(p))
    throw StageError(stage, to_string(producer),
                     "requires the output of " + to_string(producer) + " (missing " + p.string() + ")");
}

inline std::vector<fs::path> require_files(Stage stage, const fs::path& dir, const std::string& ext,
                                           Stage producer) {
  auto files = list_files(dir, ext);
  if (files.empty())
    throw StageError(stage, to_string(producer),
                     "requires the output of " + to_string(producer) + " (no " + ext + " files in " +
                         dir.string() + ")");
  return files;
}

inline RoadGraph load_stage_graph(Stage stage, const Artifacts& a, const PipelineConfig& cfg) {
  require_file(stage, a.graph(), Stage::LoadGraph);
  GraphLoadOptions opts;
  opts.policy = cfg.maxspeed_policy;
  return load_graph(a.graph(), opts);
}

}  // namespace detail

inline StageResult run_stage(Stage stage, const PipelineConfig& cfg) {
  if (cfg.output_dir.empty()) throw StageError(stage, "", "no output_dir configured");
  const Artifacts a{cfg.output_dir};
  StageResult res;
  res.stage = stage;
  std::ostringstream summary;

  switch (stage) {
    case Stage::Bin: {
      if (cfg.probe_dir.empty() || !fs::is_directory(cfg.probe_dir))
        throw StageError(stage, "", "probe_dir '" + cfg.probe_dir.string() + "' is not a directory");
      const auto files = detail::list_files(cfg.probe_dir, ".csv");
      if (files.empty()) throw StageError(stage, "", "no probe CSV files in " + cfg.probe_dir.string());
      fs::create_directories(a.movies());
      std::vector<BinResult> results(files.size());
      parallel_for(files.size(), cfg.jobs, [&](std::size_t i) {
        const std::string day = files[i].stem().string();
        results[i] = bin_probes(read_probes(files[i]), cfg.grid, cfg.encoding, day);
        write_movie(results[i].movie, a.movies() / (day + ".movie"));
      });
      std::size_t binned = 0, dropped = 0, rejected = 0;
      for (std::size_t i = 0; i < files.size(); ++i) {
        res.written.push_back(a.movies() / (files[i].stem().string() + ".movie"));
        binned += results[i].binned;
        dropped += results[i].dropped_out_of_box;
        rejected += results[i].rejected_non_finite + results[i].rejected_out_of_day;
      }
      summary << files.size() << " day(s), " << binned << " probes binned, " << dropped
              << " outside the box, " << rejected << " rejected";
      break;
    }
    case Stage::Aggregate: {
      const auto files = detail::require_files(stage, a.movies(), ".movie", Stage::Bin);
      fs::create_directories(a.agg());
      parallel_for(files.size(), cfg.jobs, [&](std::size_t i) {
        const MovieDay m = read_movie(files[i]);
        check_movie_matches(m, cfg.grid);
        write_agg_movie(aggregate(m, cfg.agg_factor), a.agg() / (files[i].stem().string() + ".agg"));
      });
      for (const auto& f : files) res.written.push_back(a.agg() / (f.stem().string() + ".agg"));
      summary << files.size() << " day(s) aggregated by " << cfg.agg_factor;
      break;
    }
    case Stage::Cluster: {
      const auto files = detail::require_files(stage, a.agg(), ".agg", Stage::Aggregate);
      std::vector<std::string> days;
      for (const auto& f : files) days.push_back(f.stem().string());
      const auto chosen = sample_days(days, static_cast<std::size_t>(cfg.cluster_days), cfg.seed);
      std::vector<AggMovieDay> movies;
      for (const auto& d : chosen) movies.push_back(read_agg_movie(a.agg() / (d + ".agg")));
      KMeansOptions opt;
      opt.k = cfg.cluster_k;
      opt.seed = cfg.seed;
      write_cell_clusters(compute_cell_clusters(movies, opt, cfg.jobs), a.clusters());
      res.written.push_back(a.clusters());
      summary << "clustered " << chosen.size() << " of " << days.size() << " day(s), k=" << cfg.cluster_k;
      break;
    }
    case Stage::LoadGraph: {
      if (cfg.graph_path.empty() || !fs::is_regular_file(cfg.graph_path))
        throw StageError(stage, "", "graph file '" + cfg.graph_path.string() + "' not found");
      GraphLoadOptions opts;
      opts.policy = cfg.maxspeed_policy;
      RoadGraph g;
      try {
        g = load_graph(cfg.graph_path, opts);
      } catch (const GraphError& e) {
        throw StageError(stage, "", e.what());
      }
      fs::create_directories(a.root);
      write_graph(g, a.graph());
      res.written.push_back(a.graph());
      summary << g.nodes.size() << " nodes, " << g.edges.size() << " edges, maxspeed policy "
              << to_string(cfg.maxspeed_policy);
      break;
    }
    case Stage::Join: {
      const RoadGraph g = detail::load_stage_graph(stage, a, cfg);
      const Intersections inter = join_graph(g, cfg.grid, cfg.join, cfg.jobs);
      write_intersections(inter, a.intersections());
      res.written.push_back(a.intersections());
      std::size_t rows = 0;
      for (const auto& [k, cells] : inter) rows += cells.size();
      summary << inter.size() << " edges, " << rows << " (edge, cell, heading) rows";
      break;
    }
    case Stage::FreeFlow: {
      detail::require_file(stage, a.intersections(), Stage::Join);
      detail::require_file(stage, a.clusters(), Stage::Cluster);
      const RoadGraph g = detail::load_stage_graph(stage, a, cfg);
      const Intersections inter = read_intersections(a.intersections());
      const CellClusters cc = read_cell_clusters(a.clusters());
      if (cc.rows() != cfg.grid.rows || cc.cols() != cfg.grid.cols)
        throw StageError(stage, "", "cell clusters do not match the configured grid");
      write_free_flow(free_flow_graph(g, inter, cc, cfg.free_flow), a.free_flow());
      res.written.push_back(a.free_flow());
      summary << "free flow for " << g.edges.size() << " edges";
      break;
    }
    case Stage::Speeds: {
      detail::require_file(stage, a.intersections(), Stage::Join);
      const auto files = detail::require_files(stage, a.agg(), ".agg", Stage::Aggregate);
      detail::require_file(stage, a.free_flow(), Stage::FreeFlow);
      const RoadGraph g = detail::load_stage_graph(stage, a, cfg);
      const Intersections inter = read_intersections(a.intersections());
      const FreeFlowTable ff = read_free_flow(a.free_flow());
      SpeedOptions opt;
      opt.filter = cfg.filter;
      opt.normalize_free_flow = cfg.normalize_free_flow;
      fs::create_directories(a.speeds());
      std::vector<std::size_t> rows(files.size()), kept(files.size());
      parallel_for(files.size(), cfg.jobs, [&](std::size_t i) {
        const AggMovieDay agg = read_agg_movie(files[i]);
        const auto recs = compute_segment_speeds(g, inter, agg, ff, opt);
        rows[i] = recs.size();
        kept[i] = static_cast<std::size_t>(
            std::count_if(recs.begin(), recs.end(), [](const SegmentRecord& r) { return !r.filtered; }));
        write_segments(recs, a.speeds() / (files[i].stem().string() + ".csv"));
      });
      std::size_t total = 0, unfiltered = 0;
      for (std::size_t i = 0; i < files.size(); ++i) {
        res.written.push_back(a.speeds() / (files[i].stem().string() + ".csv"));
        total += rows[i];
        unfiltered += kept[i];
      }
      summary << files.size() << " day(s), " << total << " records, " << unfiltered
              << " unfiltered (filter " << to_string(cfg.filter.interpretation) << ")";
      break;
    }
  }
  res.summary = summary.str();
  return res;
}

// ---------------------------------------------------------------------------
// Synthetic city

struct SyntheticCity {
  GridConfig grid;
  RoadGraph graph;  // maxspeed already resolved
  nlohmann::json graph_json;
};

/// 10 x 10 node lattice with 0.002 degree spacing, nodes at cell centres.
/// Two-way axis streets (perimeter primary, middle row/column secondary,
/// rest residential) and two-way tertiary diagonals along both main
/// diagonals of the lattice. The perimeter carries a two-valued maxspeed
/// tag so the mean/max policy matters.
inline SyntheticCity make_synthetic_city() {
  SyntheticCity c;
  c.grid = make_grid(52.5, 52.522, 13.4, 13.422, 0.001, 288);
  constexpr int n = 10;
  constexpr double spacing = 0.002;
  auto id = [](int i, int j) { return static_cast<NodeId>(i * n + j + 1); };
  auto lat = [&](int i) { return c.grid.lat_min + 0.0015 + spacing * i; };
  auto lon = [&](int j) { return c.grid.lon_min + 0.0015 + spacing * j; };

  nlohmann::json nodes = nlohmann::json::array(), edges = nlohmann::json::array();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) nodes.push_back({{"id", id(i, j)}, {"lat", lat(i)}, {"lon", lon(j)}});

  auto add = [&](int i0, int j0, int i1, int j1, const std::string& highway, bool tagged) {
    for (int dir = 0; dir < 2; ++dir) {
      const int ai = dir ? i1 : i0, aj = dir ? j1 : j0, bi = dir ? i0 : i1, bj = dir ? j0 : j1;
      nlohmann::json e = {{"u", id(ai, aj)},
                          {"v", id(bi, bj)},
                          {"geometry", {{lat(ai), lon(aj)}, {lat(bi), lon(bj)}}},
                          {"highway", highway}};
      if (tagged) e["maxspeed"] = {50, 60};
      edges.push_back(std::move(e));
    }
  };
  auto axis_class = [&](int line) {
    if (line == 0 || line == n - 1) return std::string("primary");
    if (line == n / 2) return std::string("secondary");
    return std::string("residential");
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j + 1 < n; ++j) {
      add(i, j, i, j + 1, axis_class(i), i == 0 || i == n - 1);  // east-west
      add(j, i, j + 1, i, axis_class(i), i == 0 || i == n - 1);  // north-south
    }
  for (int i = 0; i + 1 < n; ++i) {
    add(i, i, i + 1, i + 1, "tertiary", false);
    add(i, n - 1 - i, i + 1, n - 2 - i, "tertiary", false);
  }
  c.graph_json = {{"nodes", nodes}, {"edges", edges}};
  c.graph = graph_from_json(c.graph_json);
  return c;
}

struct TrafficOptions {
  double rate_scale = 1.0;       // vehicles per minute multiplier
  double probe_interval_s = 5.0;
  double heading_noise_deg = 5.0;
};

/// Relative demand over the day: low at night, morning and evening peaks.
inline double demand_profile(double hour) {
  const double day = hour >= 6.0 && hour < 22.0 ? 0.45 : 0.06;
  const double am = std::exp(-0.5 * (hour - 8.0) * (hour - 8.0));
  const double pm = std::exp(-0.5 * (hour - 17.5) * (hour - 17.5));
  return day + 0.5 * (am + pm);
}

/// Congestion intensity in [0, 1]: peaks at the rush hours.
inline double congestion_level(double hour) {
  const double am = std::exp(-0.5 * (hour - 8.0) * (hour - 8.0) / 0.5625);
  const double pm = std::exp(-0.5 * (hour - 17.5) * (hour - 17.5) / 0.5625);
  return std::min(1.0, am + pm);
}

/// One day of probes on the synthetic city. Arrivals per edge are a
/// thinned Poisson process; rush-hour trips are slowed by a random share
/// of the congestion level.
inline ProbeSet city_traffic(const RoadGraph& g, std::uint64_t seed, const TrafficOptions& opt = {}) {
  static const std::map<std::string, double> base_rate = {
      {"primary", 0.6}, {"secondary", 0.4}, {"tertiary", 0.3}, {"residential", 0.15}};
  ProbeSet out;
  for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
    const Edge& e = g.edges[ei];
    Rng rng(splitmix64(seed ^ splitmix64(ei + 1)));
    const auto it = base_rate.find(e.highway);
    const double per_min = (it == base_rate.end() ? 0.2 : it->second) * opt.rate_scale;
    const double max_rate = per_min * 1.0 / 60.0;  // demand_profile never exceeds 1
    if (!(max_rate > 0.0)) continue;
    double t = 0.0;
    while (true) {
      double u = uniform01(rng);
      while (u <= 0.0) u = uniform01(rng);
      t += -std::log(u) / max_rate;
      if (t >= 86400.0) break;
      const double hour = t / 3600.0;
      if (uniform01(rng) >= demand_profile(hour)) continue;
      const double free = e.speed_kph * uniform_real(rng, 0.85, 1.05);
      const double slow = congestion_level(hour) * uniform_real(rng, 0.5, 0.8);
      Trip trip{ei, t, std::max(5.0, free * (1.0 - slow))};
      emit_trip(e, trip, opt.probe_interval_s, opt.heading_noise_deg, rng, out);
    }
  }
  std::sort(out.begin(), out.end(), [](const Probe& a, const Probe& b) { return a.t < b.t; });
  return out;
}

// ---------------------------------------------------------------------------
// Demo

struct DemoOptions {
  fs::path out_dir = "fcdpipe_demo";
  std::uint64_t seed = 42;
  int jobs = 1;
  int days = 7;
  FilterInterpretation filter = FilterInterpretation::Paired;
  double rate_scale = 0.25;
};

struct DemoCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct DemoReport {
  std::vector<DemoCheck> checks;
  std::string text;
  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const DemoCheck& c) { return c.pass; });
  }
};

namespace detail {

inline std::string fmt(double x, int prec = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, x);
  return buf;
}

inline std::string demo_day(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "day%02d", i + 1);
  return buf;
}

/// Fleet on a one-cell edge, binned and aggregated; returns the decoded
/// aggregated speed of the cell the fleet drove through.
inline double binned_fleet_speed(const FleetSpec& spec, const RoadGraph& g, const GridConfig& grid,
                                 const EncodingParams& enc, int agg_factor) {
  const ProbeSet probes = simulate_probes(spec, g, grid);
  const BinResult br = bin_probes(probes, grid, enc, "fleet");
  const AggMovieDay agg = aggregate(br.movie, agg_factor);
  const Probe& p = probes.front();
  const auto cell = cell_of(p.lat, p.lon, grid);
  const int bin = time_bin_of(p.t, grid) / agg_factor;
  return agg.speed(bin, cell->row, cell->col, heading_quadrant(p.angle));
}

}  // namespace detail

/// Harmonic-mean fleet check inside one cell of `grid`. Returns
/// (binned, harmonic, arithmetic) speeds for the sampled fleet; with
/// `equal_readings` every vehicle emits the same number of probes.
struct FleetCheck {
  double binned = 0.0;
  double harmonic = 0.0;
  double arithmetic = 0.0;
};

inline FleetCheck fleet_check(const GridConfig& grid, const EncodingParams& enc, std::uint64_t seed,
                              bool equal_readings, int agg_factor = 3) {
  Rng rng(seed);
  // Short eastbound edge around the centre of a mid-grid cell.
  const Cell cell{grid.rows / 2, grid.cols / 2};
  const LatLon c = cell_center(cell, grid);
  const double half = 0.3 * grid.cell_size;
  nlohmann::json gj = {
      {"nodes", {{{"id", 1}, {"lat", c.lat}, {"lon", c.lon - half}}, {{"id", 2}, {"lat", c.lat}, {"lon", c.lon + half}}}},
      {"edges", {{{"u", 1}, {"v", 2}, {"highway", "primary"}}}}};
  const RoadGraph g = graph_from_json(gj);

  FleetSpec spec;
  spec.route = g.edges.front().key();
  spec.probe_constant = 36000.0;
  spec.fixed_readings = equal_readings ? 200 : 0;
  const int classes = 2 + static_cast<int>(uniform_index(rng, 4));
  std::vector<double> speeds;
  for (int i = 0; i < classes; ++i) {
    VehicleClass vc{uniform_real(rng, 10.0, 110.0), 1 + static_cast<int>(uniform_index(rng, 4))};
    spec.vehicles.push_back(vc);
    for (int k = 0; k < vc.count; ++k) speeds.push_back(vc.speed_kph);
  }
  // Start of an aggregated bin; all traversals end well inside its first
  // 5-minute bin.
  const double agg_bin_s = grid.seconds_per_bin() * agg_factor;
  spec.t_start = agg_bin_s * static_cast<double>(uniform_index(rng, grid.bins_per_day / agg_factor));
  spec.headway_s = 2.0;

  FleetCheck out;
  out.binned = detail::binned_fleet_speed(spec, g, grid, enc, agg_factor);
  out.harmonic = harmonic_mean(speeds);
  out.arithmetic = arithmetic_mean(speeds);
  return out;
}

inline double fleet_tolerance(const EncodingParams& enc = {}) {
  return 2.0 * enc.speed_cap / enc.code_max + 1.0;
}

/// Builds the synthetic city and its traffic under `opt.out_dir`, runs every
/// stage, then the oracle checks. The report (also written to report.txt)
/// contains no timings so that runs with the same seed are byte-identical.
inline DemoReport run_demo(const DemoOptions& opt) {
  const fs::path root = opt.out_dir;
  fs::create_directories(root / "probes");
  const SyntheticCity city = make_synthetic_city();
  write_file_atomic(root / "graph.json", city.graph_json.dump(1) + "\n");

  PipelineConfig cfg;
  cfg.city = "synthetic";
  cfg.grid = city.grid;
  cfg.seed = opt.seed;
  cfg.jobs = opt.jobs;
  cfg.filter.interpretation = opt.filter;
  cfg.graph_path = "graph.json";
  cfg.probe_dir = "probes";
  cfg.output_dir = "out";
  write_file_atomic(root / "config.json", pipeline_config_to_json(cfg).dump(2) + "\n");
  cfg = load_pipeline_config(root / "config.json");
  cfg.jobs = opt.jobs;

  TrafficOptions traffic;
  traffic.rate_scale = opt.rate_scale;
  std::size_t probe_total = 0;
  std::vector<ProbeSet> day_probes(static_cast<std::size_t>(opt.days));
  for (int d = 0; d < opt.days; ++d) {
    day_probes[d] = city_traffic(city.graph, splitmix64(opt.seed + 1000003ULL * (d + 1)), traffic);
    probe_total += day_probes[d].size();
    write_probes(day_probes[d], cfg.probe_dir / (detail::demo_day(d) + ".csv"));
  }

  std::ostringstream os;
  os << "city: " << cfg.city << ", " << city.graph.nodes.size() << " nodes, " << city.graph.edges.size()
     << " edges, grid " << cfg.grid.rows << "x" << cfg.grid.cols << ", " << opt.days << " day(s), seed "
     << opt.seed << "\n";
  os << "probes: " << probe_total << "\n\n";

  for (Stage s : {Stage::Bin, Stage::Aggregate, Stage::Cluster, Stage::LoadGraph, Stage::Join,
                  Stage::FreeFlow, Stage::Speeds}) {
    StageResult r;
    try {
      r = run_stage(s, cfg);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(s, "", e.what());
    }
    os << to_string(s) << ": " << r.summary << "\n";
  }
  os << "\n";

  DemoReport rep;
  const Artifacts art{cfg.output_dir};
  const std::string day0 = detail::demo_day(0);

  {  // Spot binning against the brute-force oracle on every day.
    bool same = true;
    for (int d = 0; d < opt.days; ++d) {
      const MovieDay fast = read_movie(art.movies() / (detail::demo_day(d) + ".movie"));
      const MovieDay slow = oracle_movie(brute_force_bin(day_probes[d], cfg.grid, cfg.encoding), cfg.grid,
                                         cfg.encoding, detail::demo_day(d));
      same = same && fast == slow;
    }
    rep.checks.push_back({"spot binning equals brute-force oracle", same,
                          std::to_string(opt.days) + " day(s), " + std::to_string(probe_total) + " probes"});
  }

  {  // Harmonic and arithmetic mean fleets.
    const double tol = fleet_tolerance(cfg.encoding);
    const FleetCheck h = fleet_check(cfg.grid, cfg.encoding, splitmix64(opt.seed ^ 0x4841524dULL), false,
                                     cfg.agg_factor);
    const double err = std::abs(h.binned - h.harmonic);
    rep.checks.push_back({"harmonic-mean check", err <= tol,
                          "binned " + detail::fmt(h.binned) + " kph, harmonic " + detail::fmt(h.harmonic) +
                              " kph, error " + detail::fmt(err, 3) + " kph, tolerance " + detail::fmt(tol, 3)});
    const FleetCheck a = fleet_check(cfg.grid, cfg.encoding, splitmix64(opt.seed ^ 0x4152494dULL), true,
                                     cfg.agg_factor);
    const double aerr = std::abs(a.binned - a.arithmetic);
    rep.checks.push_back({"equal-readings check", aerr <= tol && a.binned >= a.harmonic,
                          "binned " + detail::fmt(a.binned) + " kph, arithmetic " + detail::fmt(a.arithmetic) +
                              " kph, harmonic " + detail::fmt(a.harmonic) + " kph"});
  }

  const RoadGraph g = load_graph(art.graph());
  const Intersections inter = read_intersections(art.intersections());
  std::vector<SegmentRecord> all;
  for (int d = 0; d < opt.days; ++d) {
    auto recs = read_segments(art.speeds() / (detail::demo_day(d) + ".csv"));
    all.insert(all.end(), recs.begin(), recs.end());
  }

  {  // Self-join of the first day.
    const auto recs = read_segments(art.speeds() / (day0 + ".csv"));
    const auto pairs = match(recs, recs, g, complex_edges(inter));
    const auto rows = diff_stats(pairs, GroupBy::Highway);
    bool zero = !pairs.empty() && ape_share_below(pairs, 1e-12) == 1.0;
    std::size_t parts = 0;
    for (const auto& r : rows) {
      if (r.group == "TOTAL") continue;
      parts += r.count;
      zero = zero && r.mean == 0.0 && r.std == 0.0 && r.median == 0.0;
    }
    zero = zero && parts == rows.back().count && rows.back().count == pairs.size();
    rep.checks.push_back({"compare self-join", zero,
                          std::to_string(pairs.size()) + " pairs, all differences and APEs zero"});
    write_file_atomic(root / "self_join_stats.csv", diff_stats_to_csv(rows));
  }

  {  // Filter off against the configured policy.
    const FreeFlowTable ff = read_free_flow(art.free_flow());
    const AggMovieDay agg = read_agg_movie(art.agg() / (day0 + ".agg"));
    SpeedOptions off;
    off.filter.interpretation = FilterInterpretation::Off;
    SpeedOptions on;
    on.filter = cfg.filter;
    auto usable = [](const std::vector<SegmentRecord>& v) {
      return static_cast<std::size_t>(
          std::count_if(v.begin(), v.end(), [](const SegmentRecord& r) { return !r.filtered; }));
    };
    const std::size_t n_off = usable(compute_segment_speeds(g, inter, agg, ff, off));
    const std::size_t n_on = usable(compute_segment_speeds(g, inter, agg, ff, on));
    rep.checks.push_back({"filter " + to_string(cfg.filter.interpretation) + " vs off", n_on <= n_off,
                          std::to_string(n_on) + " usable records vs " + std::to_string(n_off)});
  }

  const int agg_bins = cfg.grid.bins_per_day / cfg.agg_factor;
  const Coverage cov = coverage_by_orientation(all, g, agg_bins);

  os << "checks:\n";
  for (const auto& c : rep.checks)
    os << "  " << (c.pass ? "PASS" : "FAIL") << "  " << c.name << " (" << c.detail << ")\n";
  os << "\ncoverage (share of 15-min slots with an unfiltered speed):\n";
  os << "  axis-aligned " << detail::fmt(100.0 * cov.axis) << " % over " << cov.axis_edges << " edges\n";
  os << "  diagonal     " << detail::fmt(100.0 * cov.diagonal) << " % over " << cov.diagonal_edges << " edges\n";
  os << "\nself-join diff stats by highway:\n";
  {
    const auto recs = read_segments(art.speeds() / (day0 + ".csv"));
    const auto pairs = match(recs, recs, g, complex_edges(inter));
    os << comparison_report(pairs, diff_stats(pairs, GroupBy::Highway), "highway");
  }
  os << "\n" << (rep.all_pass() ? "all checks passed" : "some checks FAILED") << "\n";
  rep.text = os.str();
  write_file_atomic(root / "report.txt", rep.text);
  return rep;
}

}  // namespace fcdpipe
