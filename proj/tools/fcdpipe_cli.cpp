// fcdpipe command-line front end.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fcdpipe/fcdpipe.hpp"

namespace {

using namespace fcdpipe;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

PipelineConfig load_config(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required for this subcommand");
  PipelineConfig cfg = load_pipeline_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  cfg.jobs = g.jobs;
  return cfg;
}

bool on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw ConfigError("expected on or off, got '" + s + "'");
}

void run(const PipelineConfig& cfg, Stage s) {
  const StageResult r = run_stage(s, cfg);
  std::cout << to_string(s) << ": " << r.summary << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floating car data pipeline: spot binning, spatial join, free flow and segment speeds"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "pipeline config (JSON)");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--jobs", g.jobs, "worker threads per stage")->check(CLI::PositiveNumber);

  auto* bin = app.add_subcommand("bin", "probe CSVs -> movies");
  auto* aggregate = app.add_subcommand("aggregate", "dp01: movies -> aggregated movies");
  aggregate->add_option("--factor", "5-minute bins per aggregated bin (default from config)");

  std::string maxspeed_policy;
  auto* load = app.add_subcommand("load-graph", "dp03-load: normalise the road graph");
  load->add_option("--maxspeed-policy", maxspeed_policy, "mean|max");
  auto* join = app.add_subcommand("join", "dp03-load + dp04: intersecting cells per edge");
  join->add_option("--maxspeed-policy", maxspeed_policy, "mean|max");

  auto* cluster = app.add_subcommand("cluster", "dp02: per-cell speed clusters");
  auto* freeflow = app.add_subcommand("freeflow", "dp05: free-flow speed per edge");

  std::string filter, normalize;
  auto* speeds = app.add_subcommand("speeds", "dp06: segment speeds with confidence filter");
  speeds->add_option("--filter", filter, "paired|verbatim|off");
  speeds->add_option("--normalize-freeflow", normalize, "on|off");

  std::string scenario, graph_path, probes_out;
  auto* simulate = app.add_subcommand("simulate", "idealized fleet -> probe CSV");
  simulate->add_option("--scenario", scenario, "fleet spec (JSON)")->required();
  simulate->add_option("--graph", graph_path, "graph file (default from config)");
  simulate->add_option("--out", probes_out, "probe CSV to write")->required();

  std::string csv_a, csv_b, cmp_graph, cmp_inter, group_by = "highway", cmp_out;
  bool hour_mean = false;
  int bins_per_hour = 4;
  auto* compare = app.add_subcommand("compare", "diff statistics between two segment-speed CSVs");
  compare->add_option("--a", csv_a, "segment CSV (prediction)")->required();
  compare->add_option("--b", csv_b, "segment CSV (reference)")->required();
  compare->add_option("--graph", cmp_graph, "graph file")->required();
  compare->add_option("--intersections", cmp_inter, "intersecting cells CSV (for complexity)");
  compare->add_option("--group-by", group_by, "highway|length|complexity");
  compare->add_flag("--hour-mean", hour_mean, "average source a per hour before matching");
  compare->add_option("--bins-per-hour", bins_per_hour, "bins per hour in source a");
  compare->add_option("--out-dir", cmp_out, "write diff_stats.csv, histogram.csv and report.txt here");

  std::string demo_out = "fcdpipe_demo", demo_filter = "paired";
  int demo_days = 7;
  auto* demo = app.add_subcommand("demo", "synthetic city end to end with oracle checks");
  demo->add_option("--out", demo_out, "output directory");
  demo->add_option("--days", demo_days, "synthetic days")->check(CLI::PositiveNumber);
  demo->add_option("--filter", demo_filter, "paired|verbatim|off");

  std::string stage_name;
  auto* stage = app.add_subcommand("stage", "run one stage by name (bin, dp01 .. dp06)");
  stage->add_option("name", stage_name)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*bin) run(load_config(g), Stage::Bin);
    if (*aggregate) {
      PipelineConfig cfg = load_config(g);
      if (auto* o = aggregate->get_option("--factor"); o->count() > 0) cfg.agg_factor = o->as<int>();
      if (cfg.agg_factor <= 0 || cfg.grid.bins_per_day % cfg.agg_factor != 0)
        throw ConfigError("--factor must divide bins_per_day");
      run(cfg, Stage::Aggregate);
    }
    if (*load || *join) {
      PipelineConfig cfg = load_config(g);
      if (!maxspeed_policy.empty()) cfg.maxspeed_policy = maxspeed_policy_from_string(maxspeed_policy);
      run(cfg, Stage::LoadGraph);
      if (*join) run(cfg, Stage::Join);
    }
    if (*cluster) run(load_config(g), Stage::Cluster);
    if (*freeflow) run(load_config(g), Stage::FreeFlow);
    if (*speeds) {
      PipelineConfig cfg = load_config(g);
      if (!filter.empty()) cfg.filter.interpretation = filter_from_string(filter);
      if (!normalize.empty()) cfg.normalize_free_flow = on_off(normalize);
      run(cfg, Stage::Speeds);
    }
    if (*stage) run(load_config(g), stage_from_string(stage_name));
    if (*simulate) {
      const PipelineConfig cfg = load_config(g);
      GraphLoadOptions opts;
      opts.policy = cfg.maxspeed_policy;
      const RoadGraph graph = load_graph(graph_path.empty() ? cfg.graph_path : fs::path(graph_path), opts);
      FleetSpec spec = fleet_from_json(read_json_file(scenario));
      resolve_route(spec, graph);
      const ProbeSet probes = simulate_probes(spec, graph, cfg.grid);
      write_probes(probes, probes_out);
      std::cout << "simulate: " << probes.size() << " probes -> " << probes_out << "\n";
    }
    if (*compare) {
      const GroupBy by = group_by_from_string(group_by);
      const RoadGraph graph = load_graph(cmp_graph);
      std::set<EdgeKey> complex;
      if (!cmp_inter.empty()) complex = complex_edges(read_intersections(cmp_inter));
      else if (by == GroupBy::Complexity)
        throw ConfigError("--group-by complexity needs --intersections");
      MatchOptions mo;
      mo.hour_mean = hour_mean;
      mo.bins_per_hour = bins_per_hour;
      const auto pairs = match(read_segments(csv_a), read_segments(csv_b), graph, complex, mo);
      const auto rows = diff_stats(pairs, by);
      const std::string report = comparison_report(pairs, rows, group_by);
      std::cout << report;
      if (!cmp_out.empty()) {
        write_file_atomic(fs::path(cmp_out) / "diff_stats.csv", diff_stats_to_csv(rows));
        write_file_atomic(fs::path(cmp_out) / "histogram.csv", histogram_to_csv(diff_histogram(pairs)));
        write_file_atomic(fs::path(cmp_out) / "report.txt", report);
      }
    }
    if (*demo) {
      DemoOptions opt;
      opt.out_dir = demo_out;
      opt.seed = g.seed.value_or(42);
      opt.jobs = g.jobs;
      opt.days = demo_days;
      opt.filter = filter_from_string(demo_filter);
      const auto t0 = std::chrono::steady_clock::now();
      const DemoReport rep = run_demo(opt);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << rep.text;
      std::printf("elapsed: %.1f s\n", secs);
      return rep.all_pass() ? 0 : 1;
    }
  } catch (const StageError& e) {
    std::cerr << "error: stage " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
