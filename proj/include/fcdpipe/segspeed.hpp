#pragma once

// Per-edge, per-bin segment speeds from aggregated movies and the
// confidence filter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fcdpipe/freeflow.hpp"
#include "fcdpipe/io.hpp"
#include "fcdpipe/roadgraph.hpp"
#include "fcdpipe/sjoin.hpp"
#include "fcdpipe/taggr.hpp"

namespace fcdpipe {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct SegmentRecord {
  std::string day;
  int t = 0;
  EdgeKey key;
  std::uint64_t volume = 0;
  double median_speed_kph = kNaN;
  double mean_speed_kph = kNaN;
  double std_speed_kph = kNaN;
  bool filtered = false;

  bool has_data() const { return !std::isnan(median_speed_kph); }
};

enum class MedianRule { Lower, Midpoint };

/// Median, mean and population std of `xs` (sorted in place).
struct Summary {
  double median = kNaN;
  double mean = kNaN;
  double std = kNaN;
};

inline Summary summarize(std::vector<double>& xs, MedianRule rule = MedianRule::Lower) {
  Summary s;
  if (xs.empty()) return s;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n % 2 == 1)
    s.median = xs[n / 2];
  else
    s.median = rule == MedianRule::Lower ? xs[n / 2 - 1] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(n));
  return s;
}

/// Collects the speeds of the intersecting cells that have data in `bin`.
/// Lower median by default so the reported speed is one actually observed.
inline SegmentRecord segment_speed(const EdgeKey& key, const AggMovieDay& agg, int bin,
                                   const std::vector<CellFraction>& cells,
                                   MedianRule rule = MedianRule::Lower) {
  SegmentRecord rec;
  rec.day = agg.day();
  rec.t = bin;
  rec.key = key;
  std::vector<double> speeds;
  for (const CellFraction& cf : cells) {
    if (cf.row < 0 || cf.row >= agg.rows() || cf.col < 0 || cf.col >= agg.cols()) continue;
    if (!agg.has_data(bin, cf.row, cf.col, cf.heading)) continue;
    speeds.push_back(agg.speed(bin, cf.row, cf.col, cf.heading));
    rec.volume += agg.volume(bin, cf.row, cf.col, cf.heading);
  }
  const Summary s = summarize(speeds, rule);
  rec.median_speed_kph = s.median;
  rec.mean_speed_kph = s.mean;
  rec.std_speed_kph = s.std;
  return rec;
}

inline double congestion_factor(double ssp, double ff) {
  if (!(ff > 0.0)) throw std::invalid_argument("congestion_factor: free flow must be positive");
  return ssp / ff;
}

enum class FilterInterpretation { Paired, Verbatim, Off };

inline FilterInterpretation filter_from_string(const std::string& s) {
  if (s == "paired") return FilterInterpretation::Paired;
  if (s == "verbatim") return FilterInterpretation::Verbatim;
  if (s == "off") return FilterInterpretation::Off;
  throw ConfigError("filter must be paired, verbatim or off; got '" + s + "'");
}

inline std::string to_string(FilterInterpretation f) {
  switch (f) {
    case FilterInterpretation::Paired: return "paired";
    case FilterInterpretation::Verbatim: return "verbatim";
    case FilterInterpretation::Off: return "off";
  }
  return "?";
}

struct FilterPolicy {
  FilterInterpretation interpretation = FilterInterpretation::Paired;
  // (volume, congestion factor) pairs in decreasing volume, then the bare
  // minimum volume.
  double vol_low = 5, cf_low = 0.4;
  double vol_mid = 3, cf_mid = 0.8;
  double vol_min = 1;

  void validate() const {
    if (!(vol_low > vol_mid && vol_mid > vol_min))
      throw ConfigError("filter thresholds must be strictly ordered by volume");
  }
};

/// True when a record with this congestion factor and volume is dropped.
///
/// Paired: low congestion factor needs volume to back it up, and a record
/// needs at least vol_min probes at all.
/// Verbatim: the three-branch cascade evaluated as written, where each
/// branch is an `or` of its two conditions.
inline bool is_filtered(double cf, double volume, const FilterPolicy& p) {
  switch (p.interpretation) {
    case FilterInterpretation::Paired:
      return (cf < p.cf_low && volume < p.vol_low) || (cf < p.cf_mid && volume < p.vol_mid) ||
             volume < p.vol_min;
    case FilterInterpretation::Verbatim:
      if (volume < p.vol_low || cf < p.cf_low) return true;
      if (volume < p.vol_mid || cf < p.cf_mid) return true;
      if (volume < p.vol_min) return true;
      return false;
    case FilterInterpretation::Off: return false;
  }
  return false;
}

/// Marks the record filtered; speeds are never altered.
inline SegmentRecord confidence_filter(SegmentRecord rec, double ff, const FilterPolicy& p) {
  if (!rec.has_data() || p.interpretation == FilterInterpretation::Off) return rec;
  rec.filtered = is_filtered(congestion_factor(rec.median_speed_kph, ff),
                             static_cast<double>(rec.volume), p);
  return rec;
}

struct SpeedOptions {
  FilterPolicy filter;
  bool normalize_free_flow = false;
  MedianRule median_rule = MedianRule::Lower;
};

/// All (edge, bin) records with data for one aggregated day, ordered by
/// bin, then edge key. Edges missing from `free_flow` use the edge limit.
inline std::vector<SegmentRecord> compute_segment_speeds(const RoadGraph& g, const Intersections& inter,
                                                         const AggMovieDay& agg,
                                                         const FreeFlowTable& free_flow,
                                                         const SpeedOptions& opt = {}) {
  opt.filter.validate();
  std::vector<const Edge*> edges;
  for (const Edge& e : g.edges) edges.push_back(&e);
  std::sort(edges.begin(), edges.end(), [](const Edge* a, const Edge* b) { return a->key() < b->key(); });
  std::vector<SegmentRecord> out;
  for (int bin = 0; bin < agg.bins(); ++bin) {
    for (const Edge* e : edges) {
      const auto it = inter.find(e->key());
      if (it == inter.end()) continue;
      SegmentRecord rec = segment_speed(e->key(), agg, bin, it->second, opt.median_rule);
      if (!rec.has_data()) continue;
      const auto ffit = free_flow.find(e->key());
      double ff = ffit == free_flow.end() ? e->speed_kph : ffit->second;
      if (opt.normalize_free_flow) ff = normalize_free_flow(ff, e->speed_kph);
      out.push_back(confidence_filter(std::move(rec), ff, opt.filter));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: day,t,u,v,gkey,volume,median_speed_kph,mean_speed_kph,std_speed_kph,filtered

inline const std::vector<std::string>& segment_csv_header() {
  static const std::vector<std::string> h = {"day",    "t",
                                             "u",      "v",
                                             "gkey",   "volume",
                                             "median_speed_kph", "mean_speed_kph",
                                             "std_speed_kph",    "filtered"};
  return h;
}

inline std::string segments_to_csv(const std::vector<SegmentRecord>& recs) {
  std::string out = "day,t,u,v,gkey,volume,median_speed_kph,mean_speed_kph,std_speed_kph,filtered\n";
  for (const SegmentRecord& r : recs) {
    out += r.day + ',' + std::to_string(r.t) + ',' + std::to_string(r.key.u) + ',' +
           std::to_string(r.key.v) + ',' + std::to_string(r.key.gkey) + ',' +
           std::to_string(r.volume) + ',' + format_double(r.median_speed_kph) + ',' +
           format_double(r.mean_speed_kph) + ',' + format_double(r.std_speed_kph) + ',' +
           (r.filtered ? "1" : "0") + '\n';
  }
  return out;
}

inline std::vector<SegmentRecord> segments_from_csv(std::string text, const std::string& source) {
  CsvReader reader(std::move(text), segment_csv_header(), source);
  std::vector<SegmentRecord> out;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    SegmentRecord r;
    r.day = std::string(f[0]);
    r.t = parse_int<int>(f[1]);
    r.key = {parse_int<NodeId>(f[2]), parse_int<NodeId>(f[3]), parse_int<std::uint64_t>(f[4])};
    r.volume = parse_int<std::uint64_t>(f[5]);
    r.median_speed_kph = parse_double(f[6]);
    r.mean_speed_kph = parse_double(f[7]);
    r.std_speed_kph = parse_double(f[8]);
    r.filtered = parse_int<int>(f[9]) != 0;
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_segments(const std::vector<SegmentRecord>& recs, const std::filesystem::path& path) {
  write_file_atomic(path, segments_to_csv(recs));
}

inline std::vector<SegmentRecord> read_segments(const std::filesystem::path& path) {
  return segments_from_csv(read_file(path), path.string());
}

}  // namespace fcdpipe
