#pragma once

// Comparison of two segment-speed sources keyed by edge and time.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "fcdpipe/io.hpp"
#include "fcdpipe/roadgraph.hpp"
#include "fcdpipe/segspeed.hpp"
#include "fcdpipe/sjoin.hpp"

namespace fcdpipe {

enum class LengthClass { S, M, L };

inline LengthClass length_class_of(double length_m) {
  if (length_m <= 100.0) return LengthClass::S;
  if (length_m <= 500.0) return LengthClass::M;
  return LengthClass::L;
}

inline std::string to_string(LengthClass c) {
  switch (c) {
    case LengthClass::S: return "S";
    case LengthClass::M: return "M";
    case LengthClass::L: return "L";
  }
  return "?";
}

struct MatchedPair {
  EdgeKey key;
  std::string day;
  int time = 0;  // bin index, or hour when hour-averaged
  double speed_a = 0.0;
  double speed_b = 0.0;
  std::string highway;
  LengthClass length_class = LengthClass::S;
  bool complex = false;

  double diff() const { return speed_a - speed_b; }
};

/// Edges with at least one intersecting cell shared with four or more other
/// edges.
inline std::set<EdgeKey> complex_edges(const Intersections& inter) {
  std::map<std::pair<int, int>, std::set<EdgeKey>> by_cell;
  for (const auto& [key, cells] : inter)
    for (const CellFraction& cf : cells) by_cell[{cf.row, cf.col}].insert(key);
  std::set<EdgeKey> out;
  for (const auto& [cell, edges] : by_cell)
    if (edges.size() >= 5) out.insert(edges.begin(), edges.end());
  return out;
}

struct MatchOptions {
  bool hour_mean = false;
  int bins_per_hour = 4;  // of source a
};

/// Joins usable (data, not filtered) records of both sources on
/// (day, time, edge). With hour_mean, source a is averaged per hour first
/// and source b's `t` is taken as an hour index. Pairs come out in
/// (day, time, edge) order.
inline std::vector<MatchedPair> match(const std::vector<SegmentRecord>& a,
                                      const std::vector<SegmentRecord>& b, const RoadGraph& g,
                                      const std::set<EdgeKey>& complex = {}, const MatchOptions& opt = {}) {
  using Slot = std::tuple<std::string, int, EdgeKey>;
  auto collect = [](const std::vector<SegmentRecord>& recs, int divisor) {
    std::map<Slot, std::pair<double, int>> acc;
    for (const auto& r : recs) {
      if (!r.has_data() || r.filtered) continue;
      auto& [sum, n] = acc[{r.day, r.t / divisor, r.key}];
      sum += r.median_speed_kph;
      ++n;
    }
    std::map<Slot, double> out;
    for (const auto& [slot, sn] : acc) out[slot] = sn.first / sn.second;
    return out;
  };
  if (opt.hour_mean && opt.bins_per_hour <= 0) throw std::invalid_argument("match: bins_per_hour must be positive");
  const auto sa = collect(a, opt.hour_mean ? opt.bins_per_hour : 1);
  const auto sb = collect(b, 1);

  std::map<EdgeKey, const Edge*> edges;
  for (const Edge& e : g.edges) edges[e.key()] = &e;

  std::vector<MatchedPair> out;
  for (const auto& [slot, speed_a] : sa) {
    const auto it = sb.find(slot);
    if (it == sb.end()) continue;
    MatchedPair p;
    std::tie(p.day, p.time, p.key) = slot;
    p.speed_a = speed_a;
    p.speed_b = it->second;
    if (const auto e = edges.find(p.key); e != edges.end()) {
      p.highway = e->second->highway;
      p.length_class = length_class_of(e->second->length_m);
    } else {
      p.highway = "unknown";
    }
    p.complex = complex.contains(p.key);
    out.push_back(std::move(p));
  }
  return out;
}

inline double ape(double pred, double ref) {
  if (!(ref > 0.0)) throw std::invalid_argument("ape: reference speed must be positive");
  return 100.0 * std::abs(pred - ref) / ref;
}

/// Share of pairs (b as reference) with APE below `threshold_percent`.
/// Pairs without a positive reference speed are not counted.
inline double ape_share_below(const std::vector<MatchedPair>& pairs, double threshold_percent = 15.0) {
  std::size_t hits = 0, n = 0;
  for (const auto& p : pairs) {
    if (!(p.speed_b > 0.0)) continue;
    ++n;
    if (ape(p.speed_a, p.speed_b) < threshold_percent) ++hits;
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

enum class GroupBy { Highway, Length, Complexity };

inline GroupBy group_by_from_string(const std::string& s) {
  if (s == "highway") return GroupBy::Highway;
  if (s == "length") return GroupBy::Length;
  if (s == "complexity") return GroupBy::Complexity;
  throw ConfigError("group-by must be highway, length or complexity; got '" + s + "'");
}

struct DiffStatsRow {
  std::string group;
  double mean = 0.0;
  double std = 0.0;  // population
  double median = 0.0;
  std::size_t count = 0;
};

inline DiffStatsRow diff_row(std::string group, std::vector<double> diffs) {
  DiffStatsRow row;
  row.group = std::move(group);
  row.count = diffs.size();
  if (diffs.empty()) return row;
  const Summary s = summarize(diffs, MedianRule::Midpoint);
  row.mean = s.mean;
  row.std = s.std;
  row.median = s.median;
  return row;
}

/// Per-group rows in group-name order followed by a TOTAL row, on
/// speed_a - speed_b.
inline std::vector<DiffStatsRow> diff_stats(const std::vector<MatchedPair>& pairs, GroupBy by) {
  std::map<std::string, std::vector<double>> groups;
  std::vector<double> all;
  for (const auto& p : pairs) {
    std::string g;
    switch (by) {
      case GroupBy::Highway: g = p.highway; break;
      case GroupBy::Length: g = to_string(p.length_class); break;
      case GroupBy::Complexity: g = p.complex ? "complex" : "simple"; break;
    }
    groups[g].push_back(p.diff());
    all.push_back(p.diff());
  }
  std::vector<DiffStatsRow> out;
  for (auto& [g, diffs] : groups) out.push_back(diff_row(g, std::move(diffs)));
  out.push_back(diff_row("TOTAL", std::move(all)));
  return out;
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Equal-width histogram of the differences over their observed range.
inline std::vector<HistogramBin> diff_histogram(const std::vector<MatchedPair>& pairs, int bins = 10) {
  std::vector<HistogramBin> out;
  if (pairs.empty() || bins <= 0) return out;
  double lo = pairs.front().diff(), hi = lo;
  for (const auto& p : pairs) {
    lo = std::min(lo, p.diff());
    hi = std::max(hi, p.diff());
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double w = (hi - lo) / bins;
  for (int i = 0; i < bins; ++i) out.push_back({lo + i * w, i + 1 == bins ? hi : lo + (i + 1) * w, 0});
  for (const auto& p : pairs) {
    int i = static_cast<int>((p.diff() - lo) / w);
    ++out[std::clamp(i, 0, bins - 1)].count;
  }
  return out;
}

inline std::string diff_stats_to_csv(const std::vector<DiffStatsRow>& rows) {
  std::string out = "group,diff_mean,diff_std,diff_median,count\n";
  for (const auto& r : rows)
    out += r.group + ',' + format_double(r.mean) + ',' + format_double(r.std) + ',' +
           format_double(r.median) + ',' + std::to_string(r.count) + '\n';
  return out;
}

inline std::string histogram_to_csv(const std::vector<HistogramBin>& bins) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (const auto& b : bins)
    out += format_double(b.lo) + ',' + format_double(b.hi) + ',' + std::to_string(b.count) + '\n';
  return out;
}

inline std::string comparison_report(const std::vector<MatchedPair>& pairs,
                                     const std::vector<DiffStatsRow>& rows, const std::string& group_label) {
  std::ostringstream os;
  os << "matched pairs: " << pairs.size() << "\n";
  os << "share with APE < 15%: " << format_double(100.0 * ape_share_below(pairs)) << " %\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %12s %12s %12s %10s\n", group_label.c_str(), "diff mean",
                "diff std", "diff median", "# values");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %12.2f %12.2f %12.2f %10zu\n", r.group.c_str(), r.mean,
                  r.std, r.median, r.count);
    os << line;
  }
  return os.str();
}

}  // namespace fcdpipe
