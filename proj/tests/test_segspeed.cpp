#include <gtest/gtest.h>

#include "fcdpipe/segspeed.hpp"
#include "test_util.hpp"

using namespace fcdpipe;

namespace {

AggMovieDay one_bin(int cols) { return AggMovieDay("d", 1, 1, cols, 3); }

void put(AggMovieDay& a, int col, Heading h, std::uint32_t vol, float speed) {
  a.volumes()[a.index(0, 0, col, h)] = vol;
  a.speeds()[a.index(0, 0, col, h)] = speed;
}

const EdgeKey kKey{1, 2, 3};

}  // namespace

TEST(SegmentSpeed, ThreeCells) {
  AggMovieDay a = one_bin(4);
  put(a, 0, Heading::NE, 2, 40);
  put(a, 1, Heading::NE, 3, 50);
  put(a, 2, Heading::NE, 5, 60);
  const std::vector<CellFraction> cells = {
      {0, 0, Heading::NE, 0.3}, {0, 1, Heading::NE, 0.3}, {0, 2, Heading::NE, 0.4}, {0, 3, Heading::NE, 0.0}};
  const SegmentRecord r = segment_speed(kKey, a, 0, cells);
  EXPECT_EQ(r.volume, 10u);
  EXPECT_DOUBLE_EQ(r.median_speed_kph, 50.0);
  EXPECT_DOUBLE_EQ(r.mean_speed_kph, 50.0);
  EXPECT_NEAR(r.std_speed_kph, 8.16496580927726, 1e-12);
  EXPECT_EQ(r.key, kKey);
  EXPECT_EQ(r.day, "d");
}

TEST(SegmentSpeed, SingleCellAndNoData) {
  AggMovieDay a = one_bin(2);
  put(a, 1, Heading::SW, 2, 72);
  SegmentRecord r = segment_speed(kKey, a, 0, {{0, 1, Heading::SW, 1.0}});
  EXPECT_DOUBLE_EQ(r.median_speed_kph, 72.0);
  EXPECT_DOUBLE_EQ(r.std_speed_kph, 0.0);
  r = segment_speed(kKey, a, 0, {{0, 0, Heading::SW, 1.0}, {0, 1, Heading::NE, 0.0}});
  EXPECT_FALSE(r.has_data());
  EXPECT_EQ(r.volume, 0u);
  EXPECT_TRUE(std::isnan(r.mean_speed_kph));
}

TEST(SegmentSpeed, EvenCountMedianRules) {
  AggMovieDay a = one_bin(2);
  put(a, 0, Heading::NE, 1, 30);
  put(a, 1, Heading::NE, 1, 90);
  const std::vector<CellFraction> cells = {{0, 0, Heading::NE, 0.5}, {0, 1, Heading::NE, 0.5}};
  EXPECT_DOUBLE_EQ(segment_speed(kKey, a, 0, cells).median_speed_kph, 30.0);
  EXPECT_DOUBLE_EQ(segment_speed(kKey, a, 0, cells, MedianRule::Midpoint).median_speed_kph, 60.0);
}

TEST(SegmentSpeed, OutOfRangeCellsSkipped) {
  AggMovieDay a = one_bin(1);
  put(a, 0, Heading::NE, 1, 30);
  const auto r = segment_speed(kKey, a, 0, {{0, 0, Heading::NE, 1}, {5, 5, Heading::NE, 0}, {-1, 0, Heading::NE, 0}});
  EXPECT_DOUBLE_EQ(r.median_speed_kph, 30.0);
}

TEST(CongestionFactor, Examples) {
  EXPECT_DOUBLE_EQ(congestion_factor(25, 50), 0.5);
  EXPECT_DOUBLE_EQ(congestion_factor(60, 50), 1.2);
  EXPECT_THROW(congestion_factor(10, 0), std::invalid_argument);
}

TEST(Filter, PairedTruthTable) {
  FilterPolicy p;
  EXPECT_TRUE(is_filtered(0.3, 4, p));
  EXPECT_FALSE(is_filtered(0.3, 5, p));
  EXPECT_FALSE(is_filtered(0.5, 4, p));
  EXPECT_TRUE(is_filtered(0.7, 2, p));
  EXPECT_FALSE(is_filtered(0.8, 2, p));
  EXPECT_FALSE(is_filtered(0.7, 3, p));
  EXPECT_TRUE(is_filtered(1.5, 0, p));
  EXPECT_FALSE(is_filtered(1.5, 1, p));
}

TEST(Filter, VerbatimCascade) {
  FilterPolicy p;
  p.interpretation = FilterInterpretation::Verbatim;
  EXPECT_TRUE(is_filtered(1.0, 4, p));
  EXPECT_TRUE(is_filtered(0.3, 100, p));
  EXPECT_TRUE(is_filtered(0.7, 100, p));
  EXPECT_FALSE(is_filtered(0.8, 5, p));
  // Reduces to volume < 5 or cf < 0.8 with default thresholds.
  for (double cf = 0; cf <= 2.0; cf += 0.05)
    for (int vol = 0; vol <= 10; ++vol) ASSERT_EQ(is_filtered(cf, vol, p), vol < 5 || cf < 0.8) << cf << " " << vol;
}

TEST(Filter, OffKeepsEverything) {
  FilterPolicy p;
  p.interpretation = FilterInterpretation::Off;
  EXPECT_FALSE(is_filtered(0.0, 0, p));
}

TEST(Filter, MonotoneInVolumeAndFactor) {
  for (auto interp : {FilterInterpretation::Paired, FilterInterpretation::Verbatim}) {
    FilterPolicy p;
    p.interpretation = interp;
    for (double cf = 0; cf <= 2.0; cf += 0.1)
      for (int vol = 0; vol < 10; ++vol) {
        if (!is_filtered(cf, vol, p)) {
          ASSERT_FALSE(is_filtered(cf, vol + 1, p));
          ASSERT_FALSE(is_filtered(cf + 0.1, vol, p));
        }
      }
  }
}

TEST(Filter, ThresholdValidationAndParsing) {
  FilterPolicy p;
  p.vol_mid = 6;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_EQ(filter_from_string("verbatim"), FilterInterpretation::Verbatim);
  EXPECT_THROW(filter_from_string("strict"), ConfigError);
}

TEST(Filter, RecordKeptAndMarked) {
  SegmentRecord r;
  r.key = kKey;
  r.volume = 2;
  r.median_speed_kph = 10;
  const SegmentRecord out = confidence_filter(r, 50, FilterPolicy{});
  EXPECT_TRUE(out.filtered);
  EXPECT_DOUBLE_EQ(out.median_speed_kph, 10.0);
  r.volume = 20;
  EXPECT_FALSE(confidence_filter(r, 50, FilterPolicy{}).filtered);
}

TEST(ComputeSegmentSpeeds, OrderAndFreeFlowLookup) {
  nlohmann::json j = {{"nodes", {{{"id", 1}, {"lat", 0.0}, {"lon", 0.0}}, {{"id", 2}, {"lat", 0.0}, {"lon", 0.001}}}},
                      {"edges", {{{"u", 2}, {"v", 1}, {"maxspeed", 50}}, {{"u", 1}, {"v", 2}, {"maxspeed", 50}}}}};
  const RoadGraph g = graph_from_json(j);
  AggMovieDay a("d", 2, 1, 2, 3);
  a.volumes()[a.index(1, 0, 0, Heading::NE)] = 2;
  a.speeds()[a.index(1, 0, 0, Heading::NE)] = 10;
  a.volumes()[a.index(0, 0, 1, Heading::SW)] = 40;
  a.speeds()[a.index(0, 0, 1, Heading::SW)] = 45;
  Intersections inter;
  inter[g.edges[0].key()] = {{0, 1, Heading::SW, 1.0}};
  inter[g.edges[1].key()] = {{0, 0, Heading::NE, 1.0}};
  FreeFlowTable ff = {{g.edges[1].key(), 12.0}};
  const auto recs = compute_segment_speeds(g, inter, a, ff);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].t, 0);
  EXPECT_EQ(recs[0].key, g.edges[0].key());
  EXPECT_FALSE(recs[0].filtered);
  EXPECT_EQ(recs[1].t, 1);
  EXPECT_FALSE(recs[1].filtered);  // cf = 10/12 against the table value

  SpeedOptions opt;
  opt.normalize_free_flow = true;  // 12 rises to 30, cf = 1/3 with volume 2
  EXPECT_TRUE(compute_segment_speeds(g, inter, a, ff, opt)[1].filtered);
}

TEST(SegmentCsv, RoundTrip) {
  testutil::TempDir dir;
  std::vector<SegmentRecord> recs(2);
  recs[0] = {"2024-01-02", 5, {1, 2, 99}, 12, 45.5, 46.25, 1.5, false};
  recs[1] = {"2024-01-02", 7, {2, 1, 98}, 3, 12.0, 12.0, 0.0, true};
  write_segments(recs, dir / "s.csv");
  const auto back = read_segments(dir / "s.csv");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].day, recs[i].day);
    EXPECT_EQ(back[i].t, recs[i].t);
    EXPECT_EQ(back[i].key, recs[i].key);
    EXPECT_EQ(back[i].volume, recs[i].volume);
    EXPECT_EQ(back[i].median_speed_kph, recs[i].median_speed_kph);
    EXPECT_EQ(back[i].mean_speed_kph, recs[i].mean_speed_kph);
    EXPECT_EQ(back[i].std_speed_kph, recs[i].std_speed_kph);
    EXPECT_EQ(back[i].filtered, recs[i].filtered);
  }
  EXPECT_EQ(read_file(dir / "s.csv").substr(0, 4), "day,");
}
