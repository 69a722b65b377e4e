#include <gtest/gtest.h>

#include <set>

#include "fcdpipe/random.hpp"
#include "fcdpipe/sjoin.hpp"
#include "test_util.hpp"

using namespace fcdpipe;

namespace {

GridConfig unit_grid() { return make_grid(0.0, 0.02, 0.0, 0.02, 0.001); }

std::set<std::tuple<int, int, Heading>> containing(const std::vector<CellFraction>& cells) {
  std::set<std::tuple<int, int, Heading>> out;
  for (const auto& c : cells)
    if (c.fraction > 0) out.insert({c.row, c.col, c.heading});
  return out;
}

}  // namespace

TEST(Interpolate, StepCountAndEndpoints) {
  const auto pts = interpolate({{0.0, 0.0}, {0.0, 0.0003}}, 0.0001);
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_DOUBLE_EQ(pts.front().pos.lon, 0.0);
  EXPECT_DOUBLE_EQ(pts.back().pos.lon, 0.0003);
  for (const auto& p : pts) EXPECT_DOUBLE_EQ(p.bearing, 90.0);
}

TEST(Interpolate, ShortSegmentGivesEndpoints) {
  const auto pts = interpolate({{0.0, 0.0}, {0.00001, 0.0}}, 0.0001);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_DOUBLE_EQ(pts[1].pos.lat, 0.00001);
}

TEST(Interpolate, SpacingNeverExceedsStep) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<LatLon> g;
    for (int k = 0; k < 4; ++k) g.push_back({uniform_real(rng, 0, 0.01), uniform_real(rng, 0, 0.01)});
    const auto pts = interpolate(g, 0.00025);
    for (std::size_t k = 1; k < pts.size(); ++k)
      ASSERT_LE(std::hypot(pts[k].pos.lat - pts[k - 1].pos.lat, pts[k].pos.lon - pts[k - 1].pos.lon),
                0.00025 * (1 + 1e-9));
  }
}

TEST(Interpolate, BearingChangesAtVertex) {
  const auto pts = interpolate({{0.0, 0.0}, {0.0002, 0.0}, {0.0002, 0.0002}}, 0.0001);
  ASSERT_EQ(pts.size(), 5u);
  EXPECT_DOUBLE_EQ(pts[0].bearing, 0.0);
  EXPECT_DOUBLE_EQ(pts[1].bearing, 0.0);
  EXPECT_DOUBLE_EQ(pts[2].pos.lat, 0.0002);
  EXPECT_DOUBLE_EQ(pts[2].bearing, 90.0);
  EXPECT_DOUBLE_EQ(pts[4].bearing, 90.0);
}

TEST(Headings, MarginExamples) {
  EXPECT_EQ(headings_for(90, 10), HeadingSet(0b0011));
  EXPECT_EQ(headings_for(45, 10), HeadingSet(0b0001));
  EXPECT_EQ(headings_for(85, 10), HeadingSet(0b0011));
  EXPECT_EQ(headings_for(0, 10), HeadingSet(0b1001));
  EXPECT_EQ(headings_for(355, 10), HeadingSet(0b1001));
  EXPECT_EQ(headings_for(100, 10), HeadingSet(0b0011));
  EXPECT_EQ(headings_for(101, 10), HeadingSet(0b0010));
  EXPECT_EQ(headings_for(225, 10), HeadingSet(0b0100));
  EXPECT_EQ(headings_for(90, 0), HeadingSet(0b0011));
  EXPECT_EQ(headings_for(91, 0), HeadingSet(0b0010));
}

TEST(Headings, OwnQuadrantAlwaysPresent) {
  for (int tenth = 0; tenth < 3600; ++tenth) {
    const double b = tenth / 10.0;
    const HeadingSet s = headings_for(b, 10);
    ASSERT_TRUE(s.contains(heading_quadrant(b)));
    ASSERT_LE(s.size(), 2);
  }
}

TEST(Bearing, PlainDegreeSpace) {
  EXPECT_DOUBLE_EQ(planar_bearing({0, 0}, {1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(planar_bearing({0, 0}, {0, 1}), 90.0);
  EXPECT_DOUBLE_EQ(planar_bearing({0, 0}, {-1, 0}), 180.0);
  EXPECT_DOUBLE_EQ(planar_bearing({0, 0}, {0, -1}), 270.0);
  EXPECT_NEAR(planar_bearing({0, 0}, {1, 1}), 45.0, 1e-12);
}

TEST(CellsWithin, ChebyshevMarginInclusive) {
  const GridConfig g = unit_grid();
  // Centre of cell (10, 10): 0.0005 from every edge.
  const LatLon c = cell_center({10, 10}, g);
  CellRange r = cells_within(c, 0.0005, g);
  EXPECT_EQ(r.row_lo, 9);
  EXPECT_EQ(r.row_hi, 11);
  EXPECT_EQ(r.col_lo, 9);
  EXPECT_EQ(r.col_hi, 11);
  r = cells_within(c, 0.0004, g);
  EXPECT_EQ(r.row_lo, 10);
  EXPECT_EQ(r.row_hi, 10);
  r = cells_within({0.0, 0.0}, 0.0005, g);
  EXPECT_EQ(r.row_hi, g.rows - 1);
  EXPECT_EQ(r.col_lo, 0);
}

TEST(IntersectingCells, EastboundEdgeInOneRow) {
  const GridConfig g = unit_grid();
  const double lat = cell_center({10, 0}, g).lat;
  // Spans 3 cell widths starting 0.2 into column 5.
  const auto cells = intersecting_cells({{lat, 0.0052}, {lat, 0.0082}}, g);
  const auto hit = containing(cells);
  std::set<std::tuple<int, int, Heading>> expected;
  for (int col = 5; col <= 8; ++col) {
    expected.insert({10, col, Heading::NE});
    expected.insert({10, col, Heading::SE});
  }
  EXPECT_EQ(hit, expected);
  // The margin adds the neighbouring rows and columns without attribution.
  for (const auto& c : cells) {
    EXPECT_TRUE(c.heading == Heading::NE || c.heading == Heading::SE);
    EXPECT_GE(c.row, 9);
    EXPECT_LE(c.row, 11);
    EXPECT_GE(c.col, 4);
    EXPECT_LE(c.col, 9);
    if (c.row != 10) {
      EXPECT_EQ(c.fraction, 0.0);
    }
  }
}

TEST(IntersectingCells, FractionSums) {
  const GridConfig g = unit_grid();
  double sum = 0;
  for (const auto& c : intersecting_cells({{0.0101, 0.0052}, {0.0101, 0.0082}}, g)) sum += c.fraction;
  EXPECT_NEAR(sum, 2.0, 1e-12);  // every sample attributes to NE and SE

  sum = 0;
  for (const auto& c : intersecting_cells({{0.0101, 0.0152}, {0.0131, 0.0182}}, g)) sum += c.fraction;
  EXPECT_NEAR(sum, 1.0, 1e-12);  // diagonal: NE only

  sum = 0;
  for (const auto& c : intersecting_cells({{0.0101, 0.015}, {0.0101, 0.025}}, g)) sum += c.fraction;
  // 101 samples, 51 of them inside (lon 0.02 clamps inward), two headings each.
  EXPECT_NEAR(sum, 2.0 * 51 / 101, 1e-12);
}

TEST(IntersectingCells, OutsideBoxIsEmpty) {
  const GridConfig g = unit_grid();
  EXPECT_TRUE(intersecting_cells({{0.05, 0.05}, {0.06, 0.05}}, g).empty());
}

TEST(IntersectingCells, SortedAndUnique) {
  const GridConfig g = unit_grid();
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto cells = intersecting_cells(
        {{uniform_real(rng, 0, 0.02), uniform_real(rng, 0, 0.02)}, {uniform_real(rng, 0, 0.02), uniform_real(rng, 0, 0.02)}},
        g);
    for (std::size_t k = 1; k < cells.size(); ++k) {
      const auto a = std::tuple(cells[k - 1].row, cells[k - 1].col, index_of(cells[k - 1].heading));
      const auto b = std::tuple(cells[k].row, cells[k].col, index_of(cells[k].heading));
      ASSERT_LT(a, b);
    }
  }
}

TEST(IntersectingCells, ContainingCellsMatchDirectCount) {
  // Fractions against a direct recount over the same sample points.
  const GridConfig g = unit_grid();
  Rng rng(21);
  const JoinParams jp;
  for (int i = 0; i < 50; ++i) {
    const std::vector<LatLon> geom = {{uniform_real(rng, 0, 0.02), uniform_real(rng, 0, 0.02)},
                                      {uniform_real(rng, 0, 0.02), uniform_real(rng, 0, 0.02)},
                                      {uniform_real(rng, 0, 0.02), uniform_real(rng, 0, 0.02)}};
    const auto pts = interpolate(geom, jp.step);
    std::map<std::tuple<int, int, int>, int> counts;
    for (const auto& p : pts) {
      const auto cell = cell_of(p.pos.lat, p.pos.lon, g);
      ASSERT_TRUE(cell);
      for (Heading h : headings_for(p.bearing, jp.ang_margin).members())
        ++counts[{cell->row, cell->col, index_of(h)}];
    }
    std::map<std::tuple<int, int, int>, double> got;
    for (const auto& c : intersecting_cells(geom, g, jp))
      if (c.fraction > 0) got[{c.row, c.col, index_of(c.heading)}] = c.fraction;
    ASSERT_EQ(got.size(), counts.size());
    for (const auto& [k, n] : counts) ASSERT_DOUBLE_EQ(got[k], static_cast<double>(n) / pts.size());
  }
}

TEST(Join, GraphAndCsvRoundTrip) {
  testutil::TempDir dir;
  const GridConfig g = unit_grid();
  nlohmann::json j = {
      {"nodes", {{{"id", 1}, {"lat", 0.0101}, {"lon", 0.0052}}, {{"id", 2}, {"lat", 0.0101}, {"lon", 0.0082}},
                 {{"id", 3}, {"lat", 0.05}, {"lon", 0.05}}, {{"id", 4}, {"lat", 0.06}, {"lon", 0.05}}}},
      {"edges", {{{"u", 1}, {"v", 2}}, {{"u", 2}, {"v", 1}}, {{"u", 3}, {"v", 4}}}}};
  const RoadGraph graph = graph_from_json(j);
  const Intersections a = join_graph(graph, g, {}, 1);
  const Intersections b = join_graph(graph, g, {}, 3);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.at(graph.edges[2].key()).empty());
  write_intersections(a, dir / "i.csv");
  Intersections back = read_intersections(dir / "i.csv");
  EXPECT_EQ(back.size(), 2u);  // the empty edge is not written
  EXPECT_EQ(back.at(graph.edges[0].key()), a.at(graph.edges[0].key()));
  EXPECT_EQ(back.at(graph.edges[1].key()), a.at(graph.edges[1].key()));
}

TEST(JoinParams, Validation) {
  JoinParams p;
  p.step = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.ang_margin = 45;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.pos_margin = -1;
  EXPECT_THROW(p.validate(), ConfigError);
}
