#include <gtest/gtest.h>

#include "fcdpipe/freeflow.hpp"
#include "test_util.hpp"

using namespace fcdpipe;

TEST(ClusterCell, AllEqual) {
  const std::vector<double> xs(40, 50.0);
  const auto cl = cluster_cell(xs);
  ASSERT_EQ(cl.size(), 5u);
  std::uint64_t total = 0;
  int nonempty = 0;
  for (const auto& c : cl) {
    total += c.size;
    if (c.size > 0) {
      ++nonempty;
      EXPECT_DOUBLE_EQ(c.center, 50.0);
    }
  }
  EXPECT_EQ(nonempty, 1);
  EXPECT_EQ(total, 40u);
}

TEST(ClusterCell, Empty) { EXPECT_TRUE(cluster_cell(std::vector<double>{}).empty()); }

TEST(ClusterCell, Bimodal) {
  std::vector<double> xs;
  Rng rng(3);
  for (int i = 0; i < 100; ++i) xs.push_back(20.0 + uniform_real(rng, -1, 1));
  for (int i = 0; i < 100; ++i) xs.push_back(80.0 + uniform_real(rng, -1, 1));
  KMeansOptions opt;
  opt.k = 2;
  const auto cl = cluster_cell(xs, opt);
  ASSERT_EQ(cl.size(), 2u);
  EXPECT_NEAR(cl[0].center, 20.0, 1.0);
  EXPECT_NEAR(cl[1].center, 80.0, 1.0);
  EXPECT_EQ(cl[0].size, 100u);
  EXPECT_EQ(cl[1].size, 100u);

  // With k=5 the two modes still carry all the mass near 20 and 80.
  std::uint64_t low = 0, high = 0;
  for (const auto& c : cluster_cell(xs)) {
    if (c.size == 0) continue;
    if (std::abs(c.center - 20.0) <= 1.0) low += c.size;
    if (std::abs(c.center - 80.0) <= 1.0) high += c.size;
  }
  EXPECT_EQ(low, 100u);
  EXPECT_EQ(high, 100u);
}

TEST(ClusterCell, MatchesOptimalPartitionOnSeparatedData) {
  // Five groups separated by gaps far larger than any spread inside them.
  const std::vector<double> xs = {12, 13, 14, 15, 31, 33, 34, 52, 55, 56, 57, 58, 81, 83, 84, 99, 101, 102, 103, 104};
  const std::vector<Cluster> expected = {{13.5, 4}, {33, 3}, {56, 5}, {83, 3}, {102, 5}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    KMeansOptions opt;
    opt.seed = seed;
    EXPECT_EQ(cluster_cell(xs, opt), expected) << "seed " << seed;
  }
}

TEST(ClusterCell, SizesConservedCentersOrdered) {
  Rng rng(17);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> xs;
    const int n = 10 + static_cast<int>(uniform_index(rng, 200));
    for (int i = 0; i < n; ++i) xs.push_back(uniform_real(rng, 0, 120));
    const auto cl = cluster_cell(xs);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < cl.size(); ++i) {
      total += cl[i].size;
      if (i > 0 && cl[i].size > 0 && cl[i - 1].size > 0) {
        EXPECT_LE(cl[i - 1].center, cl[i].center);
      }
    }
    EXPECT_EQ(total, static_cast<std::uint64_t>(n));
  }
}

TEST(ClusterCell, Deterministic) {
  Rng rng(1);
  std::vector<double> xs;
  for (int i = 0; i < 500; ++i) xs.push_back(uniform_real(rng, 0, 120));
  KMeansOptions opt;
  opt.seed = 77;
  EXPECT_EQ(cluster_cell(xs, opt), cluster_cell(xs, opt));
}

TEST(WeightedQuantile, Examples) {
  EXPECT_DOUBLE_EQ(weighted_quantile({{20, 1}, {30, 1}, {40, 1}, {50, 1}, {60, 1}}), 50.0);
  EXPECT_DOUBLE_EQ(weighted_quantile({}), 20.0);
  EXPECT_DOUBLE_EQ(weighted_quantile({{70, 10}}), 70.0);
  EXPECT_DOUBLE_EQ(weighted_quantile({{0, 0}, {0, 0}}), 20.0);
  // Unsorted input is sorted first.
  EXPECT_DOUBLE_EQ(weighted_quantile({{60, 1}, {20, 1}, {50, 1}, {30, 1}, {40, 1}}), 50.0);
  EXPECT_DOUBLE_EQ(weighted_quantile({{20, 1}, {90, 1}}, 1.0), 90.0);
  EXPECT_DOUBLE_EQ(weighted_quantile({{20, 70}, {80, 30}}), 80.0);
  EXPECT_DOUBLE_EQ(weighted_quantile({{20, 81}, {80, 19}}), 20.0);
}

TEST(WeightedQuantile, MonotoneInCenters) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<Cluster> cl;
    for (int i = 0; i < 5; ++i) cl.push_back({uniform_real(rng, 0, 100), uniform_index(rng, 10)});
    const double base = weighted_quantile(cl);
    auto raised = cl;
    raised[uniform_index(rng, 5)].center += uniform_real(rng, 0, 30);
    EXPECT_GE(weighted_quantile(raised), base);
  }
}

TEST(FreeFlowEdge, PoolsAndClips) {
  CellClusters cc(2, 2, 5);
  auto a = cc.at(0, 0, Heading::NE);
  a[0] = {20, 10};
  a[1] = {80, 40};
  auto b = cc.at(0, 1, Heading::NE);
  b[0] = {46.5, 50};
  const std::vector<CellFraction> both = {{0, 0, Heading::NE, 0.5}, {0, 1, Heading::NE, 0.5}};
  // Pooled: 20 (10), 46.5 (50), 80 (40) -> cumulative 0.1, 0.6, 1.0.
  EXPECT_DOUBLE_EQ(free_flow_edge(both, cc, 100), 80.0);
  EXPECT_DOUBLE_EQ(free_flow_edge(both, cc, 60), 60.0);
  const std::vector<CellFraction> only_b = {{0, 1, Heading::NE, 1.0}};
  EXPECT_DOUBLE_EQ(free_flow_edge(only_b, cc, 50), 46.5);
  const std::vector<CellFraction> empty_cell = {{1, 1, Heading::SW, 1.0}};
  EXPECT_DOUBLE_EQ(free_flow_edge(empty_cell, cc, 50), 20.0);
  EXPECT_DOUBLE_EQ(free_flow_edge({}, cc, 30), 20.0);
}

TEST(FreeFlowEdge, NeverAboveLimit) {
  Rng rng(6);
  CellClusters cc(3, 3, 5);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (Heading h : kHeadings) {
        auto s = cc.at(r, c, h);
        for (auto& cl : s) cl = {uniform_real(rng, 0, 130), uniform_index(rng, 20)};
      }
  for (int t = 0; t < 200; ++t) {
    std::vector<CellFraction> cells;
    for (int k = 0; k < 4; ++k)
      cells.push_back({static_cast<int>(uniform_index(rng, 3)), static_cast<int>(uniform_index(rng, 3)),
                       static_cast<Heading>(uniform_index(rng, 4)), 0.25});
    const double sl = uniform_real(rng, 5, 130);
    EXPECT_LE(free_flow_edge(cells, cc, sl), sl);
  }
}

TEST(NormalizeFreeFlow, Examples) {
  EXPECT_DOUBLE_EQ(normalize_free_flow(10, 50), 30.0);
  EXPECT_DOUBLE_EQ(normalize_free_flow(45, 50), 45.0);
  EXPECT_DOUBLE_EQ(normalize_free_flow(80, 50), 50.0);
  EXPECT_DOUBLE_EQ(normalize_free_flow(10, 4), 20.0);
  EXPECT_DOUBLE_EQ(normalize_free_flow(10, 10), 10.0);  // upper clip wins over the floor of 20
}

TEST(NormalizeFreeFlow, Bounds) {
  for (double sl = 0; sl <= 130; sl += 2.5)
    for (double ff = 0; ff <= 150; ff += 2.5) {
      const double v = normalize_free_flow(ff, sl);
      EXPECT_GE(v, std::min(20.0, 0.6 * sl) - 1e-12);
      if (sl >= 5) {
        EXPECT_LE(v, std::max(sl, 20.0) + 1e-12);
      }
    }
}

TEST(CellClusterPipeline, DeterministicAndJobIndependent) {
  std::vector<AggMovieDay> days;
  Rng rng(10);
  for (int d = 0; d < 3; ++d) {
    AggMovieDay a("d" + std::to_string(d), 8, 3, 3, 3);
    for (std::size_t i = 0; i < a.speeds().size(); ++i)
      if (uniform01(rng) < 0.7) {
        a.speeds()[i] = static_cast<float>(uniform_real(rng, 5, 110));
        a.volumes()[i] = 1 + static_cast<std::uint32_t>(uniform_index(rng, 20));
      }
    days.push_back(std::move(a));
  }
  KMeansOptions opt;
  opt.seed = 5;
  const CellClusters one = compute_cell_clusters(days, opt, 1);
  EXPECT_EQ(one, compute_cell_clusters(days, opt, 4));
  // Sizes conserve the per-cell sample count.
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (Heading h : kHeadings) {
        std::uint64_t n = 0;
        for (const auto& d : days)
          for (int b = 0; b < d.bins(); ++b) n += d.has_data(b, r, c, h);
        std::uint64_t total = 0;
        for (const auto& cl : one.at(r, c, h)) total += cl.size;
        EXPECT_EQ(total, n);
      }

  testutil::TempDir dir;
  write_cell_clusters(one, dir / "c.tensor");
  EXPECT_EQ(read_cell_clusters(dir / "c.tensor"), one);
  const Container cont = read_container(dir / "c.tensor");
  EXPECT_EQ(cont.header.at("shape"), nlohmann::json({3, 3, 4, 5, 2}));
}

TEST(SampleDays, SeededSubset) {
  std::vector<std::string> days;
  for (int i = 0; i < 30; ++i) days.push_back("d" + std::to_string(100 + i));
  const auto a = sample_days(days, 20, 1);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(a, sample_days(days, 20, 1));
  EXPECT_NE(a, sample_days(days, 20, 2));
  EXPECT_EQ(sample_days({"b", "a"}, 20, 1), (std::vector<std::string>{"a", "b"}));
}

TEST(FreeFlowCsv, RoundTrip) {
  testutil::TempDir dir;
  FreeFlowTable t = {{{1, 2, 3}, 46.5}, {{2, 1, 99}, 20.0}};
  write_free_flow(t, dir / "ff.csv");
  EXPECT_EQ(read_free_flow(dir / "ff.csv"), t);
}
