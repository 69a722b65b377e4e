#pragma once

// Temporal aggregation of movie days (default: 3 x 5 min -> 15 min).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "fcdpipe/grid.hpp"
#include "fcdpipe/io.hpp"
#include "fcdpipe/spotbin.hpp"

namespace fcdpipe {

/// Aggregated day. Volumes are sums of volume codes; speeds are decoded kph
/// means stored as float, NaN where no constituent bin had volume.
class AggMovieDay {
 public:
  AggMovieDay() = default;
  AggMovieDay(std::string day, int bins, int rows, int cols, int factor)
      : day_(std::move(day)),
        bins_(bins),
        rows_(rows),
        cols_(cols),
        factor_(factor),
        volume_(static_cast<std::size_t>(bins) * rows * cols * 4, 0),
        speed_(volume_.size(), std::numeric_limits<float>::quiet_NaN()) {}

  const std::string& day() const { return day_; }
  int bins() const { return bins_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int factor() const { return factor_; }

  std::size_t index(int bin, int row, int col, Heading h) const {
    return ((static_cast<std::size_t>(bin) * rows_ + row) * cols_ + col) * 4 + index_of(h);
  }
  std::uint32_t volume(int bin, int row, int col, Heading h) const {
    return volume_[index(bin, row, col, h)];
  }
  float speed(int bin, int row, int col, Heading h) const { return speed_[index(bin, row, col, h)]; }
  bool has_data(int bin, int row, int col, Heading h) const {
    return !std::isnan(speed(bin, row, col, h));
  }

  std::vector<std::uint32_t>& volumes() { return volume_; }
  const std::vector<std::uint32_t>& volumes() const { return volume_; }
  std::vector<float>& speeds() { return speed_; }
  const std::vector<float>& speeds() const { return speed_; }

 private:
  std::string day_;
  int bins_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  int factor_ = 1;
  std::vector<std::uint32_t> volume_;
  std::vector<float> speed_;
};

inline AggMovieDay aggregate(const MovieDay& m, int factor = 3) {
  if (factor < 1 || m.bins() % factor != 0)
    throw std::invalid_argument("aggregate: factor " + std::to_string(factor) +
                                " does not divide bins_per_day " + std::to_string(m.bins()));
  AggMovieDay out(m.day(), m.bins() / factor, m.rows(), m.cols(), factor);
  for (int ob = 0; ob < out.bins(); ++ob) {
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        for (Heading h : kHeadings) {
          std::uint32_t vol = 0;
          double speed_sum = 0.0;
          int with_volume = 0;
          for (int k = 0; k < factor; ++k) {
            const int b = ob * factor + k;
            const std::uint8_t v = m.volume(b, r, c, h);
            vol += v;
            if (v > 0) {
              speed_sum += decode_speed(m.speed(b, r, c, h), m.encoding());
              ++with_volume;
            }
          }
          const auto i = out.index(ob, r, c, h);
          out.volumes()[i] = vol;
          if (with_volume > 0) out.speeds()[i] = static_cast<float>(speed_sum / with_volume);
        }
      }
    }
  }
  return out;
}

inline Container agg_to_container(const AggMovieDay& a) {
  Container c;
  c.header = {{"kind", "agg_movie"},
              {"dtype", "u32_volume_f32_speed_interleaved"},
              {"day", a.day()},
              {"bins", a.bins()},
              {"rows", a.rows()},
              {"cols", a.cols()},
              {"channels", GridConfig::channels},
              {"channel_order", channel_order_json()},
              {"agg_factor", a.factor()}};
  c.payload.resize(a.volumes().size() * 8);
  char* p = c.payload.data();
  for (std::size_t i = 0; i < a.volumes().size(); ++i) {
    std::memcpy(p, &a.volumes()[i], 4);
    std::memcpy(p + 4, &a.speeds()[i], 4);
    p += 8;
  }
  return c;
}

inline AggMovieDay agg_from_container(const Container& c) {
  AggMovieDay a;
  try {
    if (c.header.at("kind") != "agg_movie") throw FormatError("agg movie: wrong container kind");
    const int bins = c.header.at("bins").get<int>();
    const int rows = c.header.at("rows").get<int>();
    const int cols = c.header.at("cols").get<int>();
    const int factor = c.header.at("agg_factor").get<int>();
    if (bins <= 0 || rows <= 0 || cols <= 0 || factor <= 0)
      throw FormatError("agg movie: invalid dimensions in header");
    a = AggMovieDay(c.header.at("day").get<std::string>(), bins, rows, cols, factor);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("agg movie: malformed header: ") + e.what());
  }
  if (c.payload.size() != a.volumes().size() * 8)
    throw FormatError("agg movie: payload size does not match header dimensions");
  const char* p = c.payload.data();
  for (std::size_t i = 0; i < a.volumes().size(); ++i) {
    std::memcpy(&a.volumes()[i], p, 4);
    std::memcpy(&a.speeds()[i], p + 4, 4);
    p += 8;
  }
  return a;
}

inline void write_agg_movie(const AggMovieDay& a, const std::filesystem::path& path) {
  write_container(path, agg_to_container(a));
}

inline AggMovieDay read_agg_movie(const std::filesystem::path& path) {
  return agg_from_container(read_container(path));
}

}  // namespace fcdpipe
