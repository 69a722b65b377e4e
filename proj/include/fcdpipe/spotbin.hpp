#pragma once

// Spot binning: GPS probes -> one day of (bin, row, col, channel) uint8 codes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fcdpipe/grid.hpp"
#include "fcdpipe/io.hpp"

namespace fcdpipe {

struct Probe {
  double t = 0.0;  // seconds since start of day
  double lat = 0.0;
  double lon = 0.0;
  double angle = 0.0;  // degrees, clockwise from north
  double speed = 0.0;  // kph
};

using ProbeSet = std::vector<Probe>;

/// One day of spot-binned data. Channel 2h holds the volume code and 2h+1
/// the speed code for heading h in NE, SE, SW, NW order.
class MovieDay {
 public:
  MovieDay() = default;
  MovieDay(std::string day, int bins, int rows, int cols, EncodingParams enc = {})
      : day_(std::move(day)),
        bins_(bins),
        rows_(rows),
        cols_(cols),
        enc_(enc),
        data_(static_cast<std::size_t>(bins) * rows * cols * GridConfig::channels, 0) {}

  const std::string& day() const { return day_; }
  int bins() const { return bins_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const EncodingParams& encoding() const { return enc_; }

  std::size_t index(int bin, int row, int col, int channel) const {
    return ((static_cast<std::size_t>(bin) * rows_ + row) * cols_ + col) * GridConfig::channels +
           channel;
  }
  std::uint8_t volume(int bin, int row, int col, Heading h) const {
    return data_[index(bin, row, col, 2 * index_of(h))];
  }
  std::uint8_t speed(int bin, int row, int col, Heading h) const {
    return data_[index(bin, row, col, 2 * index_of(h) + 1)];
  }
  void set(int bin, int row, int col, Heading h, std::uint8_t volume, std::uint8_t speed) {
    data_[index(bin, row, col, 2 * index_of(h))] = volume;
    data_[index(bin, row, col, 2 * index_of(h) + 1)] = speed;
  }

  std::vector<std::uint8_t>& data() { return data_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

  friend bool operator==(const MovieDay& a, const MovieDay& b) {
    return a.day_ == b.day_ && a.bins_ == b.bins_ && a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
           a.data_ == b.data_;
  }

 private:
  std::string day_;
  int bins_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  EncodingParams enc_;
  std::vector<std::uint8_t> data_;
};

/// Raw (pre-encoding) content of one populated bin.
struct RawBin {
  int bin = 0;
  int row = 0;
  int col = 0;
  Heading heading = Heading::NE;
  std::int64_t count = 0;
  double mean_speed = 0.0;  // mean of speeds clipped to [0, speed_cap]
};

struct BinResult {
  MovieDay movie;
  std::vector<RawBin> raw;  // sorted by (bin, row, col, heading)
  std::size_t binned = 0;
  std::size_t dropped_out_of_box = 0;
  std::size_t rejected_non_finite = 0;
  std::size_t rejected_out_of_day = 0;
};

inline int time_bin_of(double t, const GridConfig& cfg) {
  return static_cast<int>(std::floor(t / cfg.seconds_per_bin()));
}

/// Bins probes into a MovieDay. Per-bin speeds are summed in ascending order
/// so the result does not depend on probe order.
inline BinResult bin_probes(const ProbeSet& probes, const GridConfig& cfg,
                            const EncodingParams& enc = {}, std::string day = "1970-01-01") {
  cfg.validate();
  enc.validate();
  BinResult res;
  res.movie = MovieDay(std::move(day), cfg.bins_per_day, cfg.rows, cfg.cols, enc);

  struct Keyed {
    std::size_t key;
    double speed;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(probes.size());
  for (const Probe& p : probes) {
    if (!std::isfinite(p.t) || !std::isfinite(p.lat) || !std::isfinite(p.lon) ||
        !std::isfinite(p.angle) || !std::isfinite(p.speed)) {
      ++res.rejected_non_finite;
      continue;
    }
    if (p.t < 0.0 || p.t >= 86400.0) {
      ++res.rejected_out_of_day;
      continue;
    }
    const auto cell = cell_of(p.lat, p.lon, cfg);
    if (!cell) {
      ++res.dropped_out_of_box;
      continue;
    }
    const int bin = time_bin_of(p.t, cfg);
    const int h = index_of(heading_quadrant(p.angle));
    const std::size_t key =
        ((static_cast<std::size_t>(bin) * cfg.rows + cell->row) * cfg.cols + cell->col) * 4 + h;
    keyed.push_back({key, std::clamp(p.speed, 0.0, enc.speed_cap)});
  }
  res.binned = keyed.size();
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key < b.key : a.speed < b.speed;
  });

  for (std::size_t i = 0; i < keyed.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < keyed.size() && keyed[j].key == keyed[i].key) sum += keyed[j++].speed;
    const auto count = static_cast<std::int64_t>(j - i);

    std::size_t key = keyed[i].key;
    RawBin rb;
    rb.heading = static_cast<Heading>(key % 4);
    key /= 4;
    rb.col = static_cast<int>(key % cfg.cols);
    key /= cfg.cols;
    rb.row = static_cast<int>(key % cfg.rows);
    rb.bin = static_cast<int>(key / cfg.rows);
    rb.count = count;
    rb.mean_speed = sum / static_cast<double>(count);
    res.raw.push_back(rb);

    const std::uint8_t vol = encode_volume(count, enc);
    const std::uint8_t spd = vol == 0 ? 0 : encode_speed(rb.mean_speed, enc);
    res.movie.set(rb.bin, rb.row, rb.col, rb.heading, vol, spd);
    i = j;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Movie files

inline nlohmann::json encoding_to_json(const EncodingParams& e) {
  return {{"speed_cap", e.speed_cap},
          {"code_max", e.code_max},
          {"privacy_threshold", e.privacy_threshold},
          {"volume_cutoff", e.volume_cutoff},
          {"volume_scale_divisor", e.volume_scale_divisor}};
}

inline EncodingParams encoding_from_json(const nlohmann::json& j) {
  EncodingParams e;
  e.speed_cap = j.at("speed_cap").get<double>();
  e.code_max = j.at("code_max").get<int>();
  e.privacy_threshold = j.at("privacy_threshold").get<std::int64_t>();
  e.volume_cutoff = j.at("volume_cutoff").get<std::int64_t>();
  e.volume_scale_divisor = j.at("volume_scale_divisor").get<std::int64_t>();
  return e;
}

inline const nlohmann::json& channel_order_json() {
  static const nlohmann::json order = {"NE_volume", "NE_speed", "SE_volume", "SE_speed",
                                       "SW_volume", "SW_speed", "NW_volume", "NW_speed"};
  return order;
}

inline Container movie_to_container(const MovieDay& m) {
  Container c;
  c.header = {{"kind", "movie"},
              {"dtype", "u8"},
              {"day", m.day()},
              {"bins", m.bins()},
              {"rows", m.rows()},
              {"cols", m.cols()},
              {"channels", GridConfig::channels},
              {"channel_order", channel_order_json()},
              {"encoding", encoding_to_json(m.encoding())}};
  c.payload.assign(reinterpret_cast<const char*>(m.data().data()), m.data().size());
  return c;
}

inline MovieDay movie_from_container(const Container& c) {
  MovieDay m;
  try {
    if (c.header.at("kind") != "movie") throw FormatError("movie: container is not a movie");
    const int bins = c.header.at("bins").get<int>();
    const int rows = c.header.at("rows").get<int>();
    const int cols = c.header.at("cols").get<int>();
    if (bins <= 0 || rows <= 0 || cols <= 0 || c.header.at("channels").get<int>() != 8)
      throw FormatError("movie: invalid dimensions in header");
    if (c.header.at("channel_order") != channel_order_json())
      throw FormatError("movie: unsupported channel order");
    m = MovieDay(c.header.at("day").get<std::string>(), bins, rows, cols,
                 encoding_from_json(c.header.at("encoding")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("movie: malformed header: ") + e.what());
  }
  if (c.payload.size() != m.data().size())
    throw FormatError("movie: payload has " + std::to_string(c.payload.size()) +
                      " bytes, header dimensions require " + std::to_string(m.data().size()));
  std::copy(c.payload.begin(), c.payload.end(), reinterpret_cast<char*>(m.data().data()));
  return m;
}

inline void write_movie(const MovieDay& m, const std::filesystem::path& path) {
  write_container(path, movie_to_container(m));
}

inline MovieDay read_movie(const std::filesystem::path& path) {
  return movie_from_container(read_container(path));
}

/// Rejects a movie whose dimensions do not match `cfg`.
inline void check_movie_matches(const MovieDay& m, const GridConfig& cfg) {
  if (m.rows() != cfg.rows || m.cols() != cfg.cols || m.bins() != cfg.bins_per_day)
    throw FormatError("movie '" + m.day() + "' has shape (" + std::to_string(m.bins()) + "," +
                      std::to_string(m.rows()) + "," + std::to_string(m.cols()) +
                      ") but the grid config requires (" + std::to_string(cfg.bins_per_day) +
                      "," + std::to_string(cfg.rows) + "," + std::to_string(cfg.cols) + ")");
}

// ---------------------------------------------------------------------------
// Probe CSV: t,lat,lon,angle,speed

inline const std::vector<std::string>& probe_csv_header() {
  static const std::vector<std::string> h = {"t", "lat", "lon", "angle", "speed"};
  return h;
}

inline std::string probes_to_csv(const ProbeSet& probes) {
  std::string out = "t,lat,lon,angle,speed\n";
  for (const Probe& p : probes) {
    out += format_double(p.t) + ',' + format_double(p.lat) + ',' + format_double(p.lon) + ',' +
           format_double(p.angle) + ',' + format_double(p.speed) + '\n';
  }
  return out;
}

inline ProbeSet probes_from_csv(std::string text, const std::string& source = "probes") {
  CsvReader reader(std::move(text), probe_csv_header(), source);
  ProbeSet out;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    out.push_back({parse_double(f[0]), parse_double(f[1]), parse_double(f[2]),
                   parse_double(f[3]), parse_double(f[4])});
  }
  return out;
}

inline void write_probes(const ProbeSet& probes, const std::filesystem::path& path) {
  write_file_atomic(path, probes_to_csv(probes));
}

inline ProbeSet read_probes(const std::filesystem::path& path) {
  return probes_from_csv(read_file(path), path.string());
}

}  // namespace fcdpipe
