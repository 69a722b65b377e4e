#pragma once

// Geo-referenced raster arithmetic, heading quadrants and the 8-bit
// volume/speed codes shared by every pipeline stage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace fcdpipe {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;
  double cell_size = 0.001;
  int rows = 0;
  int cols = 0;
  int bins_per_day = 288;
  static constexpr int channels = 8;

  double seconds_per_bin() const { return 86400.0 / bins_per_day; }

  void validate() const {
    if (!(cell_size > 0.0)) throw ConfigError("grid: cell_size must be positive");
    if (!(lat_max > lat_min)) throw ConfigError("grid: lat_max must exceed lat_min");
    if (!(lon_max > lon_min)) throw ConfigError("grid: lon_max must exceed lon_min");
    if (bins_per_day <= 0 || 86400 % bins_per_day != 0)
      throw ConfigError("grid: bins_per_day must be a positive divisor of 86400");
    if (rows != static_cast<int>(std::lround((lat_max - lat_min) / cell_size)) ||
        cols != static_cast<int>(std::lround((lon_max - lon_min) / cell_size)))
      throw ConfigError("grid: rows/cols inconsistent with bounding box and cell_size");
    if (rows <= 0 || cols <= 0) throw ConfigError("grid: bounding box smaller than one cell");
  }
};

/// Builds a grid whose row/col counts follow from the bounding box.
inline GridConfig make_grid(double lat_min, double lat_max, double lon_min, double lon_max,
                            double cell_size = 0.001, int bins_per_day = 288) {
  GridConfig g;
  g.lat_min = lat_min;
  g.lat_max = lat_max;
  g.lon_min = lon_min;
  g.lon_max = lon_max;
  g.cell_size = cell_size;
  g.bins_per_day = bins_per_day;
  g.rows = static_cast<int>(std::lround((lat_max - lat_min) / cell_size));
  g.cols = static_cast<int>(std::lround((lon_max - lon_min) / cell_size));
  g.validate();
  return g;
}

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

namespace detail {

// Index of the band containing `offset` (in cell units). Offsets within 1e-9
// cells of a band boundary snap onto it so that boundary ties go to the
// higher index regardless of representation error.
inline long band_index(double offset_cells) {
  const double nearest = std::round(offset_cells);
  if (std::abs(offset_cells - nearest) < 1e-9) return static_cast<long>(nearest);
  return static_cast<long>(std::floor(offset_cells));
}

}  // namespace detail

/// Row 0 is the northern edge, col 0 the western edge. Returns nullopt
/// outside the bounding box (or for non-finite input).
inline std::optional<Cell> cell_of(double lat, double lon, const GridConfig& cfg) {
  if (!std::isfinite(lat) || !std::isfinite(lon)) return std::nullopt;
  if (lat < cfg.lat_min || lat > cfg.lat_max || lon < cfg.lon_min || lon > cfg.lon_max)
    return std::nullopt;
  long row = detail::band_index((cfg.lat_max - lat) / cfg.cell_size);
  long col = detail::band_index((lon - cfg.lon_min) / cfg.cell_size);
  row = std::clamp<long>(row, 0, cfg.rows - 1);
  col = std::clamp<long>(col, 0, cfg.cols - 1);
  return Cell{static_cast<int>(row), static_cast<int>(col)};
}

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
  friend bool operator==(const LatLon&, const LatLon&) = default;
};

inline LatLon cell_center(Cell c, const GridConfig& cfg) {
  return {cfg.lat_max - (c.row + 0.5) * cfg.cell_size, cfg.lon_min + (c.col + 0.5) * cfg.cell_size};
}

// ---------------------------------------------------------------------------
// Headings

enum class Heading : std::uint8_t { NE = 0, SE = 1, SW = 2, NW = 3 };

inline constexpr std::array<Heading, 4> kHeadings = {Heading::NE, Heading::SE, Heading::SW,
                                                     Heading::NW};

inline constexpr int index_of(Heading h) { return static_cast<int>(h); }

inline constexpr std::string_view to_string(Heading h) {
  switch (h) {
    case Heading::NE: return "NE";
    case Heading::SE: return "SE";
    case Heading::SW: return "SW";
    case Heading::NW: return "NW";
  }
  return "?";
}

inline Heading heading_from_string(std::string_view s) {
  for (Heading h : kHeadings)
    if (to_string(h) == s) return h;
  throw std::invalid_argument("unknown heading '" + std::string(s) + "'");
}

inline double normalize_angle(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a < 0.0) a += 360.0;
  if (a >= 360.0) a = 0.0;
  return a;
}

/// Half-open quadrants: NE [0,90), SE [90,180), SW [180,270), NW [270,360).
inline Heading heading_quadrant(double angle_deg) {
  const double a = normalize_angle(angle_deg);
  const int q = std::min(3, static_cast<int>(a / 90.0));
  return static_cast<Heading>(q);
}

// ---------------------------------------------------------------------------
// 8-bit encodings

struct EncodingParams {
  double speed_cap = 120.0;
  int code_max = 255;
  std::int64_t privacy_threshold = 0;
  std::int64_t volume_cutoff = 255;
  std::int64_t volume_scale_divisor = 255;

  void validate() const {
    if (privacy_threshold < 0 || privacy_threshold >= volume_cutoff)
      throw ConfigError("encoding: require 0 <= privacy_threshold < volume_cutoff");
    if (volume_scale_divisor <= 0) throw ConfigError("encoding: volume_scale_divisor must be > 0");
    if (!(speed_cap > 0.0)) throw ConfigError("encoding: speed_cap must be > 0");
  }
};

/// Speed code for a bin with nonzero volume; never 0.
inline std::uint8_t encode_speed(double kph, const EncodingParams& p = {}) {
  const double v = std::clamp(kph, 0.0, p.speed_cap);
  const long code = std::lround(v * p.code_max / p.speed_cap);
  return static_cast<std::uint8_t>(std::clamp<long>(code, 1, p.code_max));
}

inline double decode_speed(std::uint8_t code, const EncodingParams& p = {}) {
  return code * p.speed_cap / p.code_max;
}

inline std::uint8_t encode_volume(std::int64_t count, const EncodingParams& p = {}) {
  const std::int64_t above = std::clamp<std::int64_t>(count - p.privacy_threshold, 0, p.volume_cutoff);
  const long code = std::lround(static_cast<double>(above) * p.code_max /
                                static_cast<double>(p.volume_scale_divisor));
  return static_cast<std::uint8_t>(std::clamp<long>(code, 0, p.code_max));
}

// ---------------------------------------------------------------------------
// Config file

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

struct GridFileConfig {
  GridConfig grid;
  EncodingParams encoding;
};

/// Reads lat_min, lat_max, lon_min, lon_max, cell_size, bins_per_day,
/// privacy_threshold, volume_cutoff, volume_scale_divisor. The bounding box
/// keys are mandatory; unknown keys are ignored.
inline GridFileConfig grid_config_from_json(const nlohmann::json& j) {
  auto req = [&](const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("grid config: missing key '") + key + "'");
    return j.at(key).get<double>();
  };
  GridFileConfig out;
  try {
    const double cell = j.value("cell_size", 0.001);
    const int bins = j.value("bins_per_day", 288);
    out.grid = make_grid(req("lat_min"), req("lat_max"), req("lon_min"), req("lon_max"), cell, bins);
    out.encoding.privacy_threshold = j.value("privacy_threshold", std::int64_t{0});
    out.encoding.volume_cutoff = j.value("volume_cutoff", std::int64_t{255});
    out.encoding.volume_scale_divisor =
        j.value("volume_scale_divisor", out.encoding.volume_cutoff);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("grid config: ") + e.what());
  }
  out.encoding.validate();
  return out;
}

inline nlohmann::json grid_config_to_json(const GridConfig& g, const EncodingParams& e) {
  return {{"lat_min", g.lat_min},
          {"lat_max", g.lat_max},
          {"lon_min", g.lon_min},
          {"lon_max", g.lon_max},
          {"cell_size", g.cell_size},
          {"bins_per_day", g.bins_per_day},
          {"privacy_threshold", e.privacy_threshold},
          {"volume_cutoff", e.volume_cutoff},
          {"volume_scale_divisor", e.volume_scale_divisor}};
}

inline GridFileConfig load_grid_config(const std::string& path) {
  return grid_config_from_json(read_json_file(path));
}

}  // namespace fcdpipe
