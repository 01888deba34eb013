#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lanerl/geometry.hpp"

namespace lanerl {

enum class Tile : std::uint8_t {
  Empty,       // X
  StraightNS,  // S_NS
  StraightEW,  // S_EW
  CurveNE,     // C_NE: connects the north and east edges
  CurveNW,
  CurveSE,
  CurveSW,
};

std::string_view tile_code(Tile t);
bool is_road(Tile t);

/// One constant-curvature piece of the right-lane centerline (one per road tile).
struct CenterlinePiece {
  Vec2 start;
  double heading = 0.0;    // direction of travel at the start
  double length = 0.0;
  double curvature = 0.0;  // signed, positive turns left
  double s_start = 0.0;    // arc length of the start point
  int row = 0;
  int col = 0;

  Vec2 position_at(double u) const;
  double heading_at(double u) const { return heading + curvature * u; }
};

struct CenterlinePoint {
  Vec2 position;
  double tangent = 0.0;
};

struct LanePose {
  double d = 0.0;    // lateral offset, positive toward the road center
  double psi = 0.0;  // heading error in (-pi, pi]
  double s = 0.0;    // station along the centerline
  bool in_right_lane = false;
  bool on_road = false;
};

enum class Surface : std::uint8_t { Grass, Road, WhiteLine, YellowLine };

/// Tile-grid road network whose road tiles form exactly one closed loop.
///
/// World frame: x points east, y points north. Row 0 of the grid is the northernmost row,
/// so cell (row r, col c) covers x in [c*t, (c+1)*t] and y in [(rows-1-r)*t, (rows-r)*t].
/// The loop is traversed counterclockwise; the right lane is the one on the driver's right.
class TrackMap {
 public:
  /// Builds and validates a map; throws MapError on malformed grids or roads that are not a
  /// single closed loop.
  static TrackMap from_tiles(std::vector<std::vector<Tile>> grid, double tile_size);

  int rows() const { return static_cast<int>(grid_.size()); }
  int cols() const { return grid_.empty() ? 0 : static_cast<int>(grid_.front().size()); }
  Tile tile(int row, int col) const;
  const std::vector<std::vector<Tile>> &tiles() const { return grid_; }
  double tile_size() const { return tile_size_; }
  double lane_width() const { return tile_size_ / 2.0; }
  double road_width() const { return tile_size_; }
  double total_length() const { return total_length_; }
  std::span<const CenterlinePiece> pieces() const { return pieces_; }

  /// Position and tangent at arc length s (taken modulo the loop length).
  CenterlinePoint centerline_point(double s) const;

  /// Lane-relative pose against the closest centerline point (ties: smallest s).
  LanePose lane_pose(Vec2 position, double heading) const;

  /// Signed arc-length difference s_to - s_from, wrapped into (-L/2, L/2].
  double wrap_station_delta(double s_from, double s_to) const;

  /// Surface type at a ground point, from tile-local road geometry.
  Surface surface(Vec2 p) const;

  std::string serialize() const;

  bool operator==(const TrackMap &o) const {
    return tile_size_ == o.tile_size_ && grid_ == o.grid_;
  }

  // Road marking geometry (meters).
  static constexpr double kWhiteLineWidth = 0.048;
  static constexpr double kYellowLineWidth = 0.024;
  static constexpr double kDashLength = 0.08;
  static constexpr double kDashPeriod = 0.16;

 private:
  std::vector<std::vector<Tile>> grid_;
  double tile_size_ = 0.0;
  double total_length_ = 0.0;
  std::vector<CenterlinePiece> pieces_;
};

/// Parses the plain-text map document (`tilesize <m>` line, then rows of tile codes).
TrackMap load_map(std::string_view text);
TrackMap load_map_file(const std::string &path);

struct MapRandomization {
  int min_size = 3;  // grid side length range (rows and cols drawn independently)
  int max_size = 6;
  double min_curve_fraction = 0.0;
  double max_curve_fraction = 1.0;
  double tile_size = 0.585;
  int max_attempts = 200;

  void validate() const;
};

/// Deterministic in `seed`. Throws MapError when the bounds admit no closed loop.
TrackMap generate_random_map(std::uint64_t seed, const MapRandomization &spec);

}  // namespace lanerl
