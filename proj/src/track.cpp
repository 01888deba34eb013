#include "lanerl/track.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "lanerl/error.hpp"

namespace lanerl {
namespace {

enum Dir { North = 0, East = 1, South = 2, West = 3 };

constexpr std::array<Vec2, 4> kDirVec = {{{0, 1}, {1, 0}, {0, -1}, {-1, 0}}};
constexpr std::array<int, 4> kDirRow = {-1, 0, 1, 0};
constexpr std::array<int, 4> kDirCol = {0, 1, 0, -1};

Dir opposite(Dir d) { return static_cast<Dir>((d + 2) % 4); }

std::array<Dir, 2> openings(Tile t) {
  switch (t) {
    case Tile::StraightNS: return {North, South};
    case Tile::StraightEW: return {East, West};
    case Tile::CurveNE: return {North, East};
    case Tile::CurveNW: return {North, West};
    case Tile::CurveSE: return {South, East};
    case Tile::CurveSW: return {South, West};
    case Tile::Empty: break;
  }
  throw UsageError("openings of an empty tile");
}

bool has_opening(Tile t, Dir d) {
  if (!is_road(t)) return false;
  auto o = openings(t);
  return o[0] == d || o[1] == d;
}

Tile tile_from_openings(Dir a, Dir b) {
  auto has = [&](Dir x, Dir y) { return (a == x && b == y) || (a == y && b == x); };
  if (has(North, South)) return Tile::StraightNS;
  if (has(East, West)) return Tile::StraightEW;
  if (has(North, East)) return Tile::CurveNE;
  if (has(North, West)) return Tile::CurveNW;
  if (has(South, East)) return Tile::CurveSE;
  if (has(South, West)) return Tile::CurveSW;
  throw UsageError("no tile connects identical edges");
}

std::string where(int row, int col) {
  return "tile (row " + std::to_string(row) + ", col " + std::to_string(col) + ")";
}

struct LoopStep {
  int row;
  int col;
  Dir entry;  // edge we came in through
  Dir exit;
};

double closest_on_piece(const CenterlinePiece &piece, Vec2 p) {
  if (piece.curvature == 0.0) {
    const Vec2 dir = unit(piece.heading);
    return std::clamp(dot(p - piece.start, dir), 0.0, piece.length);
  }
  const double radius = 1.0 / piece.curvature;  // signed
  const Vec2 center = piece.start + left_normal(unit(piece.heading)) * radius;
  const Vec2 v0 = piece.start - center;
  const Vec2 v = p - center;
  if (v.x == 0.0 && v.y == 0.0) return 0.0;
  const double swept = wrap_angle(std::atan2(v.y, v.x) - std::atan2(v0.y, v0.x));
  const double u = swept / piece.curvature;
  if (u >= 0.0 && u <= piece.length) return u;
  const double d0 = distance(p, piece.position_at(0.0));
  const double d1 = distance(p, piece.position_at(piece.length));
  return d1 < d0 ? piece.length : 0.0;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

}  // namespace

std::string_view tile_code(Tile t) {
  switch (t) {
    case Tile::Empty: return "X";
    case Tile::StraightNS: return "S_NS";
    case Tile::StraightEW: return "S_EW";
    case Tile::CurveNE: return "C_NE";
    case Tile::CurveNW: return "C_NW";
    case Tile::CurveSE: return "C_SE";
    case Tile::CurveSW: return "C_SW";
  }
  return "?";
}

bool is_road(Tile t) { return t != Tile::Empty; }

Vec2 CenterlinePiece::position_at(double u) const {
  if (curvature == 0.0) return start + unit(heading) * u;
  // Chord form: stable for small curvature * u.
  const double half = 0.5 * curvature * u;
  const double chord = (half == 0.0) ? u : u * std::sin(half) / half;
  return start + unit(heading + half) * chord;
}

Tile TrackMap::tile(int row, int col) const {
  if (row < 0 || col < 0 || row >= rows() || col >= cols()) return Tile::Empty;
  return grid_[row][col];
}

TrackMap TrackMap::from_tiles(std::vector<std::vector<Tile>> grid, double tile_size) {
  if (!(tile_size > 0.0) || !std::isfinite(tile_size)) {
    throw MapError("tile size must be positive, got " + format_double(tile_size));
  }
  if (grid.empty() || grid.front().empty()) throw MapError("map has no tiles");
  for (std::size_t r = 1; r < grid.size(); ++r) {
    if (grid[r].size() != grid.front().size()) {
      throw MapError("non-rectangular grid: row " + std::to_string(r) + " has " +
                     std::to_string(grid[r].size()) + " tiles, expected " +
                     std::to_string(grid.front().size()));
    }
  }

  TrackMap map;
  map.grid_ = std::move(grid);
  map.tile_size_ = tile_size;
  const int R = map.rows();
  const int C = map.cols();

  int start_r = -1;
  int start_c = -1;
  int road_count = 0;
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      if (!is_road(map.grid_[r][c])) continue;
      ++road_count;
      if (start_r < 0) {
        start_r = r;
        start_c = c;
      }
    }
  }
  if (road_count == 0) throw MapError("map has no road tiles");

  // Walk the loop starting from the first road tile in row-major order.
  std::vector<LoopStep> loop;
  std::set<std::pair<int, int>> visited;
  {
    const auto o = openings(map.grid_[start_r][start_c]);
    int r = start_r;
    int c = start_c;
    Dir entry = o[0];
    Dir exit = o[1];
    while (true) {
      if (!visited.insert({r, c}).second) {
        throw MapError("road not a single loop: " + where(r, c) + " is revisited");
      }
      loop.push_back({r, c, entry, exit});
      const int nr = r + kDirRow[exit];
      const int nc = c + kDirCol[exit];
      if (!has_opening(map.tile(nr, nc), opposite(exit))) {
        throw MapError("open road at " + where(r, c) + ": edge " + std::string("NESW"[exit], 1) +
                       " leads nowhere");
      }
      if (nr == start_r && nc == start_c) {
        if (opposite(exit) != o[0]) throw MapError("open road at " + where(nr, nc));
        break;
      }
      const auto no = openings(map.grid_[nr][nc]);
      entry = opposite(exit);
      exit = (no[0] == entry) ? no[1] : no[0];
      r = nr;
      c = nc;
    }
  }
  if (static_cast<int>(loop.size()) != road_count) {
    for (int r = 0; r < R; ++r) {
      for (int c = 0; c < C; ++c) {
        if (is_road(map.grid_[r][c]) && !visited.count({r, c})) {
          throw MapError("road not a single loop: " + where(r, c) + " is not on the loop through " +
                         where(start_r, start_c));
        }
      }
    }
  }

  auto center_of = [&](int r, int c) {
    return Vec2{(c + 0.5) * tile_size, (R - 1 - r + 0.5) * tile_size};
  };

  // Orient counterclockwise (positive shoelace area over tile centers).
  double area2 = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec2 a = center_of(loop[i].row, loop[i].col);
    const Vec2 b = center_of(loop[(i + 1) % loop.size()].row, loop[(i + 1) % loop.size()].col);
    area2 += cross(a, b);
  }
  if (area2 < 0.0) {
    std::reverse(loop.begin() + 1, loop.end());
    for (auto &step : loop) std::swap(step.entry, step.exit);
  }

  const double lane = map.lane_width();
  double s = 0.0;
  for (const auto &step : loop) {
    const Vec2 travel = kDirVec[opposite(step.entry)];
    const Vec2 right = left_normal(travel) * -1.0;
    const Vec2 entry_mid = center_of(step.row, step.col) + kDirVec[step.entry] * (tile_size / 2);
    CenterlinePiece piece;
    piece.start = entry_mid + right * (lane / 2);
    piece.heading = std::atan2(travel.y, travel.x);
    piece.row = step.row;
    piece.col = step.col;
    piece.s_start = s;
    if (step.exit == opposite(step.entry)) {
      piece.length = tile_size;
      piece.curvature = 0.0;
    } else {
      const bool left_turn = cross(travel, kDirVec[step.exit]) > 0.0;
      const double radius = tile_size / 2 + (left_turn ? lane / 2 : -lane / 2);
      piece.length = std::numbers::pi / 2 * radius;
      piece.curvature = (left_turn ? 1.0 : -1.0) / radius;
    }
    s += piece.length;
    map.pieces_.push_back(piece);
  }
  map.total_length_ = s;
  return map;
}

CenterlinePoint TrackMap::centerline_point(double s) const {
  s = std::fmod(s, total_length_);
  if (s < 0.0) s += total_length_;
  if (s >= total_length_) s = 0.0;
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), s,
                             [](double v, const CenterlinePiece &p) { return v < p.s_start; });
  const CenterlinePiece &piece = *std::prev(it);
  const double u = s - piece.s_start;
  return {piece.position_at(u), wrap_angle(piece.heading_at(u))};
}

LanePose TrackMap::lane_pose(Vec2 position, double heading) const {
  double best_dist = std::numeric_limits<double>::infinity();
  const CenterlinePiece *best = nullptr;
  double best_u = 0.0;
  for (const auto &piece : pieces_) {
    const double u = closest_on_piece(piece, position);
    const double dist = distance(position, piece.position_at(u));
    if (dist < best_dist) {
      best_dist = dist;
      best = &piece;
      best_u = u;
    }
  }
  const Vec2 q = best->position_at(best_u);
  const double tangent = best->heading_at(best_u);
  LanePose pose;
  pose.d = cross(unit(tangent), position - q);
  pose.psi = wrap_angle(heading - tangent);
  pose.s = best->s_start + best_u;
  if (pose.s >= total_length_) pose.s -= total_length_;
  const double half_lane = lane_width() / 2;
  pose.in_right_lane = std::abs(pose.d) <= half_lane;
  pose.on_road = pose.d >= -half_lane && pose.d <= 3 * half_lane;
  return pose;
}

double TrackMap::wrap_station_delta(double s_from, double s_to) const {
  double ds = std::fmod(s_to - s_from, total_length_);
  if (ds > total_length_ / 2) ds -= total_length_;
  if (ds <= -total_length_ / 2) ds += total_length_;
  return ds;
}

Surface TrackMap::surface(Vec2 p) const {
  const double t = tile_size_;
  const int col = static_cast<int>(std::floor(p.x / t));
  const int row = rows() - 1 - static_cast<int>(std::floor(p.y / t));
  const Tile kind = tile(row, col);
  if (!is_road(kind)) return Surface::Grass;
  const Vec2 center{(col + 0.5) * t, (rows() - 1 - row + 0.5) * t};
  double lateral = 0.0;
  double along = 0.0;
  if (kind == Tile::StraightNS) {
    lateral = p.x - center.x;
    along = p.y;
  } else if (kind == Tile::StraightEW) {
    lateral = p.y - center.y;
    along = p.x;
  } else {
    const auto o = openings(kind);
    const Vec2 corner = center + (kDirVec[o[0]] + kDirVec[o[1]]) * (t / 2);
    const Vec2 v = p - corner;
    lateral = norm(v) - t / 2;
    along = std::atan2(v.y, v.x) * (t / 2);
    if (std::abs(lateral) > t / 2) return Surface::Grass;
  }
  const double a = std::abs(lateral);
  if (a >= t / 2 - kWhiteLineWidth) return Surface::WhiteLine;
  if (a <= kYellowLineWidth / 2) {
    const double phase = along - std::floor(along / kDashPeriod) * kDashPeriod;
    if (phase < kDashLength) return Surface::YellowLine;
  }
  return Surface::Road;
}

std::string TrackMap::serialize() const {
  std::string out = "tilesize " + format_double(tile_size_) + "\n";
  for (const auto &row : grid_) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ' ';
      out += tile_code(row[c]);
    }
    out += '\n';
  }
  return out;
}

TrackMap load_map(std::string_view text) {
  static const std::map<std::string, Tile, std::less<>> kCodes = {
      {"X", Tile::Empty},      {"S_NS", Tile::StraightNS}, {"S_EW", Tile::StraightEW},
      {"C_NE", Tile::CurveNE}, {"C_NW", Tile::CurveNW},    {"C_SE", Tile::CurveSE},
      {"C_SW", Tile::CurveSW}};
  std::istringstream in{std::string(text)};
  std::string line;
  double tile_size = 0.0;
  bool have_size = false;
  std::vector<std::vector<Tile>> grid;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::vector<std::string> tokens;
    for (std::string w; words >> w;) tokens.push_back(w);
    if (tokens.empty()) continue;
    if (!have_size) {
      if (tokens.size() != 2 || tokens[0] != "tilesize") {
        throw MapError("line " + std::to_string(line_no) + ": expected `tilesize <meters>`");
      }
      const auto &v = tokens[1];
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), tile_size);
      if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw MapError("line " + std::to_string(line_no) + ": bad tile size '" + v + "'");
      }
      have_size = true;
      continue;
    }
    std::vector<Tile> row;
    for (const auto &tok : tokens) {
      auto it = kCodes.find(tok);
      if (it == kCodes.end()) {
        throw MapError("line " + std::to_string(line_no) + ": unknown tile code '" + tok + "'");
      }
      row.push_back(it->second);
    }
    grid.push_back(std::move(row));
  }
  if (!have_size) throw MapError("empty map document");
  return TrackMap::from_tiles(std::move(grid), tile_size);
}

TrackMap load_map_file(const std::string &path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open map file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return load_map(ss.str());
}

void MapRandomization::validate() const {
  if (min_size > max_size) throw ConfigError("map randomization: min_size > max_size");
  if (min_curve_fraction > max_curve_fraction) {
    throw ConfigError("map randomization: min_curve_fraction > max_curve_fraction");
  }
  if (!(tile_size > 0.0)) throw ConfigError("map randomization: tile_size must be positive");
  if (max_attempts < 1) throw ConfigError("map randomization: max_attempts must be >= 1");
}

namespace {

// Faces are the unit squares between four cell centres; a simply connected set of faces whose
// boundary passes through cell centres gives the loop. Face (fr, fc) has corner cells
// (fr, fc), (fr, fc+1), (fr+1, fc), (fr+1, fc+1).
struct FaceGrid {
  int rows;  // cell rows
  int cols;
  std::vector<char> in;  // (rows-1) x (cols-1)

  bool face(int fr, int fc) const {
    if (fr < 0 || fc < 0 || fr >= rows - 1 || fc >= cols - 1) return false;
    return in[fr * (cols - 1) + fc] != 0;
  }
};

// Returns the boundary cycle as a sequence of cells, or empty if it is not a single simple
// cycle. With `chordless`, no two non-consecutive loop cells may be 4-adjacent either.
std::vector<std::pair<int, int>> boundary_cycle(const FaceGrid &g, bool chordless) {
  const int R = g.rows;
  const int C = g.cols;
  std::vector<std::vector<std::pair<int, int>>> adj(R * C);
  std::size_t edges = 0;
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      if (c + 1 < C && g.face(r - 1, c) != g.face(r, c)) {
        adj[r * C + c].push_back({r, c + 1});
        adj[r * C + c + 1].push_back({r, c});
        ++edges;
      }
      if (r + 1 < R && g.face(r, c - 1) != g.face(r, c)) {
        adj[r * C + c].push_back({r + 1, c});
        adj[(r + 1) * C + c].push_back({r, c});
        ++edges;
      }
    }
  }
  int sr = -1;
  int sc = -1;
  for (int i = 0; i < R * C; ++i) {
    if (adj[i].empty()) continue;
    if (adj[i].size() != 2) return {};
    if (sr < 0) {
      sr = i / C;
      sc = i % C;
    }
  }
  if (sr < 0) return {};
  std::vector<std::pair<int, int>> cycle{{sr, sc}};
  std::pair<int, int> prev{sr, sc};
  std::pair<int, int> cur = adj[sr * C + sc][0];
  while (cur != std::pair{sr, sc}) {
    cycle.push_back(cur);
    const auto &n = adj[cur.first * C + cur.second];
    const auto next = (n[0] == prev) ? n[1] : n[0];
    prev = cur;
    cur = next;
    if (cycle.size() > edges) return {};
  }
  if (cycle.size() != edges) return {};
  if (!chordless) return cycle;
  std::vector<int> index(R * C, -1);
  for (std::size_t i = 0; i < cycle.size(); ++i) index[cycle[i].first * C + cycle[i].second] = int(i);
  const int n = static_cast<int>(cycle.size());
  for (int i = 0; i < n; ++i) {
    const auto [r, c] = cycle[i];
    for (int d = 0; d < 4; ++d) {
      const int nr = r + kDirRow[d];
      const int nc = c + kDirCol[d];
      if (nr < 0 || nc < 0 || nr >= R || nc >= C) continue;
      const int j = index[nr * C + nc];
      if (j < 0) continue;
      const int gap = std::abs(i - j);
      if (gap != 1 && gap != n - 1) return {};
    }
  }
  return cycle;
}

std::vector<std::vector<Tile>> tiles_from_cycle(int R, int C,
                                                const std::vector<std::pair<int, int>> &cycle) {
  std::vector<std::vector<Tile>> grid(R, std::vector<Tile>(C, Tile::Empty));
  const std::size_t n = cycle.size();
  auto dir_to = [](std::pair<int, int> a, std::pair<int, int> b) {
    for (int d = 0; d < 4; ++d) {
      if (a.first + kDirRow[d] == b.first && a.second + kDirCol[d] == b.second) return Dir(d);
    }
    throw UsageError("cycle cells are not adjacent");
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto cur = cycle[i];
    const auto prev = cycle[(i + n - 1) % n];
    const auto next = cycle[(i + 1) % n];
    grid[cur.first][cur.second] = tile_from_openings(dir_to(cur, prev), dir_to(cur, next));
  }
  return grid;
}

}  // namespace

TrackMap generate_random_map(std::uint64_t seed, const MapRandomization &spec) {
  spec.validate();
  if (spec.max_size < 2) {
    throw MapError("map randomization admits no closed loop: max_size < 2");
  }
  std::mt19937_64 rng(seed);
  const int lo = std::max(spec.min_size, 2);
  std::uniform_int_distribution<int> size_dist(lo, spec.max_size);
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    FaceGrid g{size_dist(rng), size_dist(rng), {}};
    const int FR = g.rows - 1;
    const int FC = g.cols - 1;
    g.in.assign(FR * FC, 0);
    g.in[std::uniform_int_distribution<int>(0, FR * FC - 1)(rng)] = 1;
    const int target = std::uniform_int_distribution<int>(1, FR * FC)(rng);
    int count = 1;
    std::vector<int> rejected(FR * FC, 0);
    while (count < target) {
      std::vector<int> frontier;
      for (int f = 0; f < FR * FC; ++f) {
        if (g.in[f] || rejected[f]) continue;
        const int fr = f / FC;
        const int fc = f % FC;
        if (g.face(fr - 1, fc) || g.face(fr + 1, fc) || g.face(fr, fc - 1) || g.face(fr, fc + 1)) {
          frontier.push_back(f);
        }
      }
      if (frontier.empty()) break;
      const int f = frontier[std::uniform_int_distribution<std::size_t>(0, frontier.size() - 1)(rng)];
      g.in[f] = 1;
      if (boundary_cycle(g, false).empty()) {
        g.in[f] = 0;
        rejected[f] = 1;
      } else {
        ++count;
        std::fill(rejected.begin(), rejected.end(), 0);
      }
    }
    const auto cycle = boundary_cycle(g, true);
    if (cycle.empty()) continue;
    auto grid = tiles_from_cycle(g.rows, g.cols, cycle);
    int curves = 0;
    for (const auto &row : grid) {
      for (Tile t : row) curves += (t != Tile::Empty && t != Tile::StraightNS && t != Tile::StraightEW);
    }
    const double fraction = double(curves) / double(cycle.size());
    if (fraction < spec.min_curve_fraction || fraction > spec.max_curve_fraction) continue;
    return TrackMap::from_tiles(std::move(grid), spec.tile_size);
  }
  throw MapError("map randomization admits no closed loop within " +
                 std::to_string(spec.max_attempts) + " attempts");
}

}  // namespace lanerl
