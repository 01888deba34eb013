#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "lanerl/track.hpp"

namespace lanerl::test {

inline std::string map_path(const std::string &name) {
  return (std::filesystem::path(LANERL_SOURCE_DIR) / "maps" / name).string();
}

inline std::shared_ptr<const TrackMap> shared_map(const std::string &name) {
  return std::make_shared<TrackMap>(load_map_file(map_path(name)));
}

/// Scratch directory under the system temp dir, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("lanerl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Arc length of the middle of the first straight piece.
inline double mid_straight_station(const TrackMap &track) {
  for (const auto &p : track.pieces()) {
    if (p.curvature == 0.0) return p.s_start + p.length / 2;
  }
  return 0.0;
}

}  // namespace lanerl::test
