#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lanerl/track.hpp"
#include "lanerl/vehicle.hpp"

namespace lanerl {

/// Interleaved RGB8 image, row-major from the top-left pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(std::size_t(w) * h * 3, 0) {}
  std::uint8_t *pixel(int x, int y) { return rgb.data() + (std::size_t(y) * width + x) * 3; }
  const std::uint8_t *pixel(int x, int y) const {
    return rgb.data() + (std::size_t(y) * width + x) * 3;
  }
  bool operator==(const Image &) const = default;
};

void write_png(const Image &image, const std::string &path);
std::vector<std::uint8_t> encode_png(const Image &image);

struct CameraParams {
  int image_width = 160;
  int image_height = 120;
  double horizontal_fov = deg2rad(100.0);
  double mount_height = 0.10;
  double pitch = deg2rad(15.0);  // downward positive
  double forward_offset = 0.066;

  void validate() const;
};

struct Rgb {
  double r = 1.0;
  double g = 1.0;
  double b = 1.0;
  bool operator==(const Rgb &) const = default;
};

struct Range {
  double min = 0.0;
  double max = 0.0;
};

/// Bounds for domain randomization. Colour multipliers are drawn per channel.
struct RandomizationConfig {
  bool enabled = false;
  std::uint64_t seed = 0;
  Range ambient_gain{0.7, 1.3};
  Range road_tint{0.8, 1.2};
  Range lane_mark_tint{0.85, 1.15};
  Range off_road_tint{0.7, 1.3};
  Range sky_tint{0.7, 1.3};
  Range noise_sigma{0.0, 0.03};
  Range camera_height{-0.01, 0.01};
  Range camera_pitch{deg2rad(-3.0), deg2rad(3.0)};
  Range camera_fov{deg2rad(-5.0), deg2rad(5.0)};
  Range wheel_radius_scale{0.95, 1.05};
  Range baseline_scale{0.95, 1.05};
  Range wheel_rate_scale{0.9, 1.1};

  void validate() const;
};

struct RandomizationState {
  bool enabled = false;
  Rgb ambient_gain;
  Rgb road_tint;
  Rgb lane_mark_tint;
  Rgb off_road_tint;
  Rgb sky_tint;
  double noise_sigma = 0.0;
  double delta_height = 0.0;
  double delta_pitch = 0.0;
  double delta_fov = 0.0;
  double wheel_radius_scale = 1.0;
  double baseline_scale = 1.0;
  double wheel_rate_scale = 1.0;
  std::uint64_t noise_seed = 0;

  bool operator==(const RandomizationState &) const = default;

  CameraParams apply(const CameraParams &cam) const;
  VehicleParams apply(const VehicleParams &params) const;
};

/// Deterministic in (seed, episode); the identity state when randomization is disabled.
RandomizationState sample_randomization(std::uint64_t seed, std::uint64_t episode,
                                        const RandomizationConfig &config);

/// Pinhole camera rigidly mounted on the ego vehicle.
class CameraPose {
 public:
  CameraPose(const VehicleState &ego, const CameraParams &cam);

  /// Ray direction (world frame, not normalized) through the centre of pixel (px, py).
  std::array<double, 3> ray(double px, double py) const;
  /// Projection of a world point into continuous pixel coordinates; nullopt behind the camera.
  std::optional<std::array<double, 2>> project(std::array<double, 3> world) const;
  std::array<double, 3> origin() const { return origin_; }

 private:
  std::array<double, 3> origin_;
  std::array<double, 3> forward_;
  std::array<double, 3> right_;
  std::array<double, 3> up_;
  double focal_;
  double cx_;
  double cy_;
};

/// Base surface colours before randomization, in [0, 1].
struct Palette {
  Rgb road{0.33, 0.33, 0.35};
  Rgb white_line{0.95, 0.95, 0.95};
  Rgb yellow_line{0.95, 0.80, 0.10};
  Rgb grass{0.22, 0.52, 0.18};
  Rgb sky{0.62, 0.76, 0.95};
  Rgb vehicle{0.85, 0.25, 0.15};
};

/// Software ground-plane rasterizer. Owns its framebuffer; one instance per environment.
class Renderer {
 public:
  static constexpr double kBodyWidth = 0.13;
  static constexpr double kBodyHeight = 0.10;

  /// Renders the ego camera view. `others` are drawn as flat-shaded boxes. `frame_index` keys
  /// the pixel-noise stream so the output is a pure function of the arguments.
  const Image &render(const TrackMap &track, std::span<const VehicleState> others,
                      const VehicleState &ego, const CameraParams &cam,
                      const RandomizationState &rand, std::uint64_t frame_index,
                      const VehicleParams &body = {});

  /// North-up orthographic overview of the map and vehicles (teleop view).
  static Image render_top_down(const TrackMap &track, std::span<const VehicleState> vehicles,
                               int pixels);

  Palette palette;

 private:
  Image frame_;
};

/// 84x84x9 observation: three RGB frames (oldest first) stacked along depth, stored as 8-bit
/// codes; value(i) = code / 255.
struct ObservationTensor {
  static constexpr int kSize = 84;
  static constexpr int kChannels = 9;
  static constexpr int kLength = kSize * kSize * kChannels;

  std::vector<std::uint8_t> codes = std::vector<std::uint8_t>(kLength, 0);

  float value(int y, int x, int c) const {
    return codes[(std::size_t(y) * kSize + x) * kChannels + c] * (1.0f / 255.0f);
  }
  bool operator==(const ObservationTensor &) const = default;
};

/// Crops the top third, bilinearly resizes to 84x84 and stacks (oldest first).
ObservationTensor preprocess(std::span<const Image> history);

/// Keeps the last three raw frames; the first frame of an episode is replicated.
class FrameStack {
 public:
  void reset(const Image &first);
  void push(const Image &frame);
  ObservationTensor observation() const;

 private:
  std::array<Image, 3> frames_;
};

}  // namespace lanerl
