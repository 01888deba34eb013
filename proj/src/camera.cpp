#include "lanerl/camera.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "lanerl/error.hpp"

namespace lanerl {
namespace {

using Vec3 = std::array<double, 3>;

double dot3(const Vec3 &a, const Vec3 &b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rgb operator*(const Rgb &a, const Rgb &b) { return {a.r * b.r, a.g * b.g, a.b * b.b}; }
Rgb operator*(const Rgb &a, double k) { return {a.r * k, a.g * k, a.b * k}; }

std::uint8_t to_code(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void check_range(const Range &r, const char *name) {
  if (!(r.min <= r.max)) {
    throw ConfigError(std::string("randomization.") + name + ": min must not exceed max");
  }
}

// Ray / oriented-box intersection (slab method). Returns entry distance and the axis of the
// entered face (0 = along heading, 1 = across, 2 = top).
std::optional<std::pair<double, int>> hit_box(const Vec3 &origin, const Vec3 &dir,
                                              const VehicleState &v, double length) {
  const double c = std::cos(v.heading);
  const double s = std::sin(v.heading);
  const double ox = origin[0] - v.position.x;
  const double oy = origin[1] - v.position.y;
  const Vec3 o{c * ox + s * oy, -s * ox + c * oy, origin[2] - Renderer::kBodyHeight / 2};
  const Vec3 d{c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]};
  const Vec3 half{length / 2, Renderer::kBodyWidth / 2, Renderer::kBodyHeight / 2};
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = -1;
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (std::abs(o[i]) > half[i]) return std::nullopt;
      continue;
    }
    double t0 = (-half[i] - o[i]) / d[i];
    double t1 = (half[i] - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      axis = i;
    }
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_far <= 0.0 || t_near <= 0.0) return std::nullopt;
  return std::pair{t_near, axis};
}

}  // namespace

void CameraParams::validate() const {
  if (image_width <= 0 || image_height <= 0) throw ConfigError("camera image size must be positive");
  if (!(horizontal_fov > 0.0 && horizontal_fov < std::numbers::pi)) {
    throw ConfigError("camera.hfov must lie in (0, 180) degrees");
  }
  if (!(mount_height > 0.0)) throw ConfigError("camera.mount_height must be positive");
}

void RandomizationConfig::validate() const {
  check_range(ambient_gain, "ambient_gain");
  check_range(road_tint, "road_tint");
  check_range(lane_mark_tint, "lane_mark_tint");
  check_range(off_road_tint, "off_road_tint");
  check_range(sky_tint, "sky_tint");
  check_range(noise_sigma, "noise_sigma");
  check_range(camera_height, "camera_height");
  check_range(camera_pitch, "camera_pitch");
  check_range(camera_fov, "camera_fov");
  check_range(wheel_radius_scale, "wheel_radius_scale");
  check_range(baseline_scale, "baseline_scale");
  check_range(wheel_rate_scale, "wheel_rate_scale");
}

CameraParams RandomizationState::apply(const CameraParams &cam) const {
  CameraParams out = cam;
  out.mount_height += delta_height;
  out.pitch += delta_pitch;
  out.horizontal_fov += delta_fov;
  return out;
}

VehicleParams RandomizationState::apply(const VehicleParams &params) const {
  VehicleParams out = params;
  out.wheel_radius *= wheel_radius_scale;
  out.baseline *= baseline_scale;
  out.max_wheel_rate *= wheel_rate_scale;
  return out;
}

RandomizationState sample_randomization(std::uint64_t seed, std::uint64_t episode,
                                        const RandomizationConfig &config) {
  config.validate();
  RandomizationState state;
  if (!config.enabled) return state;
  std::mt19937_64 rng(splitmix64(splitmix64(seed) ^ episode));
  auto draw = [&](const Range &r) {
    return std::uniform_real_distribution<double>(r.min, r.max)(rng);
  };
  auto draw_rgb = [&](const Range &r) { return Rgb{draw(r), draw(r), draw(r)}; };
  state.enabled = true;
  state.ambient_gain = draw_rgb(config.ambient_gain);
  state.road_tint = draw_rgb(config.road_tint);
  state.lane_mark_tint = draw_rgb(config.lane_mark_tint);
  state.off_road_tint = draw_rgb(config.off_road_tint);
  state.sky_tint = draw_rgb(config.sky_tint);
  state.noise_sigma = draw(config.noise_sigma);
  state.delta_height = draw(config.camera_height);
  state.delta_pitch = draw(config.camera_pitch);
  state.delta_fov = draw(config.camera_fov);
  state.wheel_radius_scale = draw(config.wheel_radius_scale);
  state.baseline_scale = draw(config.baseline_scale);
  state.wheel_rate_scale = draw(config.wheel_rate_scale);
  state.noise_seed = rng();
  return state;
}

CameraPose::CameraPose(const VehicleState &ego, const CameraParams &cam) {
  const double c = std::cos(ego.heading);
  const double s = std::sin(ego.heading);
  const double cp = std::cos(cam.pitch);
  const double sp = std::sin(cam.pitch);
  origin_ = {ego.position.x + cam.forward_offset * c, ego.position.y + cam.forward_offset * s,
             cam.mount_height};
  forward_ = {c * cp, s * cp, -sp};
  right_ = {s, -c, 0.0};
  up_ = {c * sp, s * sp, cp};  // right x forward
  focal_ = (cam.image_width / 2.0) / std::tan(cam.horizontal_fov / 2.0);
  cx_ = cam.image_width / 2.0;
  cy_ = cam.image_height / 2.0;
}

std::array<double, 3> CameraPose::ray(double px, double py) const {
  const double xn = (px - cx_) / focal_;
  const double yn = (py - cy_) / focal_;
  return {forward_[0] + xn * right_[0] - yn * up_[0], forward_[1] + xn * right_[1] - yn * up_[1],
          forward_[2] + xn * right_[2] - yn * up_[2]};
}

std::optional<std::array<double, 2>> CameraPose::project(std::array<double, 3> world) const {
  const Vec3 v{world[0] - origin_[0], world[1] - origin_[1], world[2] - origin_[2]};
  const double depth = dot3(v, forward_);
  if (depth <= 0.0) return std::nullopt;
  return std::array<double, 2>{cx_ + focal_ * dot3(v, right_) / depth,
                               cy_ - focal_ * dot3(v, up_) / depth};
}

const Image &Renderer::render(const TrackMap &track, std::span<const VehicleState> others,
                              const VehicleState &ego, const CameraParams &cam_nominal,
                              const RandomizationState &rand, std::uint64_t frame_index,
                              const VehicleParams &body) {
  const CameraParams cam = rand.apply(cam_nominal);
  if (frame_.width != cam.image_width || frame_.height != cam.image_height) {
    frame_ = Image(cam.image_width, cam.image_height);
  }
  const CameraPose pose(ego, cam);
  const Vec3 origin = pose.origin();

  const Rgb light = rand.ambient_gain;
  const Rgb road = palette.road * rand.road_tint * light;
  const Rgb white = palette.white_line * rand.lane_mark_tint * light;
  const Rgb yellow = palette.yellow_line * rand.lane_mark_tint * light;
  const Rgb grass = palette.grass * rand.off_road_tint * light;
  const Rgb sky = palette.sky * rand.sky_tint * light;

  const bool noisy = rand.noise_sigma > 0.0;
  std::mt19937_64 noise_rng(splitmix64(rand.noise_seed ^ splitmix64(frame_index)));
  std::normal_distribution<double> noise(0.0, noisy ? rand.noise_sigma : 1.0);

  for (int y = 0; y < cam.image_height; ++y) {
    for (int x = 0; x < cam.image_width; ++x) {
      const Vec3 dir = pose.ray(x + 0.5, y + 0.5);
      double best = std::numeric_limits<double>::infinity();
      Rgb color = sky;
      if (dir[2] < 0.0) {
        best = -origin[2] / dir[2];
        const Vec2 ground{origin[0] + best * dir[0], origin[1] + best * dir[1]};
        switch (track.surface(ground)) {
          case Surface::Grass: color = grass; break;
          case Surface::Road: color = road; break;
          case Surface::WhiteLine: color = white; break;
          case Surface::YellowLine: color = yellow; break;
        }
      }
      for (const auto &v : others) {
        if (auto hit = hit_box(origin, dir, v, body.body_length); hit && hit->first < best) {
          best = hit->first;
          static constexpr double kShade[3] = {0.8, 0.6, 1.0};
          color = palette.vehicle * light * kShade[hit->second];
        }
      }
      std::uint8_t *px = frame_.pixel(x, y);
      if (noisy) {
        px[0] = to_code(color.r + noise(noise_rng));
        px[1] = to_code(color.g + noise(noise_rng));
        px[2] = to_code(color.b + noise(noise_rng));
      } else {
        px[0] = to_code(color.r);
        px[1] = to_code(color.g);
        px[2] = to_code(color.b);
      }
    }
  }
  return frame_;
}

Image Renderer::render_top_down(const TrackMap &track, std::span<const VehicleState> vehicles,
                                int pixels) {
  Image img(pixels, pixels);
  const Palette pal;
  const double extent = std::max(track.rows(), track.cols()) * track.tile_size();
  const double scale = extent / pixels;
  const double top = track.rows() * track.tile_size();
  for (int y = 0; y < pixels; ++y) {
    for (int x = 0; x < pixels; ++x) {
      const Vec2 p{(x + 0.5) * scale, top - (y + 0.5) * scale};
      Rgb c = pal.grass;
      switch (track.surface(p)) {
        case Surface::Grass: break;
        case Surface::Road: c = pal.road; break;
        case Surface::WhiteLine: c = pal.white_line; break;
        case Surface::YellowLine: c = pal.yellow_line; break;
      }
      for (std::size_t i = 0; i < vehicles.size(); ++i) {
        if (distance(p, vehicles[i].position) < 0.09) {
          c = i == 0 ? Rgb{0.1, 0.3, 0.9} : pal.vehicle;
        }
      }
      std::uint8_t *px = img.pixel(x, y);
      px[0] = to_code(c.r);
      px[1] = to_code(c.g);
      px[2] = to_code(c.b);
    }
  }
  return img;
}

ObservationTensor preprocess(std::span<const Image> history) {
  if (history.size() != 3) throw UsageError("preprocess expects exactly 3 frames");
  const int W = history[0].width;
  const int H = history[0].height;
  for (const auto &f : history) {
    if (f.width != W || f.height != H) throw UsageError("preprocess: frame sizes differ");
  }
  const int top = (H + 2) / 3;  // ceil(H / 3)
  const int Hc = H - top;
  if (W <= 0 || Hc <= 0) throw UsageError("preprocess: frame too small");

  constexpr int N = ObservationTensor::kSize;
  struct Tap {
    int i0;
    int i1;
    double w;
  };
  auto taps = [](int src, int dst) {
    std::vector<Tap> out(dst);
    const double scale = double(src) / dst;
    for (int o = 0; o < dst; ++o) {
      const double p = std::clamp((o + 0.5) * scale - 0.5, 0.0, double(src - 1));
      const int i0 = static_cast<int>(std::floor(p));
      out[o] = {i0, std::min(i0 + 1, src - 1), p - i0};
    }
    return out;
  };
  const auto ty = taps(Hc, N);
  const auto tx = taps(W, N);

  ObservationTensor obs;
  for (int f = 0; f < 3; ++f) {
    const Image &img = history[f];
    for (int oy = 0; oy < N; ++oy) {
      const auto &a = ty[oy];
      for (int ox = 0; ox < N; ++ox) {
        const auto &b = tx[ox];
        const std::uint8_t *p00 = img.pixel(b.i0, top + a.i0);
        const std::uint8_t *p01 = img.pixel(b.i1, top + a.i0);
        const std::uint8_t *p10 = img.pixel(b.i0, top + a.i1);
        const std::uint8_t *p11 = img.pixel(b.i1, top + a.i1);
        for (int k = 0; k < 3; ++k) {
          const double v0 = p00[k] + (p01[k] - p00[k]) * b.w;
          const double v1 = p10[k] + (p11[k] - p10[k]) * b.w;
          const double v = v0 + (v1 - v0) * a.w;
          obs.codes[(std::size_t(oy) * N + ox) * ObservationTensor::kChannels + f * 3 + k] =
              static_cast<std::uint8_t>(std::lround(v));
        }
      }
    }
  }
  return obs;
}

void FrameStack::reset(const Image &first) { frames_.fill(first); }

void FrameStack::push(const Image &frame) {
  frames_[0] = std::move(frames_[1]);
  frames_[1] = std::move(frames_[2]);
  frames_[2] = frame;
}

ObservationTensor FrameStack::observation() const { return preprocess(frames_); }

namespace {
void png_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto *out = static_cast<std::vector<std::uint8_t> *>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}
}  // namespace

std::vector<std::uint8_t> encode_png(const Image &image) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw IoError("libpng initialisation failed");
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_to_vector, nullptr);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixel(0, y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const Image &image, const std::string &path) {
  const auto bytes = encode_png(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  f.write(reinterpret_cast<const char *>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw IoError("cannot write '" + path + "'");
}

}  // namespace lanerl
