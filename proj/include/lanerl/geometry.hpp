#pragma once

#include <cmath>
#include <numbers>

namespace lanerl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double k) const { return {x * k, y * k}; }
  constexpr Vec2 &operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2 &) const = default;
};

constexpr Vec2 operator*(double k, Vec2 v) { return v * k; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }
/// Rotate by +90 degrees.
constexpr Vec2 left_normal(Vec2 v) { return {-v.y, v.x}; }

/// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::remainder(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace lanerl
