#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace pvn {

struct Vec2 {
  double x = 0, y = 0;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::sqrt(x * x + y * y); }
  Vec2 normalized() const {
    const double n = norm();
    return n > 0 ? Vec2{x / n, y / n} : Vec2{1, 0};
  }
  Vec2 rotated(double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
  /// Unit perpendicular pointing to the left of this direction.
  Vec2 perp_left() const { return {-y, x}; }
};

inline double normalize_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  if (a > M_PI) a -= 2.0 * M_PI;
  return a;
}

/// Agent position, heading (normalized to (-pi, pi]) and camera elevation.
struct Pose {
  Vec2 p;
  double heading = 0;
  double elevation = 5.0;
};

struct LandmarkSpec {
  int class_id = 0;
  Vec2 pos;
  double radius = 1.5;
  std::array<float, 3> color{1.f, 1.f, 1.f};
};

/// Fixed injective class -> color palette shared by the renderer and the
/// landmark generator.
std::array<float, 3> landmark_color(int class_id);

struct CameraIntrinsics {
  int width = 64;
  int height = 36;
  double hfov = M_PI / 2.0;          // horizontal field of view
  double pitch = M_PI / 6.0;         // below horizontal
};

struct Action {
  enum class Kind { Velocity, Stop };
  Kind kind = Kind::Stop;
  double v = 0, omega = 0;
  static Action velocity(double v, double omega) { return {Kind::Velocity, v, omega}; }
  static Action stop() { return {Kind::Stop, 0, 0}; }
};

struct WorldConfig {
  double field_edge = 50.0;
  double v_max = 2.0;
  double omega_max = 2.0 * M_PI;  // run profiles tighten this for policies
  double lag_tau = 0.0;           // optional first-order setpoint lag; 0 = instantaneous
};

/// Value-type simulator state; step() returns a new state.
struct WorldState {
  std::vector<LandmarkSpec> landmarks;
  Pose pose;
  double v = 0, omega = 0;  // current configuration rho
  int elapsed = 0;
  bool done = false;
  WorldConfig config;
};

WorldState reset(std::vector<LandmarkSpec> landmarks, Pose start, WorldConfig config = {});

/// Velocity actions set the configuration (clamped to the world limits) and
/// integrate unicycle kinematics over dt with the exact-arc update; Stop
/// freezes the state. Stepping a finished episode is a usage error.
WorldState step(const WorldState& state, const Action& action, double dt);

inline Pose localize(const WorldState& state) { return state.pose; }

struct Image {
  int width = 0, height = 0;
  std::vector<float> rgb;  // row-major [y][x][3], values in [0,1]
  float at(int y, int x, int c) const { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
};

/// Inverse-mapping renderer: each pixel ray is intersected with the ground
/// plane; landmark discs, grass and sky are flat colors.
Image render_fpv(const WorldState& state, const CameraIntrinsics& intr);

/// Ray through continuous pixel coordinates (u, v) intersected with the
/// ground plane at elevation zero; nullopt means the ray points at or above
/// the horizon ("sky"). (u, v) = (width/2, height/2) is the image center.
std::optional<Vec2> pixel_to_ground(double u, double v, const Pose& pose, const CameraIntrinsics& intr);

/// Forward projection of a ground point into continuous pixel coordinates;
/// nullopt when the point is behind the camera plane.
std::optional<std::pair<double, double>> ground_to_pixel(Vec2 ground, const Pose& pose,
                                                         const CameraIntrinsics& intr);

/// Binary PPM (P6) export.
void write_ppm(const std::string& path, const Image& img);

/// One landmark per line: "class x y radius".
void save_environment(const std::string& path, const std::vector<LandmarkSpec>& landmarks);
std::vector<LandmarkSpec> load_environment(const std::string& path);

}  // namespace pvn
