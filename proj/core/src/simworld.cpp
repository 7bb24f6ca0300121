#include "pvn/simworld.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pvn {

namespace {

constexpr float kGrass[3] = {0.16f, 0.42f, 0.14f};
constexpr float kSky[3] = {0.55f, 0.72f, 0.92f};

struct CameraBasis {
  // world frame: x/y ground plane, z up
  double fx, fy, fz;  // forward
  double rx, ry, rz;  // right
  double ux, uy, uz;  // up
  double px, py, pz;  // position
  double tan_half_x, tan_half_y;
};

CameraBasis camera_basis(const Pose& pose, const CameraIntrinsics& intr) {
  CameraBasis b;
  const double cg = std::cos(pose.heading), sg = std::sin(pose.heading);
  const double cp = std::cos(intr.pitch), sp = std::sin(intr.pitch);
  b.fx = cg * cp;
  b.fy = sg * cp;
  b.fz = -sp;
  b.rx = sg;
  b.ry = -cg;
  b.rz = 0;
  b.ux = cg * sp;
  b.uy = sg * sp;
  b.uz = cp;
  b.px = pose.p.x;
  b.py = pose.p.y;
  b.pz = pose.elevation;
  b.tan_half_x = std::tan(intr.hfov / 2.0);
  b.tan_half_y = b.tan_half_x * static_cast<double>(intr.height) / static_cast<double>(intr.width);
  return b;
}

}  // namespace

std::array<float, 3> landmark_color(int class_id) {
  // hue wheel with alternating saturation/value so neighbouring ids stay
  // clearly distinguishable
  const double hue = std::fmod(static_cast<double>(class_id) * 360.0 / 16.0 + 13.0, 360.0);
  const double sat = (class_id % 2 == 0) ? 0.95 : 0.65;
  const double val = (class_id % 3 == 0) ? 0.95 : 0.7;
  const double c = val * sat;
  const double hp = hue / 60.0;
  const double xcomp = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, bl = 0;
  if (hp < 1) {
    r = c;
    g = xcomp;
  } else if (hp < 2) {
    r = xcomp;
    g = c;
  } else if (hp < 3) {
    g = c;
    bl = xcomp;
  } else if (hp < 4) {
    g = xcomp;
    bl = c;
  } else if (hp < 5) {
    r = xcomp;
    bl = c;
  } else {
    r = c;
    bl = xcomp;
  }
  const double m = val - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(bl + m)};
}

WorldState reset(std::vector<LandmarkSpec> landmarks, Pose start, WorldConfig config) {
  const double half = config.field_edge / 2.0;
  for (const auto& lm : landmarks) {
    if (std::abs(lm.pos.x) > half || std::abs(lm.pos.y) > half)
      throw std::invalid_argument("reset: landmark outside the field");
    if (lm.radius <= 0) throw std::invalid_argument("reset: landmark radius must be positive");
  }
  WorldState s;
  s.landmarks = std::move(landmarks);
  s.pose = start;
  s.pose.heading = normalize_angle(start.heading);
  if (s.pose.elevation <= 0) throw std::invalid_argument("reset: camera elevation must be positive");
  s.config = config;
  return s;
}

WorldState step(const WorldState& state, const Action& action, double dt) {
  if (state.done) throw std::logic_error("step: episode already finished");
  WorldState next = state;
  next.elapsed = state.elapsed + 1;
  if (action.kind == Action::Kind::Stop) {
    next.done = true;
    next.v = 0;
    next.omega = 0;
    return next;
  }
  const double v_set = std::clamp(action.v, 0.0, state.config.v_max);
  const double w_set = std::clamp(action.omega, -state.config.omega_max, state.config.omega_max);
  if (state.config.lag_tau > 0) {
    const double a = 1.0 - std::exp(-dt / state.config.lag_tau);
    next.v = state.v + (v_set - state.v) * a;
    next.omega = state.omega + (w_set - state.omega) * a;
  } else {
    next.v = v_set;
    next.omega = w_set;
  }
  const double v = next.v, w = next.omega, g = state.pose.heading;
  if (std::abs(w) < 1e-6) {
    next.pose.p.x += v * dt * std::cos(g);
    next.pose.p.y += v * dt * std::sin(g);
    next.pose.heading = normalize_angle(g + w * dt);
  } else {
    // exact arc: integrate the circular path swept at constant (v, w)
    next.pose.p.x += (v / w) * (std::sin(g + w * dt) - std::sin(g));
    next.pose.p.y += (v / w) * (-std::cos(g + w * dt) + std::cos(g));
    next.pose.heading = normalize_angle(g + w * dt);
  }
  return next;
}

std::optional<Vec2> pixel_to_ground(double u, double v, const Pose& pose, const CameraIntrinsics& intr) {
  const CameraBasis b = camera_basis(pose, intr);
  const double xn = 2.0 * u / static_cast<double>(intr.width) - 1.0;
  const double yn = 1.0 - 2.0 * v / static_cast<double>(intr.height);
  const double dx = b.fx + xn * b.tan_half_x * b.rx + yn * b.tan_half_y * b.ux;
  const double dy = b.fy + xn * b.tan_half_x * b.ry + yn * b.tan_half_y * b.uy;
  const double dz = b.fz + xn * b.tan_half_x * b.rz + yn * b.tan_half_y * b.uz;
  if (dz >= -1e-12) return std::nullopt;  // at or above the horizon
  const double t = -b.pz / dz;
  return Vec2{b.px + t * dx, b.py + t * dy};
}

std::optional<std::pair<double, double>> ground_to_pixel(Vec2 ground, const Pose& pose,
                                                         const CameraIntrinsics& intr) {
  const CameraBasis b = camera_basis(pose, intr);
  const double dx = ground.x - b.px, dy = ground.y - b.py, dz = -b.pz;
  const double zc = dx * b.fx + dy * b.fy + dz * b.fz;
  if (zc <= 1e-12) return std::nullopt;
  const double xc = dx * b.rx + dy * b.ry + dz * b.rz;
  const double yc = dx * b.ux + dy * b.uy + dz * b.uz;
  const double xn = (xc / zc) / b.tan_half_x;
  const double yn = (yc / zc) / b.tan_half_y;
  const double u = (xn + 1.0) * static_cast<double>(intr.width) / 2.0;
  const double v = (1.0 - yn) * static_cast<double>(intr.height) / 2.0;
  return std::make_pair(u, v);
}

Image render_fpv(const WorldState& state, const CameraIntrinsics& intr) {
  if (state.pose.elevation <= 0) throw std::invalid_argument("render_fpv: elevation must be positive");
  Image img;
  img.width = intr.width;
  img.height = intr.height;
  img.rgb.resize(static_cast<std::size_t>(intr.width * intr.height * 3));
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      // ray through the pixel center
      const auto ground = pixel_to_ground(x + 0.5, y + 0.5, state.pose, intr);
      float* px = &img.rgb[static_cast<std::size_t>((y * intr.width + x) * 3)];
      if (!ground) {
        px[0] = kSky[0];
        px[1] = kSky[1];
        px[2] = kSky[2];
        continue;
      }
      px[0] = kGrass[0];
      px[1] = kGrass[1];
      px[2] = kGrass[2];
      for (const auto& lm : state.landmarks) {
        const double ddx = ground->x - lm.pos.x, ddy = ground->y - lm.pos.y;
        if (ddx * ddx + ddy * ddy <= lm.radius * lm.radius) {
          px[0] = lm.color[0];
          px[1] = lm.color[1];
          px[2] = lm.color[2];
          break;
        }
      }
    }
  }
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_ppm: cannot open '" + path + "'");
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::string bytes;
  bytes.reserve(img.rgb.size());
  for (float v : img.rgb) {
    const int b = static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    bytes.push_back(static_cast<char>(b));
  }
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void save_environment(const std::string& path, const std::vector<LandmarkSpec>& landmarks) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("save_environment: cannot open '" + path + "'");
  f.precision(17);
  for (const auto& lm : landmarks)
    f << lm.class_id << " " << lm.pos.x << " " << lm.pos.y << " " << lm.radius << "\n";
}

std::vector<LandmarkSpec> load_environment(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_environment: cannot open '" + path + "'");
  std::vector<LandmarkSpec> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    LandmarkSpec lm;
    if (!(ss >> lm.class_id >> lm.pos.x >> lm.pos.y >> lm.radius))
      throw std::runtime_error("load_environment: malformed line '" + line + "'");
    lm.color = landmark_color(lm.class_id);
    out.push_back(lm);
  }
  return out;
}

}  // namespace pvn
