#include "pvn/controller.hpp"

namespace pvn {

CropTable build_crop(const Pose& pose, const MapFrame& frame, int k) {
  CropTable table;
  table.k = k;
  table.cells.resize(static_cast<std::size_t>(k) * static_cast<std::size_t>(k));
  const double center = (static_cast<double>(k) - 1.0) / 2.0;
  const int n = frame.cells;
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      // crop cell center in the agent frame (+x ahead), then into the world
      const double dx = (static_cast<double>(c) - center) * frame.meters_per_cell;
      const double dy = (static_cast<double>(r) - center) * frame.meters_per_cell;
      const Vec2 world = pose.p + Vec2{dx, dy}.rotated(pose.heading);
      const Vec2 mc = frame.world_to_map(world);
      const double sx = mc.x - 0.5, sy = mc.y - 0.5;  // cell-index sample coords
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double ax = sx - x0, ay = sy - y0;
      auto idx = [n](int y, int x) -> std::int32_t {
        if (y < 0 || y >= n || x < 0 || x >= n) return -1;
        return static_cast<std::int32_t>(y * n + x);
      };
      auto& cell = table.cells[static_cast<std::size_t>(r * k + c)];
      cell.idx[0] = idx(y0, x0);
      cell.idx[1] = idx(y0, x0 + 1);
      cell.idx[2] = idx(y0 + 1, x0);
      cell.idx[3] = idx(y0 + 1, x0 + 1);
      cell.w[0] = static_cast<float>((1 - ax) * (1 - ay));
      cell.w[1] = static_cast<float>(ax * (1 - ay));
      cell.w[2] = static_cast<float>((1 - ax) * ay);
      cell.w[3] = static_cast<float>(ax * ay);
    }
  }
  return table;
}

std::vector<float> crop_distributions(const std::vector<float>& dp, const std::vector<float>& dg,
                                      int cells, const CropTable& table) {
  (void)cells;
  const std::size_t kk = static_cast<std::size_t>(table.k) * static_cast<std::size_t>(table.k);
  std::vector<float> out(2 * kk, 0.f);
  for (int ch = 0; ch < 2; ++ch) {
    const std::vector<float>& src = ch == 0 ? dp : dg;
    for (std::size_t i = 0; i < kk; ++i) {
      const auto& s = table.cells[i];
      float v = 0;
      for (int j = 0; j < 4; ++j)
        if (s.idx[j] >= 0) v += s.w[j] * src[static_cast<std::size_t>(s.idx[j])];
      out[static_cast<std::size_t>(ch) * kk + i] = v;
    }
  }
  return out;
}

Action stop_decision(const ControlOutput& out, double kappa) {
  if (kappa <= 0 || kappa >= 1) throw std::invalid_argument("stop_decision: kappa must be in (0,1)");
  if (out.p_stop > kappa) return Action::stop();
  return Action::velocity(out.v, out.omega);
}

}  // namespace pvn
