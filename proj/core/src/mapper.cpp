#include "pvn/mapper.hpp"

namespace pvn {

ProjectionTable build_projection(const Pose& pose, const CameraIntrinsics& intr, const MapFrame& frame,
                                 int feat_w, int feat_h) {
  ProjectionTable table;
  table.map_cells = frame.cells;
  table.cells.resize(static_cast<std::size_t>(frame.cells) * static_cast<std::size_t>(frame.cells));
  table.mask.assign(table.cells.size(), 0);
  const double sx = static_cast<double>(intr.width) / static_cast<double>(feat_w);
  const double sy = static_cast<double>(intr.height) / static_cast<double>(feat_h);
  for (int r = 0; r < frame.cells; ++r) {
    for (int c = 0; c < frame.cells; ++c) {
      const Vec2 ground = frame.map_to_world(c + 0.5, r + 0.5);
      const auto px = ground_to_pixel(ground, pose, intr);
      if (!px) continue;
      const auto [u, v] = *px;
      if (u < 0 || u >= intr.width || v < 0 || v >= intr.height) continue;
      // feature grid cell (i,j) center sits at pixel ((j+0.5)*sx, (i+0.5)*sy)
      const double fx = u / sx - 0.5;
      const double fy = v / sy - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const double ax = fx - x0, ay = fy - y0;
      auto clamp_idx = [feat_w, feat_h](int y, int x) {
        y = std::clamp(y, 0, feat_h - 1);
        x = std::clamp(x, 0, feat_w - 1);
        return static_cast<std::int32_t>(y * feat_w + x);
      };
      auto& cell = table.cells[static_cast<std::size_t>(r * frame.cells + c)];
      cell.idx[0] = clamp_idx(y0, x0);
      cell.idx[1] = clamp_idx(y0, x0 + 1);
      cell.idx[2] = clamp_idx(y0 + 1, x0);
      cell.idx[3] = clamp_idx(y0 + 1, x0 + 1);
      cell.w[0] = static_cast<float>((1 - ax) * (1 - ay));
      cell.w[1] = static_cast<float>(ax * (1 - ay));
      cell.w[2] = static_cast<float>((1 - ax) * ay);
      cell.w[3] = static_cast<float>(ax * ay);
      table.mask[static_cast<std::size_t>(r * frame.cells + c)] = 1;
      ++table.observed;
    }
  }
  return table;
}

}  // namespace pvn
