#pragma once

#include <cstdint>
#include <optional>

#include "pvn/ops.hpp"
#include "pvn/simworld.hpp"

namespace pvn {

/// World <-> map affine frame, fixed at episode start: origin = start
/// position, map +x axis = start heading. Continuous map coordinates are in
/// cell units with cell (row r, col c) covering [c, c+1) x [r, r+1).
struct MapFrame {
  Vec2 origin;
  double heading = 0;
  double meters_per_cell = 3.125;
  int cells = 32;

  /// -> continuous (col, row)
  Vec2 world_to_map(Vec2 world) const {
    const Vec2 rel = (world - origin).rotated(-heading);
    const double half = static_cast<double>(cells) / 2.0;
    return {rel.x / meters_per_cell + half, rel.y / meters_per_cell + half};
  }

  Vec2 map_to_world(double col, double row) const {
    const double half = static_cast<double>(cells) / 2.0;
    const Vec2 rel{(col - half) * meters_per_cell, (row - half) * meters_per_cell};
    return origin + rel.rotated(heading);
  }

  /// Rounded cell index; nullopt when out of the map.
  std::optional<std::pair<int, int>> world_to_cell(Vec2 world) const {
    const Vec2 mc = world_to_map(world);
    const int col = static_cast<int>(std::floor(mc.x));
    const int row = static_cast<int>(std::floor(mc.y));
    if (col < 0 || col >= cells || row < 0 || row >= cells) return std::nullopt;
    return std::make_pair(row, col);
  }
};

/// Residual feature extractor: stride-2 stem (3 convs) plus `blocks` residual
/// blocks, 3x3 kernels throughout, leaky-ReLU nonlinearity, output C channels
/// at 1/4 input resolution.
template <class T>
struct ResNetFeat {
  struct Conv {
    TensorPtr<T> w, b;
    int stride = 1;
  };
  std::vector<Conv> stem;                    // 3 convs: s2, s2, s1
  std::vector<std::array<Conv, 2>> blocks;   // residual pairs
  T slope = T(0.01);

  static ResNetFeat make(int in_channels, int mid_channels, int out_channels, int num_blocks,
                         Rng& rng) {
    auto conv = [&rng](int cin, int cout, int stride) {
      const T bound = static_cast<T>(std::sqrt(1.0 / (cin * 9)));
      Conv c;
      c.w = uniform_init<T>({cout, cin, 3, 3}, bound, rng);
      c.b = zeros<T>({cout}, true);
      c.stride = stride;
      return c;
    };
    ResNetFeat net;
    net.stem.push_back(conv(in_channels, mid_channels, 2));
    net.stem.push_back(conv(mid_channels, out_channels, 2));
    net.stem.push_back(conv(out_channels, out_channels, 1));
    for (int i = 0; i < num_blocks; ++i)
      net.blocks.push_back({conv(out_channels, out_channels, 1), conv(out_channels, out_channels, 1)});
    return net;
  }

  TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& image) const {
    auto apply = [&](const Conv& c, const TensorPtr<T>& x) {
      return bias_channels(tape, conv2d(tape, x, c.w, c.stride, 1), c.b);
    };
    auto x = image;
    for (const auto& c : stem) x = leaky_relu(tape, apply(c, x), slope);
    for (const auto& blk : blocks) {
      auto y = leaky_relu(tape, apply(blk[0], x), slope);
      y = apply(blk[1], y);
      x = leaky_relu(tape, add(tape, x, y), slope);
    }
    return x;
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) const {
    int i = 0;
    for (const auto& c : stem) {
      out.push_back({prefix + ".stem" + std::to_string(i) + ".w", c.w});
      out.push_back({prefix + ".stem" + std::to_string(i) + ".b", c.b});
      ++i;
    }
    i = 0;
    for (const auto& blk : blocks) {
      for (int j = 0; j < 2; ++j) {
        out.push_back({prefix + ".block" + std::to_string(i) + ".conv" + std::to_string(j) + ".w",
                       blk[static_cast<std::size_t>(j)].w});
        out.push_back({prefix + ".block" + std::to_string(i) + ".conv" + std::to_string(j) + ".b",
                       blk[static_cast<std::size_t>(j)].b});
      }
      ++i;
    }
  }
};

/// Inverse-mapping projection: for every map cell whose center falls in the
/// camera frustum, the bilinear sample location in the feature map that views
/// that ground point. Weights depend only on geometry, so one table serves
/// all channels.
struct ProjectionTable {
  struct CellSample {
    std::int32_t idx[4] = {-1, -1, -1, -1};  // feature-map flat indices
    float w[4] = {0, 0, 0, 0};
  };
  std::vector<CellSample> cells;      // map_cells^2, row-major
  std::vector<std::uint8_t> mask;     // observability per map cell
  int map_cells = 0;
  int observed = 0;
};

ProjectionTable build_projection(const Pose& pose, const CameraIntrinsics& intr, const MapFrame& frame,
                                 int feat_w, int feat_h);

/// Gather the feature map into world cells through the table -> [C,N,N];
/// unobserved cells are exactly zero.
template <class T>
TensorPtr<T> apply_projection(Tape<T>* tape, const TensorPtr<T>& fmap, const ProjectionTable& table) {
  const std::int64_t c = fmap->dim(0);
  const std::int64_t hw_feat = fmap->dim(1) * fmap->dim(2);
  const std::int64_t n = table.map_cells;
  auto out = zeros<T>({c, n, n});
  const std::int64_t hw_map = n * n;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const T* src = &fmap->data[static_cast<std::size_t>(ci * hw_feat)];
    T* dst = &out->data[static_cast<std::size_t>(ci * hw_map)];
    for (std::int64_t i = 0; i < hw_map; ++i) {
      const auto& s = table.cells[static_cast<std::size_t>(i)];
      if (s.idx[0] < 0) continue;
      T v(0);
      for (int k = 0; k < 4; ++k) v += static_cast<T>(s.w[k]) * src[s.idx[k]];
      dst[i] = v;
    }
  }
  if (!tape) return out;
  // the closure owns a copy of the sample table; the caller's table may die
  // before backward runs
  return tape->record("project_features", {fmap}, out,
                      [fmap, out, cells = table.cells, c, hw_feat, hw_map] {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      T* src_g = &fmap->grad[static_cast<std::size_t>(ci * hw_feat)];
      const T* dst_g = &out->grad[static_cast<std::size_t>(ci * hw_map)];
      for (std::int64_t i = 0; i < hw_map; ++i) {
        const auto& s = cells[static_cast<std::size_t>(i)];
        if (s.idx[0] < 0) continue;
        const T g = dst_g[i];
        if (g == T(0)) continue;
        for (int k = 0; k < 4; ++k) src_g[s.idx[k]] += static_cast<T>(s.w[k]) * g;
      }
    }
  });
}

/// Persistent per-episode world map: per-cell running mean of projected
/// features plus observation counts. Cells never observed hold exact zeros.
template <class T>
struct SemanticMap {
  MapFrame frame;
  int channels = 32;
  std::vector<T> features;           // C x N x N
  std::vector<std::int32_t> counts;  // N x N

  static SemanticMap make(const MapFrame& frame, int channels) {
    SemanticMap m;
    m.frame = frame;
    m.channels = channels;
    m.features.assign(static_cast<std::size_t>(channels) * static_cast<std::size_t>(frame.cells) *
                          static_cast<std::size_t>(frame.cells),
                      T(0));
    m.counts.assign(static_cast<std::size_t>(frame.cells) * static_cast<std::size_t>(frame.cells), 0);
    return m;
  }

  TensorPtr<T> as_tensor() const {
    return make_tensor<T>({channels, frame.cells, frame.cells}, features);
  }
};

/// Running-mean integration of one projected frame (numeric path).
template <class T>
void integrate(SemanticMap<T>& map, const Tensor<T>& world_feats, const std::vector<std::uint8_t>& mask) {
  const std::int64_t n = map.frame.cells;
  const std::int64_t hw = n * n;
  if (world_feats.numel() != map.channels * hw) throw std::invalid_argument("integrate: shape mismatch");
  for (std::int64_t i = 0; i < hw; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const T cnt = static_cast<T>(map.counts[static_cast<std::size_t>(i)]);
    const T inv = T(1) / (cnt + T(1));
    for (std::int64_t c = 0; c < map.channels; ++c) {
      T& acc = map.features[static_cast<std::size_t>(c * hw + i)];
      acc = (acc * cnt + world_feats.data[static_cast<std::size_t>(c * hw + i)]) * inv;
    }
    map.counts[static_cast<std::size_t>(i)] += 1;
  }
}

/// Graph variant of the running mean: output equals the integrated map and
/// the gradient flows to the newest frame only (previous map and counts are
/// treated as constants).
template <class T>
TensorPtr<T> integrate_live(Tape<T>* tape, const SemanticMap<T>& map, const TensorPtr<T>& world_feats,
                            const std::vector<std::uint8_t>& mask) {
  const std::int64_t n = map.frame.cells;
  const std::int64_t hw = n * n;
  const std::int64_t ch = map.channels;
  if (world_feats->numel() != ch * hw) throw std::invalid_argument("integrate_live: shape mismatch");
  auto out = zeros<T>({ch, n, n});
  std::vector<T> gains(static_cast<std::size_t>(hw), T(0));  // d out / d frame per cell
  for (std::int64_t i = 0; i < hw; ++i) {
    const T cnt = static_cast<T>(map.counts[static_cast<std::size_t>(i)]);
    if (mask[static_cast<std::size_t>(i)]) {
      const T inv = T(1) / (cnt + T(1));
      gains[static_cast<std::size_t>(i)] = inv;
      for (std::int64_t c = 0; c < ch; ++c)
        out->data[static_cast<std::size_t>(c * hw + i)] =
            (map.features[static_cast<std::size_t>(c * hw + i)] * cnt +
             world_feats->data[static_cast<std::size_t>(c * hw + i)]) *
            inv;
    } else {
      for (std::int64_t c = 0; c < ch; ++c)
        out->data[static_cast<std::size_t>(c * hw + i)] = map.features[static_cast<std::size_t>(c * hw + i)];
    }
  }
  if (!tape) return out;
  return tape->record("integrate_live", {world_feats}, out,
                      [world_feats, out, gains = std::move(gains), ch, hw] {
    for (std::int64_t i = 0; i < hw; ++i) {
      const T gain = gains[static_cast<std::size_t>(i)];
      if (gain == T(0)) continue;
      for (std::int64_t c = 0; c < ch; ++c)
        world_feats->grad[static_cast<std::size_t>(c * hw + i)] +=
            gain * out->grad[static_cast<std::size_t>(c * hw + i)];
    }
  });
}

/// Convert an RGB image (H x W x 3 floats) to a [3,H,W] tensor.
template <class T>
TensorPtr<T> image_to_tensor(const Image& img) {
  auto out = zeros<T>({3, img.height, img.width});
  const std::int64_t hw = static_cast<std::int64_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        out->data[static_cast<std::size_t>(c * hw + y * img.width + x)] =
            static_cast<T>(img.at(y, x, c));
  return out;
}

}  // namespace pvn
