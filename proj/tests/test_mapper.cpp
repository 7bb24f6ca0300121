#include <cmath>
#include <set>

#include "doctest.h"
#include "pvn/mapper.hpp"
#include "pvn/rng.hpp"

using namespace pvn;

namespace {

MapFrame desk_frame(Vec2 origin = {0, 0}, double heading = 0) {
  MapFrame f;
  f.origin = origin;
  f.heading = heading;
  f.meters_per_cell = 3.125;
  f.cells = 32;
  return f;
}

CameraIntrinsics desk_intr() {
  CameraIntrinsics intr;
  intr.width = 64;
  intr.height = 36;
  intr.pitch = M_PI / 6;
  return intr;
}

}  // namespace

TEST_CASE("world_to_map: center, paper-profile scale, round trip") {
  SUBCASE("start position maps to the map center cell") {
    const MapFrame f = desk_frame({3, -7}, 0.9);
    const auto cell = f.world_to_cell({3, -7});
    REQUIRE(cell.has_value());
    CHECK(cell->first == f.cells / 2);
    CHECK(cell->second == f.cells / 2);
  }
  SUBCASE("paper profile: 25 m along the start heading is 16 cells from center") {
    MapFrame f;
    f.cells = 64;
    f.meters_per_cell = 50.0 / 32.0;  // 32 map px per 50 m environment edge
    f.origin = {10, 5};
    f.heading = 0.7;
    const Vec2 ahead = f.origin + Vec2{25, 0}.rotated(0.7);
    const Vec2 mc = f.world_to_map(ahead);
    CHECK(mc.x == doctest::Approx(32.0 + 16.0));
    CHECK(mc.y == doctest::Approx(32.0));
  }
  SUBCASE("cell-center -> world -> same cell") {
    const MapFrame f = desk_frame({1, 2}, -0.4);
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
      const int row = static_cast<int>(rng.uniform_int(0, f.cells - 1));
      const int col = static_cast<int>(rng.uniform_int(0, f.cells - 1));
      const Vec2 world = f.map_to_world(col + 0.5, row + 0.5);
      const auto cell = f.world_to_cell(world);
      REQUIRE(cell.has_value());
      CHECK(cell->first == row);
      CHECK(cell->second == col);
    }
  }
  SUBCASE("out-of-map points are flagged") {
    const MapFrame f = desk_frame();
    CHECK_FALSE(f.world_to_cell({500, 0}).has_value());
  }
}

TEST_CASE("projection: impulse placement agrees with pixel_to_ground") {
  const MapFrame frame = desk_frame();
  const CameraIntrinsics intr = desk_intr();
  Pose pose{{0, 0}, 0.3, 5.0};
  const int fw = 16, fh = 9;
  const auto table = build_projection(pose, intr, frame, fw, fh);
  REQUIRE(table.observed > 50);

  // exact composition: each observed map cell's center, pushed through
  // ground_to_pixel and back through pixel_to_ground, returns to the same
  // cell center (well within half a cell)
  for (int r = 0; r < frame.cells; ++r)
    for (int c = 0; c < frame.cells; ++c) {
      if (!table.mask[static_cast<std::size_t>(r * frame.cells + c)]) continue;
      const Vec2 center = frame.map_to_world(c + 0.5, r + 0.5);
      const auto px = ground_to_pixel(center, pose, intr);
      REQUIRE(px.has_value());
      const auto back = pixel_to_ground(px->first, px->second, pose, intr);
      REQUIRE(back.has_value());
      const Vec2 diff = frame.world_to_map(*back) - frame.world_to_map(center);
      CHECK(std::abs(diff.x) < 0.5);
      CHECK(std::abs(diff.y) < 0.5);
    }

  // near-field impulse: a spike at the feature cell viewing ground point g
  // lands at (or bilinearly adjacent to) the map cell containing g
  Rng rng(9);
  int tested = 0;
  for (int trial = 0; trial < 60 && tested < 10; ++trial) {
    const int fy = static_cast<int>(rng.uniform_int(5, fh - 1));  // bottom rows: near ground
    const int fx = static_cast<int>(rng.uniform_int(1, fw - 2));
    const double u = (fx + 0.5) * intr.width / fw;
    const double v = (fy + 0.5) * intr.height / fh;
    const auto ground = pixel_to_ground(u, v, pose, intr);
    if (!ground) continue;
    const auto cell = frame.world_to_cell(*ground);
    if (!cell) continue;
    auto fmap = zeros<float>({1, fh, fw});
    fmap->data[static_cast<std::size_t>(fy * fw + fx)] = 1.f;
    auto world = apply_projection<float>(nullptr, fmap, table);
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < frame.cells * frame.cells; ++i)
      if (world->data[static_cast<std::size_t>(i)] > world->data[static_cast<std::size_t>(best)]) best = i;
    if (world->data[static_cast<std::size_t>(best)] < 1e-6) continue;
    const double br = best / frame.cells + 0.5, bc = best % frame.cells + 0.5;
    const Vec2 expect = frame.world_to_map(*ground);
    CHECK(std::abs(bc - expect.x) < 1.0);
    CHECK(std::abs(br - expect.y) < 1.0);
    ++tested;
  }
  CHECK(tested >= 5);
}

TEST_CASE("projection: near-horizon camera over the map edge yields an empty mask") {
  MapFrame frame = desk_frame();
  CameraIntrinsics intr = desk_intr();
  intr.pitch = 0.005;  // nearly level: visible ground is tens of kilometres away
  Pose pose{{45, 0}, 0.0, 5.0};  // close to the map edge looking outward
  frame.origin = {0, 0};
  const auto table = build_projection(pose, intr, frame, 16, 9);
  CHECK(table.observed == 0);
  for (auto m : table.mask) CHECK(m == 0);
}

TEST_CASE("projection is world-frame consistent under agent rotation") {
  // A 15 deg rotation of a 90 deg FOV keeps ~70% of the frustum footprint at
  // most; the frame-consistency claim is that co-visible world cells receive
  // the same content, not that the footprint is unchanged.
  const MapFrame frame = desk_frame();
  const CameraIntrinsics intr = desk_intr();
  const int fw = 16, fh = 9;
  Pose p1{{0, 0}, 0.0, 5.0};
  Pose p2{{0, 0}, 15.0 * M_PI / 180.0, 5.0};
  const auto t1 = build_projection(p1, intr, frame, fw, fh);
  const auto t2 = build_projection(p2, intr, frame, fw, fh);

  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < t1.mask.size(); ++i) {
    if (t1.mask[i] && t2.mask[i]) ++inter;
    if (t1.mask[i] || t2.mask[i]) ++uni;
  }
  CHECK(static_cast<double>(inter) / uni >= 0.6);
  CHECK(inter > 100);

  // static scene: a feature map whose value is a smooth function of the
  // viewed ground point; both projections must write the same world values.
  // Far cells are excluded: near the horizon the ground point diverges and
  // no pixel-space interpolation can reconstruct the field there.
  auto make_fmap = [&](const Pose& pose) {
    auto fmap = zeros<float>({1, fh, fw});
    for (int fy = 0; fy < fh; ++fy)
      for (int fx = 0; fx < fw; ++fx) {
        const auto g = pixel_to_ground((fx + 0.5) * intr.width / fw, (fy + 0.5) * intr.height / fh,
                                       pose, intr);
        if (!g) continue;
        fmap->data[static_cast<std::size_t>(fy * fw + fx)] =
            static_cast<float>(std::sin(0.05 * g->x) + std::cos(0.06 * g->y));
      }
    return fmap;
  };
  auto w1 = apply_projection<float>(nullptr, make_fmap(p1), t1);
  auto w2 = apply_projection<float>(nullptr, make_fmap(p2), t2);
  double err = 0;
  int count = 0;
  for (int r = 0; r < frame.cells; ++r)
    for (int c = 0; c < frame.cells; ++c) {
      const std::size_t i = static_cast<std::size_t>(r * frame.cells + c);
      if (!t1.mask[i] || !t2.mask[i]) continue;
      if ((frame.map_to_world(c + 0.5, r + 0.5) - p1.p).norm() > 30.0) continue;
      err += std::abs(w1->data[i] - w2->data[i]);
      ++count;
    }
  CHECK(count > 40);
  CHECK(err / count < 0.05);  // same world content up to bilinear smoothing
}

TEST_CASE("integrate: mean semantics") {
  const MapFrame frame = desk_frame();
  auto map = SemanticMap<float>::make(frame, 2);
  const std::int64_t hw = frame.cells * frame.cells;

  std::vector<std::uint8_t> mask_a(static_cast<std::size_t>(hw), 0);
  std::vector<std::uint8_t> mask_b(static_cast<std::size_t>(hw), 0);
  for (int i = 0; i < 40; ++i) mask_a[static_cast<std::size_t>(i)] = 1;
  for (int i = 20; i < 60; ++i) mask_b[static_cast<std::size_t>(i)] = 1;

  Rng rng(12);
  auto feats_a = zeros<float>({2, frame.cells, frame.cells});
  auto feats_b = zeros<float>({2, frame.cells, frame.cells});
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t i = 0; i < hw; ++i) {
      if (mask_a[static_cast<std::size_t>(i)])
        feats_a->data[static_cast<std::size_t>(c * hw + i)] = static_cast<float>(rng.uniform(-1, 1));
      if (mask_b[static_cast<std::size_t>(i)])
        feats_b->data[static_cast<std::size_t>(c * hw + i)] = static_cast<float>(rng.uniform(-1, 1));
    }

  SUBCASE("first observation stores the feature exactly") {
    integrate(map, *feats_a, mask_a);
    CHECK(map.features[5] == feats_a->data[5]);
    CHECK(map.counts[5] == 1);
  }

  SUBCASE("mean idempotence: same features twice leave the map unchanged") {
    integrate(map, *feats_a, mask_a);
    const auto snapshot = map.features;
    integrate(map, *feats_a, mask_a);
    for (std::size_t i = 0; i < snapshot.size(); ++i)
      CHECK(map.features[i] == doctest::Approx(snapshot[i]).epsilon(1e-6));
    CHECK(map.counts[5] == 2);
  }

  SUBCASE("order invariance and brute-force per-cell mean") {
    auto map_ab = SemanticMap<float>::make(frame, 2);
    auto map_ba = SemanticMap<float>::make(frame, 2);
    integrate(map_ab, *feats_a, mask_a);
    integrate(map_ab, *feats_b, mask_b);
    integrate(map_ba, *feats_b, mask_b);
    integrate(map_ba, *feats_a, mask_a);
    for (std::size_t i = 0; i < map_ab.features.size(); ++i)
      CHECK(map_ab.features[i] == doctest::Approx(map_ba.features[i]).epsilon(1e-5));
    // brute-force mean over the observation lists
    for (std::int64_t c = 0; c < 2; ++c)
      for (std::int64_t i = 0; i < hw; ++i) {
        double sum = 0;
        int n = 0;
        if (mask_a[static_cast<std::size_t>(i)]) {
          sum += feats_a->data[static_cast<std::size_t>(c * hw + i)];
          ++n;
        }
        if (mask_b[static_cast<std::size_t>(i)]) {
          sum += feats_b->data[static_cast<std::size_t>(c * hw + i)];
          ++n;
        }
        const double expect = n ? sum / n : 0.0;
        CHECK(map_ab.features[static_cast<std::size_t>(c * hw + i)] ==
              doctest::Approx(expect).epsilon(1e-5));
      }
  }

  SUBCASE("never-observed cells hold exact zeros") {
    integrate(map, *feats_a, mask_a);
    integrate(map, *feats_b, mask_b);
    for (std::int64_t c = 0; c < 2; ++c)
      for (std::int64_t i = 0; i < hw; ++i)
        if (!mask_a[static_cast<std::size_t>(i)] && !mask_b[static_cast<std::size_t>(i)]) {
          CHECK(map.features[static_cast<std::size_t>(c * hw + i)] == 0.0f);
          CHECK(map.counts[static_cast<std::size_t>(i)] == 0);
        }
  }
}

TEST_CASE("integrate_live matches the numeric path and is differentiable") {
  const MapFrame frame = desk_frame();
  auto map = SemanticMap<float>::make(frame, 2);
  const std::int64_t hw = frame.cells * frame.cells;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(hw), 0);
  for (int i = 10; i < 200; i += 3) mask[static_cast<std::size_t>(i)] = 1;
  Rng rng(3);
  auto feats = zeros<float>({2, frame.cells, frame.cells});
  for (auto& v : feats->data) v = static_cast<float>(rng.uniform(-1, 1));

  integrate(map, *feats, mask);  // counts now 1 on masked cells
  auto feats2 = zeros<float>({2, frame.cells, frame.cells});
  for (auto& v : feats2->data) v = static_cast<float>(rng.uniform(-1, 1));

  auto live = integrate_live<float>(nullptr, map, feats2, mask);
  auto map_copy = map;
  integrate(map_copy, *feats2, mask);
  for (std::size_t i = 0; i < map_copy.features.size(); ++i)
    CHECK(live->data[i] == doctest::Approx(map_copy.features[i]).epsilon(1e-6));
}

TEST_CASE("resnet: spatial reduction and finiteness") {
  Rng rng(21);
  auto net = ResNetFeat<float>::make(3, 8, 16, 2, rng);
  auto img = zeros<float>({3, 36, 64});
  auto out = net.forward(nullptr, img);
  CHECK(out->shape == Shape{16, 9, 16});  // 1/4 input resolution
  for (float v : out->data) CHECK(std::isfinite(v));

  // paper-profile dims: 128x72 -> 32x18
  auto img2 = zeros<float>({3, 72, 128});
  auto out2 = net.forward(nullptr, img2);
  CHECK(out2->shape == Shape{16, 18, 32});
}
