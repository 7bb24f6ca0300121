#include <benchmark/benchmark.h>

#include "pvn/eval.hpp"
#include "pvn/trainer.hpp"

using namespace pvn;

namespace {

void BM_RenderFpv(benchmark::State& state) {
  RunConfig cfg = RunConfig::desk();
  const auto env = generate_environment(3, cfg.taskgen());
  const WorldState world = reset(env, Pose{{0, 0}, 0.4, cfg.camera_elevation}, cfg.world());
  const CameraIntrinsics intr = cfg.intrinsics();
  for (auto _ : state) {
    const Image img = render_fpv(world, intr);
    benchmark::DoNotOptimize(img.rgb.data());
  }
}
BENCHMARK(BM_RenderFpv);

void BM_ResNetForward(benchmark::State& state) {
  RunConfig cfg = RunConfig::desk();
  Rng rng(7);
  auto net = ResNetFeat<float>::make(3, cfg.resnet_mid_channels, cfg.map_channels, cfg.resnet_blocks, rng);
  auto img = zeros<float>({3, cfg.image_height, cfg.image_width});
  for (auto& v : img->data) v = static_cast<float>(rng.uniform(0, 1));
  for (auto _ : state) {
    auto out = net.forward(nullptr, img);
    benchmark::DoNotOptimize(out->data.data());
  }
}
BENCHMARK(BM_ResNetForward);

void BM_Projection(benchmark::State& state) {
  RunConfig cfg = RunConfig::desk();
  MapFrame frame;
  frame.cells = cfg.map_cells;
  frame.meters_per_cell = cfg.meters_per_cell();
  const CameraIntrinsics intr = cfg.intrinsics();
  const Pose pose{{0, 0}, 0.3, cfg.camera_elevation};
  for (auto _ : state) {
    const auto table = build_projection(pose, intr, frame, cfg.image_width / 4, cfg.image_height / 4);
    benchmark::DoNotOptimize(table.cells.data());
  }
}
BENCHMARK(BM_Projection);

void BM_LingUNetForward(benchmark::State& state) {
  RunConfig cfg = RunConfig::desk();
  Rng rng(8);
  auto model = Stage1Model<float>::make(stage1_dims(cfg, 64), rng);
  auto s = zeros<float>({cfg.map_channels, cfg.map_cells, cfg.map_cells});
  for (auto& v : s->data) v = static_cast<float>(rng.uniform(-1, 1));
  auto u = model.encoder.encode(nullptr, {1, 2, 3, 4});
  for (auto _ : state) {
    auto logits = model.visitation_logits(nullptr, s, u);
    benchmark::DoNotOptimize(logits->data.data());
  }
}
BENCHMARK(BM_LingUNetForward);

void BM_ExpertDistributions(benchmark::State& state) {
  std::vector<Vec2> xi;
  for (double t = 0; t <= 1.0; t += 0.02) xi.push_back({6 + 20 * t, 10 + 12 * t});
  for (auto _ : state) {
    const auto e = make_expert_distributions(xi, 2.0, 32);
    benchmark::DoNotOptimize(e.dp.data());
  }
}
BENCHMARK(BM_ExpertDistributions);

void BM_EgocentricCrop(benchmark::State& state) {
  MapFrame frame;
  frame.cells = 32;
  frame.meters_per_cell = 3.125;
  const Pose pose{{4, -3}, 0.8, 5.0};
  std::vector<float> dp(1024, 1.f / 1024), dg(1024, 1.f / 1024);
  for (auto _ : state) {
    const CropTable table = build_crop(pose, frame, 12);
    const auto x = crop_distributions(dp, dg, 32, table);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_EgocentricCrop);

}  // namespace
