#include <cmath>

#include "doctest.h"
#include "pvn/controller.hpp"
#include "pvn/rng.hpp"

using namespace pvn;

namespace {

MapFrame desk_frame() {
  MapFrame f;
  f.cells = 32;
  f.meters_per_cell = 3.125;
  return f;
}

}  // namespace

TEST_CASE("egocentric_crop: raw submap at the frame origin") {
  const MapFrame frame = desk_frame();
  const int k = 12;
  Pose pose;  // at origin, zero heading
  const CropTable table = build_crop(pose, frame, k);
  Rng rng(41);
  auto dists = uniform_init<float>({2, 32, 32}, 1.f, rng, false);
  for (auto& v : dists->data) v = std::abs(v);
  const auto x = crop_distributions(
      std::vector<float>(dists->data.begin(), dists->data.begin() + 32 * 32),
      std::vector<float>(dists->data.begin() + 32 * 32, dists->data.end()), 32, table);
  REQUIRE(x.size() == 2 * 12 * 12);
  // agent at map center, heading along +x: the crop is the raw K x K submap
  const int offset = 32 / 2 - k / 2;  // cells 10..21
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      const float expect = dists->data[static_cast<std::size_t>((r + offset) * 32 + (c + offset))];
      CHECK(x[static_cast<std::size_t>(r * k + c)] == doctest::Approx(expect).epsilon(1e-5));
    }
}

TEST_CASE("egocentric_crop: out-of-map region is exactly zero") {
  const MapFrame frame = desk_frame();
  Pose pose;
  pose.p = frame.map_to_world(1.0, 1.0);  // near the map corner
  const CropTable table = build_crop(pose, frame, 12);
  std::vector<float> dp(32 * 32, 0.25f), dg(32 * 32, 0.5f);
  const auto x = crop_distributions(dp, dg, 32, table);
  int zeros_found = 0;
  for (float v : x)
    if (v == 0.0f) ++zeros_found;
  CHECK(zeros_found > 100);  // most of the crop hangs off the map
}

TEST_CASE("egocentric_crop: rotation moves content, ahead stays ahead") {
  const MapFrame frame = desk_frame();
  const int k = 12;
  // impulse 3 cells ahead of the agent in world +x
  std::vector<float> dp(32 * 32, 0.f), dg(32 * 32, 0.f);
  const Vec2 impulse_world = frame.map_to_world(16.5 + 3.0, 16.5);
  dp[static_cast<std::size_t>(16 * 32 + 19)] = 1.f;

  for (double heading : {0.0, M_PI / 2, M_PI, -M_PI / 2}) {
    // place the agent so the impulse sits 3 cells ahead along its heading
    Pose pose;
    pose.p = impulse_world - Vec2{3.0 * frame.meters_per_cell, 0}.rotated(heading);
    pose.heading = heading;
    const CropTable table = build_crop(pose, frame, k);
    const auto x = crop_distributions(dp, dg, 32, table);
    // find the peak of the d^p crop
    int best = 0;
    for (int i = 1; i < k * k; ++i)
      if (x[static_cast<std::size_t>(i)] > x[static_cast<std::size_t>(best)]) best = i;
    const double br = best / k, bc = best % k;
    CHECK(std::abs(bc - ((k - 1) / 2.0 + 3.0)) <= 1.0);  // 3 cells ahead in crop coords
    CHECK(std::abs(br - (k - 1) / 2.0) <= 1.0);
    // impulse mass is conserved within bilinear tolerance
    double total = 0;
    for (int i = 0; i < k * k; ++i) total += x[static_cast<std::size_t>(i)];
    CHECK(total == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("act: zero weights, continuity bound, purity") {
  Rng rng(43);
  auto act = ActHead<float>::make(2 * 12 * 12, 64, rng);

  SUBCASE("all-zero weights and biases give (0,0,0) and p_stop = 0.5") {
    for (auto& p : act.params()) std::fill(p.tensor->data.begin(), p.tensor->data.end(), 0.f);
    const ControlOutput out = act.act(std::vector<float>(288, 0.7f));
    CHECK(out.e_stop == 0.0);
    CHECK(out.v == 0.0);
    CHECK(out.omega == 0.0);
    CHECK(out.p_stop == doctest::Approx(0.5));
  }

  SUBCASE("outputs are Lipschitz in x with the weight-norm bound") {
    // ||W||_2 bounded by the Frobenius norm
    auto frob = [](const TensorPtr<float>& w) {
      double s = 0;
      for (float v : w->data) s += static_cast<double>(v) * v;
      return std::sqrt(s);
    };
    const double bound = frob(act.w2) * (1.0 + frob(act.w1));
    Rng prng(5);
    std::vector<float> x(288), x2(288);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = static_cast<float>(prng.uniform(-1, 1));
      x2[i] = x[i] + static_cast<float>(prng.uniform(-0.01, 0.01));
    }
    const ControlOutput a = act.act(x);
    const ControlOutput b = act.act(x2);
    double dx = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      dx += (x[i] - x2[i]) * (x[i] - x2[i]);
    dx = std::sqrt(dx);
    const double dy = std::sqrt((a.e_stop - b.e_stop) * (a.e_stop - b.e_stop) +
                                (a.v - b.v) * (a.v - b.v) +
                                (a.omega - b.omega) * (a.omega - b.omega));
    CHECK(dy <= bound * dx + 1e-9);
  }

  SUBCASE("pure function: identical input, identical output") {
    std::vector<float> x(288, 0.3f);
    const ControlOutput a = act.act(x);
    const ControlOutput b = act.act(x);
    CHECK(a.e_stop == b.e_stop);
    CHECK(a.v == b.v);
    CHECK(a.omega == b.omega);
  }

  SUBCASE("wrong input length is an error") {
    CHECK_THROWS_AS((void)act.act(std::vector<float>(100, 0.f)), std::invalid_argument);
  }
}

TEST_CASE("stop_decision: threshold semantics") {
  ControlOutput out;
  out.v = 1.0;
  out.omega = 0.2;

  SUBCASE("paper threshold: e_stop above the sigmoid inversion stops") {
    const double kappa = 0.07;
    out.e_stop = std::log(0.07 / 0.93) + 0.01;  // just above -2.5867
    out.p_stop = 1.0 / (1.0 + std::exp(-out.e_stop));
    CHECK(stop_decision(out, kappa).kind == Action::Kind::Stop);
    out.e_stop = std::log(0.07 / 0.93) - 0.01;
    out.p_stop = 1.0 / (1.0 + std::exp(-out.e_stop));
    CHECK(stop_decision(out, kappa).kind == Action::Kind::Velocity);
  }

  SUBCASE("p_stop equal to kappa continues (strict inequality)") {
    out.p_stop = 0.07;
    const Action a = stop_decision(out, 0.07);
    CHECK(a.kind == Action::Kind::Velocity);
    CHECK(a.v == 1.0);
    CHECK(a.omega == 0.2);
  }

  SUBCASE("kappa outside (0,1) is rejected") {
    CHECK_THROWS_AS((void)stop_decision(out, 0.0), std::invalid_argument);
    CHECK_THROWS_AS((void)stop_decision(out, 1.0), std::invalid_argument);
  }
}
