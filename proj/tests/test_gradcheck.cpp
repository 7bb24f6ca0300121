#include "doctest.h"
#include "gradcheck.hpp"
#include "pvn/controller.hpp"
#include "pvn/mapper.hpp"
#include "pvn/trainer.hpp"
#include "pvn/visitnet.hpp"

using namespace pvn;
using pvn::testing::gradcheck;
using pvn::testing::random_tensor;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("gradcheck: elementwise and reductions") {
  Rng rng(101);
  auto a = random_tensor({3, 2}, rng);
  auto b = random_tensor({3, 2}, rng);
  ParamList<double> params{{"a", a}, {"b", b}};
  auto loss = [&](Tape<double>* t) {
    auto y = mul(t, add(t, a, b), sub(t, a, b));
    return sum(t, mul(t, leaky_relu(t, y, 0.01), sigmoid(t, tanh_op(t, y))));
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: matvec chain with bias and slices") {
  Rng rng(102);
  auto w = random_tensor({4, 5}, rng);
  auto x = random_tensor({5}, rng);
  auto b = random_tensor({4}, rng);
  ParamList<double> params{{"w", w}, {"x", x}, {"b", b}};
  auto loss = [&](Tape<double>* t) {
    auto y = add(t, matvec(t, w, x), b);
    auto top = slice_vec(t, y, 0, 2);
    auto bottom = slice_vec(t, y, 2, 2);
    return sum(t, mul(t, concat_vec(t, top, bottom), y));
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: conv2d and deconv2d") {
  Rng rng(103);
  auto x = random_tensor({2, 5, 6}, rng);
  auto k = random_tensor({3, 2, 3, 3}, rng);
  auto dk = random_tensor({3, 2, 4, 4}, rng);
  ParamList<double> params{{"x", x}, {"k", k}, {"dk", dk}};
  auto loss = [&](Tape<double>* t) {
    auto y = conv2d(t, x, k, 2, 1);
    auto z = deconv2d(t, y, dk, 2, 1);
    return sum(t, mul(t, z, z));
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: composite conv -> leaky-relu -> softmax -> kl") {
  Rng rng(104);
  auto x = random_tensor({3, 6, 6}, rng);
  auto k = random_tensor({2, 3, 3, 3}, rng);
  ParamList<double> params{{"x", x}, {"k", k}};
  std::vector<double> target(2 * 36, 0.0);
  {
    double z = 0;
    Rng trng(7);
    for (auto& v : target) {
      v = trng.uniform();
      z += v;
    }
    double z0 = 0, z1 = 0;
    for (int i = 0; i < 36; ++i) z0 += target[static_cast<std::size_t>(i)];
    for (int i = 36; i < 72; ++i) z1 += target[static_cast<std::size_t>(i)];
    for (int i = 0; i < 36; ++i) target[static_cast<std::size_t>(i)] /= z0;
    for (int i = 36; i < 72; ++i) target[static_cast<std::size_t>(i)] /= z1;
  }
  auto loss = [&](Tape<double>* t) {
    auto logits = leaky_relu(t, conv2d(t, x, k, 1, 1), 0.01);
    auto sm = channel_softmax(t, logits);
    auto flat = reshape(t, sm, {72});
    auto kp = kl_loss<double>(t, std::vector<double>(target.begin(), target.begin() + 36),
                              slice_vec(t, flat, 0, 36));
    auto kg = kl_loss<double>(t, std::vector<double>(target.begin() + 36, target.end()),
                              slice_vec(t, flat, 36, 36));
    return add(t, kp, kg);
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: lstm cell and embedding") {
  Rng rng(105);
  const int hidden = 4, d = 3, vocab = 6;
  LstmWeights<double> w;
  w.w_ih = random_tensor({4 * hidden, d}, rng);
  w.w_hh = random_tensor({4 * hidden, hidden}, rng);
  w.bias = random_tensor({4 * hidden}, rng);
  auto table = random_tensor({vocab, d}, rng);
  ParamList<double> params{{"w_ih", w.w_ih}, {"w_hh", w.w_hh}, {"bias", w.bias}, {"table", table}};
  const std::vector<int> ids{1, 4, 2, 1};
  auto loss = [&](Tape<double>* t) {
    auto rows = embedding_lookup(t, table, ids);
    auto h = zeros<double>({hidden});
    auto c = zeros<double>({hidden});
    auto flat = reshape(t, rows, {rows->numel()});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto x = slice_vec(t, flat, static_cast<std::int64_t>(i) * d, d);
      auto st = lstm_cell(t, x, h, c, w);
      h = st.h;
      c = st.c;
    }
    return sum(t, mul(t, h, h));
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: losses (bce, softmax-xent, mse)") {
  Rng rng(106);
  auto logits = random_tensor({5}, rng, 2.0);
  ParamList<double> params{{"logits", logits}};
  auto loss = [&](Tape<double>* t) {
    auto a = bce_with_logits<double>(t, logits, {1, 0, 1, 0, 1});
    auto b = softmax_cross_entropy(t, logits, 2);
    auto c = mse_loss<double>(t, logits, {0.1, -0.2, 0.3, 0.4, -0.5});
    return add(t, add(t, a, b), c);
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: conv1x1 with predicted kernel, rotation, gather") {
  Rng rng(107);
  auto x = random_tensor({3, 5, 5}, rng);
  auto kvec = random_tensor({2, 3}, rng);
  ParamList<double> params{{"x", x}, {"kvec", kvec}};
  auto loss = [&](Tape<double>* t) {
    auto y = conv1x1(t, x, kvec);
    auto r = rotate_bilinear(t, y, 0.37);
    auto cell = gather_cell(t, r, 2, 3);
    return sum(t, mul(t, cell, cell));
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: projection + integration (mapper front half path)") {
  Rng rng(108);
  MapFrame frame;
  frame.cells = 8;
  frame.meters_per_cell = 3.0;
  Pose pose;
  pose.p = {0, 0};
  pose.heading = 0.3;
  pose.elevation = 5.0;
  CameraIntrinsics intr;
  intr.width = 16;
  intr.height = 9;
  const auto table = build_projection(pose, intr, frame, 8, 4);
  REQUIRE(table.observed > 0);
  auto map = SemanticMap<double>::make(frame, 2);
  Rng mrng(9);
  for (auto& v : map.features) v = mrng.uniform(-0.2, 0.2);
  for (auto& c : map.counts) c = static_cast<int>(mrng.uniform_int(0, 2));

  auto fmap = random_tensor({2, 4, 8}, rng);
  ParamList<double> params{{"fmap", fmap}};
  auto loss = [&](Tape<double>* t) {
    auto world = apply_projection(t, fmap, table);
    auto s = integrate_live(t, map, world, table.mask);
    return sum(t, mul(t, s, s));
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: egocentric crop + act head (stage 2 path)") {
  Rng rng(109);
  MapFrame frame;
  frame.cells = 10;
  frame.meters_per_cell = 2.0;
  Pose pose;
  pose.p = {1.5, -2.0};
  pose.heading = 0.8;
  const CropTable table = build_crop(pose, frame, 4);
  auto dists = random_tensor({2, 10, 10}, rng, 0.5);
  auto act = ActHead<double>::make(2 * 4 * 4, 6, rng);
  ParamList<double> params = act.params();
  params.push_back({"dists", dists});
  auto loss = [&](Tape<double>* t) {
    auto x = apply_crop(t, dists, table);
    auto y = act.forward(t, x);
    return sum(t, mul(t, y, y));
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: LingUNet end to end incl. language kernels") {
  Rng rng(110);
  Stage1Model<double>::Dims dims;
  dims.vocab_size = 8;
  dims.emb_dim = 3;
  dims.lstm_hidden = 4;
  dims.map_channels = 3;
  dims.grounding_channels = 2;
  dims.lingunet_stages = 2;
  dims.map_cells = 8;
  dims.resnet_mid = 2;
  dims.resnet_blocks = 1;
  dims.n_obj = 4;
  auto model = Stage1Model<double>::make(dims, rng);
  auto s = random_tensor({3, 8, 8}, rng, 0.5);
  ParamList<double> params = model.params();
  // drop the resnet parameters: this case exercises the back half only
  std::erase_if(params, [](const NamedParam<double>& p) {
    return p.name.find("resnet") != std::string::npos || p.name.find("aux") != std::string::npos;
  });
  params.push_back({"s", s});
  const std::vector<int> tokens{1, 5, 2};
  std::vector<double> dp_target(64, 1.0 / 64), dg_target(64, 1.0 / 64);
  auto loss = [&](Tape<double>* t) {
    auto u = model.encoder.encode(t, tokens);
    auto logits = model.visitation_logits(t, s, u);
    auto sm = channel_softmax(t, logits);
    auto flat = reshape(t, sm, {128});
    return add(t, kl_loss(t, dp_target, slice_vec(t, flat, 0, 64)),
               kl_loss(t, dg_target, slice_vec(t, flat, 64, 64)));
  };
  CHECK(gradcheck(loss, params).max_rel_error < kTol);
}

TEST_CASE("gradcheck: full stage-1 forward from pixels to loss") {
  Rng rng(111);
  Stage1Model<double>::Dims dims;
  dims.vocab_size = 8;
  dims.emb_dim = 3;
  dims.lstm_hidden = 4;
  dims.map_channels = 4;
  dims.grounding_channels = 2;
  dims.lingunet_stages = 2;
  dims.map_cells = 8;
  dims.resnet_mid = 3;
  dims.resnet_blocks = 1;
  dims.n_obj = 4;
  auto model = Stage1Model<double>::make(dims, rng);

  MapFrame frame;
  frame.cells = 8;
  frame.meters_per_cell = 4.0;
  Pose pose;
  pose.elevation = 5.0;
  CameraIntrinsics intr;
  intr.width = 16;
  intr.height = 8;
  const auto table = build_projection(pose, intr, frame, 4, 2);
  REQUIRE(table.observed > 0);
  auto map = SemanticMap<double>::make(frame, 4);

  auto img = random_tensor({3, 8, 16}, rng, 0.5);
  ParamList<double> params = model.params();
  const std::vector<int> tokens{1, 3};
  std::vector<double> dp_target(64, 1.0 / 64), dg_target(64, 1.0 / 64);
  std::vector<VisibleObject> objects{{1, 2, 3, 1.f}, {2, 4, 4, 0.f}};
  std::vector<float> mentions{0.f, 1.f, 0.f, 1.f};
  const LossWeights weights{1.0, 1.0, 0.25};

  auto loss = [&](Tape<double>* t) {
    auto fmap = model.resnet.forward(t, img);
    auto world = apply_projection(t, fmap, table);
    auto s = integrate_live(t, map, world, table.mask);
    auto u = model.encoder.encode(t, tokens);
    auto grounding = model.grounding.apply(t, s, u);
    auto logits = model.lingunet.forward(t, concat_channels(t, s, grounding), u);
    auto dists = channel_softmax(t, logits);
    auto percept = aux_percept_loss(t, s, objects, model.aux);
    auto ground = aux_ground_loss(t, grounding, objects, model.aux);
    auto lang = aux_lang_loss(t, u, mentions, model.aux);
    return stage1_loss<double>(t, dists, dp_target, dg_target, percept, ground, lang, weights).total;
  };
  const auto result = gradcheck(loss, params);
  INFO("worst: ", result.worst_param, " analytic=", result.worst_analytic,
       " numeric=", result.worst_numeric);
  CHECK(result.max_rel_error < kTol);
}
