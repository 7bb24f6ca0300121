#include "pvn/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <numeric>

#include "pvn/checkpoint.hpp"
#include "pvn/records.hpp"

namespace pvn {

ExpertDistributions make_expert_distributions(const std::vector<Vec2>& xi_cells, double sigma, int cells) {
  if (xi_cells.empty()) throw std::invalid_argument("make_expert_distributions: empty trajectory");
  bool any_inside = false;
  for (const auto& p : xi_cells)
    if (p.x >= 0 && p.x <= cells && p.y >= 0 && p.y <= cells) any_inside = true;
  if (!any_inside) throw std::invalid_argument("make_expert_distributions: trajectory outside the map");

  ExpertDistributions out;
  out.cells = cells;
  const std::size_t n = static_cast<std::size_t>(cells) * static_cast<std::size_t>(cells);
  out.dp.assign(n, 0.0);
  out.dg.assign(n, 0.0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double zp = 0, zg = 0;
  for (int r = 0; r < cells; ++r) {
    for (int c = 0; c < cells; ++c) {
      const double cx = c + 0.5, cy = r + 0.5;
      double vp = 0;
      for (const auto& p : xi_cells) {
        const double d2 = (cx - p.x) * (cx - p.x) + (cy - p.y) * (cy - p.y);
        vp += std::exp(-d2 * inv2s2);
      }
      const Vec2 g = xi_cells.back();
      const double dg2 = (cx - g.x) * (cx - g.x) + (cy - g.y) * (cy - g.y);
      const double vg = std::exp(-dg2 * inv2s2);
      out.dp[static_cast<std::size_t>(r * cells + c)] = vp;
      out.dg[static_cast<std::size_t>(r * cells + c)] = vg;
      zp += vp;
      zg += vg;
    }
  }
  for (auto& v : out.dp) v /= zp;
  for (auto& v : out.dg) v /= zg;
  return out;
}

MapFrame frame_for_task(const TaskSpec& task, const RunConfig& cfg) {
  MapFrame frame;
  frame.origin = task.start.p;
  frame.heading = task.start.heading;
  frame.meters_per_cell = cfg.meters_per_cell();
  frame.cells = cfg.map_cells;
  return frame;
}

ExpertDistributions expert_for_task(const TaskSpec& task, const MapFrame& frame, double sigma) {
  std::vector<Vec2> cells_xy;
  cells_xy.reserve(task.demonstration.size());
  for (const auto& p : task.demonstration) cells_xy.push_back(frame.world_to_map(p));
  return make_expert_distributions(cells_xy, sigma, frame.cells);
}

std::vector<double> rotate_distribution(const std::vector<double>& dist, int cells, double angle) {
  const double ctr = (static_cast<double>(cells) - 1.0) / 2.0;
  const double ca = std::cos(-angle), sa = std::sin(-angle);
  std::vector<double> out(dist.size(), 0.0);
  double total = 0;
  for (int r = 0; r < cells; ++r) {
    for (int c = 0; c < cells; ++c) {
      const double dx = c - ctr, dy = r - ctr;
      const double sx = ca * dx - sa * dy + ctr;
      const double sy = sa * dx + ca * dy + ctr;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double ax = sx - x0, ay = sy - y0;
      double v = 0;
      auto sample = [&](int y, int x, double w) {
        if (y < 0 || y >= cells || x < 0 || x >= cells) return;
        v += w * dist[static_cast<std::size_t>(y * cells + x)];
      };
      sample(y0, x0, (1 - ax) * (1 - ay));
      sample(y0, x0 + 1, ax * (1 - ay));
      sample(y0 + 1, x0, (1 - ax) * ay);
      sample(y0 + 1, x0 + 1, ax * ay);
      out[static_cast<std::size_t>(r * cells + c)] = v;
      total += v;
    }
  }
  if (total > 0)
    for (auto& v : out) v /= total;
  return out;
}

Vec2 rotate_cell_coords(Vec2 cell_pos, int cells, double angle) {
  const double ctr = (static_cast<double>(cells) - 1.0) / 2.0;
  // rotate_bilinear moves content at p to R(angle)(p - ctr) + ctr; note the
  // center is in cell-index space, so shift the half-cell offset first
  const Vec2 idx{cell_pos.x - 0.5, cell_pos.y - 0.5};
  const Vec2 rotated = Vec2{idx.x - ctr, idx.y - ctr}.rotated(angle);
  return {rotated.x + ctr + 0.5, rotated.y + ctr + 0.5};
}

std::vector<VisibleObject> visible_objects(const std::vector<LandmarkSpec>& landmarks, const Pose& pose,
                                           const CameraIntrinsics& intr, const MapFrame& frame,
                                           const AlignmentTable& alignments,
                                           const std::vector<int>& token_ids) {
  std::vector<VisibleObject> out;
  for (const auto& lm : landmarks) {
    const auto px = ground_to_pixel(lm.pos, pose, intr);
    if (!px) continue;
    if (px->first < 0 || px->first >= intr.width || px->second < 0 || px->second >= intr.height) continue;
    const auto cell = frame.world_to_cell(lm.pos);
    if (!cell) continue;
    VisibleObject o;
    o.class_id = lm.class_id;
    o.row = cell->first;
    o.col = cell->second;
    o.mentioned = 0.f;
    for (const auto& e : alignments.entries) {
      if (e.class_id != lm.class_id) continue;
      for (int t : token_ids)
        if (t == e.token_id) o.mentioned = 1.f;
    }
    out.push_back(o);
  }
  return out;
}

// ---- Stage 1 ----

namespace {

std::vector<float> to_float(const std::vector<double>& v) {
  return std::vector<float>(v.begin(), v.end());
}

struct EpisodeFrame {
  Image image;
  Pose pose;
};

/// Oracle rollout through the simulator, recording the observation at every
/// step (the contexts Stage-1 trains on).
std::vector<EpisodeFrame> rollout_oracle(const TaskSpec& task, const RunConfig& cfg) {
  std::vector<EpisodeFrame> frames;
  const CameraIntrinsics intr = cfg.intrinsics();
  Pose start = task.start;
  start.elevation = cfg.camera_elevation;
  WorldState state = reset(task.environment, start, cfg.world());
  const OracleConfig ocfg = cfg.oracle();
  for (int t = 1; t <= cfg.max_steps; ++t) {
    frames.push_back({render_fpv(state, intr), localize(state)});
    const Action a = oracle_policy(localize(state), task.demonstration, ocfg);
    if (a.kind == Action::Kind::Stop) break;
    state = step(state, a, cfg.dt);
  }
  return frames;
}

}  // namespace

Stage1TrainResult train_stage1(Stage1Model<float>& model, const std::vector<TaskSpec>& tasks,
                               const AlignmentTable& alignments, const RunConfig& cfg, Rng& rng,
                               std::ostream* log, const std::string& checkpoint_dir) {
  if (tasks.empty()) throw std::invalid_argument("train_stage1: no tasks");
  const CameraIntrinsics intr = cfg.intrinsics();
  const LossWeights weights{cfg.lambda_percept, cfg.lambda_ground, cfg.lambda_lang};
  ParamList<float> params = model.params();
  AdamState<float> adam;
  adam.lr = static_cast<float>(cfg.lr);
  adam.weight_decay = static_cast<float>(cfg.weight_decay);

  Stage1TrainResult result;
  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0, kl_sum = 0, aux_sum = 0;
    int examples = 0;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const TaskSpec& task = tasks[order[oi]];
      const MapFrame frame = frame_for_task(task, cfg);
      const ExpertDistributions expert = expert_for_task(task, frame, cfg.gauss_sigma_cells);
      const std::vector<float> mention = alignments.mention_labels(task.instruction.token_ids, cfg.n_obj);
      auto map = SemanticMap<float>::make(frame, cfg.map_channels);
      const auto frames = rollout_oracle(task, cfg);

      for (std::size_t fi = 0; fi < frames.size(); ++fi) {
        const int t = static_cast<int>(fi) + 1;
        const bool replan = (t - 1) % cfg.t_d == 0;
        auto img = image_to_tensor<float>(frames[fi].image);
        if (!replan) {
          auto fmap = model.resnet.forward(nullptr, img);
          const auto table = build_projection(frames[fi].pose, intr, frame,
                                              static_cast<int>(fmap->dim(2)),
                                              static_cast<int>(fmap->dim(1)));
          auto world = apply_projection<float>(nullptr, fmap, table);
          integrate(map, *world, table.mask);
          continue;
        }

        Tape<float> tape;
        auto fmap = model.resnet.forward(&tape, img);
        const auto table = build_projection(frames[fi].pose, intr, frame,
                                            static_cast<int>(fmap->dim(2)),
                                            static_cast<int>(fmap->dim(1)));
        auto world = apply_projection<float>(&tape, fmap, table);
        auto s_live = integrate_live<float>(&tape, map, world, table.mask);
        // persist the (un-augmented) integration into the episode map
        map.features = s_live->data;
        for (std::size_t i = 0; i < table.mask.size(); ++i)
          if (table.mask[i]) map.counts[i] += 1;

        const double alpha = rng.normal(0.0, cfg.augment_rot_std);
        auto s_aug = rotate_bilinear(&tape, s_live, alpha);
        const std::vector<float> dp_t = to_float(rotate_distribution(expert.dp, frame.cells, alpha));
        const std::vector<float> dg_t = to_float(rotate_distribution(expert.dg, frame.cells, alpha));

        auto u = model.encoder.encode(&tape, task.instruction.token_ids);
        auto grounding = model.grounding.apply(&tape, s_aug, u);
        auto logits = model.lingunet.forward(&tape, concat_channels(&tape, s_aug, grounding), u);
        auto dists = channel_softmax(&tape, logits);

        auto objects = visible_objects(task.environment, frames[fi].pose, intr, frame, alignments,
                                       task.instruction.token_ids);
        for (auto& o : objects) {  // object cells move with the augmentation
          const Vec2 rc = rotate_cell_coords({o.col + 0.5, o.row + 0.5}, frame.cells, alpha);
          o.col = static_cast<int>(std::floor(rc.x));
          o.row = static_cast<int>(std::floor(rc.y));
        }
        std::erase_if(objects, [&](const VisibleObject& o) {
          return o.row < 0 || o.row >= frame.cells || o.col < 0 || o.col >= frame.cells;
        });

        auto percept = aux_percept_loss(&tape, s_aug, objects, model.aux);
        auto ground = aux_ground_loss(&tape, grounding, objects, model.aux);
        auto lang = aux_lang_loss(&tape, u, mention, model.aux);
        auto parts = stage1_loss<float>(&tape, dists, dp_t, dg_t, percept, ground, lang, weights);

        const double loss_val = static_cast<double>(parts.total->data[0]);
        if (!std::isfinite(loss_val))
          throw std::runtime_error("train_stage1: loss diverged (non-finite); last checkpoint: " +
                                   (result.last_checkpoint.empty() ? "<none>" : result.last_checkpoint));
        adam.zero_grads(params);
        tape.backward(parts.total);
        adam.step(params);

        loss_sum += loss_val;
        kl_sum += static_cast<double>(parts.kl_p->data[0] + parts.kl_g->data[0]);
        aux_sum += loss_val - static_cast<double>(parts.kl_p->data[0] + parts.kl_g->data[0]);
        ++examples;
      }
    }
    result.epoch_loss.push_back(loss_sum / std::max(1, examples));
    result.examples_per_epoch = examples;
    if (log) {
      Record rec("stage1_epoch");
      rec.set("epoch", static_cast<std::int64_t>(epoch));
      rec.set("examples", static_cast<std::int64_t>(examples));
      rec.set("loss", loss_sum / std::max(1, examples));
      rec.set("kl", kl_sum / std::max(1, examples));
      rec.set("aux", aux_sum / std::max(1, examples));
      *log << rec.format() << "\n" << std::flush;
    }
    if (!checkpoint_dir.empty()) {
      namespace fs = std::filesystem;
      fs::create_directories(checkpoint_dir);
      const std::string path =
          (fs::path(checkpoint_dir) / ("stage1_epoch" + std::to_string(epoch) + ".pvnckpt")).string();
      save_checkpoint(path, entries_from_params(params));
      result.last_checkpoint = path;
    }
  }
  return result;
}

// ---- Stage 2 (DAggerFM) ----

void AggregatedDataset::prune(Rng& rng) {
  if (samples.size() <= capacity) return;
  rng.shuffle(samples);
  samples.resize(capacity);
}

Stage2TrainResult train_stage2_daggerfm(ActHead<float>& act, const std::vector<TaskSpec>& tasks,
                                        const RunConfig& cfg, Rng& rng, std::ostream* log) {
  if (tasks.empty()) throw std::invalid_argument("train_stage2_daggerfm: no tasks");
  ParamList<float> params = act.params();
  AdamState<float> adam;
  adam.lr = static_cast<float>(cfg.lr);
  adam.weight_decay = static_cast<float>(cfg.weight_decay);
  const OracleConfig ocfg = cfg.oracle();

  AggregatedDataset dataset;
  dataset.capacity = static_cast<std::size_t>(cfg.dagger_memory);
  Stage2TrainResult result;

  for (int k = 0; k < cfg.dagger_iterations; ++k) {
    const double beta_k = std::pow(cfg.dagger_beta, k);
    int executions = 0;
    for (int e = 0; e < cfg.dagger_envs_per_iter; ++e) {
      const TaskSpec& task =
          tasks[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(tasks.size()) - 1))];
      const MapFrame frame = frame_for_task(task, cfg);
      const ExpertDistributions expert = expert_for_task(task, frame, cfg.gauss_sigma_cells);
      const std::vector<float> dp = to_float(expert.dp);
      const std::vector<float> dg = to_float(expert.dg);

      Pose start = task.start;
      start.elevation = cfg.camera_elevation;
      WorldState state = reset(task.environment, start, cfg.world());
      ++executions;
      for (int t = 1; t <= cfg.max_steps; ++t) {
        const Pose pose = localize(state);
        const CropTable ctable = build_crop(pose, frame, cfg.crop_k);
        Stage2Sample sample;
        sample.x = crop_distributions(dp, dg, frame.cells, ctable);
        const Action a_star = oracle_policy(pose, task.demonstration, ocfg);
        if (a_star.kind == Action::Kind::Stop) {
          sample.stop = 1.f;  // oracle STOP labels zero velocities
          sample.v = 0.f;
          sample.omega = 0.f;
        } else {
          sample.stop = 0.f;
          sample.v = static_cast<float>(a_star.v);
          sample.omega = static_cast<float>(a_star.omega);
        }
        dataset.samples.push_back(std::move(sample));

        // per-step mixture coin: oracle with probability beta^k
        Action a = a_star;
        if (!rng.bernoulli(beta_k))
          a = stop_decision(act.act(dataset.samples.back().x), cfg.kappa);
        if (a.kind == Action::Kind::Stop) break;
        state = step(state, a, cfg.dt);
      }
    }
    dataset.prune(rng);

    // one supervised epoch over the aggregated dataset
    std::vector<std::size_t> order(dataset.samples.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double loss_sum = 0;
    for (std::size_t idx : order) {
      const Stage2Sample& s = dataset.samples[idx];
      Tape<float> tape;
      auto x = make_tensor<float>({static_cast<std::int64_t>(s.x.size())}, s.x);
      auto y = act.forward(&tape, x);
      auto stop_logit = slice_vec(&tape, y, 0, 1);
      auto vel = slice_vec(&tape, y, 1, 2);
      auto loss = add(&tape, bce_with_logits(&tape, stop_logit, {s.stop}),
                      mse_loss(&tape, vel, {s.v, s.omega}));
      loss_sum += static_cast<double>(loss->data[0]);
      adam.zero_grads(params);
      tape.backward(loss);
      adam.step(params);
    }
    result.iter_loss.push_back(loss_sum / std::max<std::size_t>(1, order.size()));
    result.executions.push_back(executions);
    if (log) {
      Record rec("stage2_iter");
      rec.set("iteration", static_cast<std::int64_t>(k));
      rec.set("beta_k", beta_k);
      rec.set("memory", static_cast<std::int64_t>(dataset.samples.size()));
      rec.set("executions", static_cast<std::int64_t>(executions));
      rec.set("loss", result.iter_loss.back());
      *log << rec.format() << "\n" << std::flush;
    }
  }
  return result;
}

}  // namespace pvn
