#include "pvn/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <thread>

#include "pvn/records.hpp"

namespace pvn {

PolicyKind parse_policy(const std::string& name) {
  if (name == "pvn") return PolicyKind::Pvn;
  if (name == "pvn-no-instruction") return PolicyKind::PvnNoInstruction;
  if (name == "stop") return PolicyKind::Stop;
  if (name == "average") return PolicyKind::Average;
  if (name == "oracle") return PolicyKind::Oracle;
  if (name == "ideal-act") return PolicyKind::IdealAct;
  throw std::invalid_argument("unknown policy '" + name + "'");
}

std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Pvn: return "pvn";
    case PolicyKind::PvnNoInstruction: return "pvn-no-instruction";
    case PolicyKind::Stop: return "stop";
    case PolicyKind::Average: return "average";
    case PolicyKind::Oracle: return "oracle";
    case PolicyKind::IdealAct: return "ideal-act";
  }
  return "?";
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return base * 0x9e3779b97f4a7c15ull + stream * 0xbf58476d1ce4e5b9ull + index;
}

std::vector<TaskSpec> generate_task_suite(const RunConfig& cfg, std::uint64_t stream, int count) {
  const Vocabulary vocab = Vocabulary::standard(cfg.n_obj);
  const TaskGenConfig tg = cfg.taskgen();
  std::vector<TaskSpec> tasks;
  tasks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto env = generate_environment(derive_seed(cfg.seed, stream, static_cast<std::uint64_t>(i)), tg);
    TaskSpec t =
        generate_task(env, derive_seed(cfg.seed, stream + 1, static_cast<std::uint64_t>(i)), tg, vocab);
    t.id = i;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

Stage1Model<float>::Dims stage1_dims(const RunConfig& cfg, int vocab_size) {
  Stage1Model<float>::Dims d;
  d.vocab_size = vocab_size;
  d.emb_dim = cfg.word_embed;
  d.lstm_hidden = cfg.lstm_hidden;
  d.map_channels = cfg.map_channels;
  d.grounding_channels = cfg.grounding_channels;
  d.lingunet_stages = cfg.lingunet_stages;
  d.map_cells = cfg.map_cells;
  d.resnet_mid = cfg.resnet_mid_channels;
  d.resnet_blocks = cfg.resnet_blocks;
  d.n_obj = cfg.n_obj;
  return d;
}

MetricsReport aggregate_results(const std::vector<EpisodeResult>& results, double success_radius,
                                const std::string& fingerprint) {
  MetricsReport report;
  report.fingerprint = fingerprint;
  report.episodes = static_cast<std::int64_t>(results.size());
  if (results.empty()) return report;
  std::vector<double> distances;
  distances.reserve(results.size());
  std::int64_t successes = 0;
  double sum = 0;
  for (const auto& r : results) {
    distances.push_back(r.distance);
    sum += r.distance;
    if (r.distance < success_radius && !r.nan_failure) ++successes;
  }
  std::sort(distances.begin(), distances.end());
  report.success_rate = 100.0 * static_cast<double>(successes) / static_cast<double>(results.size());
  report.avg_distance = sum / static_cast<double>(results.size());
  report.median_distance = distances[(distances.size() - 1) / 2];  // lower median
  return report;
}

namespace {

constexpr double kNanFailureDistance = 100.0;  // map diagonal scale

EpisodeResult finish(const TaskSpec& task, Vec2 stop_pos, int steps, double success_radius,
                     bool nan_failure = false) {
  EpisodeResult r;
  r.task_id = task.id;
  r.goal = task.goal;
  r.stop_pos = stop_pos;
  r.steps = steps;
  r.nan_failure = nan_failure;
  r.distance = nan_failure ? kNanFailureDistance : (task.goal - stop_pos).norm();
  r.success = !nan_failure && r.distance < success_radius;
  return r;
}

EpisodeResult run_network_episode(const TaskSpec& task, PolicyKind kind, const EvalContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (!ctx.stage1 || !ctx.act)
    throw std::invalid_argument("run_episode: policy '" + policy_name(kind) + "' needs trained weights");
  CameraIntrinsics intr = cfg.intrinsics();
  const MapFrame frame = frame_for_task(task, cfg);
  VisitationPipeline<float> pipeline(*ctx.stage1, frame, cfg.map_channels, intr, cfg.t_d);

  std::vector<int> tokens = task.instruction.token_ids;
  if (kind == PolicyKind::PvnNoInstruction)
    tokens.assign(tokens.size(), 0);  // ablation: every token is the unknown id

  Pose start = task.start;
  start.elevation = cfg.camera_elevation * cfg.eval_height_scale;
  WorldState state = reset(task.environment, start, cfg.world());

  int steps = 0;
  while (true) {
    const int t = state.elapsed + 1;
    const Pose pose = localize(state);
    const Image image = render_fpv(state, intr);
    const VisitationPair& pair = pipeline.observe(image, pose, tokens, t);

    const CropTable ctable = build_crop(pose, frame, cfg.crop_k);
    const std::vector<float> x = crop_distributions(pair.dp, pair.dg, frame.cells, ctable);
    const ControlOutput out = ctx.act->act(x);
    if (!std::isfinite(out.v) || !std::isfinite(out.omega) || !std::isfinite(out.p_stop))
      return finish(task, pose.p, steps, cfg.success_radius, /*nan_failure=*/true);

    Action action = stop_decision(out, cfg.kappa);
    if (action.kind == Action::Kind::Velocity)
      action.omega *= cfg.eval_omega_scale;  // robustness switch
    if (t >= cfg.max_steps) action = Action::stop();

    state = step(state, action, cfg.dt);
    steps = state.elapsed;
    if (state.done) {
      if (kind == PolicyKind::IdealAct) {
        // Stage-1 quality in isolation: the stop position is the argmax cell
        // center of the latest goal-visitation distribution
        const auto& dg = pipeline.pair().dg;
        const std::size_t best = static_cast<std::size_t>(
            std::max_element(dg.begin(), dg.end()) - dg.begin());
        const int row = static_cast<int>(best) / frame.cells;
        const int col = static_cast<int>(best) % frame.cells;
        const Vec2 stop = frame.map_to_world(col + 0.5, row + 0.5);
        return finish(task, stop, steps, cfg.success_radius);
      }
      return finish(task, localize(state).p, steps, cfg.success_radius);
    }
  }
}

}  // namespace

EpisodeResult run_episode(const TaskSpec& task, PolicyKind kind, const EvalContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  switch (kind) {
    case PolicyKind::Stop: {
      return finish(task, task.start.p, 1, cfg.success_radius);
    }
    case PolicyKind::Average: {
      // fly forward for the average oracle step count at the average velocity
      Pose start = task.start;
      start.elevation = cfg.camera_elevation;
      WorldState state = reset(task.environment, start, cfg.world());
      for (int t = 0; t < 18; ++t) state = step(state, Action::velocity(0.88, 0.0), cfg.dt);
      return finish(task, localize(state).p, 19, cfg.success_radius);
    }
    case PolicyKind::Oracle: {
      Pose start = task.start;
      start.elevation = cfg.camera_elevation;
      WorldState state = reset(task.environment, start, cfg.world());
      const OracleConfig ocfg = cfg.oracle();
      while (!state.done && state.elapsed < cfg.max_steps) {
        const Action a = oracle_policy(localize(state), task.demonstration, ocfg);
        state = step(state, a, cfg.dt);
      }
      return finish(task, localize(state).p, state.elapsed, cfg.success_radius);
    }
    default:
      return run_network_episode(task, kind, ctx);
  }
}

EvalOutput evaluate(const std::vector<TaskSpec>& tasks, PolicyKind kind, const EvalContext& ctx) {
  EvalOutput out;
  out.episodes.resize(tasks.size());
  const int threads = std::max(1, ctx.cfg.threads);
  if (threads == 1 || tasks.size() < 2) {
    for (std::size_t i = 0; i < tasks.size(); ++i) out.episodes[i] = run_episode(tasks[i], kind, ctx);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        out.episodes[i] = run_episode(tasks[i], kind, ctx);
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  out.report = aggregate_results(out.episodes, ctx.cfg.success_radius, ctx.cfg.fingerprint());
  return out;
}

void write_eval_records(std::ostream& out, const EvalOutput& result, const std::string& policy) {
  for (const auto& e : result.episodes) {
    Record rec("episode");
    rec.set("task", e.task_id);
    rec.set("policy", policy);
    rec.set("stop_x", e.stop_pos.x);
    rec.set("stop_y", e.stop_pos.y);
    rec.set("goal_x", e.goal.x);
    rec.set("goal_y", e.goal.y);
    rec.set("dist", e.distance);
    rec.set("success", static_cast<std::int64_t>(e.success ? 1 : 0));
    rec.set("steps", static_cast<std::int64_t>(e.steps));
    rec.set("nan_failure", static_cast<std::int64_t>(e.nan_failure ? 1 : 0));
    out << rec.format() << "\n";
  }
  Record rec("report");
  rec.set("policy", policy);
  rec.set("sr", result.report.success_rate);
  rec.set("ad", result.report.avg_distance);
  rec.set("md", result.report.median_distance);
  rec.set("episodes", result.report.episodes);
  rec.set("fingerprint", result.report.fingerprint);
  out << rec.format() << "\n";
}

MetricsReport reaggregate_records(std::istream& in, double success_radius) {
  std::vector<EpisodeResult> episodes;
  std::string fingerprint;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Record rec = Record::parse(line);
    if (rec.kind() == "episode") {
      EpisodeResult e;
      e.task_id = rec.get_int("task");
      e.stop_pos = {rec.get_double("stop_x"), rec.get_double("stop_y")};
      e.goal = {rec.get_double("goal_x"), rec.get_double("goal_y")};
      e.distance = rec.get_double("dist");
      e.success = rec.get_int("success") != 0;
      e.steps = static_cast<int>(rec.get_int("steps"));
      e.nan_failure = rec.get_int("nan_failure") != 0;
      episodes.push_back(e);
    } else if (rec.kind() == "report") {
      fingerprint = rec.get_string("fingerprint");
    }
  }
  return aggregate_results(episodes, success_radius, fingerprint);
}

std::vector<float> map_rgb(const SemanticMap<float>& map) {
  const int n = map.frame.cells;
  const std::size_t hw = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  std::vector<float> rgb(hw * 3, 0.f);
  float lo = 0.f, hi = 0.f;
  for (int c = 0; c < 3 && c < map.channels; ++c)
    for (std::size_t i = 0; i < hw; ++i) {
      const float v = map.features[static_cast<std::size_t>(c) * hw + i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const float span = hi - lo > 1e-12f ? hi - lo : 1.f;
  for (int c = 0; c < 3 && c < map.channels; ++c)
    for (std::size_t i = 0; i < hw; ++i)
      rgb[i * 3 + static_cast<std::size_t>(c)] =
          (map.features[static_cast<std::size_t>(c) * hw + i] - lo) / span * 0.5f;
  return rgb;
}

namespace {

void draw_polyline(Image& img, const MapFrame& frame, const std::vector<Vec2>& line, int scale, float r,
                   float g, float b) {
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Vec2 a = frame.world_to_map(line[i]) * static_cast<double>(scale);
    const Vec2 bb = frame.world_to_map(line[i + 1]) * static_cast<double>(scale);
    const double len = (bb - a).norm();
    const int samples = std::max(2, static_cast<int>(len * 2));
    for (int sidx = 0; sidx <= samples; ++sidx) {
      const Vec2 p = a + (bb - a) * (static_cast<double>(sidx) / samples);
      const int x = static_cast<int>(std::floor(p.x));
      const int y = static_cast<int>(std::floor(p.y));
      if (x < 0 || x >= img.width || y < 0 || y >= img.height) continue;
      float* px = &img.rgb[static_cast<std::size_t>((y * img.width + x) * 3)];
      px[0] = r;
      px[1] = g;
      px[2] = b;
    }
  }
}

}  // namespace

Image render_overlay(const MapFrame& frame, const std::vector<float>& map_rgb_or_empty,
                     const VisitationPair& pair, const std::vector<Vec2>& demonstration,
                     const std::vector<Vec2>& agent_trajectory, int scale) {
  const int n = frame.cells;
  Image img;
  img.width = n * scale;
  img.height = n * scale;
  img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0.f);

  const std::size_t hw = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  float dp_max = 0.f, dg_max = 0.f;
  if (pair.cells == n) {
    for (std::size_t i = 0; i < hw; ++i) {
      dp_max = std::max(dp_max, pair.dp[i]);
      dg_max = std::max(dg_max, pair.dg[i]);
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::size_t cell = static_cast<std::size_t>((y / scale) * n + (x / scale));
      float* px = &img.rgb[static_cast<std::size_t>((y * img.width + x) * 3)];
      if (!map_rgb_or_empty.empty()) {
        px[0] = map_rgb_or_empty[cell * 3 + 0];
        px[1] = map_rgb_or_empty[cell * 3 + 1];
        px[2] = map_rgb_or_empty[cell * 3 + 2];
      }
      if (dp_max > 0)
        px[0] = std::max(px[0], 0.15f + 0.85f * pair.dp[cell] / dp_max);
      if (dg_max > 0)
        px[1] = std::max(px[1], 0.15f + 0.85f * pair.dg[cell] / dg_max);
    }
  }
  // demonstration in red, agent trajectory in blue; both stay below the
  // distribution argmax intensity
  draw_polyline(img, frame, demonstration, scale, 0.85f, 0.1f, 0.1f);
  draw_polyline(img, frame, agent_trajectory, scale, 0.2f, 0.2f, 0.9f);
  if (!agent_trajectory.empty()) {
    const Vec2 p = frame.world_to_map(agent_trajectory.back()) * static_cast<double>(scale);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = static_cast<int>(p.x) + dx, y = static_cast<int>(p.y) + dy;
        if (x < 0 || x >= img.width || y < 0 || y >= img.height) continue;
        float* px = &img.rgb[static_cast<std::size_t>((y * img.width + x) * 3)];
        px[0] = px[1] = px[2] = 1.0f;
      }
  }
  return img;
}

}  // namespace pvn
