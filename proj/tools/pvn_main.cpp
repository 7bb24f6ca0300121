// Command-line front end: dataset generation, PMI alignment extraction, both
// training stages, evaluation with baselines and ablations, the
// visitation-bound verifier, and overlay rendering.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "pvn/checkpoint.hpp"
#include "pvn/eval.hpp"
#include "pvn/mdpbound.hpp"
#include "pvn/records.hpp"
#include "pvn/trainer.hpp"

namespace fs = std::filesystem;
using namespace pvn;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string profile = "desk";
  std::uint64_t seed = 1;
  std::string out = "out";
};

RunConfig resolve_config(const CommonOpts& opts, bool seed_given, bool profile_given) {
  RunConfig cfg = opts.profile == "paper" ? RunConfig::paper() : RunConfig::desk();
  if (opts.profile != "paper" && opts.profile != "desk")
    throw CLI::ValidationError("--profile must be 'paper' or 'desk'");
  if (!opts.config_path.empty()) cfg = load_config_file(opts.config_path, cfg);
  if (seed_given) cfg.seed = opts.seed;
  if (profile_given) cfg.profile = opts.profile;
  return cfg;
}

void save_alignments(const std::string& path, const AlignmentTable& table, const Vocabulary& vocab) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  for (const auto& e : table.entries) {
    Record rec("align");
    rec.set("class", static_cast<std::int64_t>(e.class_id));
    rec.set("token", static_cast<std::int64_t>(e.token_id));
    rec.set("pmi", e.pmi);
    rec.set("class_label", vocab.class_label(e.class_id));
    rec.set("token_text", vocab.token(e.token_id));
    f << rec.format() << "\n";
  }
}

AlignmentTable load_alignments(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' (run `pvn align` first)");
  AlignmentTable table;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const Record rec = Record::parse(line);
    if (rec.kind() != "align") continue;
    table.entries.push_back({static_cast<int>(rec.get_int("class")),
                             static_cast<int>(rec.get_int("token")), rec.get_double("pmi")});
  }
  return table;
}

Stage1Model<float> load_stage1(const RunConfig& cfg, const std::string& path) {
  const Vocabulary vocab = Vocabulary::standard(cfg.n_obj);
  Rng rng(0);
  auto model = Stage1Model<float>::make(stage1_dims(cfg, vocab.size()), rng);
  params_from_entries(load_checkpoint(path), model.params());
  return model;
}

ActHead<float> load_stage2(const RunConfig& cfg, const std::string& path) {
  Rng rng(0);
  auto act = ActHead<float>::make(2 * cfg.crop_k * cfg.crop_k, 64, rng);
  params_from_entries(load_checkpoint(path), act.params());
  return act;
}

int cmd_gen(const RunConfig& cfg, const std::string& out, int train_count, int eval_count) {
  fs::create_directories(out);
  const auto train = generate_task_suite(cfg, 10, train_count > 0 ? train_count : cfg.train_tasks);
  const auto eval_suite = generate_task_suite(cfg, 20, eval_count > 0 ? eval_count : cfg.eval_tasks);
  save_dataset((fs::path(out) / "train_tasks.txt").string(), (fs::path(out) / "envs").string(), train);
  save_dataset((fs::path(out) / "eval_tasks.txt").string(), (fs::path(out) / "envs_eval").string(),
               eval_suite);
  save_config_file((fs::path(out) / "config.txt").string(), cfg);
  std::cout << "wrote " << train.size() << " training tasks and " << eval_suite.size()
            << " held-out tasks under " << out << " (fingerprint " << cfg.fingerprint() << ")\n";
  return 0;
}

int cmd_align(const RunConfig& cfg, const std::string& out) {
  const Vocabulary vocab = Vocabulary::standard(cfg.n_obj);
  const auto tasks = load_dataset((fs::path(out) / "train_tasks.txt").string(), out, vocab);
  const AlignmentTable table = extract_alignments(tasks, cfg.n_obj, vocab.size(), cfg.pmi());
  save_alignments((fs::path(out) / "alignments.txt").string(), table, vocab);
  std::cout << "extracted " << table.entries.size() << " word-object alignments from "
            << tasks.size() << " tasks\n";
  return 0;
}

int cmd_train_stage1(const RunConfig& cfg, const std::string& out) {
  const Vocabulary vocab = Vocabulary::standard(cfg.n_obj);
  const auto tasks = load_dataset((fs::path(out) / "train_tasks.txt").string(), out, vocab);
  const AlignmentTable table = load_alignments((fs::path(out) / "alignments.txt").string());
  Rng model_rng(derive_seed(cfg.seed, 30, 0));
  auto model = Stage1Model<float>::make(stage1_dims(cfg, vocab.size()), model_rng);
  Rng train_rng(derive_seed(cfg.seed, 31, 0));
  std::ofstream log((fs::path(out) / "train_stage1_log.txt").string(), std::ios::trunc);
  const auto result = train_stage1(model, tasks, table, cfg, train_rng, &log,
                                   (fs::path(out) / "checkpoints").string());
  save_checkpoint((fs::path(out) / "stage1.pvnckpt").string(), entries_from_params(model.params()));
  std::cout << "stage-1 trained for " << result.epoch_loss.size() << " epochs; loss "
            << result.epoch_loss.front() << " -> " << result.epoch_loss.back() << "\n";
  return 0;
}

int cmd_train_stage2(const RunConfig& cfg, const std::string& out) {
  const Vocabulary vocab = Vocabulary::standard(cfg.n_obj);
  const auto tasks = load_dataset((fs::path(out) / "train_tasks.txt").string(), out, vocab);
  Rng model_rng(derive_seed(cfg.seed, 40, 0));
  auto act = ActHead<float>::make(2 * cfg.crop_k * cfg.crop_k, 64, model_rng);
  Rng train_rng(derive_seed(cfg.seed, 41, 0));
  std::ofstream log((fs::path(out) / "train_stage2_log.txt").string(), std::ios::trunc);
  const auto result = train_stage2_daggerfm(act, tasks, cfg, train_rng, &log);
  save_checkpoint((fs::path(out) / "stage2.pvnckpt").string(), entries_from_params(act.params()));
  std::cout << "stage-2 trained for " << result.iter_loss.size() << " iterations; loss "
            << result.iter_loss.front() << " -> " << result.iter_loss.back() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& out, const std::string& policy_name) {
  const Vocabulary vocab = Vocabulary::standard(cfg.n_obj);
  const PolicyKind kind = parse_policy(policy_name);
  const auto tasks = load_dataset((fs::path(out) / "eval_tasks.txt").string(), out, vocab);

  EvalContext ctx{cfg, nullptr, nullptr};
  Stage1Model<float> stage1;
  ActHead<float> act;
  const bool needs_model = kind == PolicyKind::Pvn || kind == PolicyKind::IdealAct ||
                           kind == PolicyKind::PvnNoInstruction;
  if (needs_model) {
    stage1 = load_stage1(cfg, (fs::path(out) / "stage1.pvnckpt").string());
    act = load_stage2(cfg, (fs::path(out) / "stage2.pvnckpt").string());
    ctx.stage1 = &stage1;
    ctx.act = &act;
  }
  const EvalOutput result = evaluate(tasks, kind, ctx);
  std::ofstream records((fs::path(out) / ("eval_" + policy_name + ".txt")).string(), std::ios::trunc);
  write_eval_records(records, result, policy_name);
  std::cout << policy_name << ": SR " << result.report.success_rate << "% | AD "
            << result.report.avg_distance << " m | MD " << result.report.median_distance << " m ("
            << result.report.episodes << " episodes)\n";
  return 0;
}

int cmd_verify_bound(const std::string& out, int trials, std::uint64_t seed) {
  fs::create_directories(out);
  std::ofstream records((fs::path(out) / "bound_trials.txt").string(), std::ios::trunc);
  const VerifySummary summary = verify_bound_sweep(trials, seed, &records);
  std::cout << "trials " << summary.trials << " | violations " << summary.violations
            << " | infinite " << summary.infinite_cases << " | max lhs/rhs " << summary.max_ratio
            << " | max value-route gap " << summary.max_value_gap << "\n";
  if (summary.violations > 0 || !summary.value_agreement_ok) {
    std::cerr << "verify-bound: FAILED\n";
    return 2;
  }
  return 0;
}

int cmd_render(const RunConfig& cfg, const std::string& out, int task_index) {
  const Vocabulary vocab = Vocabulary::standard(cfg.n_obj);
  const auto tasks = load_dataset((fs::path(out) / "eval_tasks.txt").string(), out, vocab);
  if (task_index < 0 || task_index >= static_cast<int>(tasks.size()))
    throw std::runtime_error("render: task index out of range");
  const TaskSpec& task = tasks[static_cast<std::size_t>(task_index)];

  auto stage1 = load_stage1(cfg, (fs::path(out) / "stage1.pvnckpt").string());
  auto act = load_stage2(cfg, (fs::path(out) / "stage2.pvnckpt").string());

  const CameraIntrinsics intr = cfg.intrinsics();
  const MapFrame frame = frame_for_task(task, cfg);
  VisitationPipeline<float> pipeline(stage1, frame, cfg.map_channels, intr, cfg.t_d);
  Pose start = task.start;
  start.elevation = cfg.camera_elevation;
  WorldState state = reset(task.environment, start, cfg.world());
  std::vector<Vec2> trajectory{start.p};
  const fs::path render_dir = fs::path(out) / "render";
  fs::create_directories(render_dir);

  while (!state.done && state.elapsed < cfg.max_steps) {
    const int t = state.elapsed + 1;
    const Image image = render_fpv(state, intr);
    if (t == 1) write_ppm((render_dir / "fpv_first.ppm").string(), image);
    const auto& pair = pipeline.observe(image, localize(state), task.instruction.token_ids, t);
    const CropTable ctable = build_crop(localize(state), frame, cfg.crop_k);
    const auto x = crop_distributions(pair.dp, pair.dg, frame.cells, ctable);
    Action action = stop_decision(act.act(x), cfg.kappa);
    if (t >= cfg.max_steps) action = Action::stop();
    state = step(state, action, cfg.dt);
    trajectory.push_back(localize(state).p);
  }

  const Image overlay = render_overlay(frame, map_rgb(pipeline.map()), pipeline.pair(),
                                       task.demonstration, trajectory);
  write_ppm((render_dir / "overlay.ppm").string(), overlay);

  // map visualization and raw tensor snapshot in the checkpoint format
  Image map_img;
  map_img.width = frame.cells;
  map_img.height = frame.cells;
  const auto rgb = map_rgb(pipeline.map());
  map_img.rgb.assign(rgb.begin(), rgb.end());
  write_ppm((render_dir / "map_rgb.ppm").string(), map_img);
  CheckpointEntry snapshot;
  snapshot.name = "semantic_map";
  snapshot.shape = {cfg.map_channels, frame.cells, frame.cells};
  snapshot.data = pipeline.map().features;
  save_checkpoint((render_dir / "map_tensor.pvnckpt").string(), {snapshot});

  const double dist = (localize(state).p - task.goal).norm();
  std::cout << "task " << task_index << ": \"" << task.instruction.text << "\" stop distance "
            << dist << " m; wrote " << (render_dir / "overlay.ppm").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Position-visitation navigation: two-stage policy, training, and verification"};
  app.require_subcommand(1);

  CommonOpts opts;
  bool seed_given = false, profile_given = false;
  app.add_option("--config", opts.config_path, "Config file (sectioned key=value)");
  app.add_option("--profile", opts.profile, "Profile: desk or paper")
      ->each([&](const std::string&) { profile_given = true; });
  app.add_option("--seed", opts.seed, "Run seed")->each([&](const std::string&) { seed_given = true; });
  app.add_option("--out", opts.out, "Working directory for datasets, checkpoints and reports");

  auto* gen = app.add_subcommand("gen", "Generate environments, tasks and demonstrations");
  gen->fallthrough();
  int train_count = 0, eval_count = 0;
  gen->add_option("--train-count", train_count, "Training tasks (default from config)");
  gen->add_option("--eval-count", eval_count, "Held-out tasks (default from config)");

  auto* align = app.add_subcommand("align", "Extract PMI word-object alignments");
  align->fallthrough();
  auto* train1 = app.add_subcommand("train-stage1", "Supervised visitation-prediction training");
  train1->fallthrough();
  auto* train2 = app.add_subcommand("train-stage2", "DAggerFM plan-execution training");
  train2->fallthrough();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy on the held-out tasks");
  eval_cmd->fallthrough();
  std::string policy = "pvn";
  eval_cmd->add_option("--policy", policy, "pvn|stop|average|oracle|ideal-act|pvn-no-instruction");

  auto* verify = app.add_subcommand("verify-bound", "Visitation-bound verifier on tabular MDPs");
  verify->fallthrough();
  int trials = 10000;
  verify->add_option("--trials", trials, "Random trials (plus the handcrafted corner cases)");

  auto* render = app.add_subcommand("render", "Roll out the trained policy and write overlays");
  render->fallthrough();
  int task_index = 0;
  render->add_option("--task", task_index, "Held-out task index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  try {
    const RunConfig cfg = resolve_config(opts, seed_given, profile_given);
    if (gen->parsed()) return cmd_gen(cfg, opts.out, train_count, eval_count);
    if (align->parsed()) return cmd_align(cfg, opts.out);
    if (train1->parsed()) return cmd_train_stage1(cfg, opts.out);
    if (train2->parsed()) return cmd_train_stage2(cfg, opts.out);
    if (eval_cmd->parsed()) return cmd_eval(cfg, opts.out, policy);
    if (verify->parsed()) return cmd_verify_bound(opts.out, trials, cfg.seed);
    if (render->parsed()) return cmd_render(cfg, opts.out, task_index);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
