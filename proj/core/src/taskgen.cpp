#include "pvn/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "pvn/records.hpp"

namespace pvn {

namespace {

// two interchangeable surface nouns per object class keeps every single
// token under the P(tau) < 0.1 extraction threshold
const char* kClassNouns[][2] = {
    {"barrel", "drum"},     {"tree", "pine"},        {"rock", "boulder"},
    {"house", "cabin"},     {"fence", "railing"},    {"well", "fountain"},
    {"mushroom", "toadstool"}, {"booth", "kiosk"},   {"anvil", "forge"},
    {"crate", "box"},       {"statue", "monument"},  {"lamp", "lantern"},
    {"boat", "canoe"},      {"tower", "turret"},     {"cone", "pylon"},
    {"bench", "seat"},      {"wheel", "tire"},       {"pot", "kettle"},
    {"chair", "stool"},     {"flag", "banner"},
};
constexpr int kMaxClasses = 20;

const char* kAdjectives[] = {"big", "small", "old", "little", "tall", "round", "plain", "odd"};

const char* kFillerWords[] = {
    "go",   "to",    "the",  "move", "towards", "head",  "straight", "fly",    "and",  "stop",
    "there", "reach", "walk", "over", "side",   "of",    "on",       "stay",   "its",  "at",
    "left", "right", "pass", "past", "then",    "keep",  "passing",  "around", "circle", "loop",
    "round", "near"};

std::string render_noun(int class_id, const Vocabulary& vocab, Rng& rng, bool with_adjective) {
  (void)vocab;
  std::string out = "the ";
  if (with_adjective && rng.bernoulli(0.35))
    out += std::string(kAdjectives[rng.uniform_int(0, 7)]) + " ";
  out += kClassNouns[class_id][rng.uniform_int(0, 1)];
  return out;
}

std::string render_instruction(TaskTemplate tmpl, int side, const std::string& a, const std::string& b,
                               Rng& rng) {
  const std::string s = side > 0 ? "left" : "right";
  switch (tmpl) {
    case TaskTemplate::Goto: {
      const char* forms[] = {"go to %A%",      "move towards %A%", "head straight to %A%",
                             "fly to %A% and stop there", "reach %A%",        "walk over to %A%"};
      std::string f = forms[rng.uniform_int(0, 5)];
      f.replace(f.find("%A%"), 3, a);
      return f;
    }
    case TaskTemplate::GotoSide: {
      const char* forms[] = {"go to the %S% side of %A%", "stop on the %S% side of %A%",
                             "move to the %S% of %A%", "reach %A% and stay on its %S% side",
                             "head to the %S% side of %A%"};
      std::string f = forms[rng.uniform_int(0, 4)];
      f.replace(f.find("%S%"), 3, s);
      f.replace(f.find("%A%"), 3, a);
      return f;
    }
    case TaskTemplate::PassThenGoto: {
      const char* forms[] = {"pass %A% on the %S% then go to %B%",
                             "go past %A% on the %S% side and head to %B%",
                             "passing %A% on the %S% move towards %B%",
                             "keep to the %S% of %A% and reach %B%",
                             "pass on the %S% of %A% then move to %B%"};
      std::string f = forms[rng.uniform_int(0, 4)];
      f.replace(f.find("%S%"), 3, s);
      f.replace(f.find("%A%"), 3, a);
      f.replace(f.find("%B%"), 3, b);
      return f;
    }
    case TaskTemplate::AroundThenGoto: {
      const char* forms[] = {"go around %A% then move towards %B%", "circle %A% and head to %B%",
                             "loop around %A% then go to %B%", "go round %A% and move to %B%",
                             "go around %A% and stop near %B%"};
      std::string f = forms[rng.uniform_int(0, 4)];
      f.replace(f.find("%A%"), 3, a);
      f.replace(f.find("%B%"), 3, b);
      return f;
    }
  }
  throw std::logic_error("render_instruction: unknown template");
}

std::vector<Vec2> round_corners(const std::vector<Vec2>& wps, double radius) {
  if (wps.size() < 3) return wps;
  std::vector<Vec2> out;
  out.push_back(wps.front());
  for (std::size_t i = 1; i + 1 < wps.size(); ++i) {
    const Vec2 a = wps[i - 1], b = wps[i], c = wps[i + 1];
    const double la = (b - a).norm(), lc = (c - b).norm();
    const double r = std::min({radius, la * 0.45, lc * 0.45});
    const Vec2 e = b - (b - a).normalized() * r;
    const Vec2 x = b + (c - b).normalized() * r;
    out.push_back(e);
    for (int k = 1; k < 6; ++k) {  // quadratic bezier blend through the corner
      const double t = static_cast<double>(k) / 6.0;
      const Vec2 p = e * ((1 - t) * (1 - t)) + b * (2 * t * (1 - t)) + x * (t * t);
      out.push_back(p);
    }
    out.push_back(x);
  }
  out.push_back(wps.back());
  return out;
}

std::vector<Vec2> resample_polyline(const std::vector<Vec2>& line, double spacing) {
  std::vector<Vec2> out;
  out.push_back(line.front());
  double carried = 0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    Vec2 a = line[i];
    const Vec2 b = line[i + 1];
    double seg = (b - a).norm();
    while (carried + seg >= spacing) {
      const double need = spacing - carried;
      a = a + (b - a).normalized() * need;
      out.push_back(a);
      seg -= need;
      carried = 0;
    }
    carried += seg;
  }
  if ((out.back() - line.back()).norm() > 1e-9) out.push_back(line.back());
  return out;
}

bool inside_field(Vec2 p, double half, double margin) {
  return std::abs(p.x) <= half - margin && std::abs(p.y) <= half - margin;
}

}  // namespace

// ---- Vocabulary ----

int Vocabulary::add(const std::string& token) {
  tokens_.push_back(token);
  return static_cast<int>(tokens_.size()) - 1;
}

Vocabulary Vocabulary::standard(int n_obj) {
  if (n_obj > kMaxClasses) throw std::invalid_argument("Vocabulary: too many object classes");
  Vocabulary v;
  v.add("<unk>");
  for (const char* w : kFillerWords) v.add(w);
  for (const char* w : kAdjectives) v.add(w);
  for (int c = 0; c < n_obj; ++c) {
    v.class_labels_.push_back(kClassNouns[c][0]);
    for (int s = 0; s < 2; ++s)
      if (v.id(kClassNouns[c][s]) == 0) v.add(kClassNouns[c][s]);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == token) return static_cast<int>(i);
  return 0;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  std::string word;
  for (char c : text + " ") {
    if (c == ' ') {
      if (!word.empty()) ids.push_back(id(word));
      word.clear();
    } else {
      word.push_back(c);
    }
  }
  return ids;
}

// ---- environment generation ----

std::vector<LandmarkSpec> generate_environment(std::uint64_t seed, const TaskGenConfig& cfg) {
  const double half = cfg.field_edge / 2.0;
  for (std::uint64_t sub = 0;; ++sub) {  // regenerate with the next derived seed on failure
    Rng rng(seed + sub * 0x9e3779b97f4a7c15ull);
    const int count = static_cast<int>(rng.uniform_int(cfg.min_landmarks, cfg.max_landmarks));
    std::vector<int> classes(static_cast<std::size_t>(cfg.n_obj));
    for (int i = 0; i < cfg.n_obj; ++i) classes[static_cast<std::size_t>(i)] = i;
    rng.shuffle(classes);
    std::vector<LandmarkSpec> out;
    bool ok = true;
    for (int i = 0; i < count && ok; ++i) {
      LandmarkSpec lm;
      lm.class_id = classes[static_cast<std::size_t>(i)];
      lm.radius = rng.uniform(1.2, 2.2);
      lm.color = landmark_color(lm.class_id);
      bool placed = false;
      for (int attempt = 0; attempt < 200; ++attempt) {
        lm.pos = {rng.uniform(-half + 3.0, half - 3.0), rng.uniform(-half + 3.0, half - 3.0)};
        bool clear = true;
        for (const auto& other : out)
          if ((other.pos - lm.pos).norm() < cfg.min_separation) {
            clear = false;
            break;
          }
        if (clear) {
          placed = true;
          break;
        }
      }
      if (!placed) ok = false;
      out.push_back(lm);
    }
    if (ok) return out;
  }
}

// ---- oracle policy ----

double polyline_length(const std::vector<Vec2>& line) {
  double len = 0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) len += (line[i + 1] - line[i]).norm();
  return len;
}

double distance_to_polyline(Vec2 p, const std::vector<Vec2>& line) {
  double best = (p - line.front()).norm();
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Vec2 a = line[i], b = line[i + 1];
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, (p - (a + ab * t)).norm());
  }
  return best;
}

Action oracle_policy(const Pose& pose, const std::vector<Vec2>& xi, const OracleConfig& cfg) {
  if (xi.empty()) throw std::invalid_argument("oracle_policy: empty trajectory");
  if ((pose.p - xi.back()).norm() <= cfg.stop_radius) return Action::stop();

  // closest point on the polyline
  std::size_t best_seg = 0;
  double best_t = 0, best_d = (pose.p - xi.front()).norm();
  for (std::size_t i = 0; i + 1 < xi.size(); ++i) {
    const Vec2 a = xi[i], ab = xi[i + 1] - a;
    const double len2 = ab.dot(ab);
    const double t = len2 > 0 ? std::clamp((pose.p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const double d = (pose.p - (a + ab * t)).norm();
    if (d < best_d) {
      best_d = d;
      best_seg = i;
      best_t = t;
    }
  }
  // pursuit point: lookahead distance further along the path
  double remaining = cfg.lookahead;
  Vec2 target = xi.back();
  Vec2 cur = xi[best_seg] + (xi[best_seg + 1] - xi[best_seg]) * best_t;
  for (std::size_t i = best_seg; i + 1 < xi.size(); ++i) {
    const Vec2 b = xi[i + 1];
    const double seg = (b - cur).norm();
    if (seg >= remaining) {
      target = cur + (b - cur).normalized() * remaining;
      remaining = 0;
      break;
    }
    remaining -= seg;
    cur = b;
  }
  const Vec2 to_target = target - pose.p;
  const double bearing = normalize_angle(std::atan2(to_target.y, to_target.x) - pose.heading);
  const double omega = std::clamp(cfg.k_omega * bearing, -cfg.omega_max, cfg.omega_max);
  const double v = cfg.v_max * std::max(0.0, std::cos(bearing));
  return Action::velocity(v, omega);
}

// ---- task generation ----

namespace {

/// Exact-arc kinematics identical to simworld::step, used for generator-side
/// validation rollouts (no rendering involved).
Pose advance(const Pose& pose, double v, double w, double dt) {
  Pose next = pose;
  if (std::abs(w) < 1e-6) {
    next.p.x += v * dt * std::cos(pose.heading);
    next.p.y += v * dt * std::sin(pose.heading);
  } else {
    next.p.x += (v / w) * (std::sin(pose.heading + w * dt) - std::sin(pose.heading));
    next.p.y += (v / w) * (-std::cos(pose.heading + w * dt) + std::cos(pose.heading));
  }
  next.heading = normalize_angle(pose.heading + w * dt);
  return next;
}

bool oracle_rollout_ok(const TaskSpec& task, const TaskGenConfig& cfg) {
  OracleConfig ocfg;
  Pose pose = task.start;
  for (int t = 0; t < cfg.max_oracle_steps; ++t) {
    const Action a = oracle_policy(pose, task.demonstration, ocfg);
    if (a.kind == Action::Kind::Stop) return (pose.p - task.goal).norm() < 2.5;
    pose = advance(pose, a.v, a.omega, cfg.dt);
  }
  return false;
}

}  // namespace

TaskSpec generate_task(const std::vector<LandmarkSpec>& environment, std::uint64_t seed,
                       const TaskGenConfig& cfg, const Vocabulary& vocab) {
  if (environment.size() < 2) throw std::invalid_argument("generate_task: need at least 2 landmarks");
  const double half = cfg.field_edge / 2.0;
  Rng rng(seed);

  for (int attempt = 0; attempt < 400; ++attempt) {
    // template mix keeps average object mentions per instruction low enough
    // for the PMI tau threshold
    const double roll = rng.uniform();
    TaskTemplate tmpl = roll < 0.3    ? TaskTemplate::Goto
                        : roll < 0.6  ? TaskTemplate::GotoSide
                        : roll < 0.8  ? TaskTemplate::PassThenGoto
                                      : TaskTemplate::AroundThenGoto;
    const bool two_stage = tmpl == TaskTemplate::PassThenGoto || tmpl == TaskTemplate::AroundThenGoto;

    const auto& first = environment[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(environment.size()) - 1))];

    // sample the start pose relative to the first referenced landmark
    const double approach_angle = rng.uniform(-M_PI, M_PI);
    const double dist_a = tmpl == TaskTemplate::AroundThenGoto ? rng.uniform(6.0, 9.0)
                                                               : rng.uniform(8.0, 18.0);
    const Vec2 u{std::cos(approach_angle), std::sin(approach_angle)};
    Pose start;
    start.p = first.pos - u * dist_a;
    start.heading = normalize_angle(approach_angle + rng.uniform(-cfg.max_bearing_offset, cfg.max_bearing_offset));
    if (!inside_field(start.p, half, 2.0)) continue;
    bool start_clear = true;
    for (const auto& lm : environment)
      if ((lm.pos - start.p).norm() < 4.0) start_clear = false;
    if (!start_clear) continue;

    int side = rng.bernoulli(0.5) ? 1 : -1;  // +1 left, -1 right
    const Vec2 ua = (first.pos - start.p).normalized();

    const LandmarkSpec* second = nullptr;
    if (two_stage) {
      std::vector<const LandmarkSpec*> candidates;
      for (const auto& lm : environment) {
        if (lm.class_id == first.class_id) continue;
        const double d_ab = (lm.pos - first.pos).norm();
        if (d_ab < 8.0 || d_ab > (tmpl == TaskTemplate::PassThenGoto ? 16.0 : 12.0)) continue;
        const Vec2 ub = (lm.pos - first.pos).normalized();
        const double cosang = ua.dot(ub);
        if (tmpl == TaskTemplate::PassThenGoto) {
          // B ahead past A and clearly off-axis, so the exit leg stays in
          // the stated half-plane near A
          if (cosang < 0.5) continue;
          if (std::abs(ua.cross(lm.pos - first.pos)) < 2.5) continue;
        } else {
          if (cosang > -0.34) continue;  // B on the far side so the loop does not self-cross
        }
        candidates.push_back(&lm);
      }
      if (candidates.empty()) continue;
      second = candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
      // the pass side is the side B actually lies on
      if (tmpl == TaskTemplate::PassThenGoto) side = ua.cross(second->pos - first.pos) > 0 ? 1 : -1;
    }
    const Vec2 m = ua.perp_left() * static_cast<double>(side);  // offset toward the stated side

    std::vector<Vec2> wps;
    Vec2 goal;
    switch (tmpl) {
      case TaskTemplate::Goto: {
        goal = first.pos - ua * cfg.goal_shortfall;
        wps = {start.p, goal};
        break;
      }
      case TaskTemplate::GotoSide: {
        const Vec2 flank = first.pos + m * cfg.side_offset;
        goal = first.pos + m * 2.2 + ua * 1.2;
        wps = {start.p, flank - ua * 8.0, flank, goal};
        break;
      }
      case TaskTemplate::PassThenGoto: {
        const Vec2 p1 = first.pos + m * cfg.side_offset - ua * 5.0;
        const Vec2 p2 = first.pos + m * cfg.side_offset + ua * 4.0;
        goal = second->pos - (second->pos - p2).normalized() * cfg.goal_shortfall;
        wps = {start.p, p1, p2, goal};
        break;
      }
      case TaskTemplate::AroundThenGoto: {
        const double r = cfg.around_radius;
        const Vec2 entry_dir = (start.p - first.pos).normalized();
        const Vec2 exit_dir = (second->pos - first.pos).normalized();
        const double a0 = std::atan2(entry_dir.y, entry_dir.x);
        const double a1 = std::atan2(exit_dir.y, exit_dir.x);
        // sweep the long way around the landmark
        double sweep = normalize_angle(a1 - a0);
        if (sweep > 0)
          sweep -= 2.0 * M_PI;
        else
          sweep += 2.0 * M_PI;
        wps = {start.p};
        const int steps = std::max(6, static_cast<int>(std::ceil(std::abs(sweep) / 0.3)));
        for (int i = 0; i <= steps; ++i) {
          const double ang = a0 + sweep * static_cast<double>(i) / static_cast<double>(steps);
          wps.push_back(first.pos + Vec2{std::cos(ang), std::sin(ang)} * r);
        }
        const Vec2 exit_pt = wps.back();
        goal = second->pos - (second->pos - exit_pt).normalized() * cfg.goal_shortfall;
        wps.push_back(goal);
        break;
      }
    }

    bool ok = (goal - start.p).norm() >= cfg.min_goal_distance;
    for (const auto& w : wps)
      if (!inside_field(w, half, 0.5)) ok = false;
    if (!ok) continue;

    TaskSpec task;
    task.tmpl = tmpl;
    task.target_class = two_stage ? second->class_id : first.class_id;
    task.via_class = two_stage ? first.class_id : (tmpl == TaskTemplate::GotoSide ? first.class_id : -1);
    task.side = side;
    task.environment = environment;
    task.start = start;
    task.goal = goal;
    task.demonstration = resample_polyline(round_corners(wps, 2.0), cfg.waypoint_spacing);
    for (const auto& p : task.demonstration)
      if (!inside_field(p, half, 0.4)) ok = false;
    if (!ok) continue;
    if (!oracle_rollout_ok(task, cfg)) continue;

    const std::string a_str = render_noun(first.class_id, vocab, rng, true);
    const std::string b_str = two_stage ? render_noun(second->class_id, vocab, rng, true) : "";
    task.instruction.text = render_instruction(tmpl, side, a_str, b_str, rng);
    task.instruction.token_ids = vocab.encode(task.instruction.text);
    return task;
  }
  throw std::runtime_error("generate_task: no feasible task after bounded retries");
}

// ---- PMI extraction ----

bool AlignmentTable::is_aligned(int class_id, int token_id) const {
  for (const auto& e : entries)
    if (e.class_id == class_id && e.token_id == token_id) return true;
  return false;
}

std::vector<float> AlignmentTable::mention_labels(const std::vector<int>& token_ids, int n_obj) const {
  std::vector<float> labels(static_cast<std::size_t>(n_obj), 0.f);
  for (const auto& e : entries) {
    if (e.class_id < 0 || e.class_id >= n_obj) continue;
    for (int t : token_ids)
      if (t == e.token_id) labels[static_cast<std::size_t>(e.class_id)] = 1.f;
  }
  return labels;
}

AlignmentTable extract_alignments(const std::vector<TaskSpec>& tasks, int n_obj, int vocab_size,
                                  const PmiConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("extract_alignments: empty dataset");
  const double n = static_cast<double>(tasks.size());
  std::vector<double> count_obj(static_cast<std::size_t>(n_obj), 0);
  std::vector<double> count_tok(static_cast<std::size_t>(vocab_size), 0);
  std::vector<double> count_joint(static_cast<std::size_t>(n_obj * vocab_size), 0);

  for (const auto& task : tasks) {
    std::set<int> near_classes;
    for (const auto& lm : task.environment)
      if (distance_to_polyline(lm.pos, task.demonstration) <= cfg.near_distance)
        near_classes.insert(lm.class_id);
    std::set<int> toks(task.instruction.token_ids.begin(), task.instruction.token_ids.end());
    for (int c : near_classes) count_obj[static_cast<std::size_t>(c)] += 1;
    for (int t : toks) count_tok[static_cast<std::size_t>(t)] += 1;
    for (int c : near_classes)
      for (int t : toks) count_joint[static_cast<std::size_t>(c * vocab_size + t)] += 1;
  }

  AlignmentTable table;
  for (int c = 0; c < n_obj; ++c)
    for (int t = 0; t < vocab_size; ++t) {
      const double pj = count_joint[static_cast<std::size_t>(c * vocab_size + t)] / n;
      if (pj <= 0) continue;  // zero-count events contribute zero PMI
      const double po = count_obj[static_cast<std::size_t>(c)] / n;
      const double pt = count_tok[static_cast<std::size_t>(t)] / n;
      const double pmi = pj * std::log(pj / (po * pt));
      if (pmi > cfg.t_pmi && pt < cfg.t_tau) table.entries.push_back({c, t, pmi});
    }
  return table;
}

// ---- dataset persistence ----

void save_dataset(const std::string& tasks_path, const std::string& env_dir,
                  const std::vector<TaskSpec>& tasks) {
  namespace fs = std::filesystem;
  fs::create_directories(env_dir);
  std::ofstream f(tasks_path, std::ios::trunc);
  if (!f) throw std::runtime_error("save_dataset: cannot open '" + tasks_path + "'");
  for (const auto& task : tasks) {
    char envname[64];
    std::snprintf(envname, sizeof(envname), "env_%05lld.txt", static_cast<long long>(task.id));
    const std::string env_path = (fs::path(env_dir) / envname).string();
    save_environment(env_path, task.environment);

    Record rec("task");
    rec.set("id", static_cast<std::int64_t>(task.id));
    rec.set("env", (fs::path(env_dir).filename() / envname).string());
    std::string toks;
    for (std::size_t i = 0; i < task.instruction.token_ids.size(); ++i) {
      if (i) toks.push_back(',');
      toks += std::to_string(task.instruction.token_ids[i]);
    }
    rec.set("tokens", toks);
    rec.set("text", task.instruction.text);
    rec.set("start", std::vector<double>{task.start.p.x, task.start.p.y, task.start.heading});
    std::vector<double> xi;
    xi.reserve(task.demonstration.size() * 2);
    for (const auto& p : task.demonstration) {
      xi.push_back(p.x);
      xi.push_back(p.y);
    }
    rec.set("xi", xi);
    rec.set("goal", std::vector<double>{task.goal.x, task.goal.y});
    rec.set("template", static_cast<std::int64_t>(task.tmpl));
    rec.set("target_class", static_cast<std::int64_t>(task.target_class));
    rec.set("via_class", static_cast<std::int64_t>(task.via_class));
    rec.set("side", static_cast<std::int64_t>(task.side));
    f << rec.format() << "\n";
  }
}

std::vector<TaskSpec> load_dataset(const std::string& tasks_path, const std::string& base_dir,
                                   const Vocabulary& vocab) {
  namespace fs = std::filesystem;
  std::ifstream f(tasks_path);
  if (!f) throw std::runtime_error("load_dataset: cannot open '" + tasks_path + "'");
  std::vector<TaskSpec> tasks;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const Record rec = Record::parse(line);
    if (rec.kind() != "task") continue;
    TaskSpec task;
    task.id = rec.get_int("id");
    task.environment = load_environment((fs::path(base_dir) / rec.get_string("env")).string());
    const std::string toks = rec.get_string("tokens");
    std::size_t pos = 0;
    while (pos < toks.size()) {
      std::size_t next = toks.find(',', pos);
      if (next == std::string::npos) next = toks.size();
      task.instruction.token_ids.push_back(std::stoi(toks.substr(pos, next - pos)));
      pos = next + 1;
    }
    task.instruction.text = rec.get_string("text");
    const auto start = rec.get_doubles("start");
    task.start.p = {start[0], start[1]};
    task.start.heading = start[2];
    const auto xi = rec.get_doubles("xi");
    for (std::size_t i = 0; i + 1 < xi.size(); i += 2) task.demonstration.push_back({xi[i], xi[i + 1]});
    const auto goal = rec.get_doubles("goal");
    task.goal = {goal[0], goal[1]};
    task.tmpl = static_cast<TaskTemplate>(rec.get_int("template"));
    task.target_class = static_cast<int>(rec.get_int("target_class"));
    task.via_class = static_cast<int>(rec.get_int("via_class"));
    task.side = static_cast<int>(rec.get_int("side"));
    (void)vocab;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace pvn
