#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvn/rng.hpp"
#include "pvn/simworld.hpp"

namespace pvn {

/// Token <-> id bijection plus the object-class label strings. Id 0 is
/// reserved for unknown tokens.
class Vocabulary {
 public:
  static Vocabulary standard(int n_obj);

  int id(const std::string& token) const;  // 0 when unknown
  const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(tokens_.size()); }

  const std::string& class_label(int class_id) const {
    return class_labels_[static_cast<std::size_t>(class_id)];
  }
  int n_classes() const { return static_cast<int>(class_labels_.size()); }

  std::vector<int> encode(const std::string& text) const;

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> class_labels_;
  int add(const std::string& token);
};

struct Instruction {
  std::vector<int> token_ids;
  std::string text;
};

enum class TaskTemplate { Goto, GotoSide, PassThenGoto, AroundThenGoto };

struct TaskSpec {
  std::int64_t id = 0;
  Instruction instruction;
  std::vector<LandmarkSpec> environment;
  Pose start;
  std::vector<Vec2> demonstration;  // Xi, starts at start.p, ends at goal
  Vec2 goal;
  // generator metadata, handy for template-semantics checks
  TaskTemplate tmpl = TaskTemplate::Goto;
  int target_class = -1;
  int via_class = -1;   // constrained/circled landmark for 2-stage templates
  int side = 0;         // +1 landmark kept on the left, -1 on the right
};

struct TaskGenConfig {
  int n_obj = 15;
  double field_edge = 50.0;
  int min_landmarks = 6;
  int max_landmarks = 13;
  double min_separation = 6.0;
  double side_offset = 4.0;
  double around_radius = 4.0;
  double goal_shortfall = 2.0;
  double waypoint_spacing = 0.5;
  double min_goal_distance = 6.0;  // keeps the Stop baseline honest
  double max_bearing_offset = 0.9;  // radians, start heading vs first target
  double dt = 0.5;
  int max_oracle_steps = 72;
};

std::vector<LandmarkSpec> generate_environment(std::uint64_t seed, const TaskGenConfig& cfg);

/// Samples a template, renders an instruction from its phrasing pool and
/// synthesizes the demonstration trajectory. Deterministic in (environment,
/// seed).
TaskSpec generate_task(const std::vector<LandmarkSpec>& environment, std::uint64_t seed,
                       const TaskGenConfig& cfg, const Vocabulary& vocab);

struct OracleConfig {
  double lookahead = 2.0;
  double k_omega = 1.5;
  double v_max = 0.88;
  double stop_radius = 1.0;
  double omega_max = 2.0;
};

/// Pure-pursuit steering along the demonstration; Stop within stop_radius of
/// the endpoint.
Action oracle_policy(const Pose& pose, const std::vector<Vec2>& xi, const OracleConfig& cfg);

/// Closest distance from a point to the polyline.
double distance_to_polyline(Vec2 p, const std::vector<Vec2>& line);

double polyline_length(const std::vector<Vec2>& line);

// ---- PMI word-object alignment extraction ----

struct AlignmentEntry {
  int class_id;
  int token_id;
  double pmi;
};

struct AlignmentTable {
  std::vector<AlignmentEntry> entries;
  bool is_aligned(int class_id, int token_id) const;
  /// 0/1 per object class: does any instruction token align with it.
  std::vector<float> mention_labels(const std::vector<int>& token_ids, int n_obj) const;
};

struct PmiConfig {
  double t_pmi = 0.008;
  double t_tau = 0.1;
  double near_distance = 15.0;
};

/// PMI(o,tau) = P(o,tau) * log(P(o,tau) / (P(o) P(tau))) with counts over the
/// dataset; keeps pairs with PMI > t_pmi and P(tau) < t_tau. Zero-count
/// events contribute zero.
AlignmentTable extract_alignments(const std::vector<TaskSpec>& tasks, int n_obj, int vocab_size,
                                  const PmiConfig& cfg);

// ---- dataset persistence ----

/// Writes envs/env_NNNNN.txt per unique environment and one task record per
/// line into `tasks_path`.
void save_dataset(const std::string& tasks_path, const std::string& env_dir,
                  const std::vector<TaskSpec>& tasks);
std::vector<TaskSpec> load_dataset(const std::string& tasks_path, const std::string& base_dir,
                                   const Vocabulary& vocab);

}  // namespace pvn
