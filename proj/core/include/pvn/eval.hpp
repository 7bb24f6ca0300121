#pragma once

#include <ostream>

#include "pvn/config.hpp"
#include "pvn/controller.hpp"
#include "pvn/taskgen.hpp"
#include "pvn/trainer.hpp"
#include "pvn/visitnet.hpp"

namespace pvn {

enum class PolicyKind { Pvn, PvnNoInstruction, Stop, Average, Oracle, IdealAct };

PolicyKind parse_policy(const std::string& name);  // throws on unknown
std::string policy_name(PolicyKind kind);

struct EpisodeResult {
  std::int64_t task_id = 0;
  Vec2 stop_pos;
  Vec2 goal;
  double distance = 0;
  bool success = false;
  int steps = 0;
  bool nan_failure = false;
};

struct MetricsReport {
  double success_rate = 0;     // percent
  double avg_distance = 0;
  double median_distance = 0;  // lower median
  std::int64_t episodes = 0;
  std::string fingerprint;
};

MetricsReport aggregate_results(const std::vector<EpisodeResult>& results, double success_radius,
                                const std::string& fingerprint);

struct EvalContext {
  RunConfig cfg;
  const Stage1Model<float>* stage1 = nullptr;  // required for Pvn/IdealAct/NoInstruction
  const ActHead<float>* act = nullptr;         // required for Pvn/IdealAct/NoInstruction
};

/// Model dimensions implied by a run configuration.
Stage1Model<float>::Dims stage1_dims(const RunConfig& cfg, int vocab_size);

/// Deterministic seed derivation; train and eval task suites use different
/// streams so they stay disjoint for any base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

/// Task suite generation for a config (stream 10 = training, 20 = held-out).
std::vector<TaskSpec> generate_task_suite(const RunConfig& cfg, std::uint64_t stream, int count);

EpisodeResult run_episode(const TaskSpec& task, PolicyKind kind, const EvalContext& ctx);

struct EvalOutput {
  MetricsReport report;
  std::vector<EpisodeResult> episodes;
};

/// Episodes run in parallel across a worker pool (read-only weights); the
/// report reduction is single-threaded in task order, so results are
/// identical for any thread count.
EvalOutput evaluate(const std::vector<TaskSpec>& tasks, PolicyKind kind, const EvalContext& ctx);

/// One "episode" record per line plus a trailing "report" record.
void write_eval_records(std::ostream& out, const EvalOutput& result, const std::string& policy);

/// Recomputes the report from persisted per-episode records; must reproduce
/// the stored report bit-exactly.
MetricsReport reaggregate_records(std::istream& in, double success_radius);

/// Top-down composite: map RGB (first three channels), d^p in red, d^g in
/// green, demonstration and agent trajectories, agent marker.
Image render_overlay(const MapFrame& frame, const std::vector<float>& map_rgb_or_empty,
                     const VisitationPair& pair, const std::vector<Vec2>& demonstration,
                     const std::vector<Vec2>& agent_trajectory, int scale = 8);

/// First three channels of the semantic map normalized into [0,1] for
/// visualization (N*N*3, row-major).
std::vector<float> map_rgb(const SemanticMap<float>& map);

}  // namespace pvn
