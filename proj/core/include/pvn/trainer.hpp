#pragma once

#include <ostream>

#include "pvn/adam.hpp"
#include "pvn/config.hpp"
#include "pvn/controller.hpp"
#include "pvn/taskgen.hpp"
#include "pvn/visitnet.hpp"

namespace pvn {

/// Expert visitation targets: Gaussian-smoothed demonstration trajectory
/// (d_p*) and goal point (d_g*), both normalized over the map.
struct ExpertDistributions {
  std::vector<double> dp, dg;
  int cells = 0;
};

/// xi_cells holds the demonstration points in continuous map coordinates
/// (col, row); sigma is in cells.
ExpertDistributions make_expert_distributions(const std::vector<Vec2>& xi_cells, double sigma, int cells);

ExpertDistributions expert_for_task(const TaskSpec& task, const MapFrame& frame, double sigma);

MapFrame frame_for_task(const TaskSpec& task, const RunConfig& cfg);

/// Numeric counterpart of rotate_bilinear for target distributions: rotate
/// about the grid center, then renormalize.
std::vector<double> rotate_distribution(const std::vector<double>& dist, int cells, double angle);

/// Where a feature at continuous cell position (col,row) lands after the
/// map is rotated by `angle`.
Vec2 rotate_cell_coords(Vec2 cell_pos, int cells, double angle);

struct VisibleObject {
  int class_id = 0;
  int row = 0, col = 0;   // map cell of the object center
  float mentioned = 0.f;  // from the alignment table
};

/// Objects whose center projects into the current frame and whose map cell
/// is in bounds.
std::vector<VisibleObject> visible_objects(const std::vector<LandmarkSpec>& landmarks, const Pose& pose,
                                           const CameraIntrinsics& intr, const MapFrame& frame,
                                           const AlignmentTable& alignments,
                                           const std::vector<int>& token_ids);

struct LossWeights {
  double percept = 1.0;
  double ground = 1.0;
  double lang = 0.25;
};

/// Mean cross-entropy of the linear object classifier at the visible
/// objects' map cells; zero when nothing is visible.
template <class T>
TensorPtr<T> aux_percept_loss(Tape<T>* tape, const TensorPtr<T>& map_tensor,
                              const std::vector<VisibleObject>& objects, const AuxHeads<T>& heads) {
  if (objects.empty()) return scalar_tensor<T>(T(0));
  TensorPtr<T> total = scalar_tensor<T>(T(0));
  for (const auto& o : objects) {
    auto feat = gather_cell(tape, map_tensor, o.row, o.col);
    auto logits = add(tape, matvec(tape, heads.percept_w, feat), heads.percept_b);
    total = add(tape, total, softmax_cross_entropy(tape, logits, o.class_id));
  }
  return scale(tape, total, T(1) / T(objects.size()));
}

/// Mean binary cross-entropy of the mentioned-object classifier on grounding
/// map features at the visible objects' cells.
template <class T>
TensorPtr<T> aux_ground_loss(Tape<T>* tape, const TensorPtr<T>& grounding_tensor,
                             const std::vector<VisibleObject>& objects, const AuxHeads<T>& heads) {
  if (objects.empty()) return scalar_tensor<T>(T(0));
  TensorPtr<T> total = scalar_tensor<T>(T(0));
  for (const auto& o : objects) {
    auto feat = gather_cell(tape, grounding_tensor, o.row, o.col);
    auto logit = add(tape, matvec(tape, heads.ground_w, feat), heads.ground_b);
    total = add(tape, total, bce_with_logits(tape, logit, {static_cast<T>(o.mentioned)}));
  }
  return scale(tape, total, T(1) / T(objects.size()));
}

/// Mean binary cross-entropy over all object classes from a linear head on
/// the instruction embedding.
template <class T>
TensorPtr<T> aux_lang_loss(Tape<T>* tape, const TensorPtr<T>& u, const std::vector<float>& mention_labels,
                           const AuxHeads<T>& heads) {
  auto logits = add(tape, matvec(tape, heads.lang_w, u), heads.lang_b);
  std::vector<T> targets(mention_labels.begin(), mention_labels.end());
  return bce_with_logits(tape, logits, targets);
}

template <class T>
struct Stage1LossParts {
  TensorPtr<T> total, kl_p, kl_g, percept, ground, lang;
};

/// J(theta_1) = KL(d_p*||d^p) + KL(d_g*||d^g) + weighted auxiliary terms.
/// `dists` is the channel-softmaxed [2,N,N] output; aux terms may be null.
template <class T>
Stage1LossParts<T> stage1_loss(Tape<T>* tape, const TensorPtr<T>& dists, const std::vector<T>& dp_target,
                               const std::vector<T>& dg_target, TensorPtr<T> percept, TensorPtr<T> ground,
                               TensorPtr<T> lang, const LossWeights& weights) {
  const std::int64_t hw = dists->dim(1) * dists->dim(2);
  auto flat = reshape(tape, dists, {2 * hw});
  Stage1LossParts<T> parts;
  parts.kl_p = kl_loss(tape, dp_target, slice_vec(tape, flat, 0, hw));
  parts.kl_g = kl_loss(tape, dg_target, slice_vec(tape, flat, hw, hw));
  parts.total = add(tape, parts.kl_p, parts.kl_g);
  parts.percept = percept;
  parts.ground = ground;
  parts.lang = lang;
  if (percept && weights.percept != 0)
    parts.total = add(tape, parts.total, scale(tape, percept, static_cast<T>(weights.percept)));
  if (ground && weights.ground != 0)
    parts.total = add(tape, parts.total, scale(tape, ground, static_cast<T>(weights.ground)));
  if (lang && weights.lang != 0)
    parts.total = add(tape, parts.total, scale(tape, lang, static_cast<T>(weights.lang)));
  return parts;
}

// ---- training loops (float) ----

struct Stage1TrainResult {
  std::vector<double> epoch_loss;  // mean total loss per epoch
  int examples_per_epoch = 0;
  std::string last_checkpoint;
};

/// Supervised Stage-1 training: oracle rollouts provide the contexts, one
/// example per T_d replan step, rotation augmentation, Adam with batch size 1.
/// Emits one metrics record per epoch to `log` when given; saves a checkpoint
/// per epoch under checkpoint_dir when non-empty. NaN loss aborts with the
/// last checkpoint path in the exception.
Stage1TrainResult train_stage1(Stage1Model<float>& model, const std::vector<TaskSpec>& tasks,
                               const AlignmentTable& alignments, const RunConfig& cfg, Rng& rng,
                               std::ostream* log, const std::string& checkpoint_dir = "");

/// Sample buffer for Stage-2 imitation: crop vector + oracle action label.
struct Stage2Sample {
  std::vector<float> x;
  float stop = 0, v = 0, omega = 0;
};

struct AggregatedDataset {
  std::vector<Stage2Sample> samples;
  std::size_t capacity = 600;
  /// Uniform-random pruning down to capacity.
  void prune(Rng& rng);
};

struct Stage2TrainResult {
  std::vector<double> iter_loss;
  std::vector<int> executions;  // policy rollouts recorded per iteration
};

/// DAggerFM: mixture policy rollouts on the expert distributions (oracle with
/// probability beta^k per step), fixed-capacity aggregated dataset, one
/// supervised epoch per iteration. BCE on stop, MSE on the velocities.
Stage2TrainResult train_stage2_daggerfm(ActHead<float>& act, const std::vector<TaskSpec>& tasks,
                                        const RunConfig& cfg, Rng& rng, std::ostream* log);

}  // namespace pvn
