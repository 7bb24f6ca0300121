#pragma once

#include <cstdint>
#include <string>

#include "pvn/simworld.hpp"
#include "pvn/taskgen.hpp"

namespace pvn {

/// Every knob in one place. The paper profile carries the published
/// hyperparameter table; the desk profile is the scaled-down configuration
/// the end-to-end benchmark runs at.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 1;
  int threads = 2;

  // [sim]
  double dt = 0.5;
  double field_edge = 50.0;
  double sim_v_max = 2.0;
  double sim_omega_max = 2.0;
  double lag_tau = 0.0;
  int image_width = 64;
  int image_height = 36;
  double camera_hfov_deg = 90.0;
  double camera_pitch_deg = 30.0;
  double camera_elevation = 5.0;

  // [map]
  int map_cells = 32;
  int map_channels = 32;
  int field_cells = 16;  // environment edge length in map cells

  // [model]
  int resnet_mid_channels = 16;
  int resnet_blocks = 2;
  int lingunet_stages = 3;
  int lstm_hidden = 64;
  int word_embed = 32;
  int grounding_channels = 16;
  int crop_k = 12;
  int t_d = 6;
  double kappa = 0.07;
  int n_obj = 15;

  // [train]
  double lr = 1e-3;
  double weight_decay = 1e-6;
  int batch_size = 1;
  int stage1_epochs = 3;
  double gauss_sigma_cells = 2.0;
  double lambda_percept = 1.0;
  double lambda_ground = 1.0;
  double lambda_lang = 0.25;
  double augment_rot_std = 0.5;
  int dagger_iterations = 20;
  double dagger_beta = 0.92;
  int dagger_envs_per_iter = 10;
  int dagger_memory = 600;
  int train_tasks = 500;
  int eval_tasks = 200;
  int max_steps = 80;

  // [oracle]
  double oracle_lookahead = 2.0;
  double oracle_k_omega = 1.5;
  double oracle_v_max = 0.88;
  double oracle_stop_radius = 1.0;

  // [eval]
  double success_radius = 5.0;
  double eval_height_scale = 1.0;  // robustness switch, no acceptance target
  double eval_omega_scale = 1.0;   // robustness switch, no acceptance target

  // [pmi]
  double t_pmi = 0.008;
  double t_tau = 0.1;
  double pmi_near_distance = 15.0;

  static RunConfig desk();
  static RunConfig paper();

  double meters_per_cell() const { return field_edge / static_cast<double>(field_cells); }

  CameraIntrinsics intrinsics() const;
  WorldConfig world() const;
  OracleConfig oracle() const;
  TaskGenConfig taskgen() const;
  PmiConfig pmi() const;

  /// Canonical text: sorted "section.key=value" lines; the fingerprint is a
  /// 64-bit FNV-1a over it.
  std::string canonical_text() const;
  std::string fingerprint() const;
};

/// Sectioned key=value file applied on top of a profile's defaults. Unknown
/// sections or keys are errors.
RunConfig load_config_file(const std::string& path, RunConfig base);
void save_config_file(const std::string& path, const RunConfig& cfg);

}  // namespace pvn
