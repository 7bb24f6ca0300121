#include "pvn/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pvn/records.hpp"

namespace pvn {

namespace {

struct Key {
  std::string name;  // "section.key"
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_int(std::int64_t v) { return std::to_string(v); }

std::vector<Key> key_table() {
  std::vector<Key> keys;
  auto add_d = [&keys](const std::string& name, double RunConfig::*member) {
    keys.push_back({name,
                    [member](const RunConfig& c) { return format_double_exact(c.*member); },
                    [member](RunConfig& c, const std::string& v) { c.*member = std::stod(v); }});
  };
  auto add_i = [&keys](const std::string& name, int RunConfig::*member) {
    keys.push_back({name,
                    [member](const RunConfig& c) { return fmt_int(c.*member); },
                    [member](RunConfig& c, const std::string& v) { c.*member = std::stoi(v); }});
  };

  keys.push_back({"run.profile",
                  [](const RunConfig& c) { return c.profile; },
                  [](RunConfig& c, const std::string& v) { c.profile = v; }});
  keys.push_back({"run.seed",
                  [](const RunConfig& c) { return std::to_string(c.seed); },
                  [](RunConfig& c, const std::string& v) { c.seed = std::stoull(v); }});
  add_i("run.threads", &RunConfig::threads);

  add_d("sim.dt", &RunConfig::dt);
  add_d("sim.field_edge", &RunConfig::field_edge);
  add_d("sim.v_max", &RunConfig::sim_v_max);
  add_d("sim.omega_max", &RunConfig::sim_omega_max);
  add_d("sim.lag_tau", &RunConfig::lag_tau);
  add_i("sim.image_width", &RunConfig::image_width);
  add_i("sim.image_height", &RunConfig::image_height);
  add_d("sim.camera_hfov_deg", &RunConfig::camera_hfov_deg);
  add_d("sim.camera_pitch_deg", &RunConfig::camera_pitch_deg);
  add_d("sim.camera_elevation", &RunConfig::camera_elevation);

  add_i("map.cells", &RunConfig::map_cells);
  add_i("map.channels", &RunConfig::map_channels);
  add_i("map.field_cells", &RunConfig::field_cells);

  add_i("model.resnet_mid_channels", &RunConfig::resnet_mid_channels);
  add_i("model.resnet_blocks", &RunConfig::resnet_blocks);
  add_i("model.lingunet_stages", &RunConfig::lingunet_stages);
  add_i("model.lstm_hidden", &RunConfig::lstm_hidden);
  add_i("model.word_embed", &RunConfig::word_embed);
  add_i("model.grounding_channels", &RunConfig::grounding_channels);
  add_i("model.crop_k", &RunConfig::crop_k);
  add_i("model.t_d", &RunConfig::t_d);
  add_d("model.kappa", &RunConfig::kappa);
  add_i("model.n_obj", &RunConfig::n_obj);

  add_d("train.lr", &RunConfig::lr);
  add_d("train.weight_decay", &RunConfig::weight_decay);
  add_i("train.batch_size", &RunConfig::batch_size);
  add_i("train.stage1_epochs", &RunConfig::stage1_epochs);
  add_d("train.gauss_sigma_cells", &RunConfig::gauss_sigma_cells);
  add_d("train.lambda_percept", &RunConfig::lambda_percept);
  add_d("train.lambda_ground", &RunConfig::lambda_ground);
  add_d("train.lambda_lang", &RunConfig::lambda_lang);
  add_d("train.augment_rot_std", &RunConfig::augment_rot_std);
  add_i("train.dagger_iterations", &RunConfig::dagger_iterations);
  add_d("train.dagger_beta", &RunConfig::dagger_beta);
  add_i("train.dagger_envs_per_iter", &RunConfig::dagger_envs_per_iter);
  add_i("train.dagger_memory", &RunConfig::dagger_memory);
  add_i("train.train_tasks", &RunConfig::train_tasks);
  add_i("train.eval_tasks", &RunConfig::eval_tasks);
  add_i("train.max_steps", &RunConfig::max_steps);

  add_d("oracle.lookahead", &RunConfig::oracle_lookahead);
  add_d("oracle.k_omega", &RunConfig::oracle_k_omega);
  add_d("oracle.v_max", &RunConfig::oracle_v_max);
  add_d("oracle.stop_radius", &RunConfig::oracle_stop_radius);

  add_d("eval.success_radius", &RunConfig::success_radius);
  add_d("eval.height_scale", &RunConfig::eval_height_scale);
  add_d("eval.omega_scale", &RunConfig::eval_omega_scale);

  add_d("pmi.t_pmi", &RunConfig::t_pmi);
  add_d("pmi.t_tau", &RunConfig::t_tau);
  add_d("pmi.near_distance", &RunConfig::pmi_near_distance);
  return keys;
}

}  // namespace

RunConfig RunConfig::desk() { return RunConfig{}; }

RunConfig RunConfig::paper() {
  RunConfig c;
  c.profile = "paper";
  // Image and feature dimensions
  c.image_width = 128;
  c.image_height = 72;
  c.camera_hfov_deg = 90.0;
  c.camera_elevation = 5.0;
  c.map_cells = 64;
  c.field_cells = 32;
  c.field_edge = 50.0;
  // Model
  c.t_d = 6;
  c.kappa = 0.07;
  c.n_obj = 63;
  c.resnet_blocks = 5;  // 3 stem convs + 5 residual blocks = 13 conv layers
  // General learning
  c.lambda_percept = 1.0;
  c.lambda_ground = 1.0;
  c.lambda_lang = 0.25;
  // Supervised learning
  c.lr = 0.001;
  c.weight_decay = 1e-6;
  c.batch_size = 1;
  // Imitation learning
  c.dagger_beta = 0.92;
  c.dagger_iterations = 100;
  c.dagger_envs_per_iter = 10;
  c.dagger_memory = 600;
  c.success_radius = 5.0;
  return c;
}

CameraIntrinsics RunConfig::intrinsics() const {
  CameraIntrinsics intr;
  intr.width = image_width;
  intr.height = image_height;
  intr.hfov = camera_hfov_deg * M_PI / 180.0;
  intr.pitch = camera_pitch_deg * M_PI / 180.0;
  return intr;
}

WorldConfig RunConfig::world() const {
  WorldConfig w;
  w.field_edge = field_edge;
  w.v_max = sim_v_max;
  w.omega_max = sim_omega_max;
  w.lag_tau = lag_tau;
  return w;
}

OracleConfig RunConfig::oracle() const {
  OracleConfig o;
  o.lookahead = oracle_lookahead;
  o.k_omega = oracle_k_omega;
  o.v_max = oracle_v_max;
  o.stop_radius = oracle_stop_radius;
  o.omega_max = sim_omega_max;
  return o;
}

TaskGenConfig RunConfig::taskgen() const {
  TaskGenConfig t;
  t.n_obj = n_obj;
  t.field_edge = field_edge;
  t.dt = dt;
  return t;
}

PmiConfig RunConfig::pmi() const {
  PmiConfig p;
  p.t_pmi = t_pmi;
  p.t_tau = t_tau;
  p.near_distance = pmi_near_distance;
  return p;
}

std::string RunConfig::canonical_text() const {
  std::vector<std::string> lines;
  for (const auto& key : key_table()) lines.push_back(key.name + "=" + key.get(*this));
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out.push_back('\n');
  }
  return out;
}

std::string RunConfig::fingerprint() const {
  const std::string text = canonical_text();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open '" + path + "'");
  const auto keys = key_table();
  std::string section, line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    // strip comments and whitespace
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    auto end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    if (line.front() == '[') {
      if (line.back() != ']') throw std::runtime_error("config: malformed section at line " + std::to_string(lineno));
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: expected key=value at line " + std::to_string(lineno));
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    key = trim(key);
    value = trim(value);
    const std::string full = section.empty() ? key : section + "." + key;
    bool found = false;
    for (const auto& k : keys)
      if (k.name == full) {
        k.set(base, value);
        found = true;
        break;
      }
    if (!found)
      throw std::runtime_error("config: unknown key '" + full + "' at line " + std::to_string(lineno));
  }
  return base;
}

void save_config_file(const std::string& path, const RunConfig& cfg) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("config: cannot open '" + path + "' for writing");
  std::string last_section;
  for (const auto& key : key_table()) {
    const auto dot = key.name.find('.');
    const std::string section = key.name.substr(0, dot);
    if (section != last_section) {
      f << "[" << section << "]\n";
      last_section = section;
    }
    f << key.name.substr(dot + 1) << " = " << key.get(cfg) << "\n";
  }
}

}  // namespace pvn
