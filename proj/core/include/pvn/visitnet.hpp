#pragma once

#include "pvn/mapper.hpp"
#include "pvn/ops.hpp"

namespace pvn {

/// Word embedding + LSTM; the instruction embedding is the last hidden state.
template <class T>
struct InstructionEncoder {
  TensorPtr<T> embed;  // [V, emb_dim]
  LstmWeights<T> lstm;
  int hidden = 64;

  static InstructionEncoder make(int vocab_size, int emb_dim, int hidden, Rng& rng) {
    InstructionEncoder enc;
    enc.hidden = hidden;
    enc.embed = uniform_init<T>({vocab_size, emb_dim}, T(0.1), rng);
    const T bound = static_cast<T>(std::sqrt(1.0 / hidden));
    enc.lstm.w_ih = uniform_init<T>({4 * hidden, emb_dim}, bound, rng);
    enc.lstm.w_hh = uniform_init<T>({4 * hidden, hidden}, bound, rng);
    enc.lstm.bias = zeros<T>({4 * hidden}, true);
    return enc;
  }

  TensorPtr<T> encode(Tape<T>* tape, const std::vector<int>& token_ids) const {
    if (token_ids.empty()) throw std::invalid_argument("encode: empty token sequence");
    auto h = zeros<T>({hidden});
    auto c = zeros<T>({hidden});
    auto rows = embedding_lookup(tape, embed, token_ids);
    const std::int64_t d = embed->dim(1);
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
      auto x = slice_vec(tape, reshape(tape, rows, {rows->numel()}),
                         static_cast<std::int64_t>(i) * d, d);
      auto state = lstm_cell(tape, x, h, c, lstm);
      h = state.h;
      c = state.c;
    }
    return h;
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".embed", embed});
    out.push_back({prefix + ".lstm.w_ih", lstm.w_ih});
    out.push_back({prefix + ".lstm.w_hh", lstm.w_hh});
    out.push_back({prefix + ".lstm.bias", lstm.bias});
  }
};

/// Language-predicted 1x1 kernel over the semantic map:
/// R = S (*) K_G with K_G = W_G u + b_G.
template <class T>
struct GroundingHead {
  TensorPtr<T> w;  // [Cr*C, d_u]
  TensorPtr<T> b;  // [Cr*C]
  int c_in = 32, c_out = 16;

  static GroundingHead make(int c_in, int c_out, int d_u, Rng& rng) {
    GroundingHead g;
    g.c_in = c_in;
    g.c_out = c_out;
    const T bound = static_cast<T>(std::sqrt(1.0 / d_u));
    g.w = uniform_init<T>({c_out * c_in, d_u}, bound, rng);
    g.b = zeros<T>({c_out * c_in}, true);
    return g;
  }

  TensorPtr<T> kernel(Tape<T>* tape, const TensorPtr<T>& u) const {
    return reshape(tape, add(tape, matvec(tape, w, u), b), {c_out, c_in});
  }

  TensorPtr<T> apply(Tape<T>* tape, const TensorPtr<T>& map_tensor, const TensorPtr<T>& u) const {
    return conv1x1(tape, map_tensor, kernel(tape, u));
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

/// Language-conditioned encoder-decoder over the map: L stride-2 convs, a
/// language-predicted 1x1 filter per stage, then L deconvs with skip
/// connections; the output has 2 channels at full map resolution.
template <class T>
struct LingUNet {
  struct Stage {
    TensorPtr<T> conv_w, conv_b;      // stride-2 3x3
    TensorPtr<T> lang_w, lang_b;      // K_k = W_k^u u + b_k^u, shaped [C*C]
    TensorPtr<T> deconv_w, deconv_b;  // stride-2 4x4
  };
  std::vector<Stage> stages;
  int channels = 32;
  int out_channels = 2;
  T slope = T(0.01);

  static LingUNet make(int in_channels, int channels, int out_channels, int num_stages, int d_u,
                       int map_cells, Rng& rng) {
    if (map_cells >> num_stages == 0)
      throw std::invalid_argument("LingUNet: too many stages for map size " + std::to_string(map_cells));
    LingUNet net;
    net.channels = channels;
    net.out_channels = out_channels;
    for (int k = 0; k < num_stages; ++k) {
      Stage s;
      const int cin = k == 0 ? in_channels : channels;
      const T cb = static_cast<T>(std::sqrt(1.0 / (cin * 9)));
      s.conv_w = uniform_init<T>({channels, cin, 3, 3}, cb, rng);
      s.conv_b = zeros<T>({channels}, true);
      const T lb = static_cast<T>(std::sqrt(1.0 / d_u));
      s.lang_w = uniform_init<T>({channels * channels, d_u}, lb, rng);
      s.lang_b = zeros<T>({channels * channels}, true);
      // deconv input: G_L at the bottom, [H_{k+1}, G_k] elsewhere
      const int dc_in = (k == num_stages - 1) ? channels : 2 * channels;
      const int dc_out = (k == 0) ? out_channels : channels;
      const T db = static_cast<T>(std::sqrt(1.0 / (dc_in * 16)));
      s.deconv_w = uniform_init<T>({dc_in, dc_out, 4, 4}, db, rng);
      s.deconv_b = zeros<T>({dc_out}, true);
      net.stages.push_back(std::move(s));
    }
    return net;
  }

  /// f0 = [S, R] channel-concat, u = instruction embedding -> [2,N,N] logits.
  TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& f0, const TensorPtr<T>& u) const {
    const int num_stages = static_cast<int>(stages.size());
    std::vector<TensorPtr<T>> g(static_cast<std::size_t>(num_stages));
    auto f = f0;
    for (int k = 0; k < num_stages; ++k) {
      const auto& s = stages[static_cast<std::size_t>(k)];
      f = leaky_relu(tape, bias_channels(tape, conv2d(tape, f, s.conv_w, 2, 1), s.conv_b), slope);
      auto kk = reshape(tape, add(tape, matvec(tape, s.lang_w, u), s.lang_b), {channels, channels});
      g[static_cast<std::size_t>(k)] = conv1x1(tape, f, kk);
    }
    TensorPtr<T> h;
    for (int k = num_stages - 1; k >= 0; --k) {
      const auto& s = stages[static_cast<std::size_t>(k)];
      auto in = (k == num_stages - 1) ? g[static_cast<std::size_t>(k)]
                                      : concat_channels(tape, h, g[static_cast<std::size_t>(k)]);
      h = bias_channels(tape, deconv2d(tape, in, s.deconv_w, 2, 1), s.deconv_b);
      if (k > 0) h = leaky_relu(tape, h, slope);
    }
    return h;
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t k = 0; k < stages.size(); ++k) {
      const std::string p = prefix + ".stage" + std::to_string(k);
      out.push_back({p + ".conv_w", stages[k].conv_w});
      out.push_back({p + ".conv_b", stages[k].conv_b});
      out.push_back({p + ".lang_w", stages[k].lang_w});
      out.push_back({p + ".lang_b", stages[k].lang_b});
      out.push_back({p + ".deconv_w", stages[k].deconv_w});
      out.push_back({p + ".deconv_b", stages[k].deconv_b});
    }
  }
};

/// Linear auxiliary classifiers: object class from map features, mentioned?
/// from grounding features, mentioned-objects from the instruction embedding.
template <class T>
struct AuxHeads {
  TensorPtr<T> percept_w, percept_b;  // [n_obj, C], [n_obj]
  TensorPtr<T> ground_w, ground_b;    // [1, Cr], [1]
  TensorPtr<T> lang_w, lang_b;        // [n_obj, d_u], [n_obj]

  static AuxHeads make(int n_obj, int map_channels, int grounding_channels, int d_u, Rng& rng) {
    AuxHeads a;
    a.percept_w = uniform_init<T>({n_obj, map_channels}, static_cast<T>(std::sqrt(1.0 / map_channels)), rng);
    a.percept_b = zeros<T>({n_obj}, true);
    a.ground_w = uniform_init<T>({1, grounding_channels},
                                 static_cast<T>(std::sqrt(1.0 / grounding_channels)), rng);
    a.ground_b = zeros<T>({1}, true);
    a.lang_w = uniform_init<T>({n_obj, d_u}, static_cast<T>(std::sqrt(1.0 / d_u)), rng);
    a.lang_b = zeros<T>({n_obj}, true);
    return a;
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".percept_w", percept_w});
    out.push_back({prefix + ".percept_b", percept_b});
    out.push_back({prefix + ".ground_w", ground_w});
    out.push_back({prefix + ".ground_b", ground_b});
    out.push_back({prefix + ".lang_w", lang_w});
    out.push_back({prefix + ".lang_b", lang_b});
  }
};

/// Trajectory- and goal-visitation distributions over the map, flattened
/// row-major; each sums to 1.
struct VisitationPair {
  std::vector<float> dp, dg;
  int cells = 0;
  int computed_at = 0;  // timestep of the replan that produced it
};

/// All Stage-1 parameters (theta_1).
template <class T>
struct Stage1Model {
  ResNetFeat<T> resnet;
  InstructionEncoder<T> encoder;
  GroundingHead<T> grounding;
  LingUNet<T> lingunet;
  AuxHeads<T> aux;

  struct Dims {
    int vocab_size = 64;
    int emb_dim = 32;
    int lstm_hidden = 64;
    int map_channels = 32;
    int grounding_channels = 16;
    int lingunet_stages = 3;
    int map_cells = 32;
    int resnet_mid = 16;
    int resnet_blocks = 2;
    int n_obj = 15;
  };

  static Stage1Model make(const Dims& d, Rng& rng) {
    Stage1Model m;
    m.resnet = ResNetFeat<T>::make(3, d.resnet_mid, d.map_channels, d.resnet_blocks, rng);
    m.encoder = InstructionEncoder<T>::make(d.vocab_size, d.emb_dim, d.lstm_hidden, rng);
    m.grounding = GroundingHead<T>::make(d.map_channels, d.grounding_channels, d.lstm_hidden, rng);
    m.lingunet = LingUNet<T>::make(d.map_channels + d.grounding_channels, d.map_channels, 2,
                                   d.lingunet_stages, d.lstm_hidden, d.map_cells, rng);
    m.aux = AuxHeads<T>::make(d.n_obj, d.map_channels, d.grounding_channels, d.lstm_hidden, rng);
    return m;
  }

  /// Back half from an (already integrated) map tensor: grounding + LingUNet.
  TensorPtr<T> visitation_logits(Tape<T>* tape, const TensorPtr<T>& map_tensor,
                                 const TensorPtr<T>& u) const {
    auto r = grounding.apply(tape, map_tensor, u);
    return lingunet.forward(tape, concat_channels(tape, map_tensor, r), u);
  }

  ParamList<T> params() const {
    ParamList<T> out;
    resnet.collect_params("stage1.resnet", out);
    encoder.collect_params("stage1.encoder", out);
    grounding.collect_params("stage1.grounding", out);
    lingunet.collect_params("stage1.lingunet", out);
    aux.collect_params("stage1.aux", out);
    return out;
  }
};

/// Per-episode Stage-1 runner for inference: integrates every frame into the
/// map, recomputes the distributions only on the T_d cadence and serves the
/// cached pair in between.
template <class T>
class VisitationPipeline {
 public:
  VisitationPipeline(const Stage1Model<T>& model, const MapFrame& frame, int channels,
                     const CameraIntrinsics& intr, int t_d)
      : model_(model), map_(SemanticMap<T>::make(frame, channels)), intr_(intr), t_d_(t_d) {}

  /// Process the frame observed at (1-based) timestep t; replans when
  /// t mod T_d == 1 (and on t = 1).
  const VisitationPair& observe(const Image& image, const Pose& pose, const std::vector<int>& tokens,
                                int t) {
    auto img = image_to_tensor<T>(image);
    auto fmap = model_.resnet.forward(nullptr, img);
    const auto table = build_projection(pose, intr_, map_.frame, static_cast<int>(fmap->dim(2)),
                                        static_cast<int>(fmap->dim(1)));
    auto world = apply_projection<T>(nullptr, fmap, table);
    integrate(map_, *world, table.mask);
    if (pair_.cells == 0 || (t - 1) % t_d_ == 0) {
      if (!u_ || tokens != cached_tokens_) {
        u_ = model_.encoder.encode(nullptr, tokens);
        cached_tokens_ = tokens;
      }
      auto s = map_.as_tensor();
      auto dists = channel_softmax<T>(nullptr, model_.visitation_logits(nullptr, s, u_));
      const std::int64_t n = map_.frame.cells;
      pair_.cells = static_cast<int>(n);
      pair_.computed_at = t;
      pair_.dp.resize(static_cast<std::size_t>(n * n));
      pair_.dg.resize(static_cast<std::size_t>(n * n));
      for (std::int64_t i = 0; i < n * n; ++i) {
        pair_.dp[static_cast<std::size_t>(i)] = static_cast<float>(dists->data[static_cast<std::size_t>(i)]);
        pair_.dg[static_cast<std::size_t>(i)] =
            static_cast<float>(dists->data[static_cast<std::size_t>(n * n + i)]);
      }
      ++replans_;
    }
    return pair_;
  }

  const VisitationPair& pair() const { return pair_; }
  const SemanticMap<T>& map() const { return map_; }
  int replans() const { return replans_; }

 private:
  const Stage1Model<T>& model_;
  SemanticMap<T> map_;
  CameraIntrinsics intr_;
  int t_d_;
  VisitationPair pair_;
  TensorPtr<T> u_;
  std::vector<int> cached_tokens_;
  int replans_ = 0;
};

}  // namespace pvn
