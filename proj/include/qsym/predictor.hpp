#pragma once

#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qsym/cnd.hpp"
#include "qsym/core.hpp"
#include "qsym/neural.hpp"
#include "qsym/qtc.hpp"

namespace qsym {

enum class PoolMode : std::uint32_t { Baseline = 0, NeuroSym = 1 };

inline std::string to_string(PoolMode mode) {
  return mode == PoolMode::Baseline ? "baseline" : "neurosym";
}

struct PredictorConfig {
  std::uint32_t obs_len = 8;
  std::uint32_t pred_len = 12;
  std::uint32_t encoder_hidden = 32;
  std::uint32_t decoder_hidden = 32;
  std::uint32_t embed_dim = 16;
  std::uint32_t pool_mlp_dim = 64;
  std::uint32_t noise_dim = 8;
  std::uint32_t k_train = 8;
  PoolMode mode = PoolMode::Baseline;
  std::uint64_t seed = 7;

  void validate() const {
    if (obs_len < 2) throw ContractError("config: obs_len must be at least 2");
    if (pred_len < 1 || encoder_hidden < 1 || decoder_hidden < 1 || embed_dim < 1 ||
        pool_mlp_dim < 1 || k_train < 1) {
      throw ContractError("config: all dimensions must be at least 1");
    }
    if (noise_dim >= decoder_hidden) {
      throw ContractError("config: noise_dim must be smaller than decoder_hidden");
    }
  }

  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

/// Encoder-pooling-decoder trajectory generator. The per-step displacement
/// of each agent is embedded and encoded by an LSTM; a pooling layer
/// aggregates neighbour embeddings of the relative pose (optionally scaled
/// by the CND transition likelihood of the pair's latest QTC state); the
/// decoder LSTM emits future displacements integrated from the last
/// observed position.
struct PredictorModel {
  PredictorConfig config;
  DenseLayer embed;       // 2 -> embed_dim, shared by encoder and decoder inputs
  LstmCell encoder;       // embed_dim -> encoder_hidden
  DenseLayer pose_embed;  // 2 -> embed_dim, affine (the relative-pose layer)
  DenseLayer pool_mlp;    // embed_dim + encoder_hidden -> pool_mlp_dim, ReLU
  DenseLayer dec_init;    // encoder_hidden + pool_mlp_dim -> decoder_hidden - noise_dim
  LstmCell decoder;       // embed_dim -> decoder_hidden
  DenseLayer out;         // decoder_hidden -> 2

  static PredictorModel init(const PredictorConfig& config) {
    config.validate();
    Rng rng(config.seed);
    PredictorModel m;
    m.config = config;
    m.embed = DenseLayer::init(config.embed_dim, 2, Activation::Identity, rng);
    m.encoder = LstmCell::init(config.embed_dim, config.encoder_hidden, rng);
    m.pose_embed = DenseLayer::init(config.embed_dim, 2, Activation::Identity, rng);
    m.pool_mlp = DenseLayer::init(config.pool_mlp_dim, config.embed_dim + config.encoder_hidden,
                                  Activation::ReLU, rng);
    m.dec_init = DenseLayer::init(config.decoder_hidden - config.noise_dim,
                                  config.encoder_hidden + config.pool_mlp_dim,
                                  Activation::Identity, rng);
    m.decoder = LstmCell::init(config.embed_dim, config.decoder_hidden, rng);
    m.out = DenseLayer::init(2, config.decoder_hidden, Activation::Identity, rng);
    return m;
  }

  // Parameter tensors in declaration order; also the serialization order.
  std::vector<const Vecd*> tensors() const {
    return {&embed.weights.data,      &embed.bias,           &encoder.w_input.data,
            &encoder.w_recurrent.data, &encoder.bias,         &pose_embed.weights.data,
            &pose_embed.bias,          &pool_mlp.weights.data, &pool_mlp.bias,
            &dec_init.weights.data,    &dec_init.bias,         &decoder.w_input.data,
            &decoder.w_recurrent.data, &decoder.bias,          &out.weights.data,
            &out.bias};
  }
  std::vector<Vecd*> tensors() {
    return {&embed.weights.data,      &embed.bias,           &encoder.w_input.data,
            &encoder.w_recurrent.data, &encoder.bias,         &pose_embed.weights.data,
            &pose_embed.bias,          &pool_mlp.weights.data, &pool_mlp.bias,
            &dec_init.weights.data,    &dec_init.bias,         &decoder.w_input.data,
            &decoder.w_recurrent.data, &decoder.bias,          &out.weights.data,
            &out.bias};
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Vecd* t : tensors()) n += t->size();
    return n;
  }

  Vecd pack_params() const {
    Vecd flat;
    flat.reserve(param_count());
    for (const Vecd* t : tensors()) flat.insert(flat.end(), t->begin(), t->end());
    return flat;
  }

  void unpack_params(const Vecd& flat) {
    std::size_t offset = 0;
    for (Vecd* t : tensors()) {
      if (offset + t->size() > flat.size()) throw ContractError("unpack_params: size mismatch");
      std::copy(flat.begin() + offset, flat.begin() + offset + t->size(), t->begin());
      offset += t->size();
    }
    if (offset != flat.size()) throw ContractError("unpack_params: size mismatch");
  }
};

/// Gradient mirror of PredictorModel, packed in the same tensor order.
struct ModelGrads {
  Tensor2 embed_w;
  Vecd embed_b;
  Tensor2 enc_wx, enc_wh;
  Vecd enc_b;
  Tensor2 pose_w;
  Vecd pose_b;
  Tensor2 pool_w;
  Vecd pool_b;
  Tensor2 init_w;
  Vecd init_b;
  Tensor2 dec_wx, dec_wh;
  Vecd dec_b;
  Tensor2 out_w;
  Vecd out_b;

  static ModelGrads zeros_like(const PredictorModel& m) {
    ModelGrads g;
    g.embed_w = Tensor2(m.embed.weights.rows, m.embed.weights.cols);
    g.embed_b.assign(m.embed.bias.size(), 0.0);
    g.enc_wx = Tensor2(m.encoder.w_input.rows, m.encoder.w_input.cols);
    g.enc_wh = Tensor2(m.encoder.w_recurrent.rows, m.encoder.w_recurrent.cols);
    g.enc_b.assign(m.encoder.bias.size(), 0.0);
    g.pose_w = Tensor2(m.pose_embed.weights.rows, m.pose_embed.weights.cols);
    g.pose_b.assign(m.pose_embed.bias.size(), 0.0);
    g.pool_w = Tensor2(m.pool_mlp.weights.rows, m.pool_mlp.weights.cols);
    g.pool_b.assign(m.pool_mlp.bias.size(), 0.0);
    g.init_w = Tensor2(m.dec_init.weights.rows, m.dec_init.weights.cols);
    g.init_b.assign(m.dec_init.bias.size(), 0.0);
    g.dec_wx = Tensor2(m.decoder.w_input.rows, m.decoder.w_input.cols);
    g.dec_wh = Tensor2(m.decoder.w_recurrent.rows, m.decoder.w_recurrent.cols);
    g.dec_b.assign(m.decoder.bias.size(), 0.0);
    g.out_w = Tensor2(m.out.weights.rows, m.out.weights.cols);
    g.out_b.assign(m.out.bias.size(), 0.0);
    return g;
  }

  Vecd pack() const {
    Vecd flat;
    const std::vector<const Vecd*> list = {
        &embed_w.data, &embed_b, &enc_wx.data, &enc_wh.data, &enc_b,
        &pose_w.data,  &pose_b,  &pool_w.data, &pool_b,      &init_w.data,
        &init_b,       &dec_wx.data, &dec_wh.data, &dec_b,   &out_w.data,
        &out_b};
    for (const Vecd* t : list) flat.insert(flat.end(), t->begin(), t->end());
    return flat;
  }

  void scale(double s) {
    for (Vecd* t : std::vector<Vecd*>{&embed_w.data, &embed_b, &enc_wx.data, &enc_wh.data,
                                      &enc_b, &pose_w.data, &pose_b, &pool_w.data, &pool_b,
                                      &init_w.data, &init_b, &dec_wx.data, &dec_wh.data, &dec_b,
                                      &out_w.data, &out_b}) {
      for (double& v : *t) v *= s;
    }
  }
};

// --- encoding -------------------------------------------------------------

struct AgentEncoding {
  Vecd h, c;                    // final encoder state
  std::vector<Vec2> inputs;     // per-step displacements
  std::vector<Vecd> embedded;   // embed(inputs)
  std::vector<LstmStep> steps;  // encoder cache
};

inline std::map<AgentId, AgentEncoding> encode_agents(const PredictorModel& m,
                                                      const ObservationWindow& window) {
  std::map<AgentId, AgentEncoding> encodings;
  for (const auto& [id, positions] : window.agent_positions) {
    AgentEncoding enc;
    enc.h.assign(m.config.encoder_hidden, 0.0);
    enc.c.assign(m.config.encoder_hidden, 0.0);
    for (std::size_t t = 1; t < positions.size(); ++t) {
      const Vec2 d = positions[t] - positions[t - 1];
      enc.inputs.push_back(d);
      enc.embedded.push_back(dense_forward(m.embed, Vecd{d.x, d.y}));
      enc.steps.push_back(lstm_step(m.encoder, enc.embedded.back(), enc.h, enc.c));
      enc.h = enc.steps.back().h;
      enc.c = enc.steps.back().c;
    }
    encodings.emplace(id, std::move(enc));
  }
  return encodings;
}

// --- pooling ---------------------------------------------------------------

struct PoolNeighbor {
  AgentId id = 0;
  double alpha = 1.0;
  Vec2 relative;       // X_B - X_A at the last observed step
  Vecd pose_out;       // relative-pose embedding (pre-scaling)
  Vecd scaled;         // alpha * pose_out (the pre-MLP embedding)
  Vecd mlp_in;         // [scaled ; h_B]
  Vecd mlp_out;        // pooling MLP output
};

struct PoolResult {
  Vecd pooled;                       // elementwise max over neighbours
  std::vector<PoolNeighbor> neighbors;
  std::vector<int> argmax;           // winning neighbour per output dim, -1 if none
};

/// Aggregates neighbour context for one target agent. In NeuroSym mode each
/// neighbour's relative-pose embedding is scaled by the CND likelihood of
/// the pair's QTC state over the last two observed steps (the state at
/// step W-1 labels step W).
inline PoolResult pool(const PredictorModel& m, AgentId target, const ObservationWindow& window,
                       const std::map<AgentId, AgentEncoding>& encodings, PoolMode mode,
                       const CndTable& cnd, std::optional<double> alpha_override = {},
                       double qtc_eps = 1e-3) {
  PoolResult result;
  result.pooled.assign(m.config.pool_mlp_dim, 0.0);
  result.argmax.assign(m.config.pool_mlp_dim, -1);

  const auto target_it = window.agent_positions.find(target);
  if (target_it == window.agent_positions.end()) {
    throw ContractError("pool: target agent not in window");
  }
  const std::vector<Vec2>& target_pos = target_it->second;
  const std::size_t w = target_pos.size();

  for (const auto& [id, positions] : window.agent_positions) {
    if (id == target) continue;
    const auto enc_it = encodings.find(id);
    if (enc_it == encodings.end()) {
      throw ContractError("pool: missing hidden state for agent " + std::to_string(id));
    }
    PoolNeighbor nb;
    nb.id = id;
    nb.relative = positions[w - 1] - target_pos[w - 1];
    nb.pose_out = dense_forward(m.pose_embed, Vecd{nb.relative.x, nb.relative.y});
    double alpha = 1.0;
    if (mode == PoolMode::NeuroSym) {
      const QtcState state = qtc_c1_state(target_pos[w - 2], target_pos[w - 1], positions[w - 2],
                                          positions[w - 1], qtc_eps);
      alpha = alpha_of(cnd, state);
    }
    if (alpha_override) alpha = *alpha_override;
    nb.alpha = alpha;
    nb.scaled.resize(nb.pose_out.size());
    for (std::size_t i = 0; i < nb.pose_out.size(); ++i) nb.scaled[i] = alpha * nb.pose_out[i];
    nb.mlp_in = concat(nb.scaled, enc_it->second.h);
    nb.mlp_out = dense_forward(m.pool_mlp, nb.mlp_in);

    const std::size_t nb_index = result.neighbors.size();
    for (std::size_t j = 0; j < result.pooled.size(); ++j) {
      if (result.argmax[j] < 0 || nb.mlp_out[j] > result.pooled[j]) {
        result.pooled[j] = nb.mlp_out[j];
        result.argmax[j] = static_cast<int>(nb_index);
      }
    }
    result.neighbors.push_back(std::move(nb));
  }
  // No neighbours: the pooled context is the zero vector.
  if (result.neighbors.empty()) {
    result.pooled.assign(m.config.pool_mlp_dim, 0.0);
  }
  return result;
}

// --- decoding ---------------------------------------------------------------

struct DecodeResult {
  std::vector<Vec2> displacements;  // pred_len decoder outputs
  std::vector<Vec2> inputs;         // decoder inputs (previous displacement)
  std::vector<Vecd> embedded;
  std::vector<LstmStep> steps;
  Vecd ctx_in;                      // [h_target ; pooled]
  Vecd ctx;                         // dec_init output
  Vecd noise;
};

inline DecodeResult decode(const PredictorModel& m, const Vecd& target_h, const Vecd& pooled,
                           Vec2 last_disp, const Vecd& noise) {
  if (noise.size() != m.config.noise_dim) throw ContractError("decode: noise size mismatch");
  DecodeResult res;
  res.ctx_in = concat(target_h, pooled);
  res.ctx = dense_forward(m.dec_init, res.ctx_in);
  res.noise = noise;
  Vecd h = concat(res.ctx, noise);
  Vecd c(m.config.decoder_hidden, 0.0);
  Vec2 prev = last_disp;
  for (std::uint32_t t = 0; t < m.config.pred_len; ++t) {
    res.inputs.push_back(prev);
    res.embedded.push_back(dense_forward(m.embed, Vecd{prev.x, prev.y}));
    res.steps.push_back(lstm_step(m.decoder, res.embedded.back(), h, c));
    h = res.steps.back().h;
    c = res.steps.back().c;
    const Vecd d = dense_forward(m.out, h);
    res.displacements.push_back({d[0], d[1]});
    prev = res.displacements.back();
  }
  return res;
}

// --- prediction ---------------------------------------------------------------

/// k sampled future trajectories per agent for one observation window.
struct PredictionBatch {
  std::uint64_t window_id = 0;
  double t_last = 0.0;
  std::map<AgentId, std::vector<std::vector<Vec2>>> samples;  // agent -> k x pred_len
  double inference_seconds = 0.0;
};

/// Deterministic given (model, window, k, rng_seed): noise is drawn
/// agent-major from the seeded stream, one vector per (agent, sample).
inline PredictionBatch predict(const PredictorModel& m, const ObservationWindow& window, int k,
                               std::uint64_t rng_seed, const CndTable& cnd = default_cnd(),
                               std::optional<double> alpha_override = {}) {
  const auto start = std::chrono::steady_clock::now();
  validate_window(window);
  if (window.width() != m.config.obs_len) {
    throw ContractError("predict: window width does not match obs_len");
  }
  if (k < 1) throw ContractError("predict: k must be at least 1");

  const auto encodings = encode_agents(m, window);
  Rng rng(rng_seed);

  PredictionBatch batch;
  batch.t_last = window.t_last;
  for (const auto& [id, positions] : window.agent_positions) {
    const AgentEncoding& enc = encodings.at(id);
    const PoolResult pooled = pool(m, id, window, encodings, m.config.mode, cnd, alpha_override);
    const Vec2 last_pos = positions.back();
    const Vec2 last_disp = positions[positions.size() - 1] - positions[positions.size() - 2];

    std::vector<std::vector<Vec2>> trajectories;
    trajectories.reserve(static_cast<std::size_t>(k));
    for (int s = 0; s < k; ++s) {
      Vecd noise(m.config.noise_dim);
      for (double& z : noise) z = rng.normal();
      const DecodeResult dec = decode(m, enc.h, pooled.pooled, last_disp, noise);
      std::vector<Vec2> traj;
      traj.reserve(m.config.pred_len);
      Vec2 p = last_pos;
      for (Vec2 d : dec.displacements) {
        p = p + d;
        traj.push_back(p);
      }
      trajectories.push_back(std::move(traj));
    }
    batch.samples.emplace(id, std::move(trajectories));
  }
  batch.inference_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return batch;
}

// --- training ---------------------------------------------------------------

/// Supplies the noise vector for (target agent, sample index); lets the
/// gradient checks freeze noise while training draws from a seeded stream.
using NoiseProvider = std::function<Vecd(AgentId, int)>;

namespace detail {

struct WindowBackward {
  // Per-agent accumulated gradient on the final encoder hidden state.
  std::map<AgentId, Vecd> d_hidden;
};

inline void backward_dense(const DenseLayer& layer, const Vecd& input, const Vecd& upstream,
                           Tensor2& dw, Vecd& db, Vecd* d_input) {
  DenseGrads g = dense_backward(layer, input, upstream);
  add_to(dw, g.d_weights);
  add_to(db, g.d_bias);
  if (d_input) *d_input = std::move(g.d_input);
}

}  // namespace detail

/// Variety loss of one window (mean over target agents), with optional
/// gradient accumulation. The loss compares decoder displacements against
/// ground-truth displacements; gradients flow through the best sample only.
inline double window_variety_loss(const PredictorModel& m, const SceneWindow& window,
                                  const CndTable& cnd, const NoiseProvider& noise_for,
                                  ModelGrads* grads) {
  if (window.fut.empty()) throw ContractError("window_variety_loss: no target agents");
  ObservationWindow obs{window.obs, window.t_last};
  validate_window(obs);
  const auto encodings = encode_agents(m, obs);

  const std::uint32_t pred_len = m.config.pred_len;
  const int k = static_cast<int>(m.config.k_train);
  double loss_sum = 0.0;
  detail::WindowBackward wb;

  for (const auto& [target, future] : window.fut) {
    if (future.size() != pred_len) throw ContractError("window_variety_loss: bad future length");
    const std::vector<Vec2>& positions = window.obs.at(target);
    const AgentEncoding& enc = encodings.at(target);
    const PoolResult pooled = pool(m, target, obs, encodings, m.config.mode, cnd);
    const Vec2 last_pos = positions.back();
    const Vec2 last_disp = positions[positions.size() - 1] - positions[positions.size() - 2];

    // Ground-truth displacement sequence.
    std::vector<Vec2> gt_disp(pred_len);
    Vec2 prev = last_pos;
    for (std::uint32_t t = 0; t < pred_len; ++t) {
      gt_disp[t] = future[t] - prev;
      prev = future[t];
    }

    std::vector<DecodeResult> decodes;
    decodes.reserve(static_cast<std::size_t>(k));
    std::vector<std::vector<Vec2>> disp_samples;
    for (int s = 0; s < k; ++s) {
      decodes.push_back(decode(m, enc.h, pooled.pooled, last_disp, noise_for(target, s)));
      disp_samples.push_back(decodes.back().displacements);
    }
    const std::size_t best = variety_argmin(disp_samples, gt_disp);
    loss_sum += traj_mse(disp_samples[best], gt_disp);
    if (!grads) continue;

    // Backward through the best sample.
    const DecodeResult& dec = decodes[best];
    const double inv_len = 1.0 / static_cast<double>(pred_len);
    Vecd d_h(m.config.decoder_hidden, 0.0);
    Vecd d_c(m.config.decoder_hidden, 0.0);
    Vec2 d_feedback{0.0, 0.0};  // gradient on the next step's input
    for (int t = static_cast<int>(pred_len) - 1; t >= 0; --t) {
      const Vec2 residual = dec.displacements[t] - gt_disp[t];
      const Vecd d_disp{2.0 * inv_len * residual.x + d_feedback.x,
                        2.0 * inv_len * residual.y + d_feedback.y};
      Vecd d_out_in;
      detail::backward_dense(m.out, dec.steps[t].h, d_disp, grads->out_w, grads->out_b, &d_out_in);
      add_to(d_h, d_out_in);
      LstmGrads lg = lstm_backward(m.decoder, dec.steps[t], d_h, d_c);
      add_to(grads->dec_wx, lg.d_w_input);
      add_to(grads->dec_wh, lg.d_w_recurrent);
      add_to(grads->dec_b, lg.d_bias);
      Vecd d_embed_in;
      detail::backward_dense(m.embed, Vecd{dec.inputs[t].x, dec.inputs[t].y}, lg.d_x,
                             grads->embed_w, grads->embed_b, &d_embed_in);
      d_feedback = (t > 0) ? Vec2{d_embed_in[0], d_embed_in[1]} : Vec2{0.0, 0.0};
      d_h = std::move(lg.d_h_prev);
      d_c = std::move(lg.d_c_prev);
    }
    // d_h now carries the gradient on the initial decoder state [ctx ; noise].
    const std::size_t ctx_dim = m.config.decoder_hidden - m.config.noise_dim;
    const Vecd d_ctx(d_h.begin(), d_h.begin() + static_cast<std::ptrdiff_t>(ctx_dim));
    Vecd d_ctx_in;
    detail::backward_dense(m.dec_init, dec.ctx_in, d_ctx, grads->init_w, grads->init_b, &d_ctx_in);

    auto& d_target_h = wb.d_hidden.try_emplace(target, Vecd(m.config.encoder_hidden, 0.0)).first->second;
    for (std::size_t i = 0; i < m.config.encoder_hidden; ++i) d_target_h[i] += d_ctx_in[i];
    Vecd d_pooled(d_ctx_in.begin() + static_cast<std::ptrdiff_t>(m.config.encoder_hidden),
                  d_ctx_in.end());

    // Max-pooling routes each output dim to its winning neighbour.
    std::map<int, Vecd> d_mlp_out;
    for (std::size_t j = 0; j < d_pooled.size(); ++j) {
      const int nb = pooled.argmax[j];
      if (nb < 0) continue;
      auto& v = d_mlp_out.try_emplace(nb, Vecd(m.config.pool_mlp_dim, 0.0)).first->second;
      v[j] += d_pooled[j];
    }
    for (const auto& [nb_index, upstream] : d_mlp_out) {
      const PoolNeighbor& nb = pooled.neighbors[static_cast<std::size_t>(nb_index)];
      Vecd d_mlp_in;
      detail::backward_dense(m.pool_mlp, nb.mlp_in, upstream, grads->pool_w, grads->pool_b,
                             &d_mlp_in);
      const Vecd d_scaled(d_mlp_in.begin(),
                          d_mlp_in.begin() + static_cast<std::ptrdiff_t>(m.config.embed_dim));
      Vecd d_pose(d_scaled.size());
      for (std::size_t i = 0; i < d_scaled.size(); ++i) d_pose[i] = nb.alpha * d_scaled[i];
      detail::backward_dense(m.pose_embed, Vecd{nb.relative.x, nb.relative.y}, d_pose,
                             grads->pose_w, grads->pose_b, nullptr);
      auto& d_nb_h = wb.d_hidden.try_emplace(nb.id, Vecd(m.config.encoder_hidden, 0.0)).first->second;
      for (std::size_t i = 0; i < m.config.encoder_hidden; ++i) {
        d_nb_h[i] += d_mlp_in[m.config.embed_dim + i];
      }
    }
  }

  if (grads) {
    // Encoder BPTT once per agent over the accumulated hidden-state grads.
    for (const auto& [id, d_hidden] : wb.d_hidden) {
      const AgentEncoding& enc = encodings.at(id);
      Vecd d_h = d_hidden;
      Vecd d_c(m.config.encoder_hidden, 0.0);
      for (int t = static_cast<int>(enc.steps.size()) - 1; t >= 0; --t) {
        LstmGrads lg = lstm_backward(m.encoder, enc.steps[static_cast<std::size_t>(t)], d_h, d_c);
        add_to(grads->enc_wx, lg.d_w_input);
        add_to(grads->enc_wh, lg.d_w_recurrent);
        add_to(grads->enc_b, lg.d_bias);
        detail::backward_dense(m.embed,
                               Vecd{enc.inputs[static_cast<std::size_t>(t)].x,
                                    enc.inputs[static_cast<std::size_t>(t)].y},
                               lg.d_x, grads->embed_w, grads->embed_b, nullptr);
        d_h = std::move(lg.d_h_prev);
        d_c = std::move(lg.d_c_prev);
      }
    }
    grads->scale(1.0 / static_cast<double>(window.fut.size()));
  }
  return loss_sum / static_cast<double>(window.fut.size());
}

struct TrainResult {
  std::vector<double> epoch_loss;  // mean variety loss per epoch
};

/// Generator-only training with the variety objective. Deterministic given
/// the model seed: window order is fixed and noise comes from one stream.
inline TrainResult train(PredictorModel& model, const std::vector<Scene>& dataset, int epochs,
                         double lr, const CndTable& cnd = default_cnd()) {
  std::vector<SceneWindow> windows;
  for (const Scene& scene : dataset) {
    auto w = extract_windows(scene, model.config.obs_len, model.config.pred_len);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  if (windows.empty()) throw ContractError("train: empty dataset (no extractable windows)");
  if (epochs < 0) throw ContractError("train: negative epoch count");

  TrainResult result;
  Rng noise_rng(model.config.seed ^ 0x9e3779b97f4a7c15ULL);
  Vecd params = model.pack_params();
  AdamState adam;
  int step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t n_targets = 0;
    for (const SceneWindow& window : windows) {
      ModelGrads grads = ModelGrads::zeros_like(model);
      const NoiseProvider noise_for = [&](AgentId, int) {
        Vecd z(model.config.noise_dim);
        for (double& v : z) v = noise_rng.normal();
        return z;
      };
      const double loss = window_variety_loss(model, window, cnd, noise_for, &grads);
      epoch_loss += loss * static_cast<double>(window.fut.size());
      n_targets += window.fut.size();
      adam_step(params, grads.pack(), adam, ++step, lr);
      model.unpack_params(params);
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(n_targets));
  }
  return result;
}

// --- persistence ---------------------------------------------------------------

inline constexpr char kModelMagic[4] = {'Q', 'S', 'Y', 'M'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

inline void write_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(os, bits);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4)) throw DataError("model file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw DataError("model file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is) {
  const std::uint64_t bits = read_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

/// Versioned binary container: magic "QSYM", format version, config, then
/// the parameter tensors in declaration order as little-endian 64-bit reals.
inline void save_model(const PredictorModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open model file for writing: " + path);
  os.write(kModelMagic, 4);
  detail::write_u32(os, kModelFormatVersion);
  const PredictorConfig& c = model.config;
  detail::write_u32(os, c.obs_len);
  detail::write_u32(os, c.pred_len);
  detail::write_u32(os, c.encoder_hidden);
  detail::write_u32(os, c.decoder_hidden);
  detail::write_u32(os, c.embed_dim);
  detail::write_u32(os, c.pool_mlp_dim);
  detail::write_u32(os, c.noise_dim);
  detail::write_u32(os, c.k_train);
  detail::write_u32(os, static_cast<std::uint32_t>(c.mode));
  detail::write_u64(os, c.seed);
  for (const Vecd* tensor : model.tensors()) {
    for (double v : *tensor) detail::write_f64(os, v);
  }
  if (!os) throw DataError("failed writing model file: " + path);
}

inline PredictorModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open model file: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0) {
    throw DataError("not a model file (bad magic): " + path);
  }
  const std::uint32_t version = detail::read_u32(is);
  if (version != kModelFormatVersion) {
    throw DataError("unsupported model format version " + std::to_string(version) +
                    " (expected " + std::to_string(kModelFormatVersion) + "): " + path);
  }
  PredictorConfig c;
  c.obs_len = detail::read_u32(is);
  c.pred_len = detail::read_u32(is);
  c.encoder_hidden = detail::read_u32(is);
  c.decoder_hidden = detail::read_u32(is);
  c.embed_dim = detail::read_u32(is);
  c.pool_mlp_dim = detail::read_u32(is);
  c.noise_dim = detail::read_u32(is);
  c.k_train = detail::read_u32(is);
  const std::uint32_t mode = detail::read_u32(is);
  if (mode > 1) throw DataError("model file has unknown pooling mode: " + path);
  c.mode = static_cast<PoolMode>(mode);
  c.seed = detail::read_u64(is);
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw DataError(std::string("model file has invalid config: ") + e.what());
  }
  PredictorModel model = PredictorModel::init(c);
  for (Vecd* tensor : model.tensors()) {
    for (double& v : *tensor) v = detail::read_f64(is);
  }
  char extra;
  if (is.read(&extra, 1)) throw DataError("model file has trailing bytes: " + path);
  return model;
}

}  // namespace qsym
