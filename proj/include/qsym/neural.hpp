#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "qsym/rng.hpp"
#include "qsym/tensor.hpp"

namespace qsym {

enum class Activation { Identity, ReLU };

/// Affine map with optional ReLU. Parameters drawn uniform in
/// [-1/sqrt(fan_in), +1/sqrt(fan_in)].
struct DenseLayer {
  Tensor2 weights;  // out x in
  Vecd bias;        // out
  Activation act = Activation::Identity;

  std::size_t in_size() const { return weights.cols; }
  std::size_t out_size() const { return weights.rows; }

  static DenseLayer init(std::size_t out, std::size_t in, Activation act, Rng& rng) {
    DenseLayer layer;
    layer.weights = Tensor2(out, in);
    layer.bias.assign(out, 0.0);
    layer.act = act;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : layer.weights.data) w = rng.uniform(-bound, bound);
    for (double& b : layer.bias) b = rng.uniform(-bound, bound);
    return layer;
  }
};

inline Vecd dense_forward(const DenseLayer& layer, const Vecd& input) {
  Vecd z = matvec(layer.weights, input);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] += layer.bias[i];
    if (layer.act == Activation::ReLU && z[i] < 0.0) z[i] = 0.0;
  }
  return z;
}

struct DenseGrads {
  Tensor2 d_weights;
  Vecd d_bias;
  Vecd d_input;
};

/// Exact gradients of the affine+activation map. Recomputes the
/// pre-activation from the stored input, so no forward cache is needed.
inline DenseGrads dense_backward(const DenseLayer& layer, const Vecd& input,
                                 const Vecd& upstream) {
  if (upstream.size() != layer.out_size()) throw ContractError("dense_backward: shape mismatch");
  Vecd dz = upstream;
  if (layer.act == Activation::ReLU) {
    Vecd z = matvec(layer.weights, input);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (z[i] + layer.bias[i] <= 0.0) dz[i] = 0.0;
    }
  }
  DenseGrads g;
  g.d_weights = Tensor2(layer.out_size(), layer.in_size());
  add_outer(g.d_weights, dz, input);
  g.d_bias = dz;
  g.d_input = matvec_transposed(layer.weights, dz);
  return g;
}

namespace detail {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace detail

/// Gated recurrence with packed input/forget/output/candidate blocks:
/// rows [0,H) input gate, [H,2H) forget, [2H,3H) output, [3H,4H) candidate.
struct LstmCell {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Tensor2 w_input;      // 4H x input
  Tensor2 w_recurrent;  // 4H x H
  Vecd bias;            // 4H

  static LstmCell init(std::size_t input, std::size_t hidden, Rng& rng) {
    LstmCell cell;
    cell.input_size = input;
    cell.hidden_size = hidden;
    cell.w_input = Tensor2(4 * hidden, input);
    cell.w_recurrent = Tensor2(4 * hidden, hidden);
    cell.bias.assign(4 * hidden, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(input + hidden));
    for (double& w : cell.w_input.data) w = rng.uniform(-bound, bound);
    for (double& w : cell.w_recurrent.data) w = rng.uniform(-bound, bound);
    for (double& b : cell.bias) b = rng.uniform(-bound, bound);
    return cell;
  }
};

/// Forward result plus everything the backward pass needs.
struct LstmStep {
  Vecd h, c;                    // outputs
  Vecd gate_i, gate_f, gate_o;  // post-sigmoid
  Vecd gate_g;                  // post-tanh candidate
  Vecd tanh_c;
  Vecd x, h_prev, c_prev;       // inputs
};

inline LstmStep lstm_step(const LstmCell& cell, const Vecd& x, const Vecd& h_prev,
                          const Vecd& c_prev) {
  const std::size_t hidden = cell.hidden_size;
  if (x.size() != cell.input_size || h_prev.size() != hidden || c_prev.size() != hidden) {
    throw ContractError("lstm_step: shape mismatch");
  }
  Vecd pre = matvec(cell.w_input, x);
  const Vecd rec = matvec(cell.w_recurrent, h_prev);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += rec[i] + cell.bias[i];

  LstmStep step;
  step.x = x;
  step.h_prev = h_prev;
  step.c_prev = c_prev;
  step.gate_i.resize(hidden);
  step.gate_f.resize(hidden);
  step.gate_o.resize(hidden);
  step.gate_g.resize(hidden);
  step.c.resize(hidden);
  step.h.resize(hidden);
  step.tanh_c.resize(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    step.gate_i[j] = detail::sigmoid(pre[j]);
    step.gate_f[j] = detail::sigmoid(pre[hidden + j]);
    step.gate_o[j] = detail::sigmoid(pre[2 * hidden + j]);
    step.gate_g[j] = std::tanh(pre[3 * hidden + j]);
    step.c[j] = step.gate_f[j] * c_prev[j] + step.gate_i[j] * step.gate_g[j];
    step.tanh_c[j] = std::tanh(step.c[j]);
    step.h[j] = step.gate_o[j] * step.tanh_c[j];
  }
  return step;
}

struct LstmGrads {
  Tensor2 d_w_input;
  Tensor2 d_w_recurrent;
  Vecd d_bias;
  Vecd d_x, d_h_prev, d_c_prev;
};

inline LstmGrads lstm_backward(const LstmCell& cell, const LstmStep& step, const Vecd& d_h,
                               const Vecd& d_c) {
  const std::size_t hidden = cell.hidden_size;
  if (d_h.size() != hidden || d_c.size() != hidden) {
    throw ContractError("lstm_backward: shape mismatch");
  }
  Vecd dz(4 * hidden, 0.0);
  for (std::size_t j = 0; j < hidden; ++j) {
    const double d_o = d_h[j] * step.tanh_c[j];
    const double dc_total = d_c[j] + d_h[j] * step.gate_o[j] * (1.0 - step.tanh_c[j] * step.tanh_c[j]);
    const double d_i = dc_total * step.gate_g[j];
    const double d_f = dc_total * step.c_prev[j];
    const double d_g = dc_total * step.gate_i[j];
    dz[j] = d_i * step.gate_i[j] * (1.0 - step.gate_i[j]);
    dz[hidden + j] = d_f * step.gate_f[j] * (1.0 - step.gate_f[j]);
    dz[2 * hidden + j] = d_o * step.gate_o[j] * (1.0 - step.gate_o[j]);
    dz[3 * hidden + j] = d_g * (1.0 - step.gate_g[j] * step.gate_g[j]);
  }
  LstmGrads g;
  g.d_w_input = Tensor2(4 * hidden, cell.input_size);
  g.d_w_recurrent = Tensor2(4 * hidden, hidden);
  add_outer(g.d_w_input, dz, step.x);
  add_outer(g.d_w_recurrent, dz, step.h_prev);
  g.d_bias = dz;
  g.d_x = matvec_transposed(cell.w_input, dz);
  g.d_h_prev = matvec_transposed(cell.w_recurrent, dz);
  g.d_c_prev.resize(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    const double dc_total = d_c[j] + d_h[j] * step.gate_o[j] * (1.0 - step.tanh_c[j] * step.tanh_c[j]);
    g.d_c_prev[j] = dc_total * step.gate_f[j];
  }
  return g;
}

// --- optimizer -----------------------------------------------------------

struct AdamState {
  Vecd m, v;
};

/// Bias-corrected adaptive update over a flat parameter vector.
inline void adam_step(Vecd& params, const Vecd& grads, AdamState& state, int step_index,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (params.size() != grads.size()) throw ContractError("adam_step: size mismatch");
  if (step_index < 1) throw ContractError("adam_step: step_index must be >= 1");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: stale moment shapes");
  const double c1 = 1.0 - std::pow(beta1, step_index);
  const double c2 = 1.0 - std::pow(beta2, step_index);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

// --- losses ---------------------------------------------------------------

/// Mean squared Euclidean displacement between two equal-length step
/// sequences.
inline double traj_mse(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.size() != b.size() || a.empty()) throw ContractError("traj_mse: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2 d = a[i] - b[i];
    sum += d.x * d.x + d.y * d.y;
  }
  return sum / static_cast<double>(a.size());
}

inline std::size_t variety_argmin(const std::vector<std::vector<Vec2>>& samples,
                                  const std::vector<Vec2>& gt) {
  if (samples.empty()) throw ContractError("variety_loss: need at least one sample");
  std::size_t best = 0;
  double best_loss = traj_mse(samples[0], gt);
  for (std::size_t k = 1; k < samples.size(); ++k) {
    const double loss = traj_mse(samples[k], gt);
    if (loss < best_loss) {
      best_loss = loss;
      best = k;
    }
  }
  return best;
}

/// Minimum over the k samples of the mean squared displacement to gt.
inline double variety_loss(const std::vector<std::vector<Vec2>>& samples,
                           const std::vector<Vec2>& gt) {
  return traj_mse(samples[variety_argmin(samples, gt)], gt);
}

}  // namespace qsym
