#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bctn/config.hpp"
#include "bctn/encoder.hpp"
#include "bctn/errors.hpp"
#include "bctn/params.hpp"
#include "bctn/tensor.hpp"

namespace bctn {

// Diagnostics collected during a forward pass; tests assert the
// distribution invariants on these.
template <typename Real>
struct ForwardProbe {
  std::vector<std::vector<Real>> gammas;          // per reasoning block, length L
  std::vector<std::vector<Real>> etas;            // per reasoning block, length L
  std::vector<std::vector<Real>> gate_attn_rows;  // each row of each gate attention
  std::vector<std::vector<Real>> gates;           // g per decode step, length L
  std::vector<Real> switches;                     // copy switch per decode step
  std::vector<std::vector<Real>> p_vocabs, p_copies, p_finals;
};

// Multi-step reasoning block weights. The gate half (attention + W_g/W_g')
// exists only for the reverse thinker; the inertial thinker reasons without
// a gate.
template <typename Real>
struct ThinkerWeights {
  TensorT<Real> W_s;  // h x 2h
  TensorT<Real> W_e;  // h x 3h
  TensorT<Real> W_a;  // h x 3h
  TensorT<Real> s0, e0;
  bool has_gate = false;
  AttnWeights<Real> gate_attn;
  TensorT<Real> W_g, W_gp;  // h each
};

template <typename Real>
ThinkerWeights<Real> init_thinker(ParameterStore<Real>& ps, const std::string& prefix,
                                  const ModelConfig& cfg, bool with_gate, Rng& rng) {
  const int h = cfg.h;
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  ThinkerWeights<Real> w;
  w.W_s = ps.add_uniform(prefix + ".W_s", {h, 2 * h}, rng, bound);
  w.W_e = ps.add_uniform(prefix + ".W_e", {h, 3 * h}, rng, bound);
  w.W_a = ps.add_uniform(prefix + ".W_a", {h, 3 * h}, rng, bound);
  w.s0 = ps.add_normal(prefix + ".s0", {h}, rng, 0.1);
  w.e0 = ps.add_normal(prefix + ".e0", {h}, rng, 0.1);
  w.has_gate = with_gate;
  if (with_gate) {
    w.gate_attn = enc_detail::init_attn(ps, prefix + ".gate_attn", h, rng);
    w.W_g = ps.add_uniform(prefix + ".W_g", {h}, rng, bound);
    w.W_gp = ps.add_uniform(prefix + ".W_gp", {h}, rng, bound);
  }
  return w;
}

template <typename Real>
ThinkerWeights<Real> attach_thinker(ParameterStore<Real>& ps, const std::string& prefix,
                                    const ModelConfig& cfg, bool with_gate) {
  const int h = cfg.h;
  ThinkerWeights<Real> w;
  w.W_s = ps.get_checked(prefix + ".W_s", {h, 2 * h});
  w.W_e = ps.get_checked(prefix + ".W_e", {h, 3 * h});
  w.W_a = ps.get_checked(prefix + ".W_a", {h, 3 * h});
  w.s0 = ps.get_checked(prefix + ".s0", {h});
  w.e0 = ps.get_checked(prefix + ".e0", {h});
  w.has_gate = with_gate;
  if (with_gate) {
    w.gate_attn = enc_detail::attach_attn(ps, prefix + ".gate_attn", h);
    w.W_g = ps.get_checked(prefix + ".W_g", {h});
    w.W_gp = ps.get_checked(prefix + ".W_gp", {h});
  }
  return w;
}

template <typename Real>
struct ReasoningState {
  int j = 0;
  TensorT<Real> s, e;          // h
  TensorT<Real> gamma, eta;    // L (of the last executed block)
  TensorT<Real> O, Z;          // h x L
};

template <typename Real>
ReasoningState<Real> initial_reasoning_state(const ThinkerWeights<Real>& w) {
  ReasoningState<Real> st;
  st.j = 0;
  st.s = w.s0;
  st.e = w.e0;
  return st;
}

// One reasoning block: start sub-block then end sub-block; the updated
// start vector feeds the end computation within the same block.
template <typename Real>
ReasoningState<Real> reasoning_block(const TensorT<Real>& U, const TensorT<Real>& V_tilde,
                                     const ThinkerWeights<Real>& w,
                                     const ReasoningState<Real>& state_in, int max_steps,
                                     ForwardProbe<Real>* probe = nullptr) {
  if (state_in.j >= max_steps)
    throw StepsExhausted("reasoning step " + std::to_string(state_in.j) + " >= J = " +
                         std::to_string(max_steps));
  if (U.rank() != 2 || V_tilde.rank() != 1 || V_tilde.dim(0) != U.dim(0))
    throw ShapeMismatch("reasoning_block: U[h x L] and V_tilde[h] expected");
  const int L = U.dim(1);

  ReasoningState<Real> st;
  st.j = state_in.j + 1;
  auto O = relu(matmul(w.W_s, concat_rows<Real>({repeat_columns(state_in.s, L), U})));
  auto gamma = softmax_vec(vecmat(V_tilde, O));
  auto s_next = matvec(O, gamma);
  auto Z = relu(matmul(
      w.W_e, concat_rows<Real>({repeat_columns(s_next, L), repeat_columns(state_in.e, L), U})));
  auto eta = softmax_vec(vecmat(V_tilde, Z));
  auto e_next = matvec(Z, eta);
  st.O = O;
  st.Z = Z;
  st.gamma = gamma;
  st.eta = eta;
  st.s = s_next;
  st.e = e_next;
  if (probe) {
    probe->gammas.push_back(gamma.values());
    probe->etas.push_back(eta.values());
  }
  return st;
}

// J reasoning blocks threaded, then the per-column projection onto the
// final reasoning vectors: u~_l = ReLU(W_a [s_J ; e_J ; u_l]).
template <typename Real>
TensorT<Real> reason(const TensorT<Real>& U, const TensorT<Real>& V_tilde,
                     const ThinkerWeights<Real>& w, int J, ForwardProbe<Real>* probe = nullptr) {
  if (J < 1) throw StepsExhausted("reason: J must be >= 1");
  const int L = U.dim(1);
  auto st = initial_reasoning_state(w);
  for (int j = 0; j < J; ++j) st = reasoning_block(U, V_tilde, w, st, J, probe);
  auto stacked = concat_rows<Real>({repeat_columns(st.s, L), repeat_columns(st.e, L), U});
  return relu(matmul(w.W_a, stacked));
}

// Multi-head attention with queries = rows of V (the pure-side encoding)
// and keys/values = decoder-side states of the already-produced prefix.
// Returns v_new (one row per pure-side token) and the max-pooled context.
template <typename Real>
std::pair<TensorT<Real>, TensorT<Real>> gate_context(const TensorT<Real>& V,
                                                     const TensorT<Real>& prefix_states,
                                                     const AttnWeights<Real>& w, int heads,
                                                     ForwardProbe<Real>* probe = nullptr) {
  if (!prefix_states.defined() || prefix_states.rank() != 2 || prefix_states.dim(0) < 1)
    throw EmptyPrefix("gate_context: need at least the [BOS] state");
  if (V.rank() != 2 || V.dim(1) != prefix_states.dim(1))
    throw ShapeMismatch("gate_context: V and prefix state widths differ");
  const int h = V.dim(1);
  const int dh = h / heads;
  auto Q = matmul(V, w.wq);
  auto K = matmul(prefix_states, w.wk);
  auto Vv = matmul(prefix_states, w.wv);
  std::vector<TensorT<Real>> head_outs;
  for (int hd = 0; hd < heads; ++hd) {
    auto Qh = slice_cols(Q, hd * dh, (hd + 1) * dh);
    auto Kh = slice_cols(K, hd * dh, (hd + 1) * dh);
    auto Vh = slice_cols(Vv, hd * dh, (hd + 1) * dh);
    auto attn =
        softmax_rows(scale(matmul(Qh, transpose(Kh)), Real(1) / std::sqrt(static_cast<Real>(dh))));
    if (probe) {
      const int rows = attn.dim(0), cols = attn.dim(1);
      for (int r = 0; r < rows; ++r)
        probe->gate_attn_rows.emplace_back(attn.values().begin() + static_cast<long>(r) * cols,
                                           attn.values().begin() + static_cast<long>(r + 1) * cols);
    }
    head_outs.push_back(matmul(attn, Vh));
  }
  auto v_new = add_row_broadcast(matmul(concat_cols(head_outs), w.wo), w.bo);
  return {v_new, max_pool_rows(v_new)};
}

// g_l = sigma(W_g . u_l + W_g' . c_t); u_new_l = g_l * u~_l.
template <typename Real>
TensorT<Real> gate_values(const TensorT<Real>& memory, const TensorT<Real>& c_t,
                          const ThinkerWeights<Real>& w) {
  if (memory.rank() != 2 || c_t.rank() != 1 || c_t.dim(0) != memory.dim(0))
    throw ShapeMismatch("gate_values: memory[h x L] and c_t[h] expected");
  return sigmoid(add_scalar_broadcast(vecmat(w.W_g, memory), dot(w.W_gp, c_t)));
}

template <typename Real>
TensorT<Real> apply_gate(const TensorT<Real>& memory, const TensorT<Real>& u_tilde,
                         const TensorT<Real>& c_t, const ThinkerWeights<Real>& w,
                         ForwardProbe<Real>* probe = nullptr) {
  if (u_tilde.shape() != memory.shape())
    throw ShapeMismatch("apply_gate: memory and u_tilde shapes differ");
  auto g = gate_values(memory, c_t, w);
  if (probe) probe->gates.push_back(g.values());
  return scale_columns(u_tilde, g);
}

// The inertial thinker is the same multi-step reasoner with forward-stage
// parameters and no gate.
template <typename Real>
TensorT<Real> inertial_think(const TensorT<Real>& U, const TensorT<Real>& V_tilde,
                             const ThinkerWeights<Real>& w, int J,
                             ForwardProbe<Real>* probe = nullptr) {
  return reason(U, V_tilde, w, J, probe);
}

// Full gate-reverse composition for one decode step: reason (caller may
// cache it), gate attention over the decoded prefix, gate application.
template <typename Real>
TensorT<Real> reverse_think(const TensorT<Real>& V_tilde, const TensorT<Real>& memory,
                            const TensorT<Real>& V, const TensorT<Real>& prefix_states,
                            const ThinkerWeights<Real>& w, const ModelConfig& cfg,
                            ForwardProbe<Real>* probe = nullptr) {
  auto u_tilde = reason(memory, V_tilde, w, cfg.J, probe);
  auto [v_new, c_t] = gate_context(V, prefix_states, w.gate_attn, cfg.heads, probe);
  return apply_gate(memory, u_tilde, c_t, w, probe);
}

}  // namespace bctn
