#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bctn/config.hpp"
#include "bctn/errors.hpp"
#include "bctn/params.hpp"
#include "bctn/tensor.hpp"
#include "bctn/vocab.hpp"

namespace bctn {

enum class Side { Backward, Forward };

inline Side side_from_string(const std::string& s) {
  if (s == "backward") return Side::Backward;
  if (s == "forward") return Side::Forward;
  throw UnknownSide("encoder side must be \"backward\" or \"forward\", got \"" + s + "\"");
}

// Pre-LN transformer encoder over embedded tokens. Two independent
// instances exist per model (backward-stage and forward-stage); their
// parameters live under different prefixes and are never tied.
template <typename Real>
struct AttnWeights {
  TensorT<Real> wq, wk, wv, wo;  // h x h each
  TensorT<Real> bo;              // h
};

template <typename Real>
struct EncoderWeights {
  struct Layer {
    AttnWeights<Real> attn;
    TensorT<Real> ln1_g, ln1_b, ln2_g, ln2_b;
    TensorT<Real> ff1_w, ff1_b, ff2_w, ff2_b;  // h x 4h, 4h, 4h x h, h
  };
  TensorT<Real> tok_emb;  // vocab x h
  TensorT<Real> pos_emb;  // max_len x h
  std::vector<Layer> layers;
  TensorT<Real> final_ln_g, final_ln_b;
  TensorT<Real> proj_w, proj_b;  // h x h, h -- applied to the pair encoding only
};

namespace enc_detail {

template <typename Real>
AttnWeights<Real> init_attn(ParameterStore<Real>& ps, const std::string& p, int h, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  AttnWeights<Real> w;
  w.wq = ps.add_uniform(p + ".wq", {h, h}, rng, bound);
  w.wk = ps.add_uniform(p + ".wk", {h, h}, rng, bound);
  w.wv = ps.add_uniform(p + ".wv", {h, h}, rng, bound);
  w.wo = ps.add_uniform(p + ".wo", {h, h}, rng, bound);
  w.bo = ps.add_const(p + ".bo", {h}, Real(0));
  return w;
}

template <typename Real>
AttnWeights<Real> attach_attn(ParameterStore<Real>& ps, const std::string& p, int h) {
  AttnWeights<Real> w;
  w.wq = ps.get_checked(p + ".wq", {h, h});
  w.wk = ps.get_checked(p + ".wk", {h, h});
  w.wv = ps.get_checked(p + ".wv", {h, h});
  w.wo = ps.get_checked(p + ".wo", {h, h});
  w.bo = ps.get_checked(p + ".bo", {h});
  return w;
}

}  // namespace enc_detail

template <typename Real>
EncoderWeights<Real> init_encoder(ParameterStore<Real>& ps, const std::string& prefix,
                                  const ModelConfig& cfg, int vocab_size, Rng& rng) {
  const int h = cfg.h;
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  EncoderWeights<Real> w;
  w.tok_emb = ps.add_uniform(prefix + ".tok_emb", {vocab_size, h}, rng, bound);
  w.pos_emb = ps.add_uniform(prefix + ".pos_emb", {cfg.max_len, h}, rng, bound);
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    typename EncoderWeights<Real>::Layer layer;
    layer.attn = enc_detail::init_attn(ps, lp + ".attn", h, rng);
    layer.ln1_g = ps.add_const(lp + ".ln1_g", {h}, Real(1));
    layer.ln1_b = ps.add_const(lp + ".ln1_b", {h}, Real(0));
    layer.ln2_g = ps.add_const(lp + ".ln2_g", {h}, Real(1));
    layer.ln2_b = ps.add_const(lp + ".ln2_b", {h}, Real(0));
    layer.ff1_w = ps.add_uniform(lp + ".ff1_w", {h, 4 * h}, rng, bound);
    layer.ff1_b = ps.add_const(lp + ".ff1_b", {4 * h}, Real(0));
    layer.ff2_w = ps.add_uniform(lp + ".ff2_w", {4 * h, h}, rng, 1.0 / std::sqrt(4.0 * h));
    layer.ff2_b = ps.add_const(lp + ".ff2_b", {h}, Real(0));
    w.layers.push_back(std::move(layer));
  }
  w.final_ln_g = ps.add_const(prefix + ".final_ln_g", {h}, Real(1));
  w.final_ln_b = ps.add_const(prefix + ".final_ln_b", {h}, Real(0));
  w.proj_w = ps.add_uniform(prefix + ".proj_w", {h, h}, rng, bound);
  w.proj_b = ps.add_const(prefix + ".proj_b", {h}, Real(0));
  return w;
}

template <typename Real>
EncoderWeights<Real> attach_encoder(ParameterStore<Real>& ps, const std::string& prefix,
                                    const ModelConfig& cfg, int vocab_size) {
  const int h = cfg.h;
  EncoderWeights<Real> w;
  w.tok_emb = ps.get_checked(prefix + ".tok_emb", {vocab_size, h});
  w.pos_emb = ps.get_checked(prefix + ".pos_emb", {cfg.max_len, h});
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    typename EncoderWeights<Real>::Layer layer;
    layer.attn = enc_detail::attach_attn(ps, lp + ".attn", h);
    layer.ln1_g = ps.get_checked(lp + ".ln1_g", {h});
    layer.ln1_b = ps.get_checked(lp + ".ln1_b", {h});
    layer.ln2_g = ps.get_checked(lp + ".ln2_g", {h});
    layer.ln2_b = ps.get_checked(lp + ".ln2_b", {h});
    layer.ff1_w = ps.get_checked(lp + ".ff1_w", {h, 4 * h});
    layer.ff1_b = ps.get_checked(lp + ".ff1_b", {4 * h});
    layer.ff2_w = ps.get_checked(lp + ".ff2_w", {4 * h, h});
    layer.ff2_b = ps.get_checked(lp + ".ff2_b", {h});
    w.layers.push_back(std::move(layer));
  }
  w.final_ln_g = ps.get_checked(prefix + ".final_ln_g", {h});
  w.final_ln_b = ps.get_checked(prefix + ".final_ln_b", {h});
  w.proj_w = ps.get_checked(prefix + ".proj_w", {h, h});
  w.proj_b = ps.get_checked(prefix + ".proj_b", {h});
  return w;
}

// Full (non-causal) multi-head self-attention over row-major states T x h.
template <typename Real>
TensorT<Real> self_attention_rows(const TensorT<Real>& x, const AttnWeights<Real>& w, int heads) {
  const int h = x.dim(1);
  const int dh = h / heads;
  auto Q = matmul(x, w.wq);
  auto K = matmul(x, w.wk);
  auto V = matmul(x, w.wv);
  std::vector<TensorT<Real>> head_outs;
  for (int hd = 0; hd < heads; ++hd) {
    auto Qh = slice_cols(Q, hd * dh, (hd + 1) * dh);
    auto Kh = slice_cols(K, hd * dh, (hd + 1) * dh);
    auto Vh = slice_cols(V, hd * dh, (hd + 1) * dh);
    auto scores = scale(matmul(Qh, transpose(Kh)), Real(1) / std::sqrt(static_cast<Real>(dh)));
    auto attn = softmax_rows(scores);
    head_outs.push_back(matmul(attn, Vh));
  }
  return add_row_broadcast(matmul(concat_cols(head_outs), w.wo), w.bo);
}

// Embeds ids (token + learned position) and runs the pre-LN stack.
// Returns row-major T x h states after the final layer norm.
template <typename Real>
TensorT<Real> encoder_stack(const EncoderWeights<Real>& w, const std::vector<int>& ids,
                            const ModelConfig& cfg, bool training, Rng* drop_rng) {
  if (ids.empty()) throw EmptyInput("encoder_stack: no input tokens");
  if (static_cast<int>(ids.size()) > cfg.max_len)
    throw TooLong("encoder input length " + std::to_string(ids.size()) + " exceeds max_len " +
                  std::to_string(cfg.max_len));
  const int T = static_cast<int>(ids.size());
  auto x = add(embedding_rows(w.tok_emb, ids), slice_rows(w.pos_emb, 0, T));
  if (training && drop_rng) x = dropout(x, static_cast<Real>(cfg.dropout), *drop_rng);
  for (const auto& layer : w.layers) {
    auto attn_in = layer_norm_rows(x, layer.ln1_g, layer.ln1_b);
    auto attn_out = self_attention_rows(attn_in, layer.attn, cfg.heads);
    if (training && drop_rng) attn_out = dropout(attn_out, static_cast<Real>(cfg.dropout), *drop_rng);
    x = add(x, attn_out);
    auto ff_in = layer_norm_rows(x, layer.ln2_g, layer.ln2_b);
    auto ff_out = add_row_broadcast(
        matmul(relu(add_row_broadcast(matmul(ff_in, layer.ff1_w), layer.ff1_b)), layer.ff2_w),
        layer.ff2_b);
    if (training && drop_rng) ff_out = dropout(ff_out, static_cast<Real>(cfg.dropout), *drop_rng);
    x = add(x, ff_out);
  }
  return layer_norm_rows(x, w.final_ln_g, w.final_ln_b);
}

template <typename Real>
struct EncoderOutputT {
  TensorT<Real> U;        // h x L, column per token
  TensorT<Real> V;        // (K+2) x h, row per token
  TensorT<Real> V_tilde;  // h, first row of V
  TensorT<Real> u_cls;    // h, first column of U (exposed, unused downstream)
  int L = 0;
};

// [CLS] first [SEP] passage [SEP] -> projected memory U (h x L).
template <typename Real>
TensorT<Real> encode_pair(const EncoderWeights<Real>& w, const std::vector<int>& first,
                          const std::vector<int>& passage, const ModelConfig& cfg, bool training,
                          Rng* drop_rng) {
  if (first.empty() || passage.empty()) throw EmptyInput("encode_pair: empty segment");
  std::vector<int> ids;
  ids.reserve(first.size() + passage.size() + 3);
  ids.push_back(special::kCls);
  ids.insert(ids.end(), first.begin(), first.end());
  ids.push_back(special::kSep);
  ids.insert(ids.end(), passage.begin(), passage.end());
  ids.push_back(special::kSep);
  auto states = encoder_stack(w, ids, cfg, training, drop_rng);
  auto projected = add_row_broadcast(matmul(states, w.proj_w), w.proj_b);
  return transpose(projected);
}

// [CLS] first [SEP] -> (V, V_tilde); no output projection.
template <typename Real>
std::pair<TensorT<Real>, TensorT<Real>> encode_single(const EncoderWeights<Real>& w,
                                                      const std::vector<int>& first,
                                                      const ModelConfig& cfg, bool training,
                                                      Rng* drop_rng) {
  if (first.empty()) throw EmptyInput("encode_single: empty segment");
  std::vector<int> ids;
  ids.reserve(first.size() + 2);
  ids.push_back(special::kCls);
  ids.insert(ids.end(), first.begin(), first.end());
  ids.push_back(special::kSep);
  auto V = encoder_stack(w, ids, cfg, training, drop_rng);
  return {V, row(V, 0)};
}

// Assembles the pair input ids (also the copy-source positions).
inline std::vector<int> pair_input_ids(const std::vector<int>& first,
                                       const std::vector<int>& passage) {
  std::vector<int> ids;
  ids.reserve(first.size() + passage.size() + 3);
  ids.push_back(special::kCls);
  ids.insert(ids.end(), first.begin(), first.end());
  ids.push_back(special::kSep);
  ids.insert(ids.end(), passage.begin(), passage.end());
  ids.push_back(special::kSep);
  return ids;
}

template <typename Real>
EncoderOutputT<Real> encode_example(const EncoderWeights<Real>& w, const std::vector<int>& first,
                                    const std::vector<int>& passage, const ModelConfig& cfg,
                                    bool training, Rng* drop_rng) {
  EncoderOutputT<Real> out;
  out.U = encode_pair(w, first, passage, cfg, training, drop_rng);
  auto [V, vt] = encode_single(w, first, cfg, training, drop_rng);
  out.V = V;
  out.V_tilde = vt;
  out.u_cls = col(out.U, 0);
  out.L = out.U.dim(1);
  return out;
}

}  // namespace bctn
