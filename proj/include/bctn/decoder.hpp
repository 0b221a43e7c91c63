#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bctn/config.hpp"
#include "bctn/encoder.hpp"
#include "bctn/errors.hpp"
#include "bctn/params.hpp"
#include "bctn/tensor.hpp"
#include "bctn/thinkers.hpp"
#include "bctn/vocab.hpp"

namespace bctn {

// Transformer decoder with two cross-attention sub-layers (over the pure
// encoding V and over the fused memory r) and a pointer-softmax switch.
// Decoding is incremental: each position is processed once, against the
// memory r that was current at its step, and its per-layer keys/values are
// cached. Teacher-forced training and generation share this exact path.

template <typename Real>
struct DecoderWeights {
  struct Layer {
    AttnWeights<Real> self_attn, cross_v, cross_r;
    TensorT<Real> ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b, ln4_g, ln4_b;
    TensorT<Real> ff1_w, ff1_b, ff2_w, ff2_b;
  };
  TensorT<Real> tok_emb;  // vocab x h
  TensorT<Real> pos_emb;  // max_len x h
  std::vector<Layer> layers;
  TensorT<Real> final_ln_g, final_ln_b;
  TensorT<Real> vocab_w;   // h x vocab
  TensorT<Real> vocab_b;   // vocab
  TensorT<Real> switch_w;  // 2h ([state ; r-attention context])
  TensorT<Real> switch_b;  // scalar
};

template <typename Real>
DecoderWeights<Real> init_decoder(ParameterStore<Real>& ps, const std::string& prefix,
                                  const ModelConfig& cfg, int vocab_size, Rng& rng) {
  const int h = cfg.h;
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  DecoderWeights<Real> w;
  w.tok_emb = ps.add_uniform(prefix + ".tok_emb", {vocab_size, h}, rng, bound);
  w.pos_emb = ps.add_uniform(prefix + ".pos_emb", {cfg.max_len, h}, rng, bound);
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    typename DecoderWeights<Real>::Layer layer;
    layer.self_attn = enc_detail::init_attn(ps, lp + ".self", h, rng);
    layer.cross_v = enc_detail::init_attn(ps, lp + ".cross_v", h, rng);
    layer.cross_r = enc_detail::init_attn(ps, lp + ".cross_r", h, rng);
    layer.ln1_g = ps.add_const(lp + ".ln1_g", {h}, Real(1));
    layer.ln1_b = ps.add_const(lp + ".ln1_b", {h}, Real(0));
    layer.ln2_g = ps.add_const(lp + ".ln2_g", {h}, Real(1));
    layer.ln2_b = ps.add_const(lp + ".ln2_b", {h}, Real(0));
    layer.ln3_g = ps.add_const(lp + ".ln3_g", {h}, Real(1));
    layer.ln3_b = ps.add_const(lp + ".ln3_b", {h}, Real(0));
    layer.ln4_g = ps.add_const(lp + ".ln4_g", {h}, Real(1));
    layer.ln4_b = ps.add_const(lp + ".ln4_b", {h}, Real(0));
    layer.ff1_w = ps.add_uniform(lp + ".ff1_w", {h, 4 * h}, rng, bound);
    layer.ff1_b = ps.add_const(lp + ".ff1_b", {4 * h}, Real(0));
    layer.ff2_w = ps.add_uniform(lp + ".ff2_w", {4 * h, h}, rng, 1.0 / std::sqrt(4.0 * h));
    layer.ff2_b = ps.add_const(lp + ".ff2_b", {h}, Real(0));
    w.layers.push_back(std::move(layer));
  }
  w.final_ln_g = ps.add_const(prefix + ".final_ln_g", {h}, Real(1));
  w.final_ln_b = ps.add_const(prefix + ".final_ln_b", {h}, Real(0));
  w.vocab_w = ps.add_uniform(prefix + ".vocab_w", {h, vocab_size}, rng, bound);
  w.vocab_b = ps.add_const(prefix + ".vocab_b", {vocab_size}, Real(0));
  w.switch_w = ps.add_uniform(prefix + ".switch_w", {2 * h}, rng, bound);
  w.switch_b = ps.add_const(prefix + ".switch_b", {1}, Real(0));
  return w;
}

template <typename Real>
DecoderWeights<Real> attach_decoder(ParameterStore<Real>& ps, const std::string& prefix,
                                    const ModelConfig& cfg, int vocab_size) {
  const int h = cfg.h;
  DecoderWeights<Real> w;
  w.tok_emb = ps.get_checked(prefix + ".tok_emb", {vocab_size, h});
  w.pos_emb = ps.get_checked(prefix + ".pos_emb", {cfg.max_len, h});
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    typename DecoderWeights<Real>::Layer layer;
    layer.self_attn = enc_detail::attach_attn(ps, lp + ".self", h);
    layer.cross_v = enc_detail::attach_attn(ps, lp + ".cross_v", h);
    layer.cross_r = enc_detail::attach_attn(ps, lp + ".cross_r", h);
    layer.ln1_g = ps.get_checked(lp + ".ln1_g", {h});
    layer.ln1_b = ps.get_checked(lp + ".ln1_b", {h});
    layer.ln2_g = ps.get_checked(lp + ".ln2_g", {h});
    layer.ln2_b = ps.get_checked(lp + ".ln2_b", {h});
    layer.ln3_g = ps.get_checked(lp + ".ln3_g", {h});
    layer.ln3_b = ps.get_checked(lp + ".ln3_b", {h});
    layer.ln4_g = ps.get_checked(lp + ".ln4_g", {h});
    layer.ln4_b = ps.get_checked(lp + ".ln4_b", {h});
    layer.ff1_w = ps.get_checked(lp + ".ff1_w", {h, 4 * h});
    layer.ff1_b = ps.get_checked(lp + ".ff1_b", {4 * h});
    layer.ff2_w = ps.get_checked(lp + ".ff2_w", {4 * h, h});
    layer.ff2_b = ps.get_checked(lp + ".ff2_b", {h});
    w.layers.push_back(std::move(layer));
  }
  w.final_ln_g = ps.get_checked(prefix + ".final_ln_g", {h});
  w.final_ln_b = ps.get_checked(prefix + ".final_ln_b", {h});
  w.vocab_w = ps.get_checked(prefix + ".vocab_w", {h, vocab_size});
  w.vocab_b = ps.get_checked(prefix + ".vocab_b", {vocab_size});
  w.switch_w = ps.get_checked(prefix + ".switch_w", {2 * h});
  w.switch_b = ps.get_checked(prefix + ".switch_b", {1});
  return w;
}

// Copy-source description: the pair input tokens and which positions may
// contribute copy mass ([CLS]/[SEP] are encoding artifacts, not text).
template <typename Real>
struct CopySource {
  std::vector<int> ids;   // length L
  TensorT<Real> keep;     // length L, 1.0 on copyable positions
  int vocab_size = 0;

  static CopySource from_ids(const std::vector<int>& src_ids, int vocab) {
    CopySource cs;
    cs.ids = src_ids;
    cs.vocab_size = vocab;
    std::vector<Real> keep(src_ids.size());
    for (size_t i = 0; i < src_ids.size(); ++i)
      keep[i] = (src_ids[i] >= special::kCount) ? Real(1) : Real(0);
    cs.keep = TensorT<Real>::constant({static_cast<int>(src_ids.size())}, std::move(keep));
    return cs;
  }
};

template <typename Real>
struct StepDistributionT {
  TensorT<Real> p_vocab;   // vocab simplex
  TensorT<Real> p_copy;    // simplex over the L source positions
  TensorT<Real> switch_s;  // scalar in (0,1)
  TensorT<Real> p_final;   // vocab simplex
};

template <typename Real>
struct DecoderRun {
  struct LayerCache {
    std::vector<TensorT<Real>> k_rows, v_rows;  // self-attention cache
    TensorT<Real> KV, VV;                       // keys/values over V (step-invariant)
  };
  std::vector<LayerCache> layers;
  std::vector<TensorT<Real>> gate_states;  // layer-1 post-self-attention states
  TensorT<Real> V;
  int n_pos = 0;
};

template <typename Real>
struct DecoderStepCursor {
  TensorT<Real> x;  // state after layer-1 self-attention residual
  int pos = 0;
};

namespace dec_detail {

// Single-query multi-head attention: q from `query`, keys/values rows given.
// Optionally emits the head-averaged attention weights and the projected
// context (pre-residual).
template <typename Real>
TensorT<Real> attend_one(const TensorT<Real>& query, const TensorT<Real>& K,
                         const TensorT<Real>& Vv, const AttnWeights<Real>& w, int heads,
                         TensorT<Real>* avg_attn_out = nullptr) {
  const int h = query.dim(0);
  const int dh = h / heads;
  auto q = vecmat(query, w.wq);
  std::vector<TensorT<Real>> ctxs;
  TensorT<Real> attn_sum;
  for (int hd = 0; hd < heads; ++hd) {
    auto qh = slice_vec(q, hd * dh, (hd + 1) * dh);
    auto Kh = slice_cols(K, hd * dh, (hd + 1) * dh);
    auto Vh = slice_cols(Vv, hd * dh, (hd + 1) * dh);
    auto attn = softmax_vec(scale(matvec(Kh, qh), Real(1) / std::sqrt(static_cast<Real>(dh))));
    if (avg_attn_out) attn_sum = attn_sum.defined() ? add(attn_sum, attn) : attn;
    ctxs.push_back(vecmat(attn, Vh));
  }
  if (avg_attn_out) *avg_attn_out = scale(attn_sum, Real(1) / static_cast<Real>(heads));
  return add(vecmat(concat_vec(ctxs), w.wo), w.bo);
}

}  // namespace dec_detail

template <typename Real>
DecoderRun<Real> start_decoder_run(const DecoderWeights<Real>& w, const TensorT<Real>& V) {
  DecoderRun<Real> run;
  run.V = V;
  run.layers.resize(w.layers.size());
  for (size_t l = 0; l < w.layers.size(); ++l) {
    run.layers[l].KV = matmul(V, w.layers[l].cross_v.wk);
    run.layers[l].VV = matmul(V, w.layers[l].cross_v.wv);
  }
  return run;
}

// Embeds the next input token and runs it through layer-1 self-attention.
// The resulting state joins the gate-attention prefix BEFORE the fused
// memory for this step is formed (the gate looks at already-produced
// tokens, including the one being fed).
template <typename Real>
DecoderStepCursor<Real> push_token(DecoderRun<Real>& run, const DecoderWeights<Real>& w,
                                   const ModelConfig& cfg, int token_id, bool training,
                                   Rng* drop_rng) {
  const int pos = run.n_pos;
  if (pos >= cfg.max_len) throw TooLong("decoder position exceeds max_len");
  auto x = add(row(w.tok_emb, token_id), row(w.pos_emb, pos));
  if (training && drop_rng) x = dropout(x, static_cast<Real>(cfg.dropout), *drop_rng);

  const auto& layer = w.layers[0];
  auto& cache = run.layers[0];
  auto qin = layer_norm_vec(x, layer.ln1_g, layer.ln1_b);
  cache.k_rows.push_back(vecmat(qin, layer.self_attn.wk));
  cache.v_rows.push_back(vecmat(qin, layer.self_attn.wv));
  auto K = stack_rows(cache.k_rows);
  auto Vv = stack_rows(cache.v_rows);
  auto attn_out = dec_detail::attend_one(qin, K, Vv, layer.self_attn, cfg.heads);
  auto x1 = add(x, attn_out);

  run.gate_states.push_back(x1);
  run.n_pos = pos + 1;
  return {x1, pos};
}

// Continues the pushed position through cross-attention over V, cross-
// attention over this step's memory r, feed-forward, and the remaining
// layers; assembles the output distribution.
template <typename Real>
StepDistributionT<Real> finish_step(DecoderRun<Real>& run, const DecoderWeights<Real>& w,
                                    const ModelConfig& cfg, const DecoderStepCursor<Real>& cur,
                                    const TensorT<Real>& r, const CopySource<Real>& src,
                                    ForwardProbe<Real>* probe = nullptr,
                                    const Real* force_switch = nullptr) {
  if (r.rank() != 2 || static_cast<size_t>(r.dim(1)) != src.ids.size())
    throw ShapeMismatch("finish_step: r columns must match source length");
  auto rT = transpose(r);  // L x h rows
  TensorT<Real> x = cur.x;
  TensorT<Real> p_copy, r_ctx;
  for (size_t l = 0; l < w.layers.size(); ++l) {
    const auto& layer = w.layers[l];
    auto& cache = run.layers[l];
    if (l > 0) {
      auto qin = layer_norm_vec(x, layer.ln1_g, layer.ln1_b);
      cache.k_rows.push_back(vecmat(qin, layer.self_attn.wk));
      cache.v_rows.push_back(vecmat(qin, layer.self_attn.wv));
      auto K = stack_rows(cache.k_rows);
      auto Vv = stack_rows(cache.v_rows);
      x = add(x, dec_detail::attend_one(qin, K, Vv, layer.self_attn, cfg.heads));
    }
    {
      auto qin = layer_norm_vec(x, layer.ln2_g, layer.ln2_b);
      x = add(x, dec_detail::attend_one(qin, cache.KV, cache.VV, layer.cross_v, cfg.heads));
    }
    {
      auto qin = layer_norm_vec(x, layer.ln3_g, layer.ln3_b);
      auto Kr = matmul(rT, layer.cross_r.wk);
      auto Vr = matmul(rT, layer.cross_r.wv);
      const bool last = (l + 1 == w.layers.size());
      TensorT<Real> avg_attn;
      auto ctx = dec_detail::attend_one(qin, Kr, Vr, layer.cross_r, cfg.heads,
                                        last ? &avg_attn : nullptr);
      if (last) {
        p_copy = avg_attn;
        r_ctx = ctx;
      }
      x = add(x, ctx);
    }
    {
      auto qin = layer_norm_vec(x, layer.ln4_g, layer.ln4_b);
      auto hidden = relu(add(vecmat(qin, layer.ff1_w), layer.ff1_b));
      x = add(x, add(vecmat(hidden, layer.ff2_w), layer.ff2_b));
    }
  }
  auto state = layer_norm_vec(x, w.final_ln_g, w.final_ln_b);

  StepDistributionT<Real> out;
  out.p_vocab = softmax_vec(add(vecmat(state, w.vocab_w), w.vocab_b));
  out.p_copy = p_copy;
  if (force_switch)
    out.switch_s = TensorT<Real>::scalar(*force_switch);
  else
    out.switch_s = sigmoid(
        add(dot(w.switch_w, concat_vec<Real>({state, r_ctx})), w.switch_b));

  // copy mass restricted to real source tokens, renormalized so the final
  // mixture stays a distribution
  auto masked = mul(out.p_copy, src.keep);
  auto z = clamp_min(sum(masked), Real(1e-30));
  auto copy_vocab = scatter_sum_vec(masked, src.ids, src.vocab_size);
  auto copy_norm = mul_scalar_broadcast(copy_vocab, div(TensorT<Real>::scalar(Real(1)), z));
  auto one_minus_sw = sub(TensorT<Real>::scalar(Real(1)), out.switch_s);
  out.p_final = add(mul_scalar_broadcast(out.p_vocab, out.switch_s),
                    mul_scalar_broadcast(copy_norm, one_minus_sw));

  if (probe) {
    probe->switches.push_back(out.switch_s.values()[0]);
    probe->p_vocabs.push_back(out.p_vocab.values());
    probe->p_copies.push_back(out.p_copy.values());
    probe->p_finals.push_back(out.p_final.values());
  }
  return out;
}

// Convenience form with a step-independent memory r: runs the whole prefix
// and returns the distribution for the next token. The per-step r variant
// lives in the stage pipelines, which recompute r from the gate each step.
template <typename Real>
StepDistributionT<Real> decode_step(const std::vector<int>& prefix_ids, const TensorT<Real>& V,
                                    const TensorT<Real>& r, const std::vector<int>& source_ids,
                                    const DecoderWeights<Real>& w, const ModelConfig& cfg,
                                    ForwardProbe<Real>* probe = nullptr,
                                    const Real* force_switch = nullptr) {
  if (prefix_ids.empty()) throw EmptyPrefix("decode_step: empty prefix");
  if (prefix_ids[0] != special::kBos) throw EmptyPrefix("decode_step: prefix must start with [BOS]");
  auto src = CopySource<Real>::from_ids(source_ids, w.vocab_w.dim(1));
  auto run = start_decoder_run(w, V);
  StepDistributionT<Real> last;
  for (int tok : prefix_ids) {
    auto cur = push_token(run, w, cfg, tok, false, nullptr);
    last = finish_step(run, w, cfg, cur, r, src, probe, force_switch);
  }
  return last;
}

// Mean NLL over non-pad target positions, probabilities clamped at 1e-9.
template <typename Real>
TensorT<Real> nll_loss(const std::vector<StepDistributionT<Real>>& steps,
                       const std::vector<int>& targets) {
  if (steps.size() != targets.size())
    throw LengthMismatch("nll_loss: got " + std::to_string(steps.size()) + " distributions for " +
                         std::to_string(targets.size()) + " targets");
  TensorT<Real> total;
  int n_real = 0;
  for (size_t t = 0; t < steps.size(); ++t) {
    if (targets[t] == special::kPad) continue;
    auto term = neg(logt(clamp_min(pick(steps[t].p_final, targets[t]), Real(1e-9))));
    total = total.defined() ? add(total, term) : term;
    ++n_real;
  }
  if (n_real == 0) throw LengthMismatch("nll_loss: no non-pad targets");
  return scale(total, Real(1) / static_cast<Real>(n_real));
}

// argmax with ties to the lowest id
template <typename Real>
int argmax_id(const TensorT<Real>& dist) {
  int best = 0;
  Real bv = dist.values()[0];
  for (long i = 1; i < dist.numel(); ++i)
    if (dist.values()[i] > bv) {
      bv = dist.values()[i];
      best = static_cast<int>(i);
    }
  return best;
}

}  // namespace bctn
