#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bctn/params.hpp"
#include "bctn/tensor.hpp"

namespace bctn {

struct GradCheckResult {
  double max_rel_err = 0.0;
  long checked = 0;
  long skipped_small = 0;  // |analytic| and |numeric| both below the floor
  long skipped_kink = 0;   // perturbation crossed a relu/max/clamp branch
};

// Central finite differences vs reverse-mode gradients over every
// requires_grad coordinate of `params`. `loss_fn` must evaluate a fresh
// graph on the store it is given. Coordinates whose +/-eps evaluations take
// different data-dependent branches are skipped (the loss is not
// differentiable across the kink), as are coordinates where both gradient
// estimates are below 1e-8.
template <typename Real, typename LossFn>
GradCheckResult grad_check(ParameterStore<Real>& params, LossFn loss_fn, Real eps) {
  GradCheckResult res;

  // analytic pass + baseline branch signature
  params.zero_grads();
  uint64_t base_sig;
  {
    BranchRecorder rec;
    BranchRecorder::Scope scope(&rec);
    TensorT<Real> loss = loss_fn(params);
    loss.backward();
    base_sig = rec.hash();
  }

  struct Coord {
    std::string name;
    long idx;
    double analytic;
  };
  std::vector<Coord> coords;
  for (auto& [name, t] : params.trainable()) {
    const auto& g = t.grad();
    for (long i = 0; i < t.numel(); ++i)
      coords.push_back({name, i, g.empty() ? 0.0 : static_cast<double>(g[i])});
  }

  auto eval_at = [&](ParameterStore<Real>& store, uint64_t* sig) {
    BranchRecorder rec;
    BranchRecorder::Scope scope(&rec);
    NoGradGuard ng;
    const double v = static_cast<double>(loss_fn(store).item());
    *sig = rec.hash();
    return v;
  };

  ParameterStore<Real> work = params.clone();
  for (const Coord& c : coords) {
    Real& slot = work.get(c.name).mutable_values()[c.idx];
    const Real saved = slot;

    uint64_t sig_p, sig_m;
    slot = saved + eps;
    const double fp = eval_at(work, &sig_p);
    slot = saved - eps;
    const double fm = eval_at(work, &sig_m);
    slot = saved;

    if (sig_p != base_sig || sig_m != base_sig) {
      ++res.skipped_kink;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * static_cast<double>(eps));
    if (std::abs(c.analytic) < 1e-8 && std::abs(numeric) < 1e-8) {
      ++res.skipped_small;
      continue;
    }
    const double rel = std::abs(c.analytic - numeric) /
                       std::max({std::abs(c.analytic), std::abs(numeric), 1e-8});
    res.max_rel_err = std::max(res.max_rel_err, rel);
    ++res.checked;
  }
  return res;
}

}  // namespace bctn
