#pragma once

#include <map>
#include <string>
#include <vector>

#include "bctn/errors.hpp"
#include "bctn/rng.hpp"
#include "bctn/tensor.hpp"

namespace bctn {

// Named learnable arrays. Iteration is always in sorted-name order so that
// optimizer updates, checkpoint bytes and gradient norms are deterministic.
template <typename Real>
class ParameterStore {
 public:
  TensorT<Real>& add(const std::string& name, std::vector<int> shape, std::vector<Real> values,
                     bool trainable = true) {
    if (params_.count(name)) throw BctnError("duplicate parameter name: " + name);
    auto [it, ok] =
        params_.emplace(name, TensorT<Real>::leaf(std::move(shape), std::move(values), trainable));
    return it->second;
  }

  TensorT<Real>& add_uniform(const std::string& name, std::vector<int> shape, Rng& rng,
                             double bound, bool trainable = true) {
    long n = 1;
    for (int d : shape) n *= d;
    std::vector<Real> v(n);
    for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
    return add(name, std::move(shape), std::move(v), trainable);
  }

  TensorT<Real>& add_normal(const std::string& name, std::vector<int> shape, Rng& rng,
                            double stddev, bool trainable = true) {
    long n = 1;
    for (int d : shape) n *= d;
    std::vector<Real> v(n);
    for (auto& x : v) x = static_cast<Real>(rng.normal() * stddev);
    return add(name, std::move(shape), std::move(v), trainable);
  }

  TensorT<Real>& add_const(const std::string& name, std::vector<int> shape, Real fill,
                           bool trainable = true) {
    long n = 1;
    for (int d : shape) n *= d;
    return add(name, std::move(shape), std::vector<Real>(n, fill), trainable);
  }

  bool has(const std::string& name) const { return params_.count(name) > 0; }

  TensorT<Real>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw BctnError("unknown parameter: " + name);
    return it->second;
  }
  const TensorT<Real>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw BctnError("unknown parameter: " + name);
    return it->second;
  }

  // Fetch with a shape check; models attach through this so a checkpoint
  // with wrong dims fails loudly.
  TensorT<Real>& get_checked(const std::string& name, const std::vector<int>& shape) {
    TensorT<Real>& t = get(name);
    if (t.shape() != shape) throw IncompatibleDims("parameter " + name + " has unexpected shape");
    return t;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
  }

  size_t size() const { return params_.size(); }

  void freeze_prefix(const std::string& prefix) {
    for (auto& [k, v] : params_)
      if (k.rfind(prefix, 0) == 0) v.set_requires_grad(false);
  }

  // (name, tensor) pairs that require grad, sorted by name.
  std::vector<std::pair<std::string, TensorT<Real>>> trainable() const {
    std::vector<std::pair<std::string, TensorT<Real>>> out;
    for (const auto& [k, v] : params_)
      if (v.requires_grad()) out.emplace_back(k, v);
    return out;
  }

  std::vector<std::pair<std::string, TensorT<Real>>> all() const {
    std::vector<std::pair<std::string, TensorT<Real>>> out;
    for (const auto& [k, v] : params_) out.emplace_back(k, v);
    return out;
  }

  void zero_grads() {
    for (auto& [k, v] : params_) v.zero_grad();
  }

  // Deep copy: fresh leaves, no shared nodes (gradient checker clones the
  // store per worker).
  ParameterStore clone() const {
    ParameterStore out;
    for (const auto& [k, v] : params_)
      out.add(k, v.shape(), v.values(), v.requires_grad());
    return out;
  }

  template <typename R2>
  ParameterStore<R2> cast() const {
    ParameterStore<R2> out;
    for (const auto& [k, v] : params_) {
      std::vector<R2> vals(v.values().begin(), v.values().end());
      out.add(k, v.shape(), std::move(vals), v.requires_grad());
    }
    return out;
  }

  // Import every tensor from `src` under this store, replacing same-name
  // entries; used to merge stage-1 weights into a stage-2 store.
  void merge_from(const ParameterStore& src, bool trainable) {
    for (const auto& [k, v] : src.params_) {
      params_.erase(k);
      add(k, v.shape(), v.values(), trainable);
    }
  }

 private:
  std::map<std::string, TensorT<Real>> params_;
};

}  // namespace bctn
