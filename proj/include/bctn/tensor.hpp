#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bctn/errors.hpp"
#include "bctn/kernels.hpp"
#include "bctn/rng.hpp"

namespace bctn {

// Define-by-run reverse-mode autodiff over dense rank-1..3 tensors.
// A TensorT is a shared handle to a graph node; the graph IS the tape:
// each op node keeps shared_ptr parents plus a closure that pulls the
// node's grad into its parents. backward() walks the graph in reverse
// topological order exactly once. Graphs are rebuilt every forward pass
// (sequence lengths vary per example) and freed when handles drop.
//
// Real is float in production; the finite-difference oracle instantiates
// the identical code with double.

namespace detail {

template <typename Real>
struct NodeT {
  std::vector<int> shape;
  std::vector<Real> val;
  std::vector<Real> grad;  // allocated lazily in backward
  bool requires_grad = false;
  bool tracked = false;  // a requires_grad leaf is reachable from here
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), Real(0));
  }
};

inline thread_local int t_no_grad_depth = 0;

}  // namespace detail

inline bool grad_enabled() { return detail::t_no_grad_depth == 0; }

// Disables graph construction in scope (inference / generation).
struct NoGradGuard {
  NoGradGuard() { ++detail::t_no_grad_depth; }
  ~NoGradGuard() { --detail::t_no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Accumulates a hash of every data-dependent branch taken during a forward
// pass (relu sign bits, argmax picks, clamp hits). The gradient checker
// compares hashes of the +eps / -eps evaluations: a mismatch means the
// perturbation crossed a kink and the coordinate must be skipped.
class BranchRecorder {
 public:
  void add(uint64_t v) {
    hash_ ^= v + 0x9e3779b97f4a7c15ull + (hash_ << 6) + (hash_ >> 2);
  }
  uint64_t hash() const { return hash_; }

  struct Scope {
    explicit Scope(BranchRecorder* r) { prev_ = std::exchange(current_, r); }
    ~Scope() { current_ = prev_; }
    BranchRecorder* prev_;
  };
  static BranchRecorder* active() { return current_; }

 private:
  uint64_t hash_ = 1469598103934665603ull;
  static inline thread_local BranchRecorder* current_ = nullptr;
};

template <typename Real>
class TensorT {
 public:
  using Node = detail::NodeT<Real>;

  TensorT() = default;

  static TensorT leaf(std::vector<int> shape, std::vector<Real> values, bool requires_grad) {
    check_shape(shape, values.size());
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->val = std::move(values);
    n->requires_grad = requires_grad;
    n->tracked = requires_grad;
    return TensorT(std::move(n));
  }

  static TensorT constant(std::vector<int> shape, std::vector<Real> values) {
    return leaf(std::move(shape), std::move(values), false);
  }

  static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
    long n = 1;
    for (int d : shape) n *= d;
    return leaf(std::move(shape), std::vector<Real>(n, Real(0)), requires_grad);
  }

  static TensorT full(std::vector<int> shape, Real v) {
    long n = 1;
    for (int d : shape) n *= d;
    return leaf(std::move(shape), std::vector<Real>(n, v), false);
  }

  static TensorT scalar(Real v) { return constant({1}, {v}); }

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int dim(int i) const { return n_->shape[i]; }
  long numel() const { return static_cast<long>(n_->val.size()); }
  const std::vector<Real>& values() const { return n_->val; }
  std::vector<Real>& mutable_values() { return n_->val; }
  const std::vector<Real>& grad() const { return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) {
    n_->requires_grad = b;
    n_->tracked = b || !n_->parents.empty();
  }
  bool tracked() const { return n_->tracked; }
  Node* node() const { return n_.get(); }
  std::shared_ptr<Node> handle() const { return n_; }

  Real item() const {
    if (numel() != 1) throw NotScalar("item() on tensor with numel != 1");
    return n_->val[0];
  }

  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), Real(0));
  }

  // Detached copy of the values (fresh leaf, no history).
  TensorT detach_copy(bool requires_grad = false) const {
    return leaf(n_->shape, n_->val, requires_grad);
  }

  void backward() const {
    if (numel() != 1) throw NotScalar("backward requires a scalar loss");
    if (!n_->tracked) throw DetachedGraph("loss is not connected to any requires_grad tensor");

    // iterative post-order DFS; every node visited exactly once
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame {
      Node* node;
      size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({n_.get(), 0});
    seen.insert(n_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        Node* p = f.node->parents[f.next_parent++].get();
        if (p->tracked && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
    n_->ensure_grad();
    n_->grad[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
  }

  explicit TensorT(std::shared_ptr<Node> n) : n_(std::move(n)) {}

 private:
  static void check_shape(const std::vector<int>& shape, size_t n) {
    if (shape.empty() || shape.size() > 3)
      throw ShapeMismatch("tensor rank must be 1..3, got " + std::to_string(shape.size()));
    long prod = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeMismatch("tensor dims must be positive");
      prod *= d;
    }
    if (static_cast<size_t>(prod) != n)
      throw ShapeMismatch("value count does not match shape product");
  }

  std::shared_ptr<Node> n_;
};

using Tensor = TensorT<float>;

// ---------------------------------------------------------------------------
// op plumbing
// ---------------------------------------------------------------------------

namespace detail {

template <typename Real>
TensorT<Real> make_op(std::vector<int> shape, std::vector<Real> vals,
                      std::vector<TensorT<Real>> parents,
                      std::function<void(NodeT<Real>&)> bwd) {
  auto n = std::make_shared<NodeT<Real>>();
  n->shape = std::move(shape);
  n->val = std::move(vals);
  bool track = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p.tracked()) {
        track = true;
        break;
      }
  }
  if (track) {
    n->tracked = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.handle());
    n->backward_fn = std::move(bwd);
  }
  return TensorT<Real>(std::move(n));
}

template <typename Real>
void require_same_shape(const TensorT<Real>& a, const TensorT<Real>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": operand shapes differ");
}

}  // namespace detail

// --- elementwise -----------------------------------------------------------

template <typename Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b) {
  detail::require_same_shape(a, b, "add");
  const long n = a.numel();
  std::vector<Real> y(n);
  kernels::vadd(a.values().data(), b.values().data(), y.data(), n);
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_op<Real>(a.shape(), std::move(y), {a, b},
                               [pa, pb](detail::NodeT<Real>& node) {
                                 if (pa->tracked) {
                                   pa->ensure_grad();
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     pa->grad[i] += node.grad[i];
                                 }
                                 if (pb->tracked) {
                                   pb->ensure_grad();
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     pb->grad[i] += node.grad[i];
                                 }
                               });
}

template <typename Real>
TensorT<Real> sub(const TensorT<Real>& a, const TensorT<Real>& b) {
  detail::require_same_shape(a, b, "sub");
  const long n = a.numel();
  std::vector<Real> y(n);
  kernels::vsub(a.values().data(), b.values().data(), y.data(), n);
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_op<Real>(a.shape(), std::move(y), {a, b},
                               [pa, pb](detail::NodeT<Real>& node) {
                                 if (pa->tracked) {
                                   pa->ensure_grad();
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     pa->grad[i] += node.grad[i];
                                 }
                                 if (pb->tracked) {
                                   pb->ensure_grad();
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     pb->grad[i] -= node.grad[i];
                                 }
                               });
}

template <typename Real>
TensorT<Real> mul(const TensorT<Real>& a, const TensorT<Real>& b) {
  detail::require_same_shape(a, b, "mul");
  const long n = a.numel();
  std::vector<Real> y(n);
  kernels::vmul(a.values().data(), b.values().data(), y.data(), n);
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_op<Real>(a.shape(), std::move(y), {a, b},
                               [pa, pb](detail::NodeT<Real>& node) {
                                 if (pa->tracked) {
                                   pa->ensure_grad();
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     pa->grad[i] += node.grad[i] * pb->val[i];
                                 }
                                 if (pb->tracked) {
                                   pb->ensure_grad();
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     pb->grad[i] += node.grad[i] * pa->val[i];
                                 }
                               });
}

template <typename Real>
TensorT<Real> div(const TensorT<Real>& a, const TensorT<Real>& b) {
  detail::require_same_shape(a, b, "div");
  const long n = a.numel();
  std::vector<Real> y(n);
  for (long i = 0; i < n; ++i) y[i] = a.values()[i] / b.values()[i];
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_op<Real>(a.shape(), std::move(y), {a, b},
                               [pa, pb](detail::NodeT<Real>& node) {
                                 for (size_t i = 0; i < node.grad.size(); ++i) {
                                   const Real inv = Real(1) / pb->val[i];
                                   if (pa->tracked) {
                                     pa->ensure_grad();
                                     pa->grad[i] += node.grad[i] * inv;
                                   }
                                   if (pb->tracked) {
                                     pb->ensure_grad();
                                     pb->grad[i] -= node.grad[i] * node.val[i] * inv;
                                   }
                                 }
                               });
}

template <typename Real>
TensorT<Real> relu(const TensorT<Real>& x) {
  const long n = x.numel();
  std::vector<Real> y(n);
  kernels::vrelu(x.values().data(), y.data(), n);
  if (auto* rec = BranchRecorder::active()) {
    uint64_t bits = 0;
    for (long i = 0; i < n; ++i) {
      bits = (bits << 1) | (x.values()[i] > Real(0) ? 1u : 0u);
      if ((i & 63) == 63) {
        rec->add(bits);
        bits = 0;
      }
    }
    rec->add(bits);
  }
  auto px = x.handle();
  return detail::make_op<Real>(x.shape(), std::move(y), {x},
                               [px](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < node.grad.size(); ++i)
                                   if (px->val[i] > Real(0)) px->grad[i] += node.grad[i];
                               });
}

template <typename Real>
TensorT<Real> sigmoid(const TensorT<Real>& x) {
  const long n = x.numel();
  std::vector<Real> y(n);
  kernels::vsigmoid(x.values().data(), y.data(), n);
  auto px = x.handle();
  return detail::make_op<Real>(x.shape(), std::move(y), {x},
                               [px](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < node.grad.size(); ++i)
                                   px->grad[i] +=
                                       node.grad[i] * node.val[i] * (Real(1) - node.val[i]);
                               });
}

template <typename Real>
TensorT<Real> logt(const TensorT<Real>& x) {
  const long n = x.numel();
  std::vector<Real> y(n);
  for (long i = 0; i < n; ++i) y[i] = std::log(x.values()[i]);
  auto px = x.handle();
  return detail::make_op<Real>(x.shape(), std::move(y), {x},
                               [px](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < node.grad.size(); ++i)
                                   px->grad[i] += node.grad[i] / px->val[i];
                               });
}

template <typename Real>
TensorT<Real> scale(const TensorT<Real>& x, Real c) {
  const long n = x.numel();
  std::vector<Real> y(n);
  for (long i = 0; i < n; ++i) y[i] = x.values()[i] * c;
  auto px = x.handle();
  return detail::make_op<Real>(x.shape(), std::move(y), {x},
                               [px, c](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < node.grad.size(); ++i)
                                   px->grad[i] += node.grad[i] * c;
                               });
}

template <typename Real>
TensorT<Real> neg(const TensorT<Real>& x) {
  return scale(x, Real(-1));
}

// y = max(x, c); gradient passes only where x > c (kink recorded).
template <typename Real>
TensorT<Real> clamp_min(const TensorT<Real>& x, Real c) {
  const long n = x.numel();
  std::vector<Real> y(n);
  for (long i = 0; i < n; ++i) y[i] = x.values()[i] > c ? x.values()[i] : c;
  if (auto* rec = BranchRecorder::active()) {
    uint64_t bits = 0;
    for (long i = 0; i < n; ++i) {
      bits = (bits << 1) | (x.values()[i] > c ? 1u : 0u);
      if ((i & 63) == 63) {
        rec->add(bits);
        bits = 0;
      }
    }
    rec->add(bits);
  }
  auto px = x.handle();
  return detail::make_op<Real>(x.shape(), std::move(y), {x},
                               [px, c](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < node.grad.size(); ++i)
                                   if (px->val[i] > c) px->grad[i] += node.grad[i];
                               });
}

// --- reductions / indexing -------------------------------------------------

template <typename Real>
TensorT<Real> sum(const TensorT<Real>& x) {
  Real s = Real(0);
  for (Real v : x.values()) s += v;
  auto px = x.handle();
  return detail::make_op<Real>({1}, {s}, {x},
                               [px](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < px->grad.size(); ++i)
                                   px->grad[i] += node.grad[0];
                               });
}

template <typename Real>
TensorT<Real> dot(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.numel() != b.numel())
    throw ShapeMismatch("dot: need equal-length vectors");
  Real s = Real(0);
  for (long i = 0; i < a.numel(); ++i) s += a.values()[i] * b.values()[i];
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_op<Real>({1}, {s}, {a, b},
                               [pa, pb](detail::NodeT<Real>& node) {
                                 const Real g = node.grad[0];
                                 if (pa->tracked) {
                                   pa->ensure_grad();
                                   for (size_t i = 0; i < pa->grad.size(); ++i)
                                     pa->grad[i] += g * pb->val[i];
                                 }
                                 if (pb->tracked) {
                                   pb->ensure_grad();
                                   for (size_t i = 0; i < pb->grad.size(); ++i)
                                     pb->grad[i] += g * pa->val[i];
                                 }
                               });
}

template <typename Real>
TensorT<Real> pick(const TensorT<Real>& x, int index) {
  if (x.rank() != 1) throw ShapeMismatch("pick: rank-1 expected");
  if (index < 0 || index >= x.dim(0)) throw ShapeMismatch("pick: index out of range");
  auto px = x.handle();
  return detail::make_op<Real>({1}, {x.values()[index]}, {x},
                               [px, index](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 px->grad[index] += node.grad[0];
                               });
}

// --- shape ops ---------------------------------------------------------------

template <typename Real>
TensorT<Real> transpose(const TensorT<Real>& x) {
  if (x.rank() != 2) throw ShapeMismatch("transpose: rank-2 expected");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<Real> y(static_cast<size_t>(r) * c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) y[static_cast<long>(j) * r + i] = x.values()[static_cast<long>(i) * c + j];
  auto px = x.handle();
  return detail::make_op<Real>({c, r}, std::move(y), {x},
                               [px, r, c](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (int i = 0; i < r; ++i)
                                   for (int j = 0; j < c; ++j)
                                     px->grad[static_cast<long>(i) * c + j] +=
                                         node.grad[static_cast<long>(j) * r + i];
                               });
}

// concat along axis (rank-1: axis 0; rank-2: axis 0 rows / axis 1 cols)
template <typename Real>
TensorT<Real> concat(const std::vector<TensorT<Real>>& parts, int axis) {
  if (parts.empty()) throw EmptyInput("concat: no parts");
  const int rank = parts[0].rank();
  if (rank == 1) {
    if (axis != 0) throw ShapeMismatch("concat: rank-1 takes axis 0");
    long total = 0;
    for (const auto& p : parts) {
      if (p.rank() != 1) throw ShapeMismatch("concat: mixed ranks");
      total += p.numel();
    }
    std::vector<Real> y;
    y.reserve(total);
    for (const auto& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
    std::vector<std::shared_ptr<detail::NodeT<Real>>> hs;
    for (const auto& p : parts) hs.push_back(p.handle());
    return detail::make_op<Real>({static_cast<int>(total)}, std::move(y), parts,
                                 [hs](detail::NodeT<Real>& node) {
                                   long off = 0;
                                   for (auto& h : hs) {
                                     if (h->tracked) {
                                       h->ensure_grad();
                                       for (size_t i = 0; i < h->val.size(); ++i)
                                         h->grad[i] += node.grad[off + i];
                                     }
                                     off += static_cast<long>(h->val.size());
                                   }
                                 });
  }
  if (rank != 2) throw ShapeMismatch("concat: rank-1 or rank-2 only");
  if (axis == 0) {
    const int c = parts[0].dim(1);
    int rows = 0;
    for (const auto& p : parts) {
      if (p.rank() != 2 || p.dim(1) != c) throw ShapeMismatch("concat rows: column counts differ");
      rows += p.dim(0);
    }
    std::vector<Real> y;
    y.reserve(static_cast<size_t>(rows) * c);
    for (const auto& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
    std::vector<std::shared_ptr<detail::NodeT<Real>>> hs;
    for (const auto& p : parts) hs.push_back(p.handle());
    return detail::make_op<Real>({rows, c}, std::move(y), parts,
                                 [hs](detail::NodeT<Real>& node) {
                                   long off = 0;
                                   for (auto& h : hs) {
                                     if (h->tracked) {
                                       h->ensure_grad();
                                       for (size_t i = 0; i < h->val.size(); ++i)
                                         h->grad[i] += node.grad[off + i];
                                     }
                                     off += static_cast<long>(h->val.size());
                                   }
                                 });
  }
  if (axis != 1) throw ShapeMismatch("concat: axis must be 0 or 1");
  const int r = parts[0].dim(0);
  int cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != r) throw ShapeMismatch("concat cols: row counts differ");
    cols += p.dim(1);
  }
  std::vector<Real> y(static_cast<size_t>(r) * cols);
  {
    int coff = 0;
    for (const auto& p : parts) {
      const int pc = p.dim(1);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < pc; ++j)
          y[static_cast<long>(i) * cols + coff + j] = p.values()[static_cast<long>(i) * pc + j];
      coff += pc;
    }
  }
  std::vector<std::shared_ptr<detail::NodeT<Real>>> hs;
  for (const auto& p : parts) hs.push_back(p.handle());
  return detail::make_op<Real>(
      {r, cols}, std::move(y), parts, [hs, r, cols](detail::NodeT<Real>& node) {
        int coff = 0;
        for (auto& h : hs) {
          const int pc = h->shape[1];
          if (h->tracked) {
            h->ensure_grad();
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < pc; ++j)
                h->grad[static_cast<long>(i) * pc + j] +=
                    node.grad[static_cast<long>(i) * cols + coff + j];
          }
          coff += pc;
        }
      });
}

template <typename Real>
TensorT<Real> concat_rows(const std::vector<TensorT<Real>>& parts) {
  return concat(parts, 0);
}
template <typename Real>
TensorT<Real> concat_cols(const std::vector<TensorT<Real>>& parts) {
  return concat(parts, 1);
}
template <typename Real>
TensorT<Real> concat_vec(const std::vector<TensorT<Real>>& parts) {
  return concat(parts, 0);
}

// Rows n x h from n rank-1 vectors of length h.
template <typename Real>
TensorT<Real> stack_rows(const std::vector<TensorT<Real>>& rows) {
  if (rows.empty()) throw EmptyInput("stack_rows: no rows");
  const int h = rows[0].dim(0);
  std::vector<Real> y;
  y.reserve(rows.size() * h);
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.dim(0) != h) throw ShapeMismatch("stack_rows: length mismatch");
    y.insert(y.end(), r.values().begin(), r.values().end());
  }
  std::vector<std::shared_ptr<detail::NodeT<Real>>> hs;
  for (const auto& r : rows) hs.push_back(r.handle());
  return detail::make_op<Real>({static_cast<int>(rows.size()), h}, std::move(y), rows,
                               [hs, h](detail::NodeT<Real>& node) {
                                 long off = 0;
                                 for (auto& hd : hs) {
                                   if (hd->tracked) {
                                     hd->ensure_grad();
                                     for (int i = 0; i < h; ++i) hd->grad[i] += node.grad[off + i];
                                   }
                                   off += h;
                                 }
                               });
}

template <typename Real>
TensorT<Real> slice_rows(const TensorT<Real>& x, int r0, int r1) {
  if (x.rank() != 2) throw ShapeMismatch("slice_rows: rank-2 expected");
  if (r0 < 0 || r1 > x.dim(0) || r0 >= r1) throw ShapeMismatch("slice_rows: bad range");
  const int c = x.dim(1), rows = r1 - r0;
  std::vector<Real> y(x.values().begin() + static_cast<long>(r0) * c,
                      x.values().begin() + static_cast<long>(r1) * c);
  auto px = x.handle();
  return detail::make_op<Real>({rows, c}, std::move(y), {x},
                               [px, r0, c](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < node.grad.size(); ++i)
                                   px->grad[static_cast<long>(r0) * c + i] += node.grad[i];
                               });
}

template <typename Real>
TensorT<Real> slice_cols(const TensorT<Real>& x, int c0, int c1) {
  if (x.rank() != 2) throw ShapeMismatch("slice_cols: rank-2 expected");
  if (c0 < 0 || c1 > x.dim(1) || c0 >= c1) throw ShapeMismatch("slice_cols: bad range");
  const int r = x.dim(0), c = x.dim(1), w = c1 - c0;
  std::vector<Real> y(static_cast<size_t>(r) * w);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j)
      y[static_cast<long>(i) * w + j] = x.values()[static_cast<long>(i) * c + c0 + j];
  auto px = x.handle();
  return detail::make_op<Real>({r, w}, std::move(y), {x},
                               [px, r, c, c0, w](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (int i = 0; i < r; ++i)
                                   for (int j = 0; j < w; ++j)
                                     px->grad[static_cast<long>(i) * c + c0 + j] +=
                                         node.grad[static_cast<long>(i) * w + j];
                               });
}

template <typename Real>
TensorT<Real> slice_vec(const TensorT<Real>& x, int a, int b) {
  if (x.rank() != 1) throw ShapeMismatch("slice_vec: rank-1 expected");
  if (a < 0 || b > x.dim(0) || a >= b) throw ShapeMismatch("slice_vec: bad range");
  std::vector<Real> y(x.values().begin() + a, x.values().begin() + b);
  auto px = x.handle();
  return detail::make_op<Real>({b - a}, std::move(y), {x},
                               [px, a](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < node.grad.size(); ++i)
                                   px->grad[a + i] += node.grad[i];
                               });
}

template <typename Real>
TensorT<Real> row(const TensorT<Real>& x, int i) {
  if (x.rank() != 2) throw ShapeMismatch("row: rank-2 expected");
  if (i < 0 || i >= x.dim(0)) throw ShapeMismatch("row: index out of range");
  const int c = x.dim(1);
  std::vector<Real> y(x.values().begin() + static_cast<long>(i) * c,
                      x.values().begin() + static_cast<long>(i + 1) * c);
  auto px = x.handle();
  return detail::make_op<Real>({c}, std::move(y), {x},
                               [px, i, c](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (int j = 0; j < c; ++j)
                                   px->grad[static_cast<long>(i) * c + j] += node.grad[j];
                               });
}

template <typename Real>
TensorT<Real> col(const TensorT<Real>& x, int j) {
  if (x.rank() != 2) throw ShapeMismatch("col: rank-2 expected");
  if (j < 0 || j >= x.dim(1)) throw ShapeMismatch("col: index out of range");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<Real> y(r);
  for (int i = 0; i < r; ++i) y[i] = x.values()[static_cast<long>(i) * c + j];
  auto px = x.handle();
  return detail::make_op<Real>({r}, std::move(y), {x},
                               [px, j, c](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < node.grad.size(); ++i)
                                   px->grad[i * c + j] += node.grad[i];
                               });
}

// --- broadcast-style ops (the only broadcasting the engine allows) ---------

// h-vector -> h x L matrix, vector repeated as every column.
template <typename Real>
TensorT<Real> repeat_columns(const TensorT<Real>& v, int L) {
  if (v.rank() != 1) throw ShapeMismatch("repeat_columns: rank-1 expected");
  if (L < 1) throw ShapeMismatch("repeat_columns: L must be >= 1");
  const int h = v.dim(0);
  std::vector<Real> y(static_cast<size_t>(h) * L);
  for (int i = 0; i < h; ++i)
    for (int l = 0; l < L; ++l) y[static_cast<long>(i) * L + l] = v.values()[i];
  auto pv = v.handle();
  return detail::make_op<Real>({h, L}, std::move(y), {v},
                               [pv, h, L](detail::NodeT<Real>& node) {
                                 pv->ensure_grad();
                                 for (int i = 0; i < h; ++i) {
                                   Real s = Real(0);
                                   for (int l = 0; l < L; ++l)
                                     s += node.grad[static_cast<long>(i) * L + l];
                                   pv->grad[i] += s;
                                 }
                               });
}

// X[r x c] + b[c] broadcast over rows.
template <typename Real>
TensorT<Real> add_row_broadcast(const TensorT<Real>& x, const TensorT<Real>& b) {
  if (x.rank() != 2 || b.rank() != 1 || b.dim(0) != x.dim(1))
    throw ShapeMismatch("add_row_broadcast: X[r x c] and b[c] expected");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<Real> y(x.values());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) y[static_cast<long>(i) * c + j] += b.values()[j];
  auto px = x.handle();
  auto pb = b.handle();
  return detail::make_op<Real>({r, c}, std::move(y), {x, b},
                               [px, pb, r, c](detail::NodeT<Real>& node) {
                                 if (px->tracked) {
                                   px->ensure_grad();
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     px->grad[i] += node.grad[i];
                                 }
                                 if (pb->tracked) {
                                   pb->ensure_grad();
                                   for (int j = 0; j < c; ++j) {
                                     Real s = Real(0);
                                     for (int i = 0; i < r; ++i)
                                       s += node.grad[static_cast<long>(i) * c + j];
                                     pb->grad[j] += s;
                                   }
                                 }
                               });
}

// x + s with s a {1}-tensor broadcast over every element.
template <typename Real>
TensorT<Real> add_scalar_broadcast(const TensorT<Real>& x, const TensorT<Real>& s) {
  if (s.numel() != 1) throw ShapeMismatch("add_scalar_broadcast: s must be scalar");
  std::vector<Real> y(x.values());
  const Real sv = s.values()[0];
  for (auto& v : y) v += sv;
  auto px = x.handle();
  auto ps = s.handle();
  return detail::make_op<Real>(x.shape(), std::move(y), {x, s},
                               [px, ps](detail::NodeT<Real>& node) {
                                 if (px->tracked) {
                                   px->ensure_grad();
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     px->grad[i] += node.grad[i];
                                 }
                                 if (ps->tracked) {
                                   ps->ensure_grad();
                                   Real g = Real(0);
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     g += node.grad[i];
                                   ps->grad[0] += g;
                                 }
                               });
}

// x * s with s a {1}-tensor.
template <typename Real>
TensorT<Real> mul_scalar_broadcast(const TensorT<Real>& x, const TensorT<Real>& s) {
  if (s.numel() != 1) throw ShapeMismatch("mul_scalar_broadcast: s must be scalar");
  std::vector<Real> y(x.values());
  const Real sv = s.values()[0];
  for (auto& v : y) v *= sv;
  auto px = x.handle();
  auto ps = s.handle();
  return detail::make_op<Real>(x.shape(), std::move(y), {x, s},
                               [px, ps](detail::NodeT<Real>& node) {
                                 const Real sv = ps->val[0];
                                 if (px->tracked) {
                                   px->ensure_grad();
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     px->grad[i] += node.grad[i] * sv;
                                 }
                                 if (ps->tracked) {
                                   ps->ensure_grad();
                                   Real g = Real(0);
                                   for (size_t i = 0; i < node.grad.size(); ++i)
                                     g += node.grad[i] * px->val[i];
                                   ps->grad[0] += g;
                                 }
                               });
}

// X[h x L] with column l scaled by s[l].
template <typename Real>
TensorT<Real> scale_columns(const TensorT<Real>& x, const TensorT<Real>& s) {
  if (x.rank() != 2 || s.rank() != 1 || s.dim(0) != x.dim(1))
    throw ShapeMismatch("scale_columns: X[h x L] and s[L] expected");
  const int h = x.dim(0), L = x.dim(1);
  std::vector<Real> y(x.values());
  for (int i = 0; i < h; ++i)
    for (int l = 0; l < L; ++l) y[static_cast<long>(i) * L + l] *= s.values()[l];
  auto px = x.handle();
  auto ps = s.handle();
  return detail::make_op<Real>({h, L}, std::move(y), {x, s},
                               [px, ps, h, L](detail::NodeT<Real>& node) {
                                 if (px->tracked) {
                                   px->ensure_grad();
                                   for (int i = 0; i < h; ++i)
                                     for (int l = 0; l < L; ++l)
                                       px->grad[static_cast<long>(i) * L + l] +=
                                           node.grad[static_cast<long>(i) * L + l] * ps->val[l];
                                 }
                                 if (ps->tracked) {
                                   ps->ensure_grad();
                                   for (int l = 0; l < L; ++l) {
                                     Real g = Real(0);
                                     for (int i = 0; i < h; ++i)
                                       g += node.grad[static_cast<long>(i) * L + l] *
                                            px->val[static_cast<long>(i) * L + l];
                                     ps->grad[l] += g;
                                   }
                                 }
                               });
}

// --- linear algebra ---------------------------------------------------------

template <typename Real>
TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeMismatch("matmul: rank-2 operands expected");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeMismatch("matmul: inner dimensions differ (" + std::to_string(k) + " vs " +
                        std::to_string(k2) + ")");
  std::vector<Real> y(static_cast<size_t>(m) * n);
  kernels::matmul(a.values().data(), false, b.values().data(), false, y.data(), m, k, n);
  auto pa = a.handle();
  auto pb = b.handle();
  return detail::make_op<Real>({m, n}, std::move(y), {a, b},
                               [pa, pb, m, k, n](detail::NodeT<Real>& node) {
                                 // dA += dC * B^T ; dB += A^T * dC
                                 if (pa->tracked) {
                                   pa->ensure_grad();
                                   kernels::matmul(node.grad.data(), false, pb->val.data(), true,
                                                   pa->grad.data(), m, n, k, true);
                                 }
                                 if (pb->tracked) {
                                   pb->ensure_grad();
                                   kernels::matmul(pa->val.data(), true, node.grad.data(), false,
                                                   pb->grad.data(), k, m, n, true);
                                 }
                               });
}

// A[m x k] * v[k] -> [m]
template <typename Real>
TensorT<Real> matvec(const TensorT<Real>& a, const TensorT<Real>& v) {
  if (a.rank() != 2 || v.rank() != 1 || a.dim(1) != v.dim(0))
    throw ShapeMismatch("matvec: A[m x k] and v[k] expected");
  const int m = a.dim(0), k = a.dim(1);
  std::vector<Real> y(m);
  kernels::matmul(a.values().data(), false, v.values().data(), false, y.data(), m, k, 1);
  auto pa = a.handle();
  auto pv = v.handle();
  return detail::make_op<Real>({m}, std::move(y), {a, v},
                               [pa, pv, m, k](detail::NodeT<Real>& node) {
                                 if (pa->tracked) {
                                   pa->ensure_grad();
                                   // dA += dy (m x 1) * v^T (1 x k)
                                   kernels::matmul(node.grad.data(), false, pv->val.data(), true,
                                                   pa->grad.data(), m, 1, k, true);
                                 }
                                 if (pv->tracked) {
                                   pv->ensure_grad();
                                   kernels::matmul(pa->val.data(), true, node.grad.data(), false,
                                                   pv->grad.data(), k, m, 1, true);
                                 }
                               });
}

// v[m] * A[m x k] -> [k]
template <typename Real>
TensorT<Real> vecmat(const TensorT<Real>& v, const TensorT<Real>& a) {
  if (a.rank() != 2 || v.rank() != 1 || a.dim(0) != v.dim(0))
    throw ShapeMismatch("vecmat: v[m] and A[m x k] expected");
  const int m = a.dim(0), k = a.dim(1);
  std::vector<Real> y(k);
  kernels::matmul(v.values().data(), false, a.values().data(), false, y.data(), 1, m, k);
  auto pa = a.handle();
  auto pv = v.handle();
  return detail::make_op<Real>({k}, std::move(y), {v, a},
                               [pa, pv, m, k](detail::NodeT<Real>& node) {
                                 if (pv->tracked) {
                                   pv->ensure_grad();
                                   kernels::matmul(node.grad.data(), false, pa->val.data(), true,
                                                   pv->grad.data(), 1, k, m, true);
                                 }
                                 if (pa->tracked) {
                                   pa->ensure_grad();
                                   kernels::matmul(pv->val.data(), true, node.grad.data(), false,
                                                   pa->grad.data(), m, 1, k, true);
                                 }
                               });
}

// --- softmax -----------------------------------------------------------------

template <typename Real>
TensorT<Real> softmax_vec(const TensorT<Real>& x) {
  if (x.rank() != 1) throw ShapeMismatch("softmax_vec: rank-1 expected");
  if (x.numel() < 1) throw EmptyInput("softmax_vec: empty input");
  const int n = x.dim(0);
  std::vector<Real> y(n);
  kernels::softmax_rows(x.values().data(), y.data(), 1, n);
  auto px = x.handle();
  return detail::make_op<Real>({n}, std::move(y), {x},
                               [px](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 Real inner = Real(0);
                                 for (size_t i = 0; i < node.val.size(); ++i)
                                   inner += node.grad[i] * node.val[i];
                                 for (size_t i = 0; i < node.val.size(); ++i)
                                   px->grad[i] += node.val[i] * (node.grad[i] - inner);
                               });
}

template <typename Real>
TensorT<Real> softmax_rows(const TensorT<Real>& x) {
  if (x.rank() != 2) throw ShapeMismatch("softmax_rows: rank-2 expected");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<Real> y(static_cast<size_t>(r) * c);
  kernels::softmax_rows(x.values().data(), y.data(), r, c);
  auto px = x.handle();
  return detail::make_op<Real>({r, c}, std::move(y), {x},
                               [px, r, c](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (int i = 0; i < r; ++i) {
                                   const long off = static_cast<long>(i) * c;
                                   Real inner = Real(0);
                                   for (int j = 0; j < c; ++j)
                                     inner += node.grad[off + j] * node.val[off + j];
                                   for (int j = 0; j < c; ++j)
                                     px->grad[off + j] +=
                                         node.val[off + j] * (node.grad[off + j] - inner);
                                 }
                               });
}

// --- pooling -----------------------------------------------------------------

// X[M x h] -> [h]: per-dimension max over the M rows; gradient routes to the
// argmax row, ties to the lowest row index.
template <typename Real>
TensorT<Real> max_pool_rows(const TensorT<Real>& x) {
  if (x.rank() != 2) throw ShapeMismatch("max_pool_rows: rank-2 expected");
  const int m = x.dim(0), h = x.dim(1);
  std::vector<Real> y(h);
  std::vector<int> arg(h, 0);
  for (int j = 0; j < h; ++j) {
    Real best = x.values()[j];
    int bi = 0;
    for (int i = 1; i < m; ++i) {
      const Real v = x.values()[static_cast<long>(i) * h + j];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    y[j] = best;
    arg[j] = bi;
  }
  if (auto* rec = BranchRecorder::active())
    for (int j = 0; j < h; ++j) rec->add(static_cast<uint64_t>(arg[j]));
  auto px = x.handle();
  return detail::make_op<Real>({h}, std::move(y), {x},
                               [px, h, arg](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (int j = 0; j < h; ++j)
                                   px->grad[static_cast<long>(arg[j]) * h + j] += node.grad[j];
                               });
}

// --- embeddings --------------------------------------------------------------

// Gather rows of table[V x h] by id; gradient scatter-adds into the table.
template <typename Real>
TensorT<Real> embedding_rows(const TensorT<Real>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw ShapeMismatch("embedding_rows: table must be rank-2");
  if (ids.empty()) throw EmptyInput("embedding_rows: no ids");
  const int v = table.dim(0), h = table.dim(1);
  std::vector<Real> y(ids.size() * h);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v) throw ShapeMismatch("embedding_rows: id out of range");
    std::copy_n(table.values().begin() + static_cast<long>(ids[i]) * h, h, y.begin() + i * h);
  }
  auto pt = table.handle();
  return detail::make_op<Real>({static_cast<int>(ids.size()), h}, std::move(y), {table},
                               [pt, ids, h](detail::NodeT<Real>& node) {
                                 pt->ensure_grad();
                                 for (size_t i = 0; i < ids.size(); ++i)
                                   for (int j = 0; j < h; ++j)
                                     pt->grad[static_cast<long>(ids[i]) * h + j] +=
                                         node.grad[i * h + j];
                               });
}

// out[idx[l]] += x[l]; used to fold a copy distribution onto the vocabulary.
template <typename Real>
TensorT<Real> scatter_sum_vec(const TensorT<Real>& x, const std::vector<int>& idx, int out_size) {
  if (x.rank() != 1 || static_cast<size_t>(x.dim(0)) != idx.size())
    throw ShapeMismatch("scatter_sum_vec: x and idx lengths differ");
  std::vector<Real> y(out_size, Real(0));
  for (size_t l = 0; l < idx.size(); ++l) {
    if (idx[l] < 0 || idx[l] >= out_size) throw ShapeMismatch("scatter_sum_vec: index out of range");
    y[idx[l]] += x.values()[l];
  }
  auto px = x.handle();
  return detail::make_op<Real>({out_size}, std::move(y), {x},
                               [px, idx](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t l = 0; l < idx.size(); ++l)
                                   px->grad[l] += node.grad[idx[l]];
                               });
}

// --- normalization / regularization -----------------------------------------

// Per-row layer norm with learned gain/bias over the last dimension.
template <typename Real>
TensorT<Real> layer_norm_rows(const TensorT<Real>& x, const TensorT<Real>& gain,
                              const TensorT<Real>& bias, Real eps = Real(1e-5)) {
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.dim(1) ||
      bias.dim(0) != x.dim(1))
    throw ShapeMismatch("layer_norm_rows: X[r x c], gain[c], bias[c] expected");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<Real> y(static_cast<size_t>(r) * c);
  std::vector<Real> xhat(static_cast<size_t>(r) * c);
  std::vector<Real> inv_sigma(r);
  for (int i = 0; i < r; ++i) {
    const long off = static_cast<long>(i) * c;
    Real mean = Real(0);
    for (int j = 0; j < c; ++j) mean += x.values()[off + j];
    mean /= Real(c);
    Real var = Real(0);
    for (int j = 0; j < c; ++j) {
      const Real d = x.values()[off + j] - mean;
      var += d * d;
    }
    var /= Real(c);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (int j = 0; j < c; ++j) {
      xhat[off + j] = (x.values()[off + j] - mean) * is;
      y[off + j] = xhat[off + j] * gain.values()[j] + bias.values()[j];
    }
  }
  auto px = x.handle();
  auto pg = gain.handle();
  auto pb = bias.handle();
  return detail::make_op<Real>(
      {r, c}, std::move(y), {x, gain, bias},
      [px, pg, pb, r, c, xhat = std::move(xhat),
       inv_sigma = std::move(inv_sigma)](detail::NodeT<Real>& node) {
        if (pg->tracked) pg->ensure_grad();
        if (pb->tracked) pb->ensure_grad();
        if (px->tracked) px->ensure_grad();
        for (int i = 0; i < r; ++i) {
          const long off = static_cast<long>(i) * c;
          Real mean_dxhat = Real(0), mean_dxhat_xhat = Real(0);
          for (int j = 0; j < c; ++j) {
            const Real dy = node.grad[off + j];
            if (pg->tracked) pg->grad[j] += dy * xhat[off + j];
            if (pb->tracked) pb->grad[j] += dy;
            const Real dxh = dy * pg->val[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[off + j];
          }
          if (!px->tracked) continue;
          mean_dxhat /= Real(c);
          mean_dxhat_xhat /= Real(c);
          for (int j = 0; j < c; ++j) {
            const Real dxh = node.grad[off + j] * pg->val[j];
            px->grad[off + j] +=
                inv_sigma[i] * (dxh - mean_dxhat - xhat[off + j] * mean_dxhat_xhat);
          }
        }
      });
}

template <typename Real>
TensorT<Real> layer_norm_vec(const TensorT<Real>& x, const TensorT<Real>& gain,
                             const TensorT<Real>& bias, Real eps = Real(1e-5)) {
  if (x.rank() != 1) throw ShapeMismatch("layer_norm_vec: rank-1 expected");
  TensorT<Real> as_row = detail::make_op<Real>(
      {1, x.dim(0)}, std::vector<Real>(x.values()), {x}, [px = x.handle()](detail::NodeT<Real>& node) {
        px->ensure_grad();
        for (size_t i = 0; i < node.grad.size(); ++i) px->grad[i] += node.grad[i];
      });
  TensorT<Real> normed = layer_norm_rows(as_row, gain, bias, eps);
  return detail::make_op<Real>(
      {x.dim(0)}, std::vector<Real>(normed.values()), {normed},
      [pn = normed.handle()](detail::NodeT<Real>& node) {
        pn->ensure_grad();
        for (size_t i = 0; i < node.grad.size(); ++i) pn->grad[i] += node.grad[i];
      });
}

// Inverted dropout; mask drawn from rng, scaled by 1/keep. Identity when
// p_drop == 0.
template <typename Real>
TensorT<Real> dropout(const TensorT<Real>& x, Real p_drop, Rng& rng) {
  if (p_drop <= Real(0)) return x;
  const Real keep = Real(1) - p_drop;
  std::vector<Real> mask(x.numel());
  for (auto& m : mask) m = (rng.uniform() < static_cast<double>(p_drop)) ? Real(0) : Real(1) / keep;
  std::vector<Real> y(x.numel());
  for (long i = 0; i < x.numel(); ++i) y[i] = x.values()[i] * mask[i];
  auto px = x.handle();
  return detail::make_op<Real>(x.shape(), std::move(y), {x},
                               [px, mask = std::move(mask)](detail::NodeT<Real>& node) {
                                 px->ensure_grad();
                                 for (size_t i = 0; i < node.grad.size(); ++i)
                                   px->grad[i] += node.grad[i] * mask[i];
                               });
}

}  // namespace bctn
