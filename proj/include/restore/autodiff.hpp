#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "restore/tensor.hpp"

namespace restore {

template <typename T>
class Tape;

// Handle into a tape node. Cheap to copy; only valid while its tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::int32_t idx = -1;

  bool valid() const { return tape != nullptr && idx >= 0; }
  const Tensor<T>& value() const { return tape->value_of(idx); }
  const Shape& shape() const { return value().shape; }
  std::size_t numel() const { return value().numel(); }
  T scalar() const { return value()[0]; }
};

// Trainable tensor with its accumulated gradient. Optimizer state is kept by
// the optimizer, keyed by parameter order; checkpoints serialize only `value`.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Shape s) : name(std::move(n)), value(std::move(s)) {}

  void zero_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape);
    grad.fill(T(0));
  }
};

// Define-by-run reverse-mode tape. Nodes are appended in topological order, so
// one reverse sweep propagates gradients; node gradients are freed as the sweep
// passes them, which bounds peak memory during training.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  // Constant leaf (inputs, detached values).
  Var<T> input(Tensor<T> v) { return append(std::move(v), false); }

  // Differentiable leaf, e.g. a mapping label during gradient refinement.
  Var<T> leaf(Tensor<T> v, bool needs_grad) {
    return append(std::move(v), recording_ && needs_grad);
  }

  // Leaf bound to a parameter: on backward the node gradient is added into
  // p.grad. Callers zero parameter grads once per optimization step.
  Var<T> param(Parameter<T>& p) {
    Var<T> v = append(p.value, recording_ && !frozen_params_);
    if (nodes_[v.idx].needs_grad) {
      Parameter<T>* pp = &p;
      Tape<T>* t = this;
      const std::int32_t self = v.idx;
      nodes_[self].backward = [t, pp, self]() {
        if (pp->grad.numel() != pp->value.numel()) pp->zero_grad();
        const Tensor<T>& g = t->nodes_[self].grad;
        for (std::size_t i = 0; i < g.numel(); ++i) pp->grad[i] += g[i];
      };
    }
    return v;
  }

  // While true, param() produces constant leaves. Used when the generator step
  // evaluates the discriminators without updating them.
  void freeze_params(bool f) { frozen_params_ = f; }

  Var<T> make_node(Tensor<T> value, std::initializer_list<std::int32_t> inputs) {
    bool needs = false;
    if (recording_)
      for (std::int32_t i : inputs) needs = needs || nodes_[i].needs_grad;
    return append(std::move(value), needs);
  }

  void set_backward(Var<T> v, std::function<void()> fn) {
    if (nodes_[v.idx].needs_grad) nodes_[v.idx].backward = std::move(fn);
  }

  const Tensor<T>& value_of(std::int32_t idx) const { return nodes_[idx].value; }
  bool needs_grad(std::int32_t idx) const { return nodes_[idx].needs_grad; }

  // Gradient tensor of a node, allocated (zeroed) on first access.
  Tensor<T>& grad_of(std::int32_t idx) {
    Node& n = nodes_[idx];
    if (n.grad.numel() != n.value.numel()) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  // Adds `g` into the gradient of node `idx` if it participates in backward.
  void accumulate(std::int32_t idx, const Tensor<T>& g) {
    if (!nodes_[idx].needs_grad) return;
    Tensor<T>& dst = grad_of(idx);
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
  }

  void backward(Var<T> root) {
    if (!recording_) throw ValidationError("backward() called on a non-recording tape");
    if (root.numel() != 1) throw ValidationError("backward() root must be a scalar node");
    grad_of(root.idx).fill(T(1));
    for (std::int32_t i = root.idx; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.numel() == 0) continue;  // unreached from root
      if (n.backward) {
        n.backward();
        n.grad = Tensor<T>();  // fully consumed; free
      }
      // leaves without a closure keep their grad so callers can read it
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void()> backward;
    bool needs_grad = false;
  };

  Var<T> append(Tensor<T> value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), nullptr, needs_grad});
    return Var<T>{this, std::int32_t(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool frozen_params_ = false;
};

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "add");
  Tape<T>* t = a.tape;
  Tensor<T> out(a.shape());
  {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  }
  Var<T> y = t->make_node(std::move(out), {a.idx, b.idx});
  const std::int32_t yi = y.idx, ai = a.idx, bi = b.idx;
  t->set_backward(y, [t, yi, ai, bi]() {
    const Tensor<T>& g = t->grad_of(yi);
    t->accumulate(ai, g);
    t->accumulate(bi, g);
  });
  return y;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tape<T>* t = a.tape;
  Tensor<T> out(a.shape());
  {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  }
  Var<T> y = t->make_node(std::move(out), {a.idx, b.idx});
  const std::int32_t yi = y.idx, ai = a.idx, bi = b.idx;
  t->set_backward(y, [t, yi, ai, bi]() {
    const Tensor<T>& g = t->grad_of(yi);
    t->accumulate(ai, g);
    if (t->needs_grad(bi)) {
      Tensor<T>& gb = t->grad_of(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
  return y;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tape<T>* t = a.tape;
  Tensor<T> out(a.shape());
  {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  }
  Var<T> y = t->make_node(std::move(out), {a.idx, b.idx});
  const std::int32_t yi = y.idx, ai = a.idx, bi = b.idx;
  t->set_backward(y, [t, yi, ai, bi]() {
    const Tensor<T>& g = t->grad_of(yi);
    const Tensor<T>& av = t->value_of(ai);
    const Tensor<T>& bv = t->value_of(bi);
    if (t->needs_grad(ai)) {
      Tensor<T>& ga = t->grad_of(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t->needs_grad(bi)) {
      Tensor<T>& gb = t->grad_of(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
  return y;
}

// y = s*x + c, elementwise with scalar coefficients.
template <typename T>
Var<T> affine(Var<T> x, T s, T c) {
  Tape<T>* t = x.tape;
  Tensor<T> out(x.shape());
  {
    const Tensor<T>& xv = x.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = s * xv[i] + c;
  }
  Var<T> y = t->make_node(std::move(out), {x.idx});
  const std::int32_t yi = y.idx, xi = x.idx;
  t->set_backward(y, [t, yi, xi, s]() {
    const Tensor<T>& g = t->grad_of(yi);
    if (t->needs_grad(xi)) {
      Tensor<T>& gx = t->grad_of(xi);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += s * g[i];
    }
  });
  return y;
}

template <typename T>
Var<T> mul_scalar(Var<T> x, T s) {
  return affine(x, s, T(0));
}

template <typename T>
Var<T> square(Var<T> x) {
  Tape<T>* t = x.tape;
  Tensor<T> out(x.shape());
  {
    const Tensor<T>& xv = x.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * xv[i];
  }
  Var<T> y = t->make_node(std::move(out), {x.idx});
  const std::int32_t yi = y.idx, xi = x.idx;
  t->set_backward(y, [t, yi, xi]() {
    const Tensor<T>& g = t->grad_of(yi);
    const Tensor<T>& xv = t->value_of(xi);
    if (t->needs_grad(xi)) {
      Tensor<T>& gx = t->grad_of(xi);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += T(2) * xv[i] * g[i];
    }
  });
  return y;
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope) {
  Tape<T>* t = x.tape;
  Tensor<T> out(x.shape());
  {
    const Tensor<T>& xv = x.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
  }
  Var<T> y = t->make_node(std::move(out), {x.idx});
  const std::int32_t yi = y.idx, xi = x.idx;
  t->set_backward(y, [t, yi, xi, slope]() {
    const Tensor<T>& g = t->grad_of(yi);
    const Tensor<T>& xv = t->value_of(xi);
    if (t->needs_grad(xi)) {
      Tensor<T>& gx = t->grad_of(xi);
      for (std::size_t i = 0; i < g.numel(); ++i)
        gx[i] += (xv[i] > T(0) ? T(1) : slope) * g[i];
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Reductions and shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> mean_all(Var<T> x) {
  Tape<T>* t = x.tape;
  const std::size_t n = x.numel();
  if (n == 0) throw DimensionError("mean_all of an empty tensor");
  Tensor<T> out({1});
  {
    // accumulate in double so float losses stay well conditioned
    double s = 0.0;
    const Tensor<T>& xv = x.value();
    for (std::size_t i = 0; i < n; ++i) s += double(xv[i]);
    out[0] = T(s / double(n));
  }
  Var<T> y = t->make_node(std::move(out), {x.idx});
  const std::int32_t yi = y.idx, xi = x.idx;
  t->set_backward(y, [t, yi, xi, n]() {
    const T g = t->grad_of(yi)[0] / T(n);
    if (t->needs_grad(xi)) {
      Tensor<T>& gx = t->grad_of(xi);
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    }
  });
  return y;
}

template <typename T>
Var<T> sum_all(Var<T> x) {
  Tape<T>* t = x.tape;
  const std::size_t n = x.numel();
  Tensor<T> out({1});
  {
    double s = 0.0;
    const Tensor<T>& xv = x.value();
    for (std::size_t i = 0; i < n; ++i) s += double(xv[i]);
    out[0] = T(s);
  }
  Var<T> y = t->make_node(std::move(out), {x.idx});
  const std::int32_t yi = y.idx, xi = x.idx;
  t->set_backward(y, [t, yi, xi, n]() {
    const T g = t->grad_of(yi)[0];
    if (t->needs_grad(xi)) {
      Tensor<T>& gx = t->grad_of(xi);
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    }
  });
  return y;
}

// Columns [from, to) of a {rows, cols} matrix.
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t from, std::size_t to) {
  if (x.shape().size() != 2) throw DimensionError("slice_cols expects a 2-D value");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (from >= to || to > cols) throw DimensionError("slice_cols: bad column range");
  Tape<T>* t = x.tape;
  const std::size_t w = to - from;
  Tensor<T> out({rows, w});
  {
    const Tensor<T>& xv = x.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) out[r * w + c] = xv[r * cols + from + c];
  }
  Var<T> y = t->make_node(std::move(out), {x.idx});
  const std::int32_t yi = y.idx, xi = x.idx;
  t->set_backward(y, [t, yi, xi, rows, cols, from, w]() {
    const Tensor<T>& g = t->grad_of(yi);
    if (t->needs_grad(xi)) {
      Tensor<T>& gx = t->grad_of(xi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) gx[r * cols + from + c] += g[r * w + c];
    }
  });
  return y;
}

// Per-sample scalar scaling of a {B, ...} tensor; `w` holds one factor per
// sample and is treated as a constant.
template <typename T>
Var<T> scale_samples(Var<T> x, std::vector<T> w) {
  if (x.shape().empty() || x.shape()[0] != w.size())
    throw DimensionError("scale_samples: weight count " + std::to_string(w.size()) +
                         " does not match batch " + shape_str(x.shape()));
  Tape<T>* t = x.tape;
  const std::size_t b = x.shape()[0];
  const std::size_t stride = x.numel() / b;
  Tensor<T> out(x.shape());
  {
    const Tensor<T>& xv = x.value();
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t i = 0; i < stride; ++i) out[s * stride + i] = w[s] * xv[s * stride + i];
  }
  Var<T> y = t->make_node(std::move(out), {x.idx});
  const std::int32_t yi = y.idx, xi = x.idx;
  t->set_backward(y, [t, yi, xi, b, stride, w = std::move(w)]() {
    const Tensor<T>& g = t->grad_of(yi);
    if (t->needs_grad(xi)) {
      Tensor<T>& gx = t->grad_of(xi);
      for (std::size_t s = 0; s < b; ++s)
        for (std::size_t i = 0; i < stride; ++i) gx[s * stride + i] += w[s] * g[s * stride + i];
    }
  });
  return y;
}

// Mean squared difference over every element; the reduction used by the
// cycle and reconstruction losses.
template <typename T>
Var<T> mse_all(Var<T> a, Var<T> b) {
  return mean_all(square(sub(a, b)));
}

}  // namespace restore
