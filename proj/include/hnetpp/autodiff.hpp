#ifndef HNETPP_AUTODIFF_HPP
#define HNETPP_AUTODIFF_HPP

// Tape-based reverse-mode differentiation over dense rank-2 tensors.
//
// A Graph is the computation record: every primitive appends one node
// holding its value and a closure that pushes the node's gradient into its
// inputs. backward() walks the nodes once, in reverse execution order.
// Parameters live outside the graph; binding one creates a leaf whose
// gradient is added to Parameter::grad when backward finishes.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hnetpp/errors.hpp"
#include "hnetpp/rng.hpp"
#include "hnetpp/tensor.hpp"

namespace hnetpp {

template <typename Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;

  Parameter(std::string n, Tensor<Real> v) : name(std::move(n)), value(std::move(v)), grad(Tensor<Real>::zeros_like(value)) {}

  void zero_grad() { grad.fill(Real{0}); }
};

/// Named trainable tensors in registration order. Addresses are stable.
template <typename Real>
class ParameterStore {
 public:
  Parameter<Real>& add(std::string name, Tensor<Real> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    params_.push_back(std::make_unique<Parameter<Real>>(std::move(name), std::move(value)));
    return *params_.back();
  }

  Parameter<Real>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Real>
class Graph;

/// Handle to a node of a Graph.
template <typename Real>
class Var {
 public:
  Var() = default;
  Var(Graph<Real>* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph<Real>& graph() const noexcept { return *graph_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor<Real>& value() const { return graph_->value(id_); }
  const Tensor<Real>& grad() const { return graph_->grad(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Real item() const { return value().item(); }

 private:
  Graph<Real>* graph_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Real>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  /// `seed` drives dropout masks; `record` = false skips storing backward
  /// closures (inference).
  explicit Graph(std::uint64_t seed = 0, bool record = true) : seed_(seed), record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Real> constant(Tensor<Real> value) { return push("constant", std::move(value), false, {}, nullptr); }

  Var<Real> leaf(Tensor<Real> value) { return push("leaf", std::move(value), record_, {}, nullptr); }

  Var<Real> param(Parameter<Real>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return Var<Real>(this, it->second);
    Var<Real> v = push("param", p.value, record_, {}, nullptr);
    nodes_[v.id()].param = &p;
    bound_.emplace(&p, v.id());
    return v;
  }

  /// Appends a primitive's output. The node requires grad iff recording is
  /// on and any input does.
  Var<Real> record(std::string_view op, Tensor<Real> value, std::vector<std::size_t> inputs, BackwardFn fn) {
    bool needs = false;
    if (record_) {
      for (std::size_t i : inputs) needs = needs || nodes_[i].requires_grad;
    }
    if (!needs) return push(op, std::move(value), false, {}, nullptr);
    return push(op, std::move(value), true, std::move(inputs), std::move(fn));
  }

  const Tensor<Real>& value(std::size_t id) const { return nodes_[id].value; }

  const Tensor<Real>& grad(std::size_t id) {
    ensure_grad(id);
    return nodes_[id].grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of an input, or nullptr when that input does not need
  /// one. Used by backward closures.
  Tensor<Real>* grad_sink(std::size_t id) {
    if (!nodes_[id].requires_grad) return nullptr;
    ensure_grad(id);
    return &nodes_[id].grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_[id].op; }
  bool recording() const noexcept { return record_; }

  std::uint64_t next_stream_seed() { return derive_seed(seed_, {stream_counter_++}); }

  /// Restarts the dropout stream, so a sub-computation draws the same masks
  /// whether it runs in its own graph or shares one with others.
  void reseed(std::uint64_t seed) {
    seed_ = seed;
    stream_counter_ = 0;
  }

  /// Reverse sweep from a scalar loss. Leaf gradients bound to parameters are
  /// added into Parameter::grad.
  void backward(Var<Real> loss, Real seed_grad = Real{1}) {
    if (loss.value().size() != 1) {
      throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
    }
    if (!nodes_[loss.id()].requires_grad) return;
    ensure_grad(loss.id());
    nodes_[loss.id()].grad[0] += seed_grad;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.grad_ready || !n.backward) continue;
      n.backward(*this, i);
      ++backward_visits_;
    }
    for (auto& n : nodes_) {
      if (n.param != nullptr && n.grad_ready) n.param->grad += n.grad;
    }
  }

  std::size_t backward_visits() const noexcept { return backward_visits_; }

 private:
  struct Node {
    std::string_view op;
    Tensor<Real> value;
    Tensor<Real> grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<Real>* param = nullptr;
  };

  Var<Real> push(std::string_view op, Tensor<Real> value, bool requires_grad, std::vector<std::size_t> inputs,
                 BackwardFn fn) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<Real>(this, nodes_.size() - 1);
  }

  void ensure_grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.grad_ready) {
      n.grad = Tensor<Real>::zeros_like(n.value);
      n.grad_ready = true;
    }
  }

  std::uint64_t seed_;
  bool record_;
  std::uint64_t stream_counter_ = 0;
  std::size_t backward_visits_ = 0;
  std::deque<Node> nodes_;  // stable references while the graph grows
  std::unordered_map<const Parameter<Real>*, std::size_t> bound_;
};

namespace ad {

namespace detail {

template <typename Real>
void require_same_graph(const Var<Real>& a, const Var<Real>& b, std::string_view op) {
  if (&a.graph() != &b.graph()) throw ShapeError(std::string(op) + ": operands belong to different graphs");
}

[[noreturn]] inline void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

// Rank-2 broadcast over extents of 1.
struct Broadcast {
  std::size_t rows, cols;
  std::size_t ar, ac, br, bc;

  std::size_t a_index(std::size_t i, std::size_t j) const { return (ar == 1 ? 0 : i) * ac + (ac == 1 ? 0 : j); }
  std::size_t b_index(std::size_t i, std::size_t j) const { return (br == 1 ? 0 : i) * bc + (bc == 1 ? 0 : j); }
};

template <typename Real>
Broadcast broadcast(std::string_view op, const Tensor<Real>& a, const Tensor<Real>& b) {
  Broadcast bc{};
  bc.ar = a.rows();
  bc.ac = a.cols();
  bc.br = b.rows();
  bc.bc = b.cols();
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    shape_mismatch(op, a.shape(), b.shape());
  };
  bc.rows = dim(bc.ar, bc.br);
  bc.cols = dim(bc.ac, bc.bc);
  return bc;
}

// Elementwise binary op with broadcasting. `f(x, y)` gives the value,
// `dfa(x, y, z)`/`dfb(x, y, z)` the partials.
template <typename Real, typename F, typename DA, typename DB>
Var<Real> binary(std::string_view op, const Var<Real>& a, const Var<Real>& b, F f, DA dfa, DB dfb) {
  require_same_graph(a, b, op);
  const auto& av = a.value();
  const auto& bv = b.value();
  const Broadcast bc = broadcast(op, av, bv);
  auto out = Tensor<Real>::matrix(bc.rows, bc.cols);
  for (std::size_t i = 0; i < bc.rows; ++i) {
    for (std::size_t j = 0; j < bc.cols; ++j) {
      out[i * bc.cols + j] = f(av[bc.a_index(i, j)], bv[bc.b_index(i, j)]);
    }
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.graph().record(op, std::move(out), {ia, ib}, [ia, ib, bc, dfa, dfb](Graph<Real>& g, std::size_t self) {
    const auto& x = g.value(ia);
    const auto& y = g.value(ib);
    const auto& z = g.value(self);
    const auto& gz = g.grad(self);
    Tensor<Real>* ga = g.grad_sink(ia);
    Tensor<Real>* gb = g.grad_sink(ib);
    for (std::size_t i = 0; i < bc.rows; ++i) {
      for (std::size_t j = 0; j < bc.cols; ++j) {
        const std::size_t k = i * bc.cols + j;
        const std::size_t ka = bc.a_index(i, j);
        const std::size_t kb = bc.b_index(i, j);
        if (ga) (*ga)[ka] += gz[k] * dfa(x[ka], y[kb], z[k]);
        if (gb) (*gb)[kb] += gz[k] * dfb(x[ka], y[kb], z[k]);
      }
    }
  });
}

// Elementwise unary op; `df(x, y)` is dy/dx given input and output.
template <typename Real, typename F, typename DF>
Var<Real> unary(std::string_view op, const Var<Real>& a, F f, DF df) {
  const auto& av = a.value();
  Tensor<Real> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const std::size_t ia = a.id();
  return a.graph().record(op, std::move(out), {ia}, [ia, df](Graph<Real>& g, std::size_t self) {
    Tensor<Real>* ga = g.grad_sink(ia);
    if (!ga) return;
    const auto& x = g.value(ia);
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += gy[i] * df(x[i], y[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_graph(a, b, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) detail::shape_mismatch("matmul", av.shape(), bv.shape());
  auto out = Tensor<Real>::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    Real* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = av[i * k + p];
      if (aip == Real{0}) continue;
      const Real* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("matmul", std::move(out), {ia, ib}, [ia, ib, m, k, n](Graph<Real>& g, std::size_t self) {
    const auto& x = g.value(ia);
    const auto& y = g.value(ib);
    const auto& gz = g.grad(self);
    if (Tensor<Real>* ga = g.grad_sink(ia)) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          Real acc{0};
          const Real* grow = gz.data() + i * n;
          const Real* brow = y.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          (*ga)[i * k + p] += acc;
        }
      }
    }
    if (Tensor<Real>* gb = g.grad_sink(ib)) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        const Real* grow = gz.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const Real aip = x[i * k + p];
          if (aip == Real{0}) continue;
          Real* gbrow = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

template <typename Real>
Var<Real> transpose(const Var<Real>& a) {
  const auto& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  auto out = Tensor<Real>::matrix(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  const std::size_t ia = a.id();
  return a.graph().record("transpose", std::move(out), {ia}, [ia, m, n](Graph<Real>& g, std::size_t self) {
    Tensor<Real>* ga = g.grad_sink(ia);
    if (!ga) return;
    const auto& gz = g.grad(self);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += gz[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise binary (rank-2 broadcasting)

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  return detail::binary(
      "add", a, b, [](Real x, Real y) { return x + y; }, [](Real, Real, Real) { return Real{1}; },
      [](Real, Real, Real) { return Real{1}; });
}

template <typename Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
  return detail::binary(
      "sub", a, b, [](Real x, Real y) { return x - y; }, [](Real, Real, Real) { return Real{1}; },
      [](Real, Real, Real) { return Real{-1}; });
}

template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  return detail::binary(
      "mul", a, b, [](Real x, Real y) { return x * y; }, [](Real, Real y, Real) { return y; },
      [](Real x, Real, Real) { return x; });
}

// ---------------------------------------------------------------------------
// Elementwise unary

template <typename Real>
Var<Real> scale(const Var<Real>& a, Real c) {
  return detail::unary(
      "scale", a, [c](Real x) { return c * x; }, [c](Real, Real) { return c; });
}

template <typename Real>
Var<Real> add_scalar(const Var<Real>& a, Real c) {
  return detail::unary(
      "add_scalar", a, [c](Real x) { return x + c; }, [](Real, Real) { return Real{1}; });
}

template <typename Real>
Var<Real> sigmoid(const Var<Real>& a) {
  return detail::unary(
      "sigmoid", a,
      [](Real x) {
        if (x >= 0) return Real{1} / (Real{1} + std::exp(-x));
        const Real e = std::exp(x);
        return e / (Real{1} + e);
      },
      [](Real, Real y) { return y * (Real{1} - y); });
}

template <typename Real>
Var<Real> tanh(const Var<Real>& a) {
  return detail::unary(
      "tanh", a, [](Real x) { return std::tanh(x); }, [](Real, Real y) { return Real{1} - y * y; });
}

template <typename Real>
Var<Real> relu(const Var<Real>& a) {
  return detail::unary(
      "relu", a, [](Real x) { return x > 0 ? x : Real{0}; }, [](Real x, Real) { return x > 0 ? Real{1} : Real{0}; });
}

/// GeLU, tanh approximation.
template <typename Real>
Var<Real> gelu(const Var<Real>& a) {
  constexpr Real k = static_cast<Real>(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real c = static_cast<Real>(0.044715);
  return detail::unary(
      "gelu", a,
      [](Real x) { return Real{0.5} * x * (Real{1} + std::tanh(k * (x + c * x * x * x))); },
      [](Real x, Real) {
        const Real t = std::tanh(k * (x + c * x * x * x));
        return Real{0.5} * (Real{1} + t) + Real{0.5} * x * (Real{1} - t * t) * k * (Real{1} + Real{3} * c * x * x);
      });
}

template <typename Real>
Var<Real> exp(const Var<Real>& a) {
  return detail::unary(
      "exp", a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

template <typename Real>
Var<Real> log(const Var<Real>& a) {
  return detail::unary(
      "log", a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real{1} / x; });
}

template <typename Real>
Var<Real> square(const Var<Real>& a) {
  return detail::unary(
      "square", a, [](Real x) { return x * x; }, [](Real x, Real) { return Real{2} * x; });
}

/// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
template <typename Real>
Var<Real> clamp(const Var<Real>& a, Real lo, Real hi) {
  return detail::unary(
      "clamp", a, [lo, hi](Real x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](Real x, Real) { return (x > lo && x < hi) ? Real{1} : Real{0}; });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename Real>
Var<Real> sum(const Var<Real>& a) {
  const auto& av = a.value();
  Real s{0};
  for (Real v : av.values()) s += v;
  const std::size_t ia = a.id();
  return a.graph().record("sum", Tensor<Real>::scalar(s), {ia}, [ia](Graph<Real>& g, std::size_t self) {
    Tensor<Real>* ga = g.grad_sink(ia);
    if (!ga) return;
    const Real gs = g.grad(self)[0];
    for (auto& v : ga->values()) v += gs;
  });
}

template <typename Real>
Var<Real> mean(const Var<Real>& a) {
  return scale(sum(a), Real{1} / static_cast<Real>(a.value().size()));
}

/// Sum over one axis of a matrix: axis 0 -> 1 x cols, axis 1 -> rows x 1.
template <typename Real>
Var<Real> sum_axis(const Var<Real>& a, int axis) {
  const auto& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (axis != 0 && axis != 1) throw ShapeError("sum_axis: axis must be 0 or 1");
  auto out = axis == 0 ? Tensor<Real>::matrix(1, n) : Tensor<Real>::matrix(m, 1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += av[i * n + j];
  const std::size_t ia = a.id();
  return a.graph().record("sum_axis", std::move(out), {ia}, [ia, m, n, axis](Graph<Real>& g, std::size_t self) {
    Tensor<Real>* ga = g.grad_sink(ia);
    if (!ga) return;
    const auto& gz = g.grad(self);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += gz[axis == 0 ? j : i];
  });
}

template <typename Real>
Var<Real> mean_axis(const Var<Real>& a, int axis) {
  const std::size_t count = axis == 0 ? a.value().rows() : a.value().cols();
  return scale(sum_axis(a, axis), Real{1} / static_cast<Real>(count));
}

// ---------------------------------------------------------------------------
// Structural

/// Concatenate along axis 0 (stack rows) or axis 1 (join columns).
template <typename Real>
Var<Real> concat(std::span<const Var<Real>> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Graph<Real>& g = parts[0].graph();
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  std::size_t rows = parts[0].value().rows(), cols = parts[0].value().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_same_graph(parts[0], p, "concat");
    const auto& v = p.value();
    if (axis == 0 && v.cols() != cols) detail::shape_mismatch("concat", parts[0].shape(), v.shape());
    if (axis == 1 && v.rows() != rows) detail::shape_mismatch("concat", parts[0].shape(), v.shape());
    ids.push_back(p.id());
    extents.push_back(axis == 0 ? v.rows() : v.cols());
    total += extents.back();
  }
  auto out = axis == 0 ? Tensor<Real>::matrix(total, cols) : Tensor<Real>::matrix(rows, total);
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto& v = parts[q].value();
    if (axis == 0) {
      std::copy(v.data(), v.data() + v.size(), out.data() + offset * cols);
    } else {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < extents[q]; ++j) out[i * total + offset + j] = v[i * extents[q] + j];
    }
    offset += extents[q];
  }
  const std::size_t out_cols = axis == 0 ? cols : total;
  return g.record("concat", std::move(out), ids,
                  [ids, extents, axis, rows, cols, out_cols](Graph<Real>& gr, std::size_t self) {
                    const auto& gz = gr.grad(self);
                    std::size_t off = 0;
                    for (std::size_t q = 0; q < ids.size(); ++q) {
                      if (Tensor<Real>* gp = gr.grad_sink(ids[q])) {
                        if (axis == 0) {
                          for (std::size_t k = 0; k < extents[q] * cols; ++k) (*gp)[k] += gz[off * cols + k];
                        } else {
                          for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < extents[q]; ++j)
                              (*gp)[i * extents[q] + j] += gz[i * out_cols + off + j];
                        }
                      }
                      off += extents[q];
                    }
                  });
}

template <typename Real>
Var<Real> concat(std::initializer_list<Var<Real>> parts, int axis) {
  std::vector<Var<Real>> v(parts);
  return concat(std::span<const Var<Real>>(v), axis);
}

/// Rows [begin, end) for axis 0, columns [begin, end) for axis 1.
template <typename Real>
Var<Real> slice(const Var<Real>& a, int axis, std::size_t begin, std::size_t end) {
  const auto& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  const std::size_t extent = axis == 0 ? m : n;
  if ((axis != 0 && axis != 1) || begin >= end || end > extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of shape " + shape_string(av.shape()));
  }
  const std::size_t w = end - begin;
  auto out = axis == 0 ? Tensor<Real>::matrix(w, n) : Tensor<Real>::matrix(m, w);
  if (axis == 0) {
    std::copy(av.data() + begin * n, av.data() + end * n, out.data());
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * n + begin + j];
  }
  const std::size_t ia = a.id();
  return a.graph().record("slice", std::move(out), {ia}, [ia, axis, begin, w, m, n](Graph<Real>& g, std::size_t self) {
    Tensor<Real>* ga = g.grad_sink(ia);
    if (!ga) return;
    const auto& gz = g.grad(self);
    if (axis == 0) {
      for (std::size_t k = 0; k < w * n; ++k) (*ga)[begin * n + k] += gz[k];
    } else {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) (*ga)[i * n + begin + j] += gz[i * w + j];
    }
  });
}

/// Gathers rows of `table` (V x d) by index; backward scatter-adds.
template <typename Real>
Var<Real> embedding_lookup(const Var<Real>& table, std::vector<std::size_t> indices) {
  const auto& tv = table.value();
  const std::size_t rows = tv.rows(), d = tv.cols();
  if (indices.empty()) throw ShapeError("embedding_lookup: empty index list");
  auto out = Tensor<Real>::matrix(indices.size(), d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) {
      throw ShapeError("embedding_lookup: index " + std::to_string(indices[r]) + " out of range for table " +
                       shape_string(tv.shape()));
    }
    std::copy(tv.data() + indices[r] * d, tv.data() + (indices[r] + 1) * d, out.data() + r * d);
  }
  const std::size_t it = table.id();
  return table.graph().record("embedding_lookup", std::move(out), {it},
                              [it, d, idx = std::move(indices)](Graph<Real>& g, std::size_t self) {
                                Tensor<Real>* gt = g.grad_sink(it);
                                if (!gt) return;
                                const auto& gz = g.grad(self);
                                for (std::size_t r = 0; r < idx.size(); ++r)
                                  for (std::size_t j = 0; j < d; ++j) (*gt)[idx[r] * d + j] += gz[r * d + j];
                              });
}

// ---------------------------------------------------------------------------
// Normalization and stochastic ops

/// Row-wise softmax with max subtraction.
template <typename Real>
Var<Real> softmax(const Var<Real>& a) {
  const auto& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor<Real> out(av.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const Real* x = av.data() + i * n;
    Real* y = out.data() + i * n;
    Real mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    Real z{0};
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  const std::size_t ia = a.id();
  return a.graph().record("softmax", std::move(out), {ia}, [ia, m, n](Graph<Real>& g, std::size_t self) {
    Tensor<Real>* ga = g.grad_sink(ia);
    if (!ga) return;
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    for (std::size_t i = 0; i < m; ++i) {
      Real dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += y[i * n + j] * (gy[i * n + j] - dot);
    }
  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer normalization. `gamma`/`beta` (1 x n) are optional; pass
/// default-constructed Vars to skip the affine part.
template <typename Real>
Var<Real> layernorm(const Var<Real>& x, const Var<Real>& gamma = {}, const Var<Real>& beta = {},
                    Real eps = static_cast<Real>(kLayerNormEps)) {
  const auto& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.valid() && gamma.value().size() != n) detail::shape_mismatch("layernorm", xv.shape(), gamma.shape());
  if (beta.valid() && beta.value().size() != n) detail::shape_mismatch("layernorm", xv.shape(), beta.shape());
  Tensor<Real> xhat(xv.shape());
  std::vector<Real> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* r = xv.data() + i * n;
    Real mu{0};
    for (std::size_t j = 0; j < n; ++j) mu += r[j];
    mu /= static_cast<Real>(n);
    Real var{0};
    for (std::size_t j = 0; j < n; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<Real>(n);
    inv_std[i] = Real{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) xhat[i * n + j] = (r[j] - mu) * inv_std[i];
  }
  Tensor<Real> out = xhat;
  if (gamma.valid() || beta.valid()) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        Real v = xhat[i * n + j];
        if (gamma.valid()) v *= gamma.value()[j];
        if (beta.valid()) v += beta.value()[j];
        out[i * n + j] = v;
      }
  }
  std::vector<std::size_t> inputs{x.id()};
  if (gamma.valid()) inputs.push_back(gamma.id());
  if (beta.valid()) inputs.push_back(beta.id());
  const std::size_t ix = x.id();
  const std::ptrdiff_t ig = gamma.valid() ? static_cast<std::ptrdiff_t>(gamma.id()) : -1;
  const std::ptrdiff_t ib = beta.valid() ? static_cast<std::ptrdiff_t>(beta.id()) : -1;
  return x.graph().record(
      "layernorm", std::move(out), std::move(inputs),
      [ix, ig, ib, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<Real>& g, std::size_t self) {
        const auto& gy = g.grad(self);
        if (ig >= 0) {
          if (Tensor<Real>* gg = g.grad_sink(static_cast<std::size_t>(ig)))
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j) (*gg)[j] += gy[i * n + j] * xhat[i * n + j];
        }
        if (ib >= 0) {
          if (Tensor<Real>* gb = g.grad_sink(static_cast<std::size_t>(ib)))
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j) (*gb)[j] += gy[i * n + j];
        }
        Tensor<Real>* gx = g.grad_sink(ix);
        if (!gx) return;
        std::vector<Real> dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          Real mean_d{0}, mean_dx{0};
          for (std::size_t j = 0; j < n; ++j) {
            Real d = gy[i * n + j];
            if (ig >= 0) d *= g.value(static_cast<std::size_t>(ig))[j];
            dxhat[j] = d;
            mean_d += d;
            mean_dx += d * xhat[i * n + j];
          }
          mean_d /= static_cast<Real>(n);
          mean_dx /= static_cast<Real>(n);
          for (std::size_t j = 0; j < n; ++j)
            (*gx)[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
        }
      });
}

/// Inverted dropout. Identity when `train` is false or p == 0; otherwise
/// the mask comes from the graph's seeded stream, so replaying a graph with
/// the same seed reproduces it.
template <typename Real>
Var<Real> dropout(const Var<Real>& a, Real p, bool train) {
  if (!train || p <= Real{0}) return a;
  if (p >= Real{1}) throw ConfigError("dropout: rate must be < 1");
  Rng rng(a.graph().next_stream_seed());
  const auto& av = a.value();
  auto mask = std::make_shared<std::vector<Real>>(av.size());
  const Real keep_scale = Real{1} / (Real{1} - p);
  Tensor<Real> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    (*mask)[i] = rng.uniform() < static_cast<double>(p) ? Real{0} : keep_scale;
    out[i] = av[i] * (*mask)[i];
  }
  const std::size_t ia = a.id();
  return a.graph().record("dropout", std::move(out), {ia}, [ia, mask](Graph<Real>& g, std::size_t self) {
    Tensor<Real>* ga = g.grad_sink(ia);
    if (!ga) return;
    const auto& gy = g.grad(self);
    for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] * (*mask)[i];
  });
}

/// Forward value `hard`, gradient routed unchanged to `soft`.
template <typename Real>
Var<Real> straight_through(Tensor<Real> hard, const Var<Real>& soft) {
  if (hard.size() != soft.value().size()) detail::shape_mismatch("straight_through", hard.shape(), soft.shape());
  const std::size_t is = soft.id();
  return soft.graph().record("straight_through", std::move(hard), {is}, [is](Graph<Real>& g, std::size_t self) {
    if (Tensor<Real>* gs = g.grad_sink(is)) *gs += g.grad(self);
  });
}

// ---------------------------------------------------------------------------
// Name dispatch over the core primitive set, default attributes.

inline constexpr std::string_view kPrimitiveNames[] = {
    "matmul", "add",  "mul",  "concat", "slice",   "sum",       "mean",    "sigmoid",         "tanh",
    "relu",   "gelu", "exp",  "log",    "softmax", "layernorm", "dropout", "embedding_lookup",
};

/// Applies a primitive by name. Attribute-bearing primitives use defaults:
/// concat joins columns, slice takes the first column, dropout runs in eval
/// mode, embedding_lookup reads row indices from the second input.
template <typename Real>
Var<Real> primitive_forward(std::string_view name, std::span<const Var<Real>> in) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw ShapeError(std::string(name) + ": expected " + std::to_string(n) + " inputs, got " +
                       std::to_string(in.size()));
    }
  };
  if (name == "matmul") return need(2), matmul(in[0], in[1]);
  if (name == "add") return need(2), add(in[0], in[1]);
  if (name == "mul") return need(2), mul(in[0], in[1]);
  if (name == "concat") return concat(in, 1);
  if (name == "slice") return need(1), slice(in[0], 1, 0, 1);
  if (name == "sum") return need(1), sum(in[0]);
  if (name == "mean") return need(1), mean(in[0]);
  if (name == "sigmoid") return need(1), sigmoid(in[0]);
  if (name == "tanh") return need(1), tanh(in[0]);
  if (name == "relu") return need(1), relu(in[0]);
  if (name == "gelu") return need(1), gelu(in[0]);
  if (name == "exp") return need(1), exp(in[0]);
  if (name == "log") return need(1), log(in[0]);
  if (name == "softmax") return need(1), softmax(in[0]);
  if (name == "layernorm") {
    if (in.size() == 1) return layernorm(in[0]);
    need(3);
    return layernorm(in[0], in[1], in[2]);
  }
  if (name == "dropout") return need(1), dropout(in[0], Real{0.1}, false);
  if (name == "embedding_lookup") {
    need(2);
    std::vector<std::size_t> idx;
    for (Real v : in[1].value().values()) {
      if (v < 0) throw ShapeError("embedding_lookup: negative index");
      idx.push_back(static_cast<std::size_t>(v));
    }
    return embedding_lookup(in[0], std::move(idx));
  }
  throw ShapeError("unknown primitive: " + std::string(name));
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Operators

template <typename Real>
Var<Real> operator+(const Var<Real>& a, const Var<Real>& b) {
  return ad::add(a, b);
}
template <typename Real>
Var<Real> operator-(const Var<Real>& a, const Var<Real>& b) {
  return ad::sub(a, b);
}
template <typename Real>
Var<Real> operator*(const Var<Real>& a, const Var<Real>& b) {
  return ad::mul(a, b);
}
template <typename Real>
Var<Real> operator-(const Var<Real>& a) {
  return ad::scale(a, Real{-1});
}
template <typename Real>
Var<Real> operator*(const Var<Real>& a, Real c) {
  return ad::scale(a, c);
}
template <typename Real>
Var<Real> operator*(Real c, const Var<Real>& a) {
  return ad::scale(a, c);
}
template <typename Real>
Var<Real> operator+(const Var<Real>& a, Real c) {
  return ad::add_scalar(a, c);
}
/// c - a
template <typename Real>
Var<Real> operator-(Real c, const Var<Real>& a) {
  return ad::add_scalar(ad::scale(a, Real{-1}), c);
}

}  // namespace hnetpp

#endif  // HNETPP_AUTODIFF_HPP
