#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ssvae {

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index shape_numel(const Shape& shape) {
  Eigen::Index n = 1;
  for (Eigen::Index d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline void check_shapes(bool ok, const char* op, const Shape& a, const Shape& b) {
  if (!ok) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                shape_str(a) + " and " + shape_str(b));
  }
}

/// Thread-local switch disabling graph recording, torch-style. Evaluations
/// under NoGradGuard produce constant tensors regardless of input flags.
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Dense row-major tensor with reverse-mode autodiff. A Tensor is a cheap
// shared handle to a graph node; values are immutable after construction,
// only gradient buffers mutate. One graph belongs to one thread.
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Buffer = Eigen::Array<S, Eigen::Dynamic, 1>;
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ColMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  struct Node {
    Shape shape;
    Buffer value;
    Buffer grad;  // empty until backward touches this node
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    Buffer& ensure_grad() {
      if (grad.size() == 0) grad = Buffer::Zero(value.size());
      return grad;
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }

  static Tensor filled(Shape shape, S fill, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = Buffer::Constant(shape_numel(t.node_->shape), fill);
    t.node_->requires_grad = requires_grad && GradMode::enabled();
    return t;
  }

  static Tensor scalar(S v) { return filled({1}, v); }

  static Tensor from_buffer(Shape shape, Buffer data, bool requires_grad = false) {
    if (data.size() != shape_numel(shape)) {
      throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                  " does not match buffer length " +
                                  std::to_string(data.size()));
    }
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad && GradMode::enabled();
    return t;
  }

  /// Copies an Eigen matrix (any storage order) into a rank-2 tensor.
  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m,
                            bool requires_grad = false) {
    Buffer buf(m.rows() * m.cols());
    Eigen::Map<RowMat>(buf.data(), m.rows(), m.cols()) = m.template cast<S>();
    return from_buffer({m.rows(), m.cols()}, std::move(buf), requires_grad);
  }

  template <typename Derived>
  static Tensor from_vector(const Eigen::MatrixBase<Derived>& v,
                            bool requires_grad = false) {
    Buffer buf = v.template cast<S>().array();
    return from_buffer({v.size()}, std::move(buf), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Eigen::Index numel() const { return node_->value.size(); }
  Eigen::Index rows() const { return node_->shape.size() == 2 ? node_->shape[0] : 1; }
  Eigen::Index cols() const { return node_->shape.back(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }

  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }
  Tensor& set_name(std::string n) {
    node_->name = std::move(n);
    return *this;
  }

  const Buffer& value() const { return node_->value; }
  const Buffer& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() > 0; }
  Buffer grad_or_zero() const {
    return has_grad() ? node_->grad : Buffer::Zero(numel());
  }
  void clear_grad() { node_->grad.resize(0); }

  /// In-place parameter update; breaks no graph because parameters are leaves.
  void update_value(const Buffer& v) { node_->value = v; }

  S item() const {
    if (numel() != 1) {
      throw std::invalid_argument("item: tensor " + shape_str(shape()) +
                                  " is not a scalar");
    }
    return node_->value[0];
  }

  Eigen::Map<const RowMat> matrix() const {
    return Eigen::Map<const RowMat>(node_->value.data(), rows(), cols());
  }
  Eigen::Map<const RowMat> grad_matrix() const {
    return Eigen::Map<const RowMat>(node_->grad.data(), rows(), cols());
  }

  std::shared_ptr<Node> node() const { return node_; }

  /// Runs reverse-mode accumulation from this scalar. Gradients sum into
  /// every reachable tensor with requires_grad set.
  void backward() const;

 private:
  std::shared_ptr<Node> node_;

  template <typename T>
  friend struct OpBuilder;
};

// ---------------------------------------------------------------------------
// graph construction helpers

template <typename S>
struct OpBuilder {
  using T = Tensor<S>;
  using Node = typename T::Node;

  static T make(Shape shape, typename T::Buffer value,
                std::vector<T> inputs, std::function<void(Node&)> backprop) {
    T out;
    out.node_ = std::make_shared<Node>();
    out.node_->shape = std::move(shape);
    out.node_->value = std::move(value);
    bool needs = false;
    if (GradMode::enabled()) {
      for (const auto& in : inputs) needs = needs || in.requires_grad();
    }
    out.node_->requires_grad = needs;
    if (needs) {
      out.node_->parents.reserve(inputs.size());
      for (const auto& in : inputs) out.node_->parents.push_back(in.node());
      out.node_->backprop = std::move(backprop);
    }
    return out;
  }
};

template <typename S>
void Tensor<S>::backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(shape()));
  }
  // Iterative topological sort; training graphs unroll hundreds of frames
  // and recursion would overflow the stack.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && node->grad.size() > 0) node->backprop(*node);
  }
}

// ---------------------------------------------------------------------------
// broadcasting

struct Broadcast {
  Shape out;
  // per-input strides aligned to the output rank; 0 where the dim broadcasts
  std::vector<Eigen::Index> stride_a, stride_b;

  static Broadcast resolve(const char* op, const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Broadcast bc;
    bc.out.resize(rank);
    Shape pa(rank, 1), pb(rank, 1);
    std::copy(a.begin(), a.end(), pa.end() - a.size());
    std::copy(b.begin(), b.end(), pb.end() - b.size());
    for (std::size_t i = 0; i < rank; ++i) {
      check_shapes(pa[i] == pb[i] || pa[i] == 1 || pb[i] == 1, op, a, b);
      bc.out[i] = std::max(pa[i], pb[i]);
    }
    bc.stride_a = strides_for(pa);
    bc.stride_b = strides_for(pb);
    for (std::size_t i = 0; i < rank; ++i) {
      if (pa[i] == 1 && bc.out[i] > 1) bc.stride_a[i] = 0;
      if (pb[i] == 1 && bc.out[i] > 1) bc.stride_b[i] = 0;
    }
    return bc;
  }

  static std::vector<Eigen::Index> strides_for(const Shape& s) {
    std::vector<Eigen::Index> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
      st[i] = st[i + 1] * s[i + 1];
    }
    return st;
  }

  bool trivial() const {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (stride_a[i] == 0 || stride_b[i] == 0) {
        if (out[i] > 1) return false;
      }
    }
    return true;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    const std::size_t rank = out.size();
    Shape idx(rank, 0);
    Eigen::Index n = shape_numel(out);
    for (Eigen::Index flat = 0; flat < n; ++flat) {
      Eigen::Index ia = 0, ib = 0;
      for (std::size_t d = 0; d < rank; ++d) {
        ia += idx[d] * stride_a[d];
        ib += idx[d] * stride_b[d];
      }
      fn(flat, ia, ib);
      for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
        if (++idx[d] < out[d]) break;
        idx[d] = 0;
      }
    }
  }
};

namespace detail {

template <typename S, typename Fwd, typename Dfa, typename Dfb>
Tensor<S> binary_broadcast(const char* op, const Tensor<S>& a, const Tensor<S>& b,
                           Fwd fwd, Dfa dfa, Dfb dfb) {
  using T = Tensor<S>;
  const Broadcast bc = Broadcast::resolve(op, a.shape(), b.shape());
  typename T::Buffer out(shape_numel(bc.out));
  const auto& va = a.value();
  const auto& vb = b.value();
  if (bc.trivial()) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = fwd(va[i], vb[i]);
  } else {
    bc.for_each([&](Eigen::Index o, Eigen::Index ia, Eigen::Index ib) {
      out[o] = fwd(va[ia], vb[ib]);
    });
  }
  const bool fast = bc.trivial();
  return OpBuilder<S>::make(
      bc.out, std::move(out), {a, b}, [bc, fast, dfa, dfb](typename T::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        typename T::Buffer* ga = pa.requires_grad ? &pa.ensure_grad() : nullptr;
        typename T::Buffer* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
        if (fast) {
          for (Eigen::Index i = 0; i < self.grad.size(); ++i) {
            const S g = self.grad[i];
            if (ga) (*ga)[i] += g * dfa(pa.value[i], pb.value[i]);
            if (gb) (*gb)[i] += g * dfb(pa.value[i], pb.value[i]);
          }
          return;
        }
        bc.for_each([&](Eigen::Index o, Eigen::Index ia, Eigen::Index ib) {
          const S g = self.grad[o];
          if (ga) (*ga)[ia] += g * dfa(pa.value[ia], pb.value[ib]);
          if (gb) (*gb)[ib] += g * dfb(pa.value[ia], pb.value[ib]);
        });
      });
}

template <typename S, typename Fwd, typename Dfx>
Tensor<S> unary_elementwise(const Tensor<S>& x, Fwd fwd, Dfx dfx) {
  using T = Tensor<S>;
  typename T::Buffer out(x.numel());
  const auto& vx = x.value();
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = fwd(vx[i]);
  return OpBuilder<S>::make(
      x.shape(), std::move(out), {x}, [dfx](typename T::Node& self) {
        auto& px = *self.parents[0];
        auto& gx = px.ensure_grad();
        for (Eigen::Index i = 0; i < self.grad.size(); ++i) {
          gx[i] += self.grad[i] * dfx(px.value[i], self.value[i]);
        }
      });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitives

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_broadcast<S>(
      "add", a, b, [](S x, S y) { return x + y; },
      [](S, S) { return S(1); }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_broadcast<S>(
      "sub", a, b, [](S x, S y) { return x - y; },
      [](S, S) { return S(1); }, [](S, S) { return S(-1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_broadcast<S>(
      "mul", a, b, [](S x, S y) { return x * y; },
      [](S, S y) { return y; }, [](S x, S) { return x; });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_broadcast<S>(
      "div", a, b, [](S x, S y) { return x / y; },
      [](S, S y) { return S(1) / y; },
      [](S x, S y) { return -x / (y * y); });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return detail::unary_elementwise<S>(
      x, [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  return detail::unary_elementwise<S>(
      x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
  return detail::unary_elementwise<S>(
      x, [](S v) { return std::tanh(v); },
      [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return detail::unary_elementwise<S>(
      x,
      [](S v) {
        return v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                         : std::exp(v) / (S(1) + std::exp(v));
      },
      [](S, S y) { return y * (S(1) - y); });
}

/// softplus(x) = log(1 + e^x), evaluated overflow-free; d/dx = sigmoid(x).
template <typename S>
Tensor<S> softplus(const Tensor<S>& x) {
  return detail::unary_elementwise<S>(
      x,
      [](S v) { return std::max(v, S(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](S v, S) {
        return v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                         : std::exp(v) / (S(1) + std::exp(v));
      });
}

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
  return detail::unary_elementwise<S>(
      x, [](S v) { return v * v; }, [](S v, S) { return S(2) * v; });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
  return detail::unary_elementwise<S>(
      x, [](S v) { return std::sqrt(v); },
      [](S, S y) { return S(0.5) / y; });
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  using T = Tensor<S>;
  check_shapes(a.shape().size() == 2 && b.shape().size() == 2 &&
                   a.shape()[1] == b.shape()[0],
               "matmul", a.shape(), b.shape());
  const Eigen::Index m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  typename T::Buffer out(m * n);
  Eigen::Map<typename T::RowMat>(out.data(), m, n).noalias() =
      a.matrix() * b.matrix();
  return OpBuilder<S>::make(
      {m, n}, std::move(out), {a, b}, [m, k, n](typename T::Node& self) {
        using Map = Eigen::Map<typename T::RowMat>;
        using CMap = Eigen::Map<const typename T::RowMat>;
        CMap gout(self.grad.data(), m, n);
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        CMap va(pa.value.data(), m, k);
        CMap vb(pb.value.data(), k, n);
        if (pa.requires_grad) {
          Map(pa.ensure_grad().data(), m, k).noalias() += gout * vb.transpose();
        }
        if (pb.requires_grad) {
          Map(pb.ensure_grad().data(), k, n).noalias() += va.transpose() * gout;
        }
      });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  using T = Tensor<S>;
  typename T::Buffer out(1);
  out[0] = x.value().sum();
  return OpBuilder<S>::make({1}, std::move(out), {x},
                            [](typename T::Node& self) {
                              auto& gx = self.parents[0]->ensure_grad();
                              gx += self.grad[0];
                            });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  using T = Tensor<S>;
  const S inv_n = S(1) / static_cast<S>(x.numel());
  typename T::Buffer out(1);
  out[0] = x.value().sum() * inv_n;
  return OpBuilder<S>::make({1}, std::move(out), {x},
                            [inv_n](typename T::Node& self) {
                              auto& gx = self.parents[0]->ensure_grad();
                              gx += self.grad[0] * inv_n;
                            });
}

namespace detail {

inline std::pair<Eigen::Index, Eigen::Index> rank2_dims(const Shape& s) {
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw std::invalid_argument("expected rank 1 or 2 tensor, got " + shape_str(s));
}

}  // namespace detail

/// Concatenates rank-1/2 tensors along axis 0 (rows) or 1 (columns).
template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  using T = Tensor<S>;
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  auto [r0, c0] = detail::rank2_dims(parts[0].shape());
  Eigen::Index rows = r0, cols = c0;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    auto [r, c] = detail::rank2_dims(parts[i].shape());
    check_shapes(axis == 0 ? c == cols : r == rows, "concat",
                 parts[0].shape(), parts[i].shape());
    (axis == 0 ? rows : cols) += (axis == 0 ? r : c);
  }
  typename T::Buffer out(rows * cols);
  Eigen::Map<typename T::RowMat> om(out.data(), rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    auto [r, c] = detail::rank2_dims(p.shape());
    Eigen::Map<const typename T::RowMat> pm(p.value().data(), r, c);
    if (axis == 0) {
      om.middleRows(at, r) = pm;
      at += r;
    } else {
      om.middleCols(at, c) = pm;
      at += c;
    }
  }
  std::vector<T> inputs(parts.begin(), parts.end());
  return OpBuilder<S>::make(
      {rows, cols}, std::move(out), inputs,
      [rows, cols, axis](typename T::Node& self) {
        Eigen::Map<const typename T::RowMat> gm(self.grad.data(), rows, cols);
        Eigen::Index at = 0;
        for (auto& parent : self.parents) {
          auto [r, c] = detail::rank2_dims(parent->shape);
          Eigen::Map<typename T::RowMat> pg(parent->ensure_grad().data(), r, c);
          if (axis == 0) {
            pg += gm.middleRows(at, r);
            at += r;
          } else {
            pg += gm.middleCols(at, c);
            at += c;
          }
        }
      });
}

/// Contiguous slice along axis 0 or 1 of a rank-1/2 tensor.
template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, Eigen::Index start, Eigen::Index len) {
  using T = Tensor<S>;
  if (axis != 0 && axis != 1) throw std::invalid_argument("slice: axis must be 0 or 1");
  if (x.shape().size() == 1) axis = 1;  // a vector has only its element axis
  auto [rows, cols] = detail::rank2_dims(x.shape());
  const Eigen::Index extent = axis == 0 ? rows : cols;
  if (start < 0 || len <= 0 || start + len > extent) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of bounds for " +
                                shape_str(x.shape()));
  }
  const Eigen::Index or_ = axis == 0 ? len : rows;
  const Eigen::Index oc = axis == 0 ? cols : len;
  typename T::Buffer out(or_ * oc);
  Eigen::Map<const typename T::RowMat> xm(x.value().data(), rows, cols);
  Eigen::Map<typename T::RowMat>(out.data(), or_, oc) =
      axis == 0 ? xm.middleRows(start, len) : xm.middleCols(start, len);
  Shape oshape = x.shape().size() == 1 ? Shape{len} : Shape{or_, oc};
  return OpBuilder<S>::make(
      oshape, std::move(out), {x},
      [rows, cols, axis, start, len, or_, oc](typename T::Node& self) {
        Eigen::Map<const typename T::RowMat> gm(self.grad.data(), or_, oc);
        Eigen::Map<typename T::RowMat> pg(self.parents[0]->ensure_grad().data(),
                                          rows, cols);
        if (axis == 0) {
          pg.middleRows(start, len) += gm;
        } else {
          pg.middleCols(start, len) += gm;
        }
      });
}

/// Same value, no history; gradients stop here.
template <typename S>
Tensor<S> detach(const Tensor<S>& x) {
  return Tensor<S>::from_buffer(x.shape(), x.value());
}

// operator sugar; scalars promote to [1] constants and broadcast
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S>
Tensor<S> operator/(const Tensor<S>& a, const Tensor<S>& b) { return div(a, b); }
template <typename S>
Tensor<S> operator*(S a, const Tensor<S>& b) { return mul(Tensor<S>::scalar(a), b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, S b) { return mul(a, Tensor<S>::scalar(b)); }
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, S b) { return add(a, Tensor<S>::scalar(b)); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, S b) { return sub(a, Tensor<S>::scalar(b)); }
template <typename S>
Tensor<S> operator-(S a, const Tensor<S>& b) { return sub(Tensor<S>::scalar(a), b); }
template <typename S>
Tensor<S> operator/(S a, const Tensor<S>& b) { return div(Tensor<S>::scalar(a), b); }
template <typename S>
Tensor<S> operator/(const Tensor<S>& a, S b) { return div(a, Tensor<S>::scalar(b)); }

// ---------------------------------------------------------------------------
// gradient verification

/// Compares the analytic gradient of `fn` at `point` against central finite
/// differences. Returns the max over coordinates of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <typename S, typename Fn>
S grad_check(Fn&& fn, const Tensor<S>& point, S step) {
  Tensor<S> x = Tensor<S>::from_buffer(point.shape(), point.value(), true);
  Tensor<S> y = fn(x);
  if (y.numel() != 1) throw std::invalid_argument("grad_check: fn must return a scalar");
  if (!std::isfinite(static_cast<double>(y.item()))) {
    throw std::runtime_error("grad_check: non-finite value at base point");
  }
  y.backward();
  typename Tensor<S>::Buffer analytic =
      x.has_grad() ? x.grad()
                   : Tensor<S>::Buffer::Zero(x.numel());

  S worst = 0;
  NoGradGuard ng;
  for (Eigen::Index i = 0; i < point.numel(); ++i) {
    typename Tensor<S>::Buffer vplus = point.value();
    typename Tensor<S>::Buffer vminus = point.value();
    vplus[i] += step;
    vminus[i] -= step;
    const S fplus = fn(Tensor<S>::from_buffer(point.shape(), vplus)).item();
    const S fminus = fn(Tensor<S>::from_buffer(point.shape(), vminus)).item();
    if (!std::isfinite(static_cast<double>(fplus)) ||
        !std::isfinite(static_cast<double>(fminus))) {
      throw std::runtime_error("grad_check: non-finite value at coordinate " +
                               std::to_string(i));
    }
    const S numeric = (fplus - fminus) / (S(2) * step);
    const S denom = std::max({std::abs(analytic[i]), std::abs(numeric), S(1e-8)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace ssvae
