#ifndef FLUIDSFORMER_AUTODIFF_HPP_
#define FLUIDSFORMER_AUTODIFF_HPP_

#include "fluidsformer/tensor.hpp"

#include <deque>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

namespace fluidsformer::ad {

template <typename T> class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid as long as
/// the tape is alive.
template <typename T> class Var {
public:
  Var() = default;
  Var(Tape<T> *tape, int id) : tape_(tape), id_(id) {}

  const Tensor<T> &value() const { return tape_->value(id_); }
  const Shape &shape() const { return value().shape(); }
  Index dim(Index axis) const { return value().dim(axis); }
  Index size() const { return value().size(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Tape<T> *tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

private:
  Tape<T> *tape_ = nullptr;
  int id_ = -1;
};

/// Define-by-run reverse-mode record. Nodes are appended in evaluation
/// order, so reverse insertion order is a valid reverse topological order.
template <typename T> class Tape {
public:
  using Backward = std::function<void(Tape &, const Tensor<T> &grad_out)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  /// Disables gradient recording for every subsequent op (inference).
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) {
    Node &n = nodes_.emplace_back();
    n.owned = std::move(value);
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  /// Registers an externally owned parameter tensor. The tensor is read by
  /// reference and must outlive the tape; registering the same tensor twice
  /// returns the same node so its gradient accumulates in one place.
  Var<T> parameter(const Tensor<T> &value) {
    if (auto it = params_.find(&value); it != params_.end())
      return Var<T>(this, it->second);
    Node &n = nodes_.emplace_back();
    n.external = &value;
    n.requires_grad = grad_enabled_;
    const int id = static_cast<int>(nodes_.size()) - 1;
    params_.emplace(&value, id);
    return Var<T>(this, id);
  }

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                Backward backward) {
    return record_impl(std::move(value), inputs.begin(), inputs.end(),
                       std::move(backward));
  }
  Var<T> record(Tensor<T> value, const std::vector<Var<T>> &inputs,
                Backward backward) {
    return record_impl(std::move(value), inputs.begin(), inputs.end(),
                       std::move(backward));
  }

  const Tensor<T> &value(int id) const {
    const Node &n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Accumulation target for backward rules; zero-initialized on first use.
  Tensor<T> &grad_buffer(int id) {
    Node &n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor<T>::zeros(value(id).shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Gradient of the last backward() target with respect to `v`, or a zero
  /// tensor when `v` is disconnected from it.
  Tensor<T> grad(const Var<T> &v) const {
    const Node &n = nodes_[v.id()];
    return n.has_grad ? n.grad : Tensor<T>::zeros(value(v.id()).shape());
  }

  void backward(const Var<T> &loss) {
    if (loss.size() != 1)
      throw ShapeError("backward needs a scalar loss, got shape " +
                       shape_string(loss.shape()));
    for (Node &n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor<T>();
    }
    grad_buffer(loss.id()).data().setOnes();
    for (int id = loss.id(); id >= 0; --id) {
      Node &n = nodes_[id];
      if (n.has_grad && n.backward) n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T> *external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  template <typename It>
  Var<T> record_impl(Tensor<T> value, It first, It last, Backward backward) {
    bool needs = false;
    if (grad_enabled_)
      for (It it = first; it != last; ++it) needs = needs || it->requires_grad();
    Node &n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(backward);
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor<T> *, int> params_;
  bool grad_enabled_ = true;
};

// Primitive ops. Shapes: matrices are [rows, cols]; images are [C, H, W];
// convolution weights are [Cout, Cin, k, k]. Mismatched shapes throw
// ShapeError naming the op.

template <typename T> Var<T> matmul(const Var<T> &a, const Var<T> &b);
template <typename T> Var<T> transpose(const Var<T> &a);
template <typename T> Var<T> add(const Var<T> &a, const Var<T> &b);
template <typename T> Var<T> sub(const Var<T> &a, const Var<T> &b);
template <typename T> Var<T> mul(const Var<T> &a, const Var<T> &b);
template <typename T> Var<T> scale(const Var<T> &a, T factor);
template <typename T> Var<T> add_scalar(const Var<T> &a, T offset);
/// a [m, n] + bias [n] broadcast over rows.
template <typename T> Var<T> add_bias(const Var<T> &a, const Var<T> &bias);
/// x [C, H, W] + bias [C] broadcast over pixels.
template <typename T>
Var<T> add_channel_bias(const Var<T> &x, const Var<T> &bias);
template <typename T> Var<T> relu(const Var<T> &a);
template <typename T> Var<T> tanh(const Var<T> &a);
template <typename T> Var<T> softplus(const Var<T> &a);
template <typename T> Var<T> abs(const Var<T> &a);
/// Softmax over the last axis.
template <typename T> Var<T> softmax(const Var<T> &a);
template <typename T> Var<T> log_softmax(const Var<T> &a);
/// Row-wise normalization of [m, n] with affine gain/shift of shape [n].
template <typename T>
Var<T> layer_norm(const Var<T> &x, const Var<T> &gain, const Var<T> &shift,
                  T eps = T(1e-5));
template <typename T>
Var<T> concat(const std::vector<Var<T>> &parts, Index axis);
template <typename T>
Var<T> slice(const Var<T> &a, Index axis, Index start, Index length);
template <typename T> Var<T> reshape(const Var<T> &a, Shape shape);
template <typename T> Var<T> sum(const Var<T> &a);
template <typename T> Var<T> mean(const Var<T> &a);
/// Column means of [m, n] -> [n].
template <typename T> Var<T> mean_rows(const Var<T> &a);
/// Rows of `table` [V, d] selected by `ids` -> [len, d].
template <typename T>
Var<T> embedding_lookup(const Var<T> &table, const std::vector<int> &ids);
/// out.flat[k] = a.flat[indices[k]]; gradient scatters back.
template <typename T>
Var<T> gather(const Var<T> &a, const std::vector<Index> &indices, Shape shape);
template <typename T>
Var<T> conv2d(const Var<T> &x, const Var<T> &weight, const Var<T> &bias,
              int stride, int padding);
/// Max pooling; out-of-bounds taps are ignored.
template <typename T>
Var<T> max_pool2d(const Var<T> &x, int kernel, int stride, int padding);
/// Nearest-neighbour resize of [C, H, W] to [C, height, width].
template <typename T>
Var<T> upsample_nearest(const Var<T> &x, Index height, Index width);
/// Mean Huber loss of (target - pred) with threshold delta.
template <typename T>
Var<T> huber(const Var<T> &pred, const Var<T> &target, T delta);

template <typename T> Var<T> operator+(const Var<T> &a, const Var<T> &b) {
  return add(a, b);
}
template <typename T> Var<T> operator-(const Var<T> &a, const Var<T> &b) {
  return sub(a, b);
}
template <typename T> Var<T> operator*(const Var<T> &a, const Var<T> &b) {
  return mul(a, b);
}

} // namespace fluidsformer::ad

#endif // FLUIDSFORMER_AUTODIFF_HPP_
