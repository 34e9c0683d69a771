#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "sepdiff/kernels.hpp"
#include "sepdiff/tensor.hpp"

namespace sepdiff {

/// Handle to a value recorded on a Graph.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

/// Reverse-mode tape. Every op appends a node holding its value and, when
/// recording and any input needs a gradient, a closure that pushes the
/// node's gradient to its inputs. Nodes are created in topological order, so
/// backward() is a reverse sweep.
template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const BasicTensor<T>& grad)>;

  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const noexcept { return record_; }

  /// Input that never receives a gradient.
  Var constant(BasicTensor<T> value);
  /// Leaf that accumulates a gradient (parameters, gradient-check inputs).
  Var variable(BasicTensor<T> value);

  Var push(BasicTensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn);

  const BasicTensor<T>& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient of the last backward() w.r.t. v; empty if none reached it.
  const BasicTensor<T>& grad(Var v) const { return nodes_[v.id].grad; }

  /// Zero-initialized gradient buffer for accumulation inside backward closures.
  BasicTensor<T>& grad_buffer(Var v);

  /// Seeds d(loss)/d(loss) = 1 for a single-element loss and sweeps back.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  bool record_;
  std::vector<Node> nodes_;
};

// Differentiable ops. Shapes follow the kernels in kernels.hpp; a null bias
// Var (default-constructed) means no bias.
namespace ops {

template <class T>
Var conv1d(Graph<T>& g, Var x, Var weight, Var bias, std::size_t stride = 1,
           std::size_t padding = 0);
template <class T>
Var conv_transpose1d(Graph<T>& g, Var x, Var weight, Var bias, std::size_t stride,
                     std::size_t padding);
template <class T>
Var group_norm(Graph<T>& g, Var x, Var gamma, Var beta, std::size_t groups);
template <class T>
Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta);
template <class T>
Var activation(Graph<T>& g, Var x, kernels::Activation kind);
template <class T>
Var silu(Graph<T>& g, Var x) { return activation(g, x, kernels::Activation::Silu); }
template <class T>
Var gelu(Graph<T>& g, Var x) { return activation(g, x, kernels::Activation::Gelu); }
template <class T>
Var relu(Graph<T>& g, Var x) { return activation(g, x, kernels::Activation::Relu); }
template <class T>
Var prelu(Graph<T>& g, Var x, Var slope);
/// Linear map over channels at every time step (a width-1 convolution).
template <class T>
Var linear(Graph<T>& g, Var x, Var weight, Var bias) {
  return conv1d(g, x, weight, bias, 1, 0);
}
template <class T>
Var film(Graph<T>& g, Var x, Var scale, Var shift);
template <class T>
Var rotary(Graph<T>& g, Var x, std::size_t heads);
template <class T>
Var attention(Graph<T>& g, Var q, Var k, Var v, std::size_t heads);
template <class T>
Var avg_pool(Graph<T>& g, Var x, std::size_t factor);

template <class T>
Var add(Graph<T>& g, Var a, Var b);
template <class T>
Var scale(Graph<T>& g, Var a, double factor);
template <class T>
Var concat_channels(Graph<T>& g, Var a, Var b);
/// Mean of (a - b)^2 over all elements, as a (1, 1, 1) tensor.
template <class T>
Var mse(Graph<T>& g, Var a, Var b);

}  // namespace ops
}  // namespace sepdiff
