#include "sepdiff/graph.hpp"

#include <memory>
#include <string>

#include "sepdiff/error.hpp"

namespace sepdiff {

template <class T>
Var Graph<T>::constant(BasicTensor<T> value) {
  nodes_.push_back({std::move(value), {}, {}, false});
  return {nodes_.size() - 1};
}

template <class T>
Var Graph<T>::variable(BasicTensor<T> value) {
  nodes_.push_back({std::move(value), {}, {}, record_});
  return {nodes_.size() - 1};
}

template <class T>
Var Graph<T>::push(BasicTensor<T> value, std::initializer_list<Var> inputs,
                   BackwardFn fn) {
#ifndef NDEBUG
  if (!value.all_finite()) {
    fail(ErrorCode::NumericFailure,
         "non-finite activation at graph node " + std::to_string(nodes_.size()));
  }
#endif
  bool needs = false;
  if (record_) {
    for (Var v : inputs) needs = needs || (v.valid() && nodes_[v.id].requires_grad);
  }
  nodes_.push_back({std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, needs});
  return {nodes_.size() - 1};
}

template <class T>
BasicTensor<T>& Graph<T>::grad_buffer(Var v) {
  auto& node = nodes_[v.id];
  if (node.grad.empty()) node.grad = BasicTensor<T>(node.value.shape());
  return node.grad;
}

template <class T>
void Graph<T>::backward(Var loss) {
  if (!record_) fail(ErrorCode::ContractViolation, "backward on a non-recording graph");
  if (nodes_[loss.id].value.size() != 1) {
    fail(ErrorCode::ContractViolation, "backward needs a single-element loss");
  }
  for (auto& n : nodes_) n.grad = {};
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss).fill(T(1));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
#ifndef NDEBUG
    if (!node.grad.all_finite()) {
      fail(ErrorCode::NumericFailure, "non-finite gradient at graph node " + std::to_string(i));
    }
#endif
    // Interior gradients are no longer needed once propagated.
    node.grad = {};
  }
}

template class Graph<float>;
template class Graph<double>;

namespace ops {

namespace {

template <class T>
BasicTensor<T>* grad_if(Graph<T>& g, Var v) {
  return v.valid() && g.requires_grad(v) ? &g.grad_buffer(v) : nullptr;
}

}  // namespace

template <class T>
Var conv1d(Graph<T>& g, Var x, Var weight, Var bias, std::size_t stride,
           std::size_t padding) {
  auto y = kernels::conv1d_forward(g.value(x), g.value(weight),
                                   bias.valid() ? &g.value(bias) : nullptr, stride,
                                   padding);
  return g.push(std::move(y), {x, weight, bias},
                [=](Graph<T>& gr, const BasicTensor<T>& gy) {
                  kernels::conv1d_backward(gr.value(x), gr.value(weight), gy, stride,
                                           padding, grad_if(gr, x), grad_if(gr, weight),
                                           grad_if(gr, bias));
                });
}

template <class T>
Var conv_transpose1d(Graph<T>& g, Var x, Var weight, Var bias, std::size_t stride,
                     std::size_t padding) {
  auto y = kernels::conv_transpose1d_forward(g.value(x), g.value(weight),
                                             bias.valid() ? &g.value(bias) : nullptr,
                                             stride, padding);
  return g.push(std::move(y), {x, weight, bias},
                [=](Graph<T>& gr, const BasicTensor<T>& gy) {
                  kernels::conv_transpose1d_backward(
                      gr.value(x), gr.value(weight), gy, stride, padding,
                      grad_if(gr, x), grad_if(gr, weight), grad_if(gr, bias));
                });
}

template <class T>
Var group_norm(Graph<T>& g, Var x, Var gamma, Var beta, std::size_t groups) {
  auto stats = std::make_shared<kernels::NormStats>();
  auto y = kernels::group_norm_forward(g.value(x), g.value(gamma), g.value(beta),
                                       groups, g.recording() ? stats.get() : nullptr);
  return g.push(std::move(y), {x, gamma, beta},
                [=](Graph<T>& gr, const BasicTensor<T>& gy) {
                  kernels::group_norm_backward(gr.value(x), gr.value(gamma), groups,
                                               *stats, gy, grad_if(gr, x),
                                               grad_if(gr, gamma), grad_if(gr, beta));
                });
}

template <class T>
Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta) {
  auto stats = std::make_shared<kernels::NormStats>();
  auto y = kernels::layer_norm_forward(g.value(x), g.value(gamma), g.value(beta),
                                       g.recording() ? stats.get() : nullptr);
  return g.push(std::move(y), {x, gamma, beta},
                [=](Graph<T>& gr, const BasicTensor<T>& gy) {
                  kernels::layer_norm_backward(gr.value(x), gr.value(gamma), *stats, gy,
                                               grad_if(gr, x), grad_if(gr, gamma),
                                               grad_if(gr, beta));
                });
}

template <class T>
Var activation(Graph<T>& g, Var x, kernels::Activation kind) {
  auto y = kernels::activation_forward(g.value(x), kind);
  return g.push(std::move(y), {x}, [=](Graph<T>& gr, const BasicTensor<T>& gy) {
    kernels::activation_backward(gr.value(x), kind, gy, &gr.grad_buffer(x));
  });
}

template <class T>
Var prelu(Graph<T>& g, Var x, Var slope) {
  auto y = kernels::prelu_forward(g.value(x), g.value(slope));
  return g.push(std::move(y), {x, slope}, [=](Graph<T>& gr, const BasicTensor<T>& gy) {
    kernels::prelu_backward(gr.value(x), gr.value(slope), gy, grad_if(gr, x),
                            grad_if(gr, slope));
  });
}

template <class T>
Var film(Graph<T>& g, Var x, Var scale, Var shift) {
  auto y = kernels::film_forward(g.value(x), g.value(scale), g.value(shift));
  return g.push(std::move(y), {x, scale, shift},
                [=](Graph<T>& gr, const BasicTensor<T>& gy) {
                  kernels::film_backward(gr.value(x), gr.value(scale), gy,
                                         grad_if(gr, x), grad_if(gr, scale),
                                         grad_if(gr, shift));
                });
}

template <class T>
Var rotary(Graph<T>& g, Var x, std::size_t heads) {
  auto y = kernels::rotary_forward(g.value(x), heads);
  return g.push(std::move(y), {x}, [=](Graph<T>& gr, const BasicTensor<T>& gy) {
    const auto gx = kernels::rotary_backward(gy, heads);
    auto& buf = gr.grad_buffer(x);
    for (std::size_t i = 0; i < buf.size(); ++i) buf.data()[i] += gx.data()[i];
  });
}

template <class T>
Var attention(Graph<T>& g, Var q, Var k, Var v, std::size_t heads) {
  auto probs = std::make_shared<std::vector<T>>();
  auto y = kernels::attention_forward(g.value(q), g.value(k), g.value(v), heads,
                                      probs.get());
  return g.push(std::move(y), {q, k, v}, [=](Graph<T>& gr, const BasicTensor<T>& gy) {
    kernels::attention_backward(gr.value(q), gr.value(k), gr.value(v), heads, *probs,
                                gy, grad_if(gr, q), grad_if(gr, k), grad_if(gr, v));
  });
}

template <class T>
Var avg_pool(Graph<T>& g, Var x, std::size_t factor) {
  auto y = kernels::avg_pool_forward(g.value(x), factor);
  return g.push(std::move(y), {x}, [=](Graph<T>& gr, const BasicTensor<T>& gy) {
    kernels::avg_pool_backward(gy, factor, &gr.grad_buffer(x));
  });
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  const auto& va = g.value(a);
  const auto& vb = g.value(b);
  if (!(va.shape() == vb.shape())) {
    fail(ErrorCode::InvalidArgument,
         "add: shape mismatch " + va.shape().str() + " vs " + vb.shape().str());
  }
  BasicTensor<T> y = va;
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += vb.data()[i];
  return g.push(std::move(y), {a, b}, [=](Graph<T>& gr, const BasicTensor<T>& gy) {
    for (Var v : {a, b}) {
      if (auto* buf = grad_if(gr, v)) {
        for (std::size_t i = 0; i < buf->size(); ++i) buf->data()[i] += gy.data()[i];
      }
    }
  });
}

template <class T>
Var scale(Graph<T>& g, Var a, double factor) {
  BasicTensor<T> y = g.value(a);
  for (auto& v : y.values()) v = T(double(v) * factor);
  return g.push(std::move(y), {a}, [=](Graph<T>& gr, const BasicTensor<T>& gy) {
    auto& buf = gr.grad_buffer(a);
    for (std::size_t i = 0; i < buf.size(); ++i) {
      buf.data()[i] += T(double(gy.data()[i]) * factor);
    }
  });
}

template <class T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
  const auto& va = g.value(a);
  const auto& vb = g.value(b);
  if (va.batch() != vb.batch() || va.length() != vb.length()) {
    fail(ErrorCode::InvalidArgument,
         "concat: incompatible " + va.shape().str() + " and " + vb.shape().str());
  }
  const std::size_t ca = va.channels(), cb = vb.channels(), len = va.length();
  BasicTensor<T> y(Shape{va.batch(), ca + cb, len});
  for (std::size_t n = 0; n < va.batch(); ++n) {
    std::copy(va.item(n), va.item(n) + ca * len, y.item(n));
    std::copy(vb.item(n), vb.item(n) + cb * len, y.item(n) + ca * len);
  }
  return g.push(std::move(y), {a, b}, [=](Graph<T>& gr, const BasicTensor<T>& gy) {
    if (auto* ga = grad_if(gr, a)) {
      for (std::size_t n = 0; n < gy.batch(); ++n) {
        const T* src = gy.item(n);
        T* dst = ga->item(n);
        for (std::size_t i = 0; i < ca * len; ++i) dst[i] += src[i];
      }
    }
    if (auto* gb = grad_if(gr, b)) {
      for (std::size_t n = 0; n < gy.batch(); ++n) {
        const T* src = gy.item(n) + ca * len;
        T* dst = gb->item(n);
        for (std::size_t i = 0; i < cb * len; ++i) dst[i] += src[i];
      }
    }
  });
}

template <class T>
Var mse(Graph<T>& g, Var a, Var b) {
  const auto& va = g.value(a);
  const auto& vb = g.value(b);
  if (!(va.shape() == vb.shape())) {
    fail(ErrorCode::InvalidArgument,
         "mse: shape mismatch " + va.shape().str() + " vs " + vb.shape().str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = double(va.data()[i]) - double(vb.data()[i]);
    acc += d * d;
  }
  const double n = double(va.size());
  BasicTensor<T> y(Shape{1, 1, 1}, T(acc / n));
  return g.push(std::move(y), {a, b}, [=](Graph<T>& gr, const BasicTensor<T>& gy) {
    const double w = 2.0 * double(gy.data()[0]) / n;
    const auto& xa = gr.value(a);
    const auto& xb = gr.value(b);
    auto* ga = grad_if(gr, a);
    auto* gb = grad_if(gr, b);
    for (std::size_t i = 0; i < xa.size(); ++i) {
      const double d = w * (double(xa.data()[i]) - double(xb.data()[i]));
      if (ga) ga->data()[i] += T(d);
      if (gb) gb->data()[i] -= T(d);
    }
  });
}

#define SEPDIFF_OPS(T)                                                            \
  template Var conv1d(Graph<T>&, Var, Var, Var, std::size_t, std::size_t);       \
  template Var conv_transpose1d(Graph<T>&, Var, Var, Var, std::size_t,           \
                                std::size_t);                                    \
  template Var group_norm(Graph<T>&, Var, Var, Var, std::size_t);                \
  template Var layer_norm(Graph<T>&, Var, Var, Var);                             \
  template Var activation(Graph<T>&, Var, kernels::Activation);                  \
  template Var prelu(Graph<T>&, Var, Var);                                       \
  template Var film(Graph<T>&, Var, Var, Var);                                   \
  template Var rotary(Graph<T>&, Var, std::size_t);                              \
  template Var attention(Graph<T>&, Var, Var, Var, std::size_t);                 \
  template Var avg_pool(Graph<T>&, Var, std::size_t);                            \
  template Var add(Graph<T>&, Var, Var);                                         \
  template Var scale(Graph<T>&, Var, double);                                    \
  template Var concat_channels(Graph<T>&, Var, Var);                             \
  template Var mse(Graph<T>&, Var, Var);

SEPDIFF_OPS(float)
SEPDIFF_OPS(double)

#undef SEPDIFF_OPS

}  // namespace ops
}  // namespace sepdiff
