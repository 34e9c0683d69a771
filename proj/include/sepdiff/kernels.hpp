#pragma once

#include <cstddef>
#include <vector>

#include "sepdiff/tensor.hpp"

// Forward and backward kernels on (batch, channels, time) tensors. Backward
// functions accumulate (+=) into gradient outputs that the caller has sized;
// a null pointer skips that gradient.
namespace sepdiff::kernels {

// Cross-correlation. weight (out, in, width); bias (1, out, 1) or null.
// out_len = (len + 2 padding - width) / stride + 1.
template <class T>
BasicTensor<T> conv1d_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                              const BasicTensor<T>* bias, std::size_t stride,
                              std::size_t padding);
template <class T>
void conv1d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_y, std::size_t stride,
                     std::size_t padding, BasicTensor<T>* grad_x,
                     BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias);

// Transposed convolution. weight (in, out, width); bias (1, out, 1) or null.
// out_len = (len - 1) stride + width - 2 padding.
template <class T>
BasicTensor<T> conv_transpose1d_forward(const BasicTensor<T>& x,
                                        const BasicTensor<T>& weight,
                                        const BasicTensor<T>* bias,
                                        std::size_t stride, std::size_t padding);
template <class T>
void conv_transpose1d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_y, std::size_t stride,
                               std::size_t padding, BasicTensor<T>* grad_x,
                               BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias);

/// Per-(batch, group) statistics kept from the forward pass.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> rstd;
};

// Group normalization with per-channel affine gamma, beta of shape (1, C, 1).
template <class T>
BasicTensor<T> group_norm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                  const BasicTensor<T>& beta, std::size_t groups,
                                  NormStats* stats, double eps = 1e-5);
template <class T>
void group_norm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         std::size_t groups, const NormStats& stats,
                         const BasicTensor<T>& grad_y, BasicTensor<T>* grad_x,
                         BasicTensor<T>* grad_gamma, BasicTensor<T>* grad_beta);

// Layer normalization over channels at every (batch, time) position.
template <class T>
BasicTensor<T> layer_norm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                  const BasicTensor<T>& beta, NormStats* stats,
                                  double eps = 1e-5);
template <class T>
void layer_norm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const NormStats& stats, const BasicTensor<T>& grad_y,
                         BasicTensor<T>* grad_x, BasicTensor<T>* grad_gamma,
                         BasicTensor<T>* grad_beta);

enum class Activation { Relu, Silu, Gelu };

template <class T>
BasicTensor<T> activation_forward(const BasicTensor<T>& x, Activation kind);
template <class T>
void activation_backward(const BasicTensor<T>& x, Activation kind,
                         const BasicTensor<T>& grad_y, BasicTensor<T>* grad_x);

// PReLU with one learned slope per channel, shape (1, C, 1).
template <class T>
BasicTensor<T> prelu_forward(const BasicTensor<T>& x, const BasicTensor<T>& slope);
template <class T>
void prelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& slope,
                    const BasicTensor<T>& grad_y, BasicTensor<T>* grad_x,
                    BasicTensor<T>* grad_slope);

// FiLM: y = scale * x + shift, with scale and shift of shape (B, C, 1).
template <class T>
BasicTensor<T> film_forward(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                            const BasicTensor<T>& shift);
template <class T>
void film_backward(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                   const BasicTensor<T>& grad_y, BasicTensor<T>* grad_x,
                   BasicTensor<T>* grad_scale, BasicTensor<T>* grad_shift);

// Rotary position embedding: within each head, channel pairs (2i, 2i+1) are
// rotated by angle t * 10000^(-2i / head_dim) at time index t.
template <class T>
BasicTensor<T> rotary_forward(const BasicTensor<T>& x, std::size_t heads);
template <class T>
BasicTensor<T> rotary_backward(const BasicTensor<T>& grad_y, std::size_t heads);

// Scaled dot-product attention over time. q, k, v are (B, C, L) with C split
// into `heads` heads; keys are time positions of k. Softmax probabilities are
// saved for the backward pass.
template <class T>
BasicTensor<T> attention_forward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                 const BasicTensor<T>& v, std::size_t heads,
                                 std::vector<T>* probs);
template <class T>
void attention_backward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                        const BasicTensor<T>& v, std::size_t heads,
                        const std::vector<T>& probs, const BasicTensor<T>& grad_y,
                        BasicTensor<T>* grad_q, BasicTensor<T>* grad_k,
                        BasicTensor<T>* grad_v);

// Non-overlapping average pooling over time by `factor`.
template <class T>
BasicTensor<T> avg_pool_forward(const BasicTensor<T>& x, std::size_t factor);
template <class T>
void avg_pool_backward(const BasicTensor<T>& grad_y, std::size_t factor,
                       BasicTensor<T>* grad_x);

}  // namespace sepdiff::kernels
