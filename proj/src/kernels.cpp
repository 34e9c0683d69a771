#include "sepdiff/kernels.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>

#include "sepdiff/error.hpp"

namespace sepdiff::kernels {

namespace {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<Mat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const Mat<T>>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

void check(bool ok, const std::string& message) {
  if (!ok) fail(ErrorCode::InvalidArgument, message);
}

/// Valid output positions t with 0 <= t*stride + offset < len.
struct Range {
  std::size_t lo, hi;
};
Range valid_range(std::ptrdiff_t offset, std::size_t stride, std::size_t len,
                  std::size_t count) {
  std::ptrdiff_t lo = 0;
  if (offset < 0) lo = (-offset + std::ptrdiff_t(stride) - 1) / std::ptrdiff_t(stride);
  const std::ptrdiff_t last = std::ptrdiff_t(len) - 1 - offset;
  if (last < 0) return {0, 0};
  std::ptrdiff_t hi = last / std::ptrdiff_t(stride) + 1;
  hi = std::min<std::ptrdiff_t>(hi, std::ptrdiff_t(count));
  if (hi < lo) return {0, 0};
  return {std::size_t(lo), std::size_t(hi)};
}

// col[(c * width + k), t] = src[c, t * stride + k - padding], zero outside.
template <class T>
void im2col(const T* src, std::size_t channels, std::size_t len, std::size_t width,
            std::size_t stride, std::size_t padding, std::size_t cols, T* col) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* s = src + c * len;
    for (std::size_t k = 0; k < width; ++k) {
      T* row = col + (c * width + k) * cols;
      const std::ptrdiff_t offset = std::ptrdiff_t(k) - std::ptrdiff_t(padding);
      const Range r = valid_range(offset, stride, len, cols);
      std::fill(row, row + r.lo, T(0));
      if (stride == 1) {
        std::copy(s + (std::ptrdiff_t(r.lo) + offset), s + (std::ptrdiff_t(r.hi) + offset),
                  row + r.lo);
      } else {
        for (std::size_t t = r.lo; t < r.hi; ++t) {
          row[t] = s[std::ptrdiff_t(t * stride) + offset];
        }
      }
      std::fill(row + r.hi, row + cols, T(0));
    }
  }
}

// Adjoint of im2col: dst[c, t * stride + k - padding] += col[(c, k), t].
template <class T>
void col2im(const T* col, std::size_t channels, std::size_t len, std::size_t width,
            std::size_t stride, std::size_t padding, std::size_t cols, T* dst) {
  for (std::size_t c = 0; c < channels; ++c) {
    T* d = dst + c * len;
    for (std::size_t k = 0; k < width; ++k) {
      const T* row = col + (c * width + k) * cols;
      const std::ptrdiff_t offset = std::ptrdiff_t(k) - std::ptrdiff_t(padding);
      const Range r = valid_range(offset, stride, len, cols);
      for (std::size_t t = r.lo; t < r.hi; ++t) {
        d[std::ptrdiff_t(t * stride) + offset] += row[t];
      }
    }
  }
}

template <class T>
void check_affine(const BasicTensor<T>& p, std::size_t channels, const char* what) {
  check(p.shape() == Shape{1, channels, 1},
        std::string(what) + ": expected parameter shape (1, " +
            std::to_string(channels) + ", 1), got " + p.shape().str());
}

}  // namespace

// ---------------------------------------------------------------------------
// conv1d

template <class T>
BasicTensor<T> conv1d_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                              const BasicTensor<T>* bias, std::size_t stride,
                              std::size_t padding) {
  const std::size_t batch = x.batch(), cin = x.channels(), len = x.length();
  const std::size_t cout = weight.batch(), width = weight.length();
  check(weight.channels() == cin,
        "conv1d: input has " + std::to_string(cin) + " channels, weight expects " +
            std::to_string(weight.channels()));
  check(stride >= 1, "conv1d: stride must be positive");
  check(len + 2 * padding >= width, "conv1d: input shorter than kernel");
  if (bias) check_affine(*bias, cout, "conv1d bias");
  const std::size_t out_len = (len + 2 * padding - width) / stride + 1;

  BasicTensor<T> y(Shape{batch, cout, out_len});
  ConstMatMap<T> w(weight.data(), cout, cin * width);
  const bool direct = width == 1 && stride == 1 && padding == 0;
  Mat<T> col;
  if (!direct) col.resize(cin * width, out_len);
  for (std::size_t b = 0; b < batch; ++b) {
    MatMap<T> out(y.item(b), cout, out_len);
    if (direct) {
      out.noalias() = w * ConstMatMap<T>(x.item(b), cin, len);
    } else {
      im2col(x.item(b), cin, len, width, stride, padding, out_len, col.data());
      out.noalias() = w * col;
    }
    if (bias) out.colwise() += Eigen::Map<const Vec<T>>(bias->data(), cout);
  }
  return y;
}

template <class T>
void conv1d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_y, std::size_t stride,
                     std::size_t padding, BasicTensor<T>* grad_x,
                     BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias) {
  const std::size_t batch = x.batch(), cin = x.channels(), len = x.length();
  const std::size_t cout = weight.batch(), width = weight.length();
  const std::size_t out_len = grad_y.length();
  ConstMatMap<T> w(weight.data(), cout, cin * width);
  const bool direct = width == 1 && stride == 1 && padding == 0;
  Mat<T> col;
  if (!direct) col.resize(cin * width, out_len);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMatMap<T> gy(grad_y.item(b), cout, out_len);
    if (grad_weight) {
      MatMap<T> gw(grad_weight->data(), cout, cin * width);
      if (direct) {
        gw.noalias() += gy * ConstMatMap<T>(x.item(b), cin, len).transpose();
      } else {
        im2col(x.item(b), cin, len, width, stride, padding, out_len, col.data());
        gw.noalias() += gy * col.transpose();
      }
    }
    if (grad_bias) {
      Eigen::Map<Vec<T>>(grad_bias->data(), cout) += gy.rowwise().sum();
    }
    if (grad_x) {
      if (direct) {
        MatMap<T>(grad_x->item(b), cin, len).noalias() += w.transpose() * gy;
      } else {
        col.noalias() = w.transpose() * gy;
        col2im(col.data(), cin, len, width, stride, padding, out_len, grad_x->item(b));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// transposed conv1d

template <class T>
BasicTensor<T> conv_transpose1d_forward(const BasicTensor<T>& x,
                                        const BasicTensor<T>& weight,
                                        const BasicTensor<T>* bias,
                                        std::size_t stride, std::size_t padding) {
  const std::size_t batch = x.batch(), cin = x.channels(), len = x.length();
  const std::size_t cout = weight.channels(), width = weight.length();
  check(weight.batch() == cin, "conv_transpose1d: weight/input channel mismatch");
  check(stride >= 1, "conv_transpose1d: stride must be positive");
  check((len - 1) * stride + width > 2 * padding, "conv_transpose1d: padding too large");
  if (bias) check_affine(*bias, cout, "conv_transpose1d bias");
  const std::size_t out_len = (len - 1) * stride + width - 2 * padding;

  BasicTensor<T> y(Shape{batch, cout, out_len});
  ConstMatMap<T> w(weight.data(), cin, cout * width);
  Mat<T> z(cout * width, len);
  for (std::size_t b = 0; b < batch; ++b) {
    z.noalias() = w.transpose() * ConstMatMap<T>(x.item(b), cin, len);
    col2im(z.data(), cout, out_len, width, stride, padding, len, y.item(b));
    if (bias) {
      MatMap<T>(y.item(b), cout, out_len).colwise() +=
          Eigen::Map<const Vec<T>>(bias->data(), cout);
    }
  }
  return y;
}

template <class T>
void conv_transpose1d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_y, std::size_t stride,
                               std::size_t padding, BasicTensor<T>* grad_x,
                               BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias) {
  const std::size_t batch = x.batch(), cin = x.channels(), len = x.length();
  const std::size_t cout = weight.channels(), width = weight.length();
  const std::size_t out_len = grad_y.length();
  ConstMatMap<T> w(weight.data(), cin, cout * width);
  Mat<T> gz(cout * width, len);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(grad_y.item(b), cout, out_len, width, stride, padding, len, gz.data());
    if (grad_x) MatMap<T>(grad_x->item(b), cin, len).noalias() += w * gz;
    if (grad_weight) {
      MatMap<T>(grad_weight->data(), cin, cout * width).noalias() +=
          ConstMatMap<T>(x.item(b), cin, len) * gz.transpose();
    }
    if (grad_bias) {
      Eigen::Map<Vec<T>>(grad_bias->data(), cout) +=
          ConstMatMap<T>(grad_y.item(b), cout, out_len).rowwise().sum();
    }
  }
}

// ---------------------------------------------------------------------------
// normalization

template <class T>
BasicTensor<T> group_norm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                  const BasicTensor<T>& beta, std::size_t groups,
                                  NormStats* stats, double eps) {
  const std::size_t batch = x.batch(), ch = x.channels(), len = x.length();
  check(groups >= 1 && ch % groups == 0,
        "group_norm: " + std::to_string(groups) + " groups do not divide " +
            std::to_string(ch) + " channels");
  check_affine(gamma, ch, "group_norm gamma");
  check_affine(beta, ch, "group_norm beta");
  const std::size_t per = ch / groups;
  const std::size_t n = per * len;
  BasicTensor<T> y(x.shape());
  if (stats) {
    stats->mean.assign(batch * groups, 0.0);
    stats->rstd.assign(batch * groups, 0.0);
  }
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      const T* src = x.row(b, g * per);
      double sum = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += double(src[i]);
      const double mean = sum / double(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = double(src[i]) - mean;
        sq += d * d;
      }
      const double rstd = 1.0 / std::sqrt(sq / double(n) + eps);
      if (stats) {
        stats->mean[b * groups + g] = mean;
        stats->rstd[b * groups + g] = rstd;
      }
      for (std::size_t c = 0; c < per; ++c) {
        const std::size_t channel = g * per + c;
        const double scale = double(gamma.data()[channel]) * rstd;
        const double shift = double(beta.data()[channel]) - mean * scale;
        const T* s = x.row(b, channel);
        T* d = y.row(b, channel);
        for (std::size_t t = 0; t < len; ++t) d[t] = T(double(s[t]) * scale + shift);
      }
    }
  }
  return y;
}

template <class T>
void group_norm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         std::size_t groups, const NormStats& stats,
                         const BasicTensor<T>& grad_y, BasicTensor<T>* grad_x,
                         BasicTensor<T>* grad_gamma, BasicTensor<T>* grad_beta) {
  const std::size_t batch = x.batch(), ch = x.channels(), len = x.length();
  const std::size_t per = ch / groups;
  const double n = double(per * len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      const double mean = stats.mean[b * groups + g];
      const double rstd = stats.rstd[b * groups + g];
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t c = 0; c < per; ++c) {
        const std::size_t channel = g * per + c;
        const double gm = double(gamma.data()[channel]);
        const T* xs = x.row(b, channel);
        const T* gy = grad_y.row(b, channel);
        double dg = 0.0, db = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
          const double xhat = (double(xs[t]) - mean) * rstd;
          const double dy = double(gy[t]);
          dg += dy * xhat;
          db += dy;
          m1 += dy * gm;
          m2 += dy * gm * xhat;
        }
        if (grad_gamma) grad_gamma->data()[channel] += T(dg);
        if (grad_beta) grad_beta->data()[channel] += T(db);
      }
      if (!grad_x) continue;
      m1 /= n;
      m2 /= n;
      for (std::size_t c = 0; c < per; ++c) {
        const std::size_t channel = g * per + c;
        const double gm = double(gamma.data()[channel]);
        const T* xs = x.row(b, channel);
        const T* gy = grad_y.row(b, channel);
        T* gx = grad_x->row(b, channel);
        for (std::size_t t = 0; t < len; ++t) {
          const double xhat = (double(xs[t]) - mean) * rstd;
          gx[t] += T(rstd * (double(gy[t]) * gm - m1 - xhat * m2));
        }
      }
    }
  }
}

template <class T>
BasicTensor<T> layer_norm_forward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                  const BasicTensor<T>& beta, NormStats* stats,
                                  double eps) {
  const std::size_t batch = x.batch(), ch = x.channels(), len = x.length();
  check_affine(gamma, ch, "layer_norm gamma");
  check_affine(beta, ch, "layer_norm beta");
  BasicTensor<T> y(x.shape());
  std::vector<double> mean(len), sq(len);
  if (stats) {
    stats->mean.assign(batch * len, 0.0);
    stats->rstd.assign(batch * len, 0.0);
  }
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(mean.begin(), mean.end(), 0.0);
    std::fill(sq.begin(), sq.end(), 0.0);
    for (std::size_t c = 0; c < ch; ++c) {
      const T* s = x.row(b, c);
      for (std::size_t t = 0; t < len; ++t) mean[t] += double(s[t]);
    }
    for (auto& m : mean) m /= double(ch);
    for (std::size_t c = 0; c < ch; ++c) {
      const T* s = x.row(b, c);
      for (std::size_t t = 0; t < len; ++t) {
        const double d = double(s[t]) - mean[t];
        sq[t] += d * d;
      }
    }
    for (auto& v : sq) v = 1.0 / std::sqrt(v / double(ch) + eps);
    if (stats) {
      std::copy(mean.begin(), mean.end(), stats->mean.begin() + b * len);
      std::copy(sq.begin(), sq.end(), stats->rstd.begin() + b * len);
    }
    for (std::size_t c = 0; c < ch; ++c) {
      const double gm = double(gamma.data()[c]), bt = double(beta.data()[c]);
      const T* s = x.row(b, c);
      T* d = y.row(b, c);
      for (std::size_t t = 0; t < len; ++t) {
        d[t] = T((double(s[t]) - mean[t]) * sq[t] * gm + bt);
      }
    }
  }
  return y;
}

template <class T>
void layer_norm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const NormStats& stats, const BasicTensor<T>& grad_y,
                         BasicTensor<T>* grad_x, BasicTensor<T>* grad_gamma,
                         BasicTensor<T>* grad_beta) {
  const std::size_t batch = x.batch(), ch = x.channels(), len = x.length();
  std::vector<double> m1(len), m2(len);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* mean = stats.mean.data() + b * len;
    const double* rstd = stats.rstd.data() + b * len;
    std::fill(m1.begin(), m1.end(), 0.0);
    std::fill(m2.begin(), m2.end(), 0.0);
    for (std::size_t c = 0; c < ch; ++c) {
      const double gm = double(gamma.data()[c]);
      const T* xs = x.row(b, c);
      const T* gy = grad_y.row(b, c);
      double dg = 0.0, db = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double xhat = (double(xs[t]) - mean[t]) * rstd[t];
        const double dy = double(gy[t]);
        dg += dy * xhat;
        db += dy;
        m1[t] += dy * gm;
        m2[t] += dy * gm * xhat;
      }
      if (grad_gamma) grad_gamma->data()[c] += T(dg);
      if (grad_beta) grad_beta->data()[c] += T(db);
    }
    if (!grad_x) continue;
    for (std::size_t c = 0; c < ch; ++c) {
      const double gm = double(gamma.data()[c]);
      const T* xs = x.row(b, c);
      const T* gy = grad_y.row(b, c);
      T* gx = grad_x->row(b, c);
      for (std::size_t t = 0; t < len; ++t) {
        const double xhat = (double(xs[t]) - mean[t]) * rstd[t];
        gx[t] += T(rstd[t] * (double(gy[t]) * gm - m1[t] / double(ch) -
                              xhat * m2[t] / double(ch)));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// pointwise

template <class T>
BasicTensor<T> activation_forward(const BasicTensor<T>& x, Activation kind) {
  BasicTensor<T> y(x.shape());
  const T* s = x.data();
  T* d = y.data();
  const std::size_t n = x.size();
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i) d[i] = s[i] > T(0) ? s[i] : T(0);
      break;
    case Activation::Silu:
      for (std::size_t i = 0; i < n; ++i) d[i] = s[i] / (T(1) + std::exp(-s[i]));
      break;
    case Activation::Gelu:
      for (std::size_t i = 0; i < n; ++i) {
        d[i] = T(0.5) * s[i] * (T(1) + std::erf(s[i] * T(std::numbers::sqrt2 / 2)));
      }
      break;
  }
  return y;
}

template <class T>
void activation_backward(const BasicTensor<T>& x, Activation kind,
                         const BasicTensor<T>& grad_y, BasicTensor<T>* grad_x) {
  const T* s = x.data();
  const T* gy = grad_y.data();
  T* gx = grad_x->data();
  const std::size_t n = x.size();
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i) gx[i] += s[i] > T(0) ? gy[i] : T(0);
      break;
    case Activation::Silu:
      for (std::size_t i = 0; i < n; ++i) {
        const T sig = T(1) / (T(1) + std::exp(-s[i]));
        gx[i] += gy[i] * sig * (T(1) + s[i] * (T(1) - sig));
      }
      break;
    case Activation::Gelu: {
      const T inv_sqrt2pi = T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
      for (std::size_t i = 0; i < n; ++i) {
        const T cdf = T(0.5) * (T(1) + std::erf(s[i] * T(std::numbers::sqrt2 / 2)));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * s[i] * s[i]);
        gx[i] += gy[i] * (cdf + s[i] * pdf);
      }
      break;
    }
  }
}

template <class T>
BasicTensor<T> prelu_forward(const BasicTensor<T>& x, const BasicTensor<T>& slope) {
  check_affine(slope, x.channels(), "prelu slope");
  BasicTensor<T> y(x.shape());
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const T a = slope.data()[c];
      const T* s = x.row(b, c);
      T* d = y.row(b, c);
      for (std::size_t t = 0; t < x.length(); ++t) d[t] = s[t] > T(0) ? s[t] : a * s[t];
    }
  }
  return y;
}

template <class T>
void prelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& slope,
                    const BasicTensor<T>& grad_y, BasicTensor<T>* grad_x,
                    BasicTensor<T>* grad_slope) {
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const T a = slope.data()[c];
      const T* s = x.row(b, c);
      const T* gy = grad_y.row(b, c);
      double ga = 0.0;
      for (std::size_t t = 0; t < x.length(); ++t) {
        if (s[t] > T(0)) {
          if (grad_x) grad_x->row(b, c)[t] += gy[t];
        } else {
          if (grad_x) grad_x->row(b, c)[t] += a * gy[t];
          ga += double(gy[t]) * double(s[t]);
        }
      }
      if (grad_slope) grad_slope->data()[c] += T(ga);
    }
  }
}

template <class T>
BasicTensor<T> film_forward(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                            const BasicTensor<T>& shift) {
  const Shape mod{x.batch(), x.channels(), 1};
  check(scale.shape() == mod && shift.shape() == mod,
        "film: scale/shift must be " + mod.str());
  BasicTensor<T> y(x.shape());
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const T a = scale(b, c, 0), s0 = shift(b, c, 0);
      const T* s = x.row(b, c);
      T* d = y.row(b, c);
      for (std::size_t t = 0; t < x.length(); ++t) d[t] = a * s[t] + s0;
    }
  }
  return y;
}

template <class T>
void film_backward(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                   const BasicTensor<T>& grad_y, BasicTensor<T>* grad_x,
                   BasicTensor<T>* grad_scale, BasicTensor<T>* grad_shift) {
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const T a = scale(b, c, 0);
      const T* s = x.row(b, c);
      const T* gy = grad_y.row(b, c);
      double ga = 0.0, gs = 0.0;
      for (std::size_t t = 0; t < x.length(); ++t) {
        ga += double(gy[t]) * double(s[t]);
        gs += double(gy[t]);
      }
      if (grad_x) {
        T* gx = grad_x->row(b, c);
        for (std::size_t t = 0; t < x.length(); ++t) gx[t] += a * gy[t];
      }
      if (grad_scale) (*grad_scale)(b, c, 0) += T(ga);
      if (grad_shift) (*grad_shift)(b, c, 0) += T(gs);
    }
  }
}

// ---------------------------------------------------------------------------
// rotary + attention

namespace {

template <class T>
BasicTensor<T> rotate(const BasicTensor<T>& x, std::size_t heads, double sign) {
  const std::size_t ch = x.channels(), len = x.length();
  check(heads >= 1 && ch % heads == 0, "rotary: heads must divide channels");
  const std::size_t dim = ch / heads;
  check(dim % 2 == 0, "rotary: head dimension must be even");
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * double(i) / double(dim));
    for (std::size_t t = 0; t < len; ++t) {
      const double angle = double(t) * freq;
      const T cs = T(std::cos(angle)), sn = T(sign * std::sin(angle));
      for (std::size_t b = 0; b < x.batch(); ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * dim + 2 * i;
          const T x0 = x(b, c0, t), x1 = x(b, c0 + 1, t);
          y(b, c0, t) = x0 * cs - x1 * sn;
          y(b, c0 + 1, t) = x0 * sn + x1 * cs;
        }
      }
    }
  }
  return y;
}

}  // namespace

template <class T>
BasicTensor<T> rotary_forward(const BasicTensor<T>& x, std::size_t heads) {
  return rotate(x, heads, 1.0);
}

template <class T>
BasicTensor<T> rotary_backward(const BasicTensor<T>& grad_y, std::size_t heads) {
  // The rotation is orthogonal; its adjoint is the inverse rotation.
  return rotate(grad_y, heads, -1.0);
}

template <class T>
BasicTensor<T> attention_forward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                 const BasicTensor<T>& v, std::size_t heads,
                                 std::vector<T>* probs) {
  const std::size_t batch = q.batch(), ch = q.channels();
  const std::size_t lq = q.length(), lk = k.length();
  check(k.shape() == v.shape() && k.batch() == batch && k.channels() == ch,
        "attention: q/k/v shape mismatch");
  check(heads >= 1 && ch % heads == 0, "attention: heads must divide channels");
  const std::size_t dim = ch / heads;
  const T scale = T(1.0 / std::sqrt(double(dim)));
  BasicTensor<T> y(q.shape());
  if (probs) probs->assign(batch * heads * lq * lk, T(0));
  Mat<T> s(lq, lk);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      ConstMatMap<T> qh(q.row(b, h * dim), dim, lq);
      ConstMatMap<T> kh(k.row(b, h * dim), dim, lk);
      ConstMatMap<T> vh(v.row(b, h * dim), dim, lk);
      s.noalias() = qh.transpose() * kh;
      s *= scale;
      for (std::size_t i = 0; i < lq; ++i) {
        auto r = s.row(Eigen::Index(i));
        const T m = r.maxCoeff();
        r = (r.array() - m).exp().matrix();
        r /= r.sum();
      }
      MatMap<T>(y.row(b, h * dim), dim, lq).noalias() = vh * s.transpose();
      if (probs) {
        std::copy(s.data(), s.data() + lq * lk,
                  probs->data() + (b * heads + h) * lq * lk);
      }
    }
  }
  return y;
}

template <class T>
void attention_backward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                        const BasicTensor<T>& v, std::size_t heads,
                        const std::vector<T>& probs, const BasicTensor<T>& grad_y,
                        BasicTensor<T>* grad_q, BasicTensor<T>* grad_k,
                        BasicTensor<T>* grad_v) {
  const std::size_t batch = q.batch(), ch = q.channels();
  const std::size_t lq = q.length(), lk = k.length();
  const std::size_t dim = ch / heads;
  const T scale = T(1.0 / std::sqrt(double(dim)));
  Mat<T> gp(lq, lk);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      ConstMatMap<T> p(probs.data() + (b * heads + h) * lq * lk, lq, lk);
      ConstMatMap<T> gy(grad_y.row(b, h * dim), dim, lq);
      ConstMatMap<T> qh(q.row(b, h * dim), dim, lq);
      ConstMatMap<T> kh(k.row(b, h * dim), dim, lk);
      ConstMatMap<T> vh(v.row(b, h * dim), dim, lk);
      if (grad_v) MatMap<T>(grad_v->row(b, h * dim), dim, lk).noalias() += gy * p;
      gp.noalias() = gy.transpose() * vh;
      // Softmax Jacobian: gS = P .* (gP - rowsum(gP .* P)).
      const Vec<T> dots = (gp.array() * p.array()).rowwise().sum();
      gp = (p.array() * (gp.colwise() - dots).array()).matrix();
      if (grad_q) {
        MatMap<T>(grad_q->row(b, h * dim), dim, lq).noalias() +=
            scale * (kh * gp.transpose());
      }
      if (grad_k) {
        MatMap<T>(grad_k->row(b, h * dim), dim, lk).noalias() += scale * (qh * gp);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// pooling

template <class T>
BasicTensor<T> avg_pool_forward(const BasicTensor<T>& x, std::size_t factor) {
  check(factor >= 1 && x.length() % factor == 0,
        "avg_pool: length " + std::to_string(x.length()) +
            " not divisible by " + std::to_string(factor));
  const std::size_t out_len = x.length() / factor;
  BasicTensor<T> y(Shape{x.batch(), x.channels(), out_len});
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const T* s = x.row(b, c);
      T* d = y.row(b, c);
      for (std::size_t t = 0; t < out_len; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < factor; ++j) acc += double(s[t * factor + j]);
        d[t] = T(acc / double(factor));
      }
    }
  }
  return y;
}

template <class T>
void avg_pool_backward(const BasicTensor<T>& grad_y, std::size_t factor,
                       BasicTensor<T>* grad_x) {
  const T inv = T(1.0 / double(factor));
  for (std::size_t b = 0; b < grad_y.batch(); ++b) {
    for (std::size_t c = 0; c < grad_y.channels(); ++c) {
      const T* gy = grad_y.row(b, c);
      T* gx = grad_x->row(b, c);
      for (std::size_t t = 0; t < grad_y.length(); ++t) {
        for (std::size_t j = 0; j < factor; ++j) gx[t * factor + j] += gy[t] * inv;
      }
    }
  }
}

#define SEPDIFF_INSTANTIATE(T)                                                    \
  template BasicTensor<T> conv1d_forward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                         const BasicTensor<T>*, std::size_t,      \
                                         std::size_t);                            \
  template void conv1d_backward(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                const BasicTensor<T>&, std::size_t, std::size_t,  \
                                BasicTensor<T>*, BasicTensor<T>*, BasicTensor<T>*); \
  template BasicTensor<T> conv_transpose1d_forward(                               \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>*,        \
      std::size_t, std::size_t);                                                  \
  template void conv_transpose1d_backward(                                        \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,        \
      std::size_t, std::size_t, BasicTensor<T>*, BasicTensor<T>*, BasicTensor<T>*); \
  template BasicTensor<T> group_norm_forward(const BasicTensor<T>&,               \
                                             const BasicTensor<T>&,               \
                                             const BasicTensor<T>&, std::size_t,  \
                                             NormStats*, double);                 \
  template void group_norm_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                    std::size_t, const NormStats&,                \
                                    const BasicTensor<T>&, BasicTensor<T>*,       \
                                    BasicTensor<T>*, BasicTensor<T>*);            \
  template BasicTensor<T> layer_norm_forward(const BasicTensor<T>&,               \
                                             const BasicTensor<T>&,               \
                                             const BasicTensor<T>&, NormStats*,   \
                                             double);                             \
  template void layer_norm_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                    const NormStats&, const BasicTensor<T>&,      \
                                    BasicTensor<T>*, BasicTensor<T>*,             \
                                    BasicTensor<T>*);                             \
  template BasicTensor<T> activation_forward(const BasicTensor<T>&, Activation);  \
  template void activation_backward(const BasicTensor<T>&, Activation,            \
                                    const BasicTensor<T>&, BasicTensor<T>*);      \
  template BasicTensor<T> prelu_forward(const BasicTensor<T>&, const BasicTensor<T>&); \
  template void prelu_backward(const BasicTensor<T>&, const BasicTensor<T>&,      \
                               const BasicTensor<T>&, BasicTensor<T>*,            \
                               BasicTensor<T>*);                                  \
  template BasicTensor<T> film_forward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                       const BasicTensor<T>&);                    \
  template void film_backward(const BasicTensor<T>&, const BasicTensor<T>&,       \
                              const BasicTensor<T>&, BasicTensor<T>*,             \
                              BasicTensor<T>*, BasicTensor<T>*);                  \
  template BasicTensor<T> rotary_forward(const BasicTensor<T>&, std::size_t);     \
  template BasicTensor<T> rotary_backward(const BasicTensor<T>&, std::size_t);    \
  template BasicTensor<T> attention_forward(const BasicTensor<T>&,                \
                                            const BasicTensor<T>&,                \
                                            const BasicTensor<T>&, std::size_t,   \
                                            std::vector<T>*);                     \
  template void attention_backward(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                   const BasicTensor<T>&, std::size_t,            \
                                   const std::vector<T>&, const BasicTensor<T>&,  \
                                   BasicTensor<T>*, BasicTensor<T>*,              \
                                   BasicTensor<T>*);                              \
  template BasicTensor<T> avg_pool_forward(const BasicTensor<T>&, std::size_t);   \
  template void avg_pool_backward(const BasicTensor<T>&, std::size_t, BasicTensor<T>*);

SEPDIFF_INSTANTIATE(float)
SEPDIFF_INSTANTIATE(double)

#undef SEPDIFF_INSTANTIATE

}  // namespace sepdiff::kernels
