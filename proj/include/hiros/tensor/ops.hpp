#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hiros/error.hpp"
#include "hiros/tensor/graph.hpp"
#include "hiros/tensor/tensor.hpp"

namespace hiros::tensor {

namespace detail {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

inline void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + arg + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_str(t.shape()));
  }
}

inline void require_axis(bool ok, const char* op, const std::string& what) {
  if (!ok) throw DimensionError(std::string(op) + ": " + what);
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

struct Conv3dOptions {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
};

namespace detail {

struct ConvGeometry {
  std::size_t n, cin, t, h, w;
  std::size_t cout, kt, kh, kw;
  std::size_t ot, oh, ow;
  Conv3dOptions opt;

  std::size_t patch() const { return cin * kt * kh * kw; }
  std::size_t positions() const { return ot * oh * ow; }
  std::size_t in_sample() const { return cin * t * h * w; }
};

inline ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                                  const Conv3dOptions& opt) {
  constexpr const char* op = "conv3d";
  require_rank(input, 5, op, "input");
  require_rank(kernel, 5, op, "kernel");
  require_rank(bias, 1, op, "bias");
  ConvGeometry g{};
  g.opt = opt;
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.t = input.dim(2);
  g.h = input.dim(3);
  g.w = input.dim(4);
  g.cout = kernel.dim(0);
  g.kt = kernel.dim(2);
  g.kh = kernel.dim(3);
  g.kw = kernel.dim(4);
  require_axis(kernel.dim(1) == g.cin, op,
               "kernel input-channel axis (1) is " + std::to_string(kernel.dim(1)) +
                   " but input channel axis (1) is " + std::to_string(g.cin));
  require_axis(bias.dim(0) == g.cout, op,
               "bias length " + std::to_string(bias.dim(0)) + " does not match kernel axis 0 (" +
                   std::to_string(g.cout) + ")");
  static constexpr const char* names[3] = {"time", "height", "width"};
  const std::array<std::size_t, 3> in{g.t, g.h, g.w};
  const std::array<std::size_t, 3> k{g.kt, g.kh, g.kw};
  std::array<std::size_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    require_axis(opt.stride[a] >= 1, op, std::string(names[a]) + " stride must be >= 1");
    const std::size_t padded = in[a] + 2 * opt.padding[a];
    require_axis(k[a] <= padded, op,
                 std::string(names[a]) + " axis: kernel " + std::to_string(k[a]) +
                     " exceeds padded input " + std::to_string(padded));
    out[a] = (padded - k[a]) / opt.stride[a] + 1;
  }
  g.ot = out[0];
  g.oh = out[1];
  g.ow = out[2];
  return g;
}

// Output columns [lo, hi) whose input index ow*stride + k - pad lies inside [0, len).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out_len, std::size_t stride,
                                                       std::size_t k, std::size_t pad,
                                                       std::size_t len) {
  std::size_t lo = 0;
  while (lo < out_len && lo * stride + k < pad) ++lo;
  std::size_t hi = lo;
  while (hi < out_len && hi * stride + k < pad + len) ++hi;
  return {lo, hi};
}

// Unfolds one sample into a (patch x positions) matrix, zero outside the input.
inline void im2col(const ConvGeometry& g, const double* x, double* col) {
  const auto [st, sh, sw] = g.opt.stride;
  const auto [pt, ph, pw] = g.opt.padding;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t a = 0; a < g.kt; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t c = 0; c < g.kw; ++c, ++row) {
          double* out = col + row * g.positions();
          const auto [lo, hi] = valid_range(g.ow, sw, c, pw, g.w);
          for (std::size_t ot = 0; ot < g.ot; ++ot) {
            const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * st + a) - static_cast<std::ptrdiff_t>(pt);
            const bool t_ok = it >= 0 && it < static_cast<std::ptrdiff_t>(g.t);
            for (std::size_t oh = 0; oh < g.oh; ++oh, out += g.ow) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * sh + b) - static_cast<std::ptrdiff_t>(ph);
              if (!t_ok || ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
                std::fill_n(out, g.ow, 0.0);
                continue;
              }
              const double* src = x + ((ci * g.t + static_cast<std::size_t>(it)) * g.h +
                                       static_cast<std::size_t>(ih)) * g.w;
              std::fill_n(out, lo, 0.0);
              if (sw == 1) {
                std::copy_n(src + lo + c - pw, hi - lo, out + lo);
              } else {
                for (std::size_t ow = lo; ow < hi; ++ow) out[ow] = src[ow * sw + c - pw];
              }
              std::fill(out + hi, out + g.ow, 0.0);
            }
          }
        }
}

// Adjoint of im2col: scatters-and-adds a column matrix back onto a sample.
inline void col2im(const ConvGeometry& g, const double* col, double* dx) {
  const auto [st, sh, sw] = g.opt.stride;
  const auto [pt, ph, pw] = g.opt.padding;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t a = 0; a < g.kt; ++a)
      for (std::size_t b = 0; b < g.kh; ++b)
        for (std::size_t c = 0; c < g.kw; ++c, ++row) {
          const double* in = col + row * g.positions();
          const auto [lo, hi] = valid_range(g.ow, sw, c, pw, g.w);
          for (std::size_t ot = 0; ot < g.ot; ++ot) {
            const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * st + a) - static_cast<std::ptrdiff_t>(pt);
            const bool t_ok = it >= 0 && it < static_cast<std::ptrdiff_t>(g.t);
            for (std::size_t oh = 0; oh < g.oh; ++oh, in += g.ow) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * sh + b) - static_cast<std::ptrdiff_t>(ph);
              if (!t_ok || ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
              double* dst = dx + ((ci * g.t + static_cast<std::size_t>(it)) * g.h +
                                  static_cast<std::size_t>(ih)) * g.w;
              for (std::size_t ow = lo; ow < hi; ++ow) dst[ow * sw + c - pw] += in[ow];
            }
          }
        }
}

}  // namespace detail

// 3-D convolution (cross-correlation) over [N, C_in, T, H, W] with zero padding.
inline Var conv3d(Graph& graph, Var input, Var kernel, Var bias, Conv3dOptions opt = {}) {
  const Tensor& x = graph.value(input);
  const Tensor& k = graph.value(kernel);
  const Tensor& b = graph.value(bias);
  const detail::ConvGeometry g = detail::conv_geometry(x, k, b, opt);

  Tensor y({g.n, g.cout, g.ot, g.oh, g.ow});
  std::vector<double> col(g.patch() * g.positions());
  const detail::CMapRM w(k.raw(), g.cout, g.patch());
  const detail::CMapRM colm(col.data(), g.patch(), g.positions());
  for (std::size_t n = 0; n < g.n; ++n) {
    detail::im2col(g, x.raw() + n * g.in_sample(), col.data());
    detail::MapRM out(y.raw() + n * g.cout * g.positions(), g.cout, g.positions());
    out.noalias() = w * colm;
    for (std::size_t co = 0; co < g.cout; ++co) out.row(co).array() += b[co];
  }

  const bool rg = graph.requires_grad(input) || graph.requires_grad(kernel) || graph.requires_grad(bias);
  const std::size_t col_size = col.size();
  Var self{graph.size()};
  return graph.record(std::move(y), rg, [=](Graph& gr) {
    const Tensor& kv = gr.value(kernel);
    const Tensor& dy = gr.grad(self);
    const bool need_x = gr.requires_grad(input);
    const bool need_k = gr.requires_grad(kernel);
    const bool need_b = gr.requires_grad(bias);
    std::vector<double> colv(need_k ? col_size : 0);
    std::vector<double> dcol(need_x ? col_size : 0);
    const detail::CMapRM wk(kv.raw(), g.cout, g.patch());
    for (std::size_t n = 0; n < g.n; ++n) {
      const detail::CMapRM dyn(dy.raw() + n * g.cout * g.positions(), g.cout, g.positions());
      if (need_k) {
        detail::im2col(g, gr.value(input).raw() + n * g.in_sample(), colv.data());
        const detail::CMapRM cm(colv.data(), g.patch(), g.positions());
        detail::MapRM dk(gr.grad(kernel).raw(), g.cout, g.patch());
        dk.noalias() += dyn * cm.transpose();
      }
      if (need_b) {
        Tensor& db = gr.grad(bias);
        for (std::size_t co = 0; co < g.cout; ++co) db[co] += dyn.row(co).sum();
      }
      if (need_x) {
        detail::MapRM dc(dcol.data(), g.patch(), g.positions());
        dc.noalias() = wk.transpose() * dyn;
        detail::col2im(g, dcol.data(), gr.grad(input).raw() + n * g.in_sample());
      }
    }
  });
}

// Non-overlapping 3-D max pooling over the T, H, W axes of [N, C, T, H, W].
// Gradient is routed to the first (lowest flat index) maximum of each window.
inline Var maxpool3d(Graph& graph, Var input, std::array<std::size_t, 3> window) {
  constexpr const char* op = "maxpool3d";
  const Tensor& x = graph.value(input);
  detail::require_rank(x, 5, op, "input");
  static constexpr const char* names[3] = {"time", "height", "width"};
  for (int a = 0; a < 3; ++a) {
    detail::require_axis(window[a] >= 1 && x.dim(2 + a) % window[a] == 0, op,
                         std::string(names[a]) + " axis length " + std::to_string(x.dim(2 + a)) +
                             " is not divisible by window " + std::to_string(window[a]));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  const auto [pt, ph, pw] = window;
  const std::size_t ot = t / pt, oh = h / ph, ow = w / pw;
  Tensor y({n, c, ot, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * t * h * w;
    for (std::size_t a = 0; a < ot; ++a)
      for (std::size_t b = 0; b < oh; ++b)
        for (std::size_t d = 0; d < ow; ++d, ++o) {
          std::size_t best = base + ((a * pt) * h + b * ph) * w + d * pw;
          double best_v = x[best];
          for (std::size_t i = 0; i < pt; ++i)
            for (std::size_t j = 0; j < ph; ++j)
              for (std::size_t k = 0; k < pw; ++k) {
                const std::size_t idx = base + ((a * pt + i) * h + b * ph + j) * w + d * pw + k;
                if (x[idx] > best_v) {
                  best_v = x[idx];
                  best = idx;
                }
              }
          y[o] = best_v;
          (*argmax)[o] = best;
        }
  }
  Var self{graph.size()};
  return graph.record(std::move(y), graph.requires_grad(input), [=](Graph& gr) {
    const Tensor& dy = gr.grad(self);
    Tensor& dx = gr.grad(input);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[(*argmax)[i]] += dy[i];
  });
}

inline Var relu(Graph& graph, Var input) {
  Tensor y = graph.value(input);
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  Var self{graph.size()};
  return graph.record(std::move(y), graph.requires_grad(input), [=](Graph& gr) {
    const Tensor& x = gr.value(input);
    const Tensor& dy = gr.grad(self);
    Tensor& dx = gr.grad(input);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) dx[i] += dy[i];
  });
}

// Slice time step t of [N, C, T, H, W] and flatten it to [N, C*H*W] (c, h, w order).
inline Var time_slice(Graph& graph, Var input, std::size_t t) {
  const Tensor& x = graph.value(input);
  detail::require_rank(x, 5, "time_slice", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), tt = x.dim(2), hw = x.dim(3) * x.dim(4);
  if (t >= tt) throw IndexError("time_slice: step " + std::to_string(t) + " out of range");
  Tensor y({n, c * hw});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ci = 0; ci < c; ++ci)
      std::copy_n(x.raw() + ((i * c + ci) * tt + t) * hw, hw, y.raw() + (i * c + ci) * hw);
  Var self{graph.size()};
  return graph.record(std::move(y), graph.requires_grad(input), [=](Graph& gr) {
    const Tensor& dy = gr.grad(self);
    Tensor& dx = gr.grad(input);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double* src = dy.raw() + (i * c + ci) * hw;
        double* dst = dx.raw() + ((i * c + ci) * tt + t) * hw;
        for (std::size_t j = 0; j < hw; ++j) dst[j] += src[j];
      }
  });
}

// y = x W + b for x [N, D], W [D, K], b [K].
inline Var affine(Graph& graph, Var input, Var weight, Var bias) {
  constexpr const char* op = "affine";
  const Tensor& x = graph.value(input);
  const Tensor& w = graph.value(weight);
  const Tensor& b = graph.value(bias);
  detail::require_rank(x, 2, op, "x");
  detail::require_rank(w, 2, op, "W");
  detail::require_rank(b, 1, op, "b");
  const std::size_t n = x.dim(0), d = x.dim(1), k = w.dim(1);
  detail::require_axis(w.dim(0) == d, op,
                       "x axis 1 (" + std::to_string(d) + ") does not match W axis 0 (" +
                           std::to_string(w.dim(0)) + ")");
  detail::require_axis(b.dim(0) == k, op,
                       "b axis 0 (" + std::to_string(b.dim(0)) + ") does not match W axis 1 (" +
                           std::to_string(k) + ")");
  Tensor y({n, k});
  detail::MapRM ym(y.raw(), n, k);
  ym.noalias() = detail::CMapRM(x.raw(), n, d) * detail::CMapRM(w.raw(), d, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) y[i * k + j] += b[j];
  const bool rg = graph.requires_grad(input) || graph.requires_grad(weight) || graph.requires_grad(bias);
  Var self{graph.size()};
  return graph.record(std::move(y), rg, [=](Graph& gr) {
    const detail::CMapRM dy(gr.grad(self).raw(), n, k);
    if (gr.requires_grad(input)) {
      detail::MapRM(gr.grad(input).raw(), n, d).noalias() +=
          dy * detail::CMapRM(gr.value(weight).raw(), d, k).transpose();
    }
    if (gr.requires_grad(weight)) {
      detail::MapRM(gr.grad(weight).raw(), d, k).noalias() +=
          detail::CMapRM(gr.value(input).raw(), n, d).transpose() * dy;
    }
    if (gr.requires_grad(bias)) {
      Tensor& db = gr.grad(bias);
      for (std::size_t j = 0; j < k; ++j) db[j] += dy.col(j).sum();
    }
  });
}

// Row-wise softmax of [N, K], max-subtracted.
inline Var softmax(Graph& graph, Var logits) {
  const Tensor& z = graph.value(logits);
  detail::require_rank(z, 2, "softmax", "logits");
  const std::size_t n = z.dim(0), k = z.dim(1);
  Tensor p({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.raw() + i * k;
    double* out = p.raw() + i * k;
    const double m = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (out[j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < k; ++j) out[j] /= s;
  }
  Var self{graph.size()};
  return graph.record(std::move(p), graph.requires_grad(logits), [=](Graph& gr) {
    const Tensor& pv = gr.value(self);
    const Tensor& dp = gr.grad(self);
    Tensor& dz = gr.grad(logits);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += dp[i * k + j] * pv[i * k + j];
      for (std::size_t j = 0; j < k; ++j) dz[i * k + j] += pv[i * k + j] * (dp[i * k + j] - dot);
    }
  });
}

inline constexpr double kLogClamp = 1e-12;

// Mean negative log-likelihood of the labelled class; probabilities are
// clamped below at 1e-12 before the log. Returns a [1] tensor.
inline Var cross_entropy(Graph& graph, Var probs, std::span<const int> labels) {
  const Tensor& p = graph.value(probs);
  detail::require_rank(p, 2, "cross_entropy", "probs");
  const std::size_t n = p.dim(0), k = p.dim(1);
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  std::vector<int> lab(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= k) {
      throw IndexError("cross_entropy: label " + std::to_string(lab[i]) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    loss -= std::log(std::max(p[i * k + lab[i]], kLogClamp));
  }
  loss /= static_cast<double>(n);
  Var self{graph.size()};
  return graph.record(Tensor::scalar(loss), graph.requires_grad(probs), [=](Graph& gr) {
    const Tensor& pv = gr.value(probs);
    const double g = gr.grad(self)[0] / static_cast<double>(n);
    Tensor& dp = gr.grad(probs);
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = pv[i * k + lab[i]];
      if (pi > kLogClamp) dp[i * k + lab[i]] -= g / pi;
    }
  });
}

struct LstmWeights {
  Var input_weight;      // [D, 4*Hd], gate blocks ordered input, forget, cell, output
  Var recurrent_weight;  // [Hd, 4*Hd]
  Var bias;              // [4*Hd]
};

struct LstmState {
  Var h;
  Var c;
};

// One LSTM step for a batch: x [N, D], h and c [N, Hd].
//   i, f, o = sigmoid(.), g = tanh(.);  c' = f*c + i*g;  h' = o*tanh(c').
inline LstmState lstm_step(Graph& graph, Var x, LstmState prev, const LstmWeights& wts) {
  constexpr const char* op = "lstm_step";
  const Tensor& xv = graph.value(x);
  const Tensor& hv = graph.value(prev.h);
  const Tensor& cv = graph.value(prev.c);
  const Tensor& wx = graph.value(wts.input_weight);
  const Tensor& wh = graph.value(wts.recurrent_weight);
  const Tensor& bv = graph.value(wts.bias);
  detail::require_rank(xv, 2, op, "x");
  detail::require_rank(hv, 2, op, "h");
  detail::require_rank(cv, 2, op, "c");
  detail::require_rank(wx, 2, op, "input weight");
  detail::require_rank(wh, 2, op, "recurrent weight");
  detail::require_rank(bv, 1, op, "bias");
  const std::size_t n = xv.dim(0), d = xv.dim(1), hd = hv.dim(1), g4 = 4 * hd;
  detail::require_axis(hv.dim(0) == n && cv.dim(0) == n, op, "batch axis 0 differs between x, h, c");
  detail::require_axis(cv.dim(1) == hd, op, "c axis 1 does not match h axis 1");
  detail::require_axis(wx.dim(0) == d && wx.dim(1) == g4, op,
                       "input weight must be [" + std::to_string(d) + "," + std::to_string(g4) +
                           "], got " + shape_str(wx.shape()));
  detail::require_axis(wh.dim(0) == hd && wh.dim(1) == g4, op,
                       "recurrent weight must be [" + std::to_string(hd) + "," +
                           std::to_string(g4) + "], got " + shape_str(wh.shape()));
  detail::require_axis(bv.dim(0) == g4, op, "bias axis 0 must be " + std::to_string(g4));

  Tensor gates({n, g4});
  {
    detail::MapRM gm(gates.raw(), n, g4);
    gm.noalias() = detail::CMapRM(xv.raw(), n, d) * detail::CMapRM(wx.raw(), d, g4);
    gm.noalias() += detail::CMapRM(hv.raw(), n, hd) * detail::CMapRM(wh.raw(), hd, g4);
    for (std::size_t i = 0; i < n; ++i) {
      double* row = gates.raw() + i * g4;
      for (std::size_t j = 0; j < g4; ++j) {
        const double z = row[j] + bv[j];
        row[j] = (j >= 2 * hd && j < 3 * hd) ? std::tanh(z) : detail::sigmoid(z);
      }
    }
  }
  const bool rg = graph.requires_grad(x) || graph.requires_grad(prev.h) ||
                  graph.requires_grad(wts.input_weight) ||
                  graph.requires_grad(wts.recurrent_weight) || graph.requires_grad(wts.bias);
  Var gate_var{graph.size()};
  graph.record(std::move(gates), rg, [=](Graph& gr) {
    const Tensor& a = gr.value(gate_var);
    const Tensor& da = gr.grad(gate_var);
    Tensor dz({n, g4});
    for (std::size_t i = 0; i < n * g4; ++i) {
      const std::size_t j = i % g4;
      const double v = a[i];
      dz[i] = da[i] * ((j >= 2 * hd && j < 3 * hd) ? (1.0 - v * v) : v * (1.0 - v));
    }
    const detail::CMapRM dzm(dz.raw(), n, g4);
    if (gr.requires_grad(x)) {
      detail::MapRM(gr.grad(x).raw(), n, d).noalias() +=
          dzm * detail::CMapRM(gr.value(wts.input_weight).raw(), d, g4).transpose();
    }
    if (gr.requires_grad(prev.h)) {
      detail::MapRM(gr.grad(prev.h).raw(), n, hd).noalias() +=
          dzm * detail::CMapRM(gr.value(wts.recurrent_weight).raw(), hd, g4).transpose();
    }
    if (gr.requires_grad(wts.input_weight)) {
      detail::MapRM(gr.grad(wts.input_weight).raw(), d, g4).noalias() +=
          detail::CMapRM(gr.value(x).raw(), n, d).transpose() * dzm;
    }
    if (gr.requires_grad(wts.recurrent_weight)) {
      detail::MapRM(gr.grad(wts.recurrent_weight).raw(), hd, g4).noalias() +=
          detail::CMapRM(gr.value(prev.h).raw(), n, hd).transpose() * dzm;
    }
    if (gr.requires_grad(wts.bias)) {
      Tensor& db = gr.grad(wts.bias);
      for (std::size_t i = 0; i < n * g4; ++i) db[i % g4] += dz[i];
    }
  });

  // c' = f*c + i*g
  Tensor c_next({n, hd});
  {
    // Node storage may have moved; re-fetch rather than reuse earlier references.
    const Tensor& a = graph.value(gate_var);
    const Tensor& cp = graph.value(prev.c);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hd; ++j) {
        const double* row = a.raw() + i * g4;
        c_next[i * hd + j] = row[hd + j] * cp[i * hd + j] + row[j] * row[2 * hd + j];
      }
  }
  const bool rg_c = rg || graph.requires_grad(prev.c);
  Var c_var{graph.size()};
  graph.record(std::move(c_next), rg_c, [=](Graph& gr) {
    const Tensor& a = gr.value(gate_var);
    const Tensor& cprev = gr.value(prev.c);
    const Tensor& dc = gr.grad(c_var);
    const bool need_gates = gr.requires_grad(gate_var);
    const bool need_c = gr.requires_grad(prev.c);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hd; ++j) {
        const double* row = a.raw() + i * g4;
        const double g = dc[i * hd + j];
        if (need_gates) {
          double* drow = gr.grad(gate_var).raw() + i * g4;
          drow[j] += g * row[2 * hd + j];
          drow[hd + j] += g * cprev[i * hd + j];
          drow[2 * hd + j] += g * row[j];
        }
        if (need_c) gr.grad(prev.c)[i * hd + j] += g * row[hd + j];
      }
  });

  // h' = o*tanh(c')
  Tensor h_next({n, hd});
  {
    const Tensor& a = graph.value(gate_var);
    const Tensor& cn = graph.value(c_var);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hd; ++j)
        h_next[i * hd + j] = a[i * g4 + 3 * hd + j] * std::tanh(cn[i * hd + j]);
  }
  Var h_var{graph.size()};
  graph.record(std::move(h_next), rg_c, [=](Graph& gr) {
    const Tensor& a = gr.value(gate_var);
    const Tensor& cn = gr.value(c_var);
    const Tensor& dh = gr.grad(h_var);
    const bool need_gates = gr.requires_grad(gate_var);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hd; ++j) {
        const double tc = std::tanh(cn[i * hd + j]);
        const double g = dh[i * hd + j];
        if (need_gates) gr.grad(gate_var)[i * g4 + 3 * hd + j] += g * tc;
        gr.grad(c_var)[i * hd + j] += g * a[i * g4 + 3 * hd + j] * (1.0 - tc * tc);
      }
  });
  return LstmState{h_var, c_var};
}

}  // namespace hiros::tensor
