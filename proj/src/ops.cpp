#include "scalpel/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace scalpel {

namespace {

// Fixed-order sum. Eigen's vectorized reductions peel by address alignment,
// which made bias gradients differ in the last bits between identical runs.
float ordered_sum(const float* v, int64_t n) {
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += v[i];
  return static_cast<float>(acc);
}

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

void require_rank(const char* op, const char* name, const Tensor& t, size_t rank) {
  if (!t.defined()) shape_error(op, std::string(name) + " is undefined");
  if (t.rank() != rank) {
    shape_error(op, std::string(name) + " must have rank " + std::to_string(rank) +
                        ", got " + shape_str(t.shape()));
  }
}

bool wants_grad(const std::shared_ptr<detail::TensorImpl>& t) {
  return t && t->requires_grad;
}

struct ConvGeom {
  int64_t n, ci, h, w, co, kh, kw, ho, wo;
  int stride, pad;
  int64_t k() const { return ci * kh * kw; }
  int64_t p() const { return ho * wo; }
};

// x [N, Ci, H, W] -> cols [Ci*kh*kw, N*Ho*Wo]
void im2col(const float* x, const ConvGeom& g, float* cols) {
  const int64_t cols_w = g.n * g.p();
  for (int64_t c = 0; c < g.ci; ++c) {
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        float* row = cols + ((c * g.kh + ky) * g.kw + kx) * cols_w;
        for (int64_t n = 0; n < g.n; ++n) {
          const float* xc = x + (n * g.ci + c) * g.h * g.w;
          float* out = row + n * g.p();
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            const int64_t iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) {
              std::fill(out + oy * g.wo, out + (oy + 1) * g.wo, 0.0f);
              continue;
            }
            for (int64_t ox = 0; ox < g.wo; ++ox) {
              const int64_t ix = ox * g.stride - g.pad + kx;
              out[oy * g.wo + ox] = (ix >= 0 && ix < g.w) ? xc[iy * g.w + ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const ConvGeom& g, float* dx) {
  const int64_t cols_w = g.n * g.p();
  for (int64_t c = 0; c < g.ci; ++c) {
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        const float* row = cols + ((c * g.kh + ky) * g.kw + kx) * cols_w;
        for (int64_t n = 0; n < g.n; ++n) {
          float* dxc = dx + (n * g.ci + c) * g.h * g.w;
          const float* in = row + n * g.p();
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            const int64_t iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (int64_t ox = 0; ox < g.wo; ++ox) {
              const int64_t ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.w) dxc[iy * g.w + ix] += in[oy * g.wo + ox];
            }
          }
        }
      }
    }
  }
}

// [N, C, P] <-> [C, N*P]
void nchw_to_cnp(const float* src, int64_t n, int64_t c, int64_t p, float* dst) {
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j)
      std::copy_n(src + (i * c + j) * p, p, dst + j * n * p + i * p);
}

void cnp_to_nchw(const float* src, int64_t n, int64_t c, int64_t p, float* dst) {
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j)
      std::copy_n(src + j * n * p + i * p, p, dst + (i * c + j) * p);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
              int pad) {
  require_rank("conv2d", "input", x, 4);
  require_rank("conv2d", "weight", weight, 4);
  if (stride < 1 || pad < 0) shape_error("conv2d", "stride must be >= 1 and pad >= 0");
  ConvGeom g{};
  g.n = x.dim(0); g.ci = x.dim(1); g.h = x.dim(2); g.w = x.dim(3);
  g.co = weight.dim(0); g.kh = weight.dim(2); g.kw = weight.dim(3);
  g.stride = stride; g.pad = pad;
  if (weight.dim(1) != g.ci) {
    shape_error("conv2d", "input " + shape_str(x.shape()) + " has " + std::to_string(g.ci) +
                              " channels but weight " + shape_str(weight.shape()) +
                              " expects " + std::to_string(weight.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.co)) {
    shape_error("conv2d", "bias " + shape_str(bias.shape()) + " does not match weight " +
                              shape_str(weight.shape()));
  }
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) {
    shape_error("conv2d", "kernel " + shape_str(weight.shape()) + " larger than padded input " +
                              shape_str(x.shape()));
  }

  Tensor out = make_result({g.n, g.co, g.ho, g.wo}, "conv2d", {&x, &weight, &bias});
  const bool direct = g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0 && g.n == 1;
  const int64_t cols_w = g.n * g.p();

  std::vector<float> cols;
  const float* cols_ptr = x.ptr();
  if (!direct) {
    cols.resize(static_cast<size_t>(g.k() * cols_w));
    if (g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0) {
      nchw_to_cnp(x.ptr(), g.n, g.ci, g.p(), cols.data());
    } else {
      im2col(x.ptr(), g, cols.data());
    }
    cols_ptr = cols.data();
  }
  CMapRM wmat(weight.ptr(), g.co, g.k());
  CMapRM cmat(cols_ptr, g.k(), cols_w);
  if (g.n == 1) {
    MapRM omat(out.ptr(), g.co, cols_w);
    omat.noalias() = wmat * cmat;
  } else {
    MatRM tmp = wmat * cmat;
    cnp_to_nchw(tmp.data(), g.n, g.co, g.p(), out.ptr());
  }
  if (bias.defined()) {
    const float* b = bias.ptr();
    float* o = out.ptr();
    for (int64_t n = 0; n < g.n; ++n)
      for (int64_t c = 0; c < g.co; ++c) {
        float* row = o + (n * g.co + c) * g.p();
        for (int64_t i = 0; i < g.p(); ++i) row[i] += b[c];
      }
  }

  auto xi = x.impl_ptr();
  auto wi = weight.impl_ptr();
  auto bi = bias.defined() ? bias.impl_ptr() : nullptr;
  set_backward(out, [xi, wi, bi, g](detail::TensorImpl& self) {
    const int64_t cols_w = g.n * g.p();
    // dOut as [Co, N*P]
    std::vector<float> dout_cnp;
    const float* dout = self.grad.data();
    if (g.n != 1) {
      dout_cnp.resize(static_cast<size_t>(g.co * cols_w));
      nchw_to_cnp(self.grad.data(), g.n, g.co, g.p(), dout_cnp.data());
      dout = dout_cnp.data();
    }
    CMapRM dmat(dout, g.co, cols_w);
    if (wants_grad(bi)) {
      bi->ensure_grad();
      for (int64_t c = 0; c < g.co; ++c) bi->grad[c] += ordered_sum(dout + c * cols_w, cols_w);
    }
    const bool direct = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0 && g.n == 1;
    if (wants_grad(wi)) {
      std::vector<float> cols;
      const float* cols_ptr = xi->data.data();
      if (!direct) {
        cols.resize(static_cast<size_t>(g.k() * cols_w));
        im2col(xi->data.data(), g, cols.data());
        cols_ptr = cols.data();
      }
      wi->ensure_grad();
      MapRM dw(wi->grad.data(), g.co, g.k());
      dw.noalias() += dmat * CMapRM(cols_ptr, g.k(), cols_w).transpose();
    }
    if (wants_grad(xi)) {
      xi->ensure_grad();
      CMapRM wmat(wi->data.data(), g.co, g.k());
      if (direct) {
        MapRM dx(xi->grad.data(), g.ci, cols_w);
        dx.noalias() += wmat.transpose() * dmat;
      } else {
        MatRM dcols = wmat.transpose() * dmat;
        col2im(dcols.data(), g, xi->grad.data());
      }
    }
  });
  return out;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        int stride) {
  require_rank("conv_transpose2d", "input", x, 4);
  require_rank("conv_transpose2d", "weight", weight, 4);
  const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t co = weight.dim(1), k = weight.dim(2);
  if (weight.dim(0) != ci || weight.dim(3) != k || k != stride) {
    shape_error("conv_transpose2d", "weight " + shape_str(weight.shape()) +
                                        " incompatible with input " + shape_str(x.shape()) +
                                        " and stride " + std::to_string(stride));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
    shape_error("conv_transpose2d", "bias " + shape_str(bias.shape()) + " mismatched");
  }
  const int64_t ho = h * k, wo = w * k, p = h * w, kk = co * k * k;
  Tensor out = make_result({n, co, ho, wo}, "conv_transpose2d", {&x, &weight, &bias});

  // cols[co*k*k, n*p] = W^T[co*k*k, ci] * X[ci, n*p]
  std::vector<float> xcnp(static_cast<size_t>(ci * n * p));
  nchw_to_cnp(x.ptr(), n, ci, p, xcnp.data());
  MatRM cols = CMapRM(weight.ptr(), ci, kk).transpose() * CMapRM(xcnp.data(), ci, n * p);
  float* o = out.ptr();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t c = 0; c < co; ++c)
      for (int64_t ky = 0; ky < k; ++ky)
        for (int64_t kx = 0; kx < k; ++kx) {
          const float* row = cols.data() + ((c * k + ky) * k + kx) * n * p + b * p;
          float* oc = o + (b * co + c) * ho * wo;
          const float bv = bias.defined() ? bias.ptr()[c] : 0.0f;
          for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx)
              oc[(y * k + ky) * wo + xx * k + kx] = row[y * w + xx] + bv;
        }

  auto xi = x.impl_ptr();
  auto wi = weight.impl_ptr();
  auto bi = bias.defined() ? bias.impl_ptr() : nullptr;
  set_backward(out, [xi, wi, bi, n, ci, h, w, co, k, ho, wo, p, kk](detail::TensorImpl& self) {
    // Gather dOut into the cols layout.
    MatRM dcols(kk, n * p);
    const float* g = self.grad.data();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t c = 0; c < co; ++c)
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx) {
            float* row = dcols.data() + ((c * k + ky) * k + kx) * n * p + b * p;
            const float* gc = g + (b * co + c) * ho * wo;
            for (int64_t y = 0; y < h; ++y)
              for (int64_t xx = 0; xx < w; ++xx) row[y * w + xx] = gc[(y * k + ky) * wo + xx * k + kx];
          }
    if (wants_grad(bi)) {
      bi->ensure_grad();
      for (int64_t c = 0; c < co; ++c)
        bi->grad[c] += ordered_sum(dcols.data() + c * k * k * dcols.cols(), k * k * dcols.cols());
    }
    if (wants_grad(wi)) {
      std::vector<float> xcnp(static_cast<size_t>(ci * n * p));
      nchw_to_cnp(xi->data.data(), n, ci, p, xcnp.data());
      wi->ensure_grad();
      MapRM dw(wi->grad.data(), ci, kk);
      dw.noalias() += CMapRM(xcnp.data(), ci, n * p) * dcols.transpose();
    }
    if (wants_grad(xi)) {
      MatRM dx = CMapRM(wi->data.data(), ci, kk) * dcols;
      xi->ensure_grad();
      std::vector<float> tmp(static_cast<size_t>(ci * n * p));
      cnp_to_nchw(dx.data(), n, ci, p, tmp.data());
      for (size_t i = 0; i < tmp.size(); ++i) xi->grad[i] += tmp[i];
    }
  });
  return out;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  float eps) {
  if (!x.defined() || x.rank() < 2) shape_error("group_norm", "input must have rank >= 2");
  const int64_t n = x.dim(0), c = x.dim(1);
  if (groups < 1 || c % groups != 0) {
    shape_error("group_norm", "channels " + std::to_string(c) + " not divisible by groups " +
                                  std::to_string(groups));
  }
  require_rank("group_norm", "gamma", gamma, 1);
  require_rank("group_norm", "beta", beta, 1);
  if (gamma.dim(0) != c || beta.dim(0) != c) {
    shape_error("group_norm", "affine " + shape_str(gamma.shape()) + "/" +
                                  shape_str(beta.shape()) + " vs input " + shape_str(x.shape()));
  }
  const int64_t s = x.numel() / (n * c);
  const int64_t cpg = c / groups;
  const int64_t m = cpg * s;

  Tensor out = make_result(x.shape(), "group_norm", {&x, &gamma, &beta});
  std::vector<float> xhat(static_cast<size_t>(x.numel()));
  std::vector<float> rstd(static_cast<size_t>(n * groups));
  const float* xp = x.ptr();
  float* op = out.ptr();
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t gi = 0; gi < groups; ++gi) {
      const int64_t base = (b * c + gi * cpg) * s;
      float mean = 0.0f;
      for (int64_t i = 0; i < m; ++i) mean += xp[base + i];
      mean /= static_cast<float>(m);
      float var = 0.0f;
      for (int64_t i = 0; i < m; ++i) {
        const float d = xp[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<float>(m);
      const float r = 1.0f / std::sqrt(var + eps);
      rstd[b * groups + gi] = r;
      for (int64_t i = 0; i < m; ++i) xhat[base + i] = (xp[base + i] - mean) * r;
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      const float ga = gamma.ptr()[ch], be = beta.ptr()[ch];
      const int64_t base = (b * c + ch) * s;
      for (int64_t i = 0; i < s; ++i) op[base + i] = ga * xhat[base + i] + be;
    }
  }

  auto xi = x.impl_ptr();
  auto gi_ = gamma.impl_ptr();
  auto bi = beta.impl_ptr();
  set_backward(out, [xi, gi_, bi, xhat = std::move(xhat), rstd = std::move(rstd), n, c, s,
                     groups, cpg, m](detail::TensorImpl& self) {
    const float* dy = self.grad.data();
    if (wants_grad(gi_) || wants_grad(bi)) {
      if (wants_grad(gi_)) gi_->ensure_grad();
      if (wants_grad(bi)) bi->ensure_grad();
      for (int64_t b = 0; b < n; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
          const int64_t base = (b * c + ch) * s;
          float dg = 0.0f, db = 0.0f;
          for (int64_t i = 0; i < s; ++i) {
            dg += dy[base + i] * xhat[base + i];
            db += dy[base + i];
          }
          if (wants_grad(gi_)) gi_->grad[ch] += dg;
          if (wants_grad(bi)) bi->grad[ch] += db;
        }
    }
    if (!wants_grad(xi)) return;
    xi->ensure_grad();
    const float* ga = gi_->data.data();
    const float inv_m = 1.0f / static_cast<float>(m);
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t g = 0; g < groups; ++g) {
        float sum_d = 0.0f, sum_dx = 0.0f;
        for (int64_t cc = 0; cc < cpg; ++cc) {
          const int64_t ch = g * cpg + cc;
          const int64_t base = (b * c + ch) * s;
          for (int64_t i = 0; i < s; ++i) {
            const float d = dy[base + i] * ga[ch];
            sum_d += d;
            sum_dx += d * xhat[base + i];
          }
        }
        const float r = rstd[b * groups + g];
        for (int64_t cc = 0; cc < cpg; ++cc) {
          const int64_t ch = g * cpg + cc;
          const int64_t base = (b * c + ch) * s;
          for (int64_t i = 0; i < s; ++i) {
            const float d = dy[base + i] * ga[ch];
            xi->grad[base + i] += r * (d - inv_m * sum_d - xhat[base + i] * inv_m * sum_dx);
          }
        }
      }
    }
  });
  return out;
}

Tensor relu(const Tensor& x) {
  if (!x.defined()) shape_error("relu", "input is undefined");
  Tensor out = make_result(x.shape(), "relu", {&x});
  const float* xp = x.ptr();
  float* op = out.ptr();
  for (int64_t i = 0; i < x.numel(); ++i) op[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
  auto xi = x.impl_ptr();
  set_backward(out, [xi](detail::TensorImpl& self) {
    xi->ensure_grad();
    for (size_t i = 0; i < self.data.size(); ++i)
      if (xi->data[i] > 0.0f) xi->grad[i] += self.grad[i];
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", "input", x, 2);
  require_rank("linear", "weight", weight, 2);
  const int64_t r = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  if (weight.dim(1) != in) {
    shape_error("linear", "input " + shape_str(x.shape()) + " vs weight " +
                              shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outd)) {
    shape_error("linear", "bias " + shape_str(bias.shape()) + " vs weight " +
                              shape_str(weight.shape()));
  }
  Tensor out = make_result({r, outd}, "linear", {&x, &weight, &bias});
  MapRM o(out.ptr(), r, outd);
  o.noalias() = CMapRM(x.ptr(), r, in) * CMapRM(weight.ptr(), outd, in).transpose();
  if (bias.defined()) {
    o.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.ptr(), outd);
  }
  auto xi = x.impl_ptr();
  auto wi = weight.impl_ptr();
  auto bi = bias.defined() ? bias.impl_ptr() : nullptr;
  set_backward(out, [xi, wi, bi, r, in, outd](detail::TensorImpl& self) {
    CMapRM dy(self.grad.data(), r, outd);
    if (wants_grad(bi)) {
      bi->ensure_grad();
      for (int64_t j = 0; j < outd; ++j) {
        double acc = 0;
        for (int64_t i = 0; i < r; ++i) acc += dy(i, j);
        bi->grad[j] += static_cast<float>(acc);
      }
    }
    if (wants_grad(wi)) {
      wi->ensure_grad();
      MapRM(wi->grad.data(), outd, in).noalias() +=
          dy.transpose() * CMapRM(xi->data.data(), r, in);
    }
    if (wants_grad(xi)) {
      xi->ensure_grad();
      MapRM(xi->grad.data(), r, in).noalias() += dy * CMapRM(wi->data.data(), outd, in);
    }
  });
  return out;
}

Tensor max_pool(const Tensor& x, int kernel, int stride, int pad) {
  require_rank("max_pool", "input", x, 4);
  if (kernel < 1 || stride < 1 || pad < 0 || pad >= kernel) {
    shape_error("max_pool", "invalid kernel/stride/pad");
  }
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = (h + 2 * pad - kernel) / stride + 1;
  const int64_t wo = (w + 2 * pad - kernel) / stride + 1;
  if (ho <= 0 || wo <= 0) shape_error("max_pool", "window larger than input " + shape_str(x.shape()));
  Tensor out = make_result({n, c, ho, wo}, "max_pool", {&x});
  std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
  const float* xp = x.ptr();
  float* op = out.ptr();
  for (int64_t pc = 0; pc < n * c; ++pc) {
    const float* plane = xp + pc * h * w;
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        int64_t best_i = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            if (plane[iy * w + ix] > best) {
              best = plane[iy * w + ix];
              best_i = iy * w + ix;
            }
          }
        }
        const int64_t o = (pc * ho + oy) * wo + ox;
        op[o] = best;
        argmax[o] = pc * h * w + best_i;
      }
  }
  auto xi = x.impl_ptr();
  set_backward(out, [xi, argmax = std::move(argmax)](detail::TensorImpl& self) {
    xi->ensure_grad();
    for (size_t i = 0; i < argmax.size(); ++i) xi->grad[argmax[i]] += self.grad[i];
  });
  return out;
}

Tensor nearest_upsample(const Tensor& x, int factor) {
  require_rank("nearest_upsample", "input", x, 4);
  if (factor < 1) shape_error("nearest_upsample", "factor must be >= 1");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = h * factor, wo = w * factor;
  Tensor out = make_result({n, c, ho, wo}, "nearest_upsample", {&x});
  const float* xp = x.ptr();
  float* op = out.ptr();
  for (int64_t pc = 0; pc < n * c; ++pc)
    for (int64_t y = 0; y < ho; ++y)
      for (int64_t xx = 0; xx < wo; ++xx)
        op[(pc * ho + y) * wo + xx] = xp[(pc * h + y / factor) * w + xx / factor];
  auto xi = x.impl_ptr();
  set_backward(out, [xi, n, c, h, w, ho, wo, factor](detail::TensorImpl& self) {
    xi->ensure_grad();
    for (int64_t pc = 0; pc < n * c; ++pc)
      for (int64_t y = 0; y < ho; ++y)
        for (int64_t xx = 0; xx < wo; ++xx)
          xi->grad[(pc * h + y / factor) * w + xx / factor] += self.grad[(pc * ho + y) * wo + xx];
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) shape_error("add", "input is undefined");
  if (a.shape() != b.shape()) {
    shape_error("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = make_result(a.shape(), "add", {&a, &b});
  for (int64_t i = 0; i < a.numel(); ++i) out.ptr()[i] = a.ptr()[i] + b.ptr()[i];
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  set_backward(out, [ai, bi](detail::TensorImpl& self) {
    for (const auto& t : {ai, bi}) {
      if (!wants_grad(t)) continue;
      t->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) t->grad[i] += self.grad[i];
    }
  });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  if (!x.defined()) shape_error("sigmoid", "input is undefined");
  Tensor out = make_result(x.shape(), "sigmoid", {&x});
  for (int64_t i = 0; i < x.numel(); ++i) out.ptr()[i] = 1.0f / (1.0f + std::exp(-x.ptr()[i]));
  auto xi = x.impl_ptr();
  set_backward(out, [xi](detail::TensorImpl& self) {
    xi->ensure_grad();
    for (size_t i = 0; i < self.data.size(); ++i) {
      const float s = self.data[i];
      xi->grad[i] += self.grad[i] * s * (1.0f - s);
    }
  });
  return out;
}

namespace {
void softmax_rows(const float* x, int64_t r, int64_t k, float* out) {
  for (int64_t i = 0; i < r; ++i) {
    const float* row = x + i * k;
    float* o = out + i * k;
    const float mx = *std::max_element(row, row + k);
    float z = 0.0f;
    for (int64_t j = 0; j < k; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (int64_t j = 0; j < k; ++j) o[j] /= z;
  }
}
}  // namespace

Tensor softmax(const Tensor& x) {
  require_rank("softmax", "input", x, 2);
  const int64_t r = x.dim(0), k = x.dim(1);
  Tensor out = make_result(x.shape(), "softmax", {&x});
  softmax_rows(x.ptr(), r, k, out.ptr());
  auto xi = x.impl_ptr();
  set_backward(out, [xi, r, k](detail::TensorImpl& self) {
    xi->ensure_grad();
    for (int64_t i = 0; i < r; ++i) {
      const float* s = self.data.data() + i * k;
      const float* g = self.grad.data() + i * k;
      float dot = 0.0f;
      for (int64_t j = 0; j < k; ++j) dot += s[j] * g[j];
      for (int64_t j = 0; j < k; ++j) xi->grad[i * k + j] += s[j] * (g[j] - dot);
    }
  });
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank("cross_entropy", "logits", logits, 2);
  const int64_t r = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != r) {
    shape_error("cross_entropy", "logits " + shape_str(logits.shape()) + " vs " +
                                     std::to_string(labels.size()) + " labels");
  }
  for (int l : labels)
    if (l < 0 || l >= k) shape_error("cross_entropy", "label " + std::to_string(l) + " out of range");
  Tensor out = make_result({1}, "cross_entropy", {&logits});
  if (r == 0) return out;
  std::vector<float> probs(static_cast<size_t>(r * k));
  softmax_rows(logits.ptr(), r, k, probs.data());
  float loss = 0.0f;
  for (int64_t i = 0; i < r; ++i) {
    const float* row = logits.ptr() + i * k;
    const float mx = *std::max_element(row, row + k);
    float z = 0.0f;
    for (int64_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    loss += (mx + std::log(z)) - row[labels[i]];
  }
  out.ptr()[0] = loss / static_cast<float>(r);
  auto li = logits.impl_ptr();
  std::vector<int> lab(labels.begin(), labels.end());
  set_backward(out, [li, probs = std::move(probs), lab = std::move(lab), r,
                     k](detail::TensorImpl& self) {
    li->ensure_grad();
    const float g = self.grad[0] / static_cast<float>(r);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < k; ++j)
        li->grad[i * k + j] += g * (probs[i * k + j] - (j == lab[i] ? 1.0f : 0.0f));
  });
  return out;
}

Tensor smooth_l1(const Tensor& pred, std::span<const float> target,
                 std::span<const float> weight, float beta, float normalizer) {
  if (!pred.defined()) shape_error("smooth_l1", "prediction is undefined");
  const auto n = static_cast<size_t>(pred.numel());
  if (target.size() != n || weight.size() != n) {
    shape_error("smooth_l1", "prediction " + shape_str(pred.shape()) + " vs target " +
                                 std::to_string(target.size()) + " / weight " +
                                 std::to_string(weight.size()));
  }
  if (!(normalizer > 0.0f)) shape_error("smooth_l1", "normalizer must be positive");
  Tensor out = make_result({1}, "smooth_l1", {&pred});
  std::vector<float> dloss(n, 0.0f);
  float total = 0.0f;
  for (size_t i = 0; i < n; ++i) {
    if (weight[i] == 0.0f) continue;
    const float d = pred.ptr()[i] - target[i];
    const float ad = std::abs(d);
    if (ad < beta) {
      total += weight[i] * 0.5f * d * d / beta;
      dloss[i] = weight[i] * d / beta;
    } else {
      total += weight[i] * (ad - 0.5f * beta);
      dloss[i] = weight[i] * (d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f));
    }
  }
  out.ptr()[0] = total / normalizer;
  auto pi = pred.impl_ptr();
  set_backward(out, [pi, dloss = std::move(dloss), normalizer](detail::TensorImpl& self) {
    pi->ensure_grad();
    const float g = self.grad[0] / normalizer;
    for (size_t i = 0; i < dloss.size(); ++i) pi->grad[i] += g * dloss[i];
  });
  return out;
}

Tensor binary_cross_entropy(const Tensor& logits, std::span<const float> target,
                            std::span<const float> weight, float normalizer) {
  if (!logits.defined()) shape_error("binary_cross_entropy", "logits are undefined");
  const auto n = static_cast<size_t>(logits.numel());
  if (target.size() != n || weight.size() != n) {
    shape_error("binary_cross_entropy", "logits " + shape_str(logits.shape()) + " vs target " +
                                            std::to_string(target.size()) + " / weight " +
                                            std::to_string(weight.size()));
  }
  if (!(normalizer > 0.0f)) shape_error("binary_cross_entropy", "normalizer must be positive");
  Tensor out = make_result({1}, "binary_cross_entropy", {&logits});
  std::vector<float> dloss(n, 0.0f);
  float total = 0.0f;
  for (size_t i = 0; i < n; ++i) {
    if (weight[i] == 0.0f) continue;
    const float x = logits.ptr()[i];
    // max(x,0) - x t + log(1 + exp(-|x|))
    total += weight[i] * (std::max(x, 0.0f) - x * target[i] + std::log1p(std::exp(-std::abs(x))));
    const float s = 1.0f / (1.0f + std::exp(-x));
    dloss[i] = weight[i] * (s - target[i]);
  }
  out.ptr()[0] = total / normalizer;
  auto li = logits.impl_ptr();
  set_backward(out, [li, dloss = std::move(dloss), normalizer](detail::TensorImpl& self) {
    li->ensure_grad();
    const float g = self.grad[0] / normalizer;
    for (size_t i = 0; i < dloss.size(); ++i) li->grad[i] += g * dloss[i];
  });
  return out;
}

Tensor roi_crop_resize(std::span<const Tensor> features, std::span<const float> scales,
                       std::span<const RoiBox> rois, int out_size) {
  if (features.empty()) shape_error("roi_crop_resize", "no feature maps");
  if (scales.size() != features.size()) {
    shape_error("roi_crop_resize", std::to_string(features.size()) + " feature maps but " +
                                       std::to_string(scales.size()) + " scales");
  }
  if (out_size < 1) shape_error("roi_crop_resize", "out_size must be >= 1");
  const int64_t c = features[0].defined() && features[0].rank() == 4 ? features[0].dim(1) : -1;
  for (const Tensor& f : features) {
    require_rank("roi_crop_resize", "feature", f, 4);
    if (f.dim(0) != 1 || f.dim(1) != c) {
      shape_error("roi_crop_resize", "feature maps must be [1, C, H, W] with shared C, got " +
                                         shape_str(f.shape()));
    }
  }
  const auto r = static_cast<int64_t>(rois.size());
  const int64_t m = out_size;
  Tensor out = make_result({r, c, m, m}, "roi_crop_resize", features);

  // One bilinear tap set per (roi, bin); identical across channels.
  struct Tap {
    int level;
    int64_t idx[4];
    float wt[4];
  };
  std::vector<Tap> taps(static_cast<size_t>(r * m * m));
  for (int64_t ri = 0; ri < r; ++ri) {
    const RoiBox& b = rois[ri];
    if (b.level < 0 || b.level >= static_cast<int>(features.size())) {
      shape_error("roi_crop_resize", "roi level " + std::to_string(b.level) + " out of range");
    }
    const Tensor& f = features[b.level];
    const int64_t h = f.dim(2), w = f.dim(3);
    const float s = scales[b.level];
    const float x0 = b.x1 * s, y0 = b.y1 * s;
    const float bw = std::max((b.x2 - b.x1) * s, 0.0f) / static_cast<float>(m);
    const float bh = std::max((b.y2 - b.y1) * s, 0.0f) / static_cast<float>(m);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < m; ++j) {
        Tap& t = taps[(ri * m + i) * m + j];
        t.level = b.level;
        float y = y0 + (static_cast<float>(i) + 0.5f) * bh - 0.5f;
        float x = x0 + (static_cast<float>(j) + 0.5f) * bw - 0.5f;
        if (y < -1.0f || y > static_cast<float>(h) || x < -1.0f || x > static_cast<float>(w)) {
          for (int q = 0; q < 4; ++q) { t.idx[q] = 0; t.wt[q] = 0.0f; }
          continue;
        }
        y = std::max(y, 0.0f);
        x = std::max(x, 0.0f);
        auto yl = static_cast<int64_t>(y), xl = static_cast<int64_t>(x);
        int64_t yh, xh;
        if (yl >= h - 1) { yl = yh = h - 1; y = static_cast<float>(yl); } else { yh = yl + 1; }
        if (xl >= w - 1) { xl = xh = w - 1; x = static_cast<float>(xl); } else { xh = xl + 1; }
        const float ly = y - static_cast<float>(yl), lx = x - static_cast<float>(xl);
        const float hy = 1.0f - ly, hx = 1.0f - lx;
        t.idx[0] = yl * w + xl; t.wt[0] = hy * hx;
        t.idx[1] = yl * w + xh; t.wt[1] = hy * lx;
        t.idx[2] = yh * w + xl; t.wt[2] = ly * hx;
        t.idx[3] = yh * w + xh; t.wt[3] = ly * lx;
      }
  }
  float* op = out.ptr();
  for (int64_t ri = 0; ri < r; ++ri) {
    const Tensor& f = features[rois[ri].level];
    const int64_t plane = f.dim(2) * f.dim(3);
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* fp = f.ptr() + ch * plane;
      float* o = op + (ri * c + ch) * m * m;
      for (int64_t q = 0; q < m * m; ++q) {
        const Tap& t = taps[ri * m * m + q];
        o[q] = t.wt[0] * fp[t.idx[0]] + t.wt[1] * fp[t.idx[1]] + t.wt[2] * fp[t.idx[2]] +
               t.wt[3] * fp[t.idx[3]];
      }
    }
  }
  std::vector<std::shared_ptr<detail::TensorImpl>> fi;
  for (const Tensor& f : features) fi.push_back(f.impl_ptr());
  set_backward(out, [fi, taps = std::move(taps), r, c, m](detail::TensorImpl& self) {
    for (int64_t ri = 0; ri < r; ++ri) {
      const auto& f = fi[taps[ri * m * m].level];
      if (!wants_grad(f)) continue;
      f->ensure_grad();
      const int64_t plane = f->shape[2] * f->shape[3];
      for (int64_t ch = 0; ch < c; ++ch) {
        float* gp = f->grad.data() + ch * plane;
        const float* g = self.grad.data() + (ri * c + ch) * m * m;
        for (int64_t q = 0; q < m * m; ++q) {
          const auto& t = taps[ri * m * m + q];
          for (int k = 0; k < 4; ++k) gp[t.idx[k]] += t.wt[k] * g[q];
        }
      }
    }
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (!x.defined()) shape_error("reshape", "input is undefined");
  if (shape_numel(shape) != x.numel()) {
    shape_error("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = make_result(std::move(shape), "reshape", {&x});
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  auto xi = x.impl_ptr();
  set_backward(out, [xi](detail::TensorImpl& self) {
    xi->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xi->grad[i] += self.grad[i];
  });
  return out;
}

Tensor scale(const Tensor& x, float factor) {
  if (!x.defined()) shape_error("scale", "input is undefined");
  Tensor out = make_result(x.shape(), "scale", {&x});
  for (int64_t i = 0; i < x.numel(); ++i) out.ptr()[i] = x.ptr()[i] * factor;
  auto xi = x.impl_ptr();
  set_backward(out, [xi, factor](detail::TensorImpl& self) {
    xi->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xi->grad[i] += factor * self.grad[i];
  });
  return out;
}

Tensor sum(const Tensor& x) {
  if (!x.defined()) shape_error("sum", "input is undefined");
  Tensor out = make_result({1}, "sum", {&x});
  float total = 0.0f;
  for (float v : x.data()) total += v;
  out.ptr()[0] = total;
  auto xi = x.impl_ptr();
  set_backward(out, [xi](detail::TensorImpl& self) {
    xi->ensure_grad();
    for (float& g : xi->grad) g += self.grad[0];
  });
  return out;
}

}  // namespace scalpel
