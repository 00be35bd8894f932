#pragma once

#include <Eigen/Core>

#include "restore/autodiff.hpp"
#include "restore/wavelet.hpp"

namespace restore {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapRM = Eigen::Map<const RowMat<T>>;

namespace detail {

struct ConvGeometry {
  std::size_t batch, cin, h, w;
  std::size_t cout, kh, kw, stride;
  std::size_t oh, ow;          // output spatial dims (ceil division)
  std::size_t pad_top, pad_left;

  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return batch * oh * ow; }
};

// TensorFlow-style "same" padding: output is ceil(input/stride) and padding is
// split with the smaller half leading.
inline ConvGeometry conv_geometry(const Shape& xs, const Shape& ws, std::size_t stride) {
  ConvGeometry g;
  g.batch = xs[0];
  g.cin = xs[1];
  g.h = xs[2];
  g.w = xs[3];
  g.cout = ws[0];
  g.kh = ws[2];
  g.kw = ws[3];
  g.stride = stride;
  g.oh = (g.h + stride - 1) / stride;
  g.ow = (g.w + stride - 1) / stride;
  const std::size_t need_h = (g.oh - 1) * stride + g.kh;
  const std::size_t need_w = (g.ow - 1) * stride + g.kw;
  g.pad_top = (need_h > g.h ? need_h - g.h : 0) / 2;
  g.pad_left = (need_w > g.w ? need_w - g.w : 0) / 2;
  return g;
}

template <typename T>
void im2col(const Tensor<T>& x, const ConvGeometry& g, Tensor<T>& cols) {
  const std::size_t kd = g.patch();
  const T* xd = x.ptr();
  T* cd = cols.ptr();
#pragma omp parallel for schedule(static) if (g.batch > 1)
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        T* row = cd + ((b * g.oh + oy) * g.ow + ox) * kd;
        std::size_t k = 0;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
          const T* plane = xd + (b * g.cin + ci) * g.h * g.w;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const std::ptrdiff_t iy =
                std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad_top);
            for (std::size_t kx = 0; kx < g.kw; ++kx, ++k) {
              const std::ptrdiff_t ix =
                  std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad_left);
              row[k] = (iy >= 0 && iy < std::ptrdiff_t(g.h) && ix >= 0 &&
                        ix < std::ptrdiff_t(g.w))
                           ? plane[std::size_t(iy) * g.w + std::size_t(ix)]
                           : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const Tensor<T>& cols, const ConvGeometry& g, Tensor<T>& dx) {
  const std::size_t kd = g.patch();
  const T* cd = cols.ptr();
  T* xd = dx.ptr();
  // samples are disjoint in dx, so the accumulation stays deterministic
#pragma omp parallel for schedule(static) if (g.batch > 1)
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const T* row = cd + ((b * g.oh + oy) * g.ow + ox) * kd;
        std::size_t k = 0;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
          T* plane = xd + (b * g.cin + ci) * g.h * g.w;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const std::ptrdiff_t iy =
                std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad_top);
            for (std::size_t kx = 0; kx < g.kw; ++kx, ++k) {
              const std::ptrdiff_t ix =
                  std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad_left);
              if (iy >= 0 && iy < std::ptrdiff_t(g.h) && ix >= 0 && ix < std::ptrdiff_t(g.w))
                plane[std::size_t(iy) * g.w + std::size_t(ix)] += row[k];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution with "same" padding. x: {B,Cin,H,W}, w: {Cout,Cin,kh,kw},
// b: {Cout}; output {B,Cout,ceil(H/s),ceil(W/s)}.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, std::size_t stride = 1) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4) throw DimensionError("conv2d input must be {B,C,H,W}, got " + shape_str(xs));
  if (ws.size() != 4)
    throw DimensionError("conv2d weight must be {Cout,Cin,kh,kw}, got " + shape_str(ws));
  if (xs[1] != ws[1])
    throw DimensionError("conv2d channel mismatch: input " + shape_str(xs) + " vs weight " +
                         shape_str(ws));
  if (bias.shape() != Shape{ws[0]}) throw DimensionError("conv2d bias must be {Cout}");
  if (stride == 0) throw ConfigError("conv2d stride must be positive");

  const detail::ConvGeometry g = detail::conv_geometry(xs, ws, stride);
  const std::size_t kd = g.patch(), np = g.pixels(), hw = g.oh * g.ow;

  Tensor<T> cols({np, kd});
  detail::im2col(x.value(), g, cols);

  Tensor<T> prod({g.cout, np});
  {
    CMapRM<T> wm(w.value().ptr(), g.cout, kd);
    CMapRM<T> cm(cols.ptr(), np, kd);
    MapRM<T> pm(prod.ptr(), g.cout, np);
    pm.noalias() = wm * cm.transpose();
  }

  Tensor<T> out({g.batch, g.cout, g.oh, g.ow});
  {
    const T* bp = bias.value().ptr();
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T* src = prod.ptr() + co * np + b * hw;
        T* dst = out.ptr() + (b * g.cout + co) * hw;
        const T bv = bp[co];
        for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + bv;
      }
  }

  Tape<T>* t = x.tape;
  Var<T> y = t->make_node(std::move(out), {x.idx, w.idx, bias.idx});
  const std::int32_t yi = y.idx, xi = x.idx, wi = w.idx, bi = bias.idx;
  t->set_backward(y, [t, yi, xi, wi, bi, g, kd, np, hw]() {
    const Tensor<T>& gy = t->grad_of(yi);

    Tensor<T> gmat({g.cout, np});
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t co = 0; co < g.cout; ++co)
        std::copy_n(gy.ptr() + (b * g.cout + co) * hw, hw, gmat.ptr() + co * np + b * hw);

    if (t->needs_grad(bi)) {
      Tensor<T>& gb = t->grad_of(bi);
      for (std::size_t co = 0; co < g.cout; ++co) {
        double s = 0.0;
        const T* row = gmat.ptr() + co * np;
        for (std::size_t p = 0; p < np; ++p) s += double(row[p]);
        gb[co] += T(s);
      }
    }
    if (t->needs_grad(wi)) {
      Tensor<T> cols({np, kd});
      detail::im2col(t->value_of(xi), g, cols);
      Tensor<T>& gw = t->grad_of(wi);
      CMapRM<T> gm(gmat.ptr(), g.cout, np);
      CMapRM<T> cm(cols.ptr(), np, kd);
      MapRM<T> gwm(gw.ptr(), g.cout, kd);
      gwm.noalias() += gm * cm;
    }
    if (t->needs_grad(xi)) {
      Tensor<T> gcols({np, kd});
      {
        CMapRM<T> gm(gmat.ptr(), g.cout, np);
        CMapRM<T> wm(t->value_of(wi).ptr(), g.cout, kd);
        MapRM<T> gc(gcols.ptr(), np, kd);
        gc.noalias() = gm.transpose() * wm;
      }
      detail::col2im_add(gcols, g, t->grad_of(xi));
    }
  });
  return y;
}

// Fully connected layer. x: {B,In}, w: {Out,In}, b: {Out} -> {B,Out}.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1])
    throw DimensionError("linear: incompatible shapes " + shape_str(xs) + " and " + shape_str(ws));
  if (bias.shape() != Shape{ws[0]}) throw DimensionError("linear bias must be {Out}");
  const std::size_t b = xs[0], in = xs[1], out_n = ws[0];

  Tensor<T> out({b, out_n});
  {
    CMapRM<T> xm(x.value().ptr(), b, in);
    CMapRM<T> wm(w.value().ptr(), out_n, in);
    MapRM<T> om(out.ptr(), b, out_n);
    om.noalias() = xm * wm.transpose();
    const T* bp = bias.value().ptr();
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < out_n; ++c) out[r * out_n + c] += bp[c];
  }

  Tape<T>* t = x.tape;
  Var<T> y = t->make_node(std::move(out), {x.idx, w.idx, bias.idx});
  const std::int32_t yi = y.idx, xi = x.idx, wi = w.idx, bi = bias.idx;
  t->set_backward(y, [t, yi, xi, wi, bi, b, in, out_n]() {
    const Tensor<T>& gy = t->grad_of(yi);
    CMapRM<T> gm(gy.ptr(), b, out_n);
    if (t->needs_grad(bi)) {
      Tensor<T>& gb = t->grad_of(bi);
      for (std::size_t c = 0; c < out_n; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < b; ++r) s += double(gy[r * out_n + c]);
        gb[c] += T(s);
      }
    }
    if (t->needs_grad(wi)) {
      CMapRM<T> xm(t->value_of(xi).ptr(), b, in);
      MapRM<T> gw(t->grad_of(wi).ptr(), out_n, in);
      gw.noalias() += gm.transpose() * xm;
    }
    if (t->needs_grad(xi)) {
      CMapRM<T> wm(t->value_of(wi).ptr(), out_n, in);
      MapRM<T> gx(t->grad_of(xi).ptr(), b, in);
      gx.noalias() += gm * wm;
    }
  });
  return y;
}

namespace detail {

// Per-plane mean and population variance in double precision.
template <typename T>
inline std::pair<double, double> plane_stats(const T* p, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m += double(p[i]);
  m /= double(n);
  double v = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = double(p[i]) - m;
    v += d * d;
  }
  return {m, v / double(n)};
}

}  // namespace detail

// Adaptive instance normalization. h: {B,C,H,W}; mu, sigma: {B,C}. Each channel
// is renormalized with its own spatial statistics (population convention), then
// rescaled to the target (mu, sigma):
//   out = sigma * (h - mean(h)) / sqrt(var(h) + eps) + mu
template <typename T>
Var<T> adain(Var<T> h, Var<T> mu, Var<T> sigma, T eps) {
  const Shape& hs = h.shape();
  if (hs.size() != 4) throw DimensionError("adain input must be {B,C,H,W}");
  const std::size_t b = hs[0], c = hs[1], n = hs[2] * hs[3];
  if (mu.shape() != Shape{b, c} || sigma.shape() != Shape{b, c})
    throw DimensionError("adain: stats must be {B,C} = {" + std::to_string(b) + "," +
                         std::to_string(c) + "}, got mu " + shape_str(mu.shape()) + ", sigma " +
                         shape_str(sigma.shape()));

  Tensor<T> out(hs);
  Tensor<T> inv_std({b, c});
  Tensor<T> means({b, c});
  {
    const Tensor<T>& hv = h.value();
    const Tensor<T>& muv = mu.value();
    const Tensor<T>& sgv = sigma.value();
#pragma omp parallel for schedule(static) if (b * c > 2)
    for (std::size_t bc = 0; bc < b * c; ++bc) {
      const T* src = hv.ptr() + bc * n;
      T* dst = out.ptr() + bc * n;
      const auto [m, v] = detail::plane_stats(src, n);
      const T is = T(1.0 / std::sqrt(v + double(eps)));
      means[bc] = T(m);
      inv_std[bc] = is;
      const T tm = muv[bc], ts = sgv[bc];
      for (std::size_t i = 0; i < n; ++i) dst[i] = ts * ((src[i] - T(m)) * is) + tm;
    }
  }

  Tape<T>* t = h.tape;
  Var<T> y = t->make_node(std::move(out), {h.idx, mu.idx, sigma.idx});
  const std::int32_t yi = y.idx, hi = h.idx, mi = mu.idx, si = sigma.idx;
  t->set_backward(y, [t, yi, hi, mi, si, b, c, n, means = std::move(means),
                      inv_std = std::move(inv_std)]() {
    const Tensor<T>& g = t->grad_of(yi);
    const Tensor<T>& hv = t->value_of(hi);
    const Tensor<T>& sgv = t->value_of(si);
    const bool need_h = t->needs_grad(hi);
    const bool need_mu = t->needs_grad(mi);
    const bool need_sg = t->needs_grad(si);
    for (std::size_t bc = 0; bc < b * c; ++bc) {
      const T* gp = g.ptr() + bc * n;
      const T* xp = hv.ptr() + bc * n;
      const T m = means[bc], is = inv_std[bc], ts = sgv[bc];
      double gsum = 0.0, gxhat = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        gsum += double(gp[i]);
        gxhat += double(gp[i]) * double((xp[i] - m) * is);
      }
      if (need_mu) t->grad_of(mi)[bc] += T(gsum);
      if (need_sg) t->grad_of(si)[bc] += T(gxhat);
      if (need_h) {
        T* gh = t->grad_of(hi).ptr() + bc * n;
        const T mean_g = T(gsum / double(n));
        const T mean_gx = T(gxhat / double(n));
        for (std::size_t i = 0; i < n; ++i) {
          const T xhat = (xp[i] - m) * is;
          gh[i] += ts * is * (gp[i] - mean_g - xhat * mean_gx);
        }
      }
    }
  });
  return y;
}

// Instance normalization with learned per-channel affine parameters; the
// label-free stand-in used by the ablation modes. gamma, beta: {C}.
template <typename T>
Var<T> instance_norm_affine(Var<T> h, Var<T> gamma, Var<T> beta, T eps) {
  const Shape& hs = h.shape();
  if (hs.size() != 4) throw DimensionError("instance_norm_affine input must be {B,C,H,W}");
  const std::size_t b = hs[0], c = hs[1], n = hs[2] * hs[3];
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw DimensionError("instance_norm_affine: affine params must be {C}");

  Tensor<T> out(hs);
  Tensor<T> inv_std({b, c});
  Tensor<T> means({b, c});
  {
    const Tensor<T>& hv = h.value();
    const T* gmv = gamma.value().ptr();
    const T* btv = beta.value().ptr();
#pragma omp parallel for schedule(static) if (b * c > 2)
    for (std::size_t bc = 0; bc < b * c; ++bc) {
      const T* src = hv.ptr() + bc * n;
      T* dst = out.ptr() + bc * n;
      const auto [m, v] = detail::plane_stats(src, n);
      const T is = T(1.0 / std::sqrt(v + double(eps)));
      means[bc] = T(m);
      inv_std[bc] = is;
      const T ga = gmv[bc % c], be = btv[bc % c];
      for (std::size_t i = 0; i < n; ++i) dst[i] = ga * ((src[i] - T(m)) * is) + be;
    }
  }

  Tape<T>* t = h.tape;
  Var<T> y = t->make_node(std::move(out), {h.idx, gamma.idx, beta.idx});
  const std::int32_t yi = y.idx, hi = h.idx, gi = gamma.idx, bi = beta.idx;
  t->set_backward(y, [t, yi, hi, gi, bi, b, c, n, means = std::move(means),
                      inv_std = std::move(inv_std)]() {
    const Tensor<T>& g = t->grad_of(yi);
    const Tensor<T>& hv = t->value_of(hi);
    const Tensor<T>& gav = t->value_of(gi);
    const bool need_h = t->needs_grad(hi);
    const bool need_ga = t->needs_grad(gi);
    const bool need_be = t->needs_grad(bi);
    for (std::size_t bc = 0; bc < b * c; ++bc) {
      const T* gp = g.ptr() + bc * n;
      const T* xp = hv.ptr() + bc * n;
      const T m = means[bc], is = inv_std[bc], ga = gav[bc % c];
      double gsum = 0.0, gxhat = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        gsum += double(gp[i]);
        gxhat += double(gp[i]) * double((xp[i] - m) * is);
      }
      if (need_be) t->grad_of(bi)[bc % c] += T(gsum);
      if (need_ga) t->grad_of(gi)[bc % c] += T(gxhat);
      if (need_h) {
        T* gh = t->grad_of(hi).ptr() + bc * n;
        const T mean_g = T(gsum / double(n));
        const T mean_gx = T(gxhat / double(n));
        for (std::size_t i = 0; i < n; ++i) {
          const T xhat = (xp[i] - m) * is;
          gh[i] += ga * is * (gp[i] - mean_g - xhat * mean_gx);
        }
      }
    }
  });
  return y;
}

// Running statistics owned by a batch-norm layer (not differentiated).
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean({channels}, T(0)), running_var({channels}, T(1)) {}
};

// Batch normalization over {B,H,W} per channel. Training mode normalizes with
// batch statistics and optionally folds them into the running averages
// (keep-rate `momentum`); evaluation mode applies the stored affine transform,
// which makes batched and per-sample forwards identical.
template <typename T>
Var<T> batch_norm(Var<T> h, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, bool training,
                  bool update_running, T momentum, T eps) {
  const Shape& hs = h.shape();
  if (hs.size() != 4) throw DimensionError("batch_norm input must be {B,C,H,W}");
  const std::size_t b = hs[0], c = hs[1], hw = hs[2] * hs[3];
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} ||
      state.running_mean.shape != Shape{c} || state.running_var.shape != Shape{c})
    throw DimensionError("batch_norm: parameter shapes must be {C}");

  Tape<T>* t = h.tape;
  const std::size_t n = b * hw;

  Tensor<T> out(hs);
  Tensor<T> means({c}), inv_std({c});
  {
    const Tensor<T>& hv = h.value();
    const T* gav = gamma.value().ptr();
    const T* bev = beta.value().ptr();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double m, v;
      if (training) {
        double s = 0.0;
        for (std::size_t bb = 0; bb < b; ++bb) {
          const T* src = hv.ptr() + (bb * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) s += double(src[i]);
        }
        m = s / double(n);
        double vv = 0.0;
        for (std::size_t bb = 0; bb < b; ++bb) {
          const T* src = hv.ptr() + (bb * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const double d = double(src[i]) - m;
            vv += d * d;
          }
        }
        v = vv / double(n);
        if (update_running) {
          state.running_mean[ch] = momentum * state.running_mean[ch] + (T(1) - momentum) * T(m);
          state.running_var[ch] = momentum * state.running_var[ch] + (T(1) - momentum) * T(v);
        }
      } else {
        m = double(state.running_mean[ch]);
        v = double(state.running_var[ch]);
      }
      const T is = T(1.0 / std::sqrt(v + double(eps)));
      means[ch] = T(m);
      inv_std[ch] = is;
      for (std::size_t bb = 0; bb < b; ++bb) {
        const T* src = hv.ptr() + (bb * c + ch) * hw;
        T* dst = out.ptr() + (bb * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i)
          dst[i] = gav[ch] * ((src[i] - T(m)) * is) + bev[ch];
      }
    }
  }

  Var<T> y = t->make_node(std::move(out), {h.idx, gamma.idx, beta.idx});
  const std::int32_t yi = y.idx, hi = h.idx, gi = gamma.idx, bi = beta.idx;
  t->set_backward(y, [t, yi, hi, gi, bi, b, c, hw, n, training, means = std::move(means),
                      inv_std = std::move(inv_std)]() {
    const Tensor<T>& g = t->grad_of(yi);
    const Tensor<T>& hv = t->value_of(hi);
    const Tensor<T>& gav = t->value_of(gi);
    const bool need_h = t->needs_grad(hi);
    const bool need_ga = t->needs_grad(gi);
    const bool need_be = t->needs_grad(bi);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T m = means[ch], is = inv_std[ch], ga = gav[ch];
      double gsum = 0.0, gxhat = 0.0;
      for (std::size_t bb = 0; bb < b; ++bb) {
        const T* gp = g.ptr() + (bb * c + ch) * hw;
        const T* xp = hv.ptr() + (bb * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          gsum += double(gp[i]);
          gxhat += double(gp[i]) * double((xp[i] - m) * is);
        }
      }
      if (need_be) t->grad_of(bi)[ch] += T(gsum);
      if (need_ga) t->grad_of(gi)[ch] += T(gxhat);
      if (need_h) {
        const T mean_g = training ? T(gsum / double(n)) : T(0);
        const T mean_gx = training ? T(gxhat / double(n)) : T(0);
        for (std::size_t bb = 0; bb < b; ++bb) {
          const T* gp = g.ptr() + (bb * c + ch) * hw;
          const T* xp = hv.ptr() + (bb * c + ch) * hw;
          T* gh = t->grad_of(hi).ptr() + (bb * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const T xhat = (xp[i] - m) * is;
            gh[i] += ga * is * (gp[i] - mean_g - xhat * mean_gx);
          }
        }
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Wavelet routing ops
// ---------------------------------------------------------------------------

template <typename T>
struct SubbandVars {
  Var<T> ll, lh, hl, hh;
};

namespace detail {

enum class Band { LL, LH, HL, HH };

// Adjoint of one subband of the decomposition: scatter g back onto the 2x2
// blocks with the band's sign pattern (the transform is orthogonal, so the
// adjoint coincides with the inverse restricted to that band).
template <typename T>
inline void haar_band_adjoint_add(Band band, const T* gb, std::size_t h2, std::size_t w2, T* dst) {
  const std::size_t w = 2 * w2;
  T sa = 1, sb = 1, sc = 1, sd = 1;
  switch (band) {
    case Band::LL: break;
    case Band::LH: sc = sd = -1; break;
    case Band::HL: sb = sd = -1; break;
    case Band::HH: sb = sc = -1; break;
  }
  for (std::size_t y = 0; y < h2; ++y) {
    const T* gp = gb + y * w2;
    T* r0 = dst + (2 * y) * w;
    T* r1 = dst + (2 * y + 1) * w;
    for (std::size_t x = 0; x < w2; ++x) {
      const T v = gp[x] / T(2);
      r0[2 * x] += sa * v;
      r0[2 * x + 1] += sb * v;
      r1[2 * x] += sc * v;
      r1[2 * x + 1] += sd * v;
    }
  }
}

}  // namespace detail

// Haar analysis on every channel plane of {B,C,H,W}; the generator's
// down-sampling operator.
template <typename T>
SubbandVars<T> haar_down(Var<T> x) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw DimensionError("haar_down input must be {B,C,H,W}");
  if (xs[2] % 2 != 0)
    throw DimensionError("haar_down: height " + std::to_string(xs[2]) + " is odd");
  if (xs[3] % 2 != 0) throw DimensionError("haar_down: width " + std::to_string(xs[3]) + " is odd");
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  const std::size_t h2 = h / 2, w2 = w / 2, sub_n = h2 * w2;

  Tensor<T> ll({xs[0], xs[1], h2, w2}), lh(ll.shape), hl(ll.shape), hh(ll.shape);
  {
    const Tensor<T>& xv = x.value();
    for (std::size_t p = 0; p < planes; ++p)
      detail::haar_decompose_plane(xv.ptr() + p * h * w, h, w, ll.ptr() + p * sub_n,
                                   lh.ptr() + p * sub_n, hl.ptr() + p * sub_n,
                                   hh.ptr() + p * sub_n);
  }

  Tape<T>* t = x.tape;
  const std::int32_t xi = x.idx;
  auto band_node = [&](Tensor<T> v, detail::Band band) {
    Var<T> y = t->make_node(std::move(v), {xi});
    const std::int32_t yi = y.idx;
    t->set_backward(y, [t, yi, xi, band, planes, h2, w2, sub_n]() {
      if (!t->needs_grad(xi)) return;
      const Tensor<T>& g = t->grad_of(yi);
      Tensor<T>& gx = t->grad_of(xi);
      const std::size_t full = 4 * sub_n;
      for (std::size_t p = 0; p < planes; ++p)
        detail::haar_band_adjoint_add(band, g.ptr() + p * sub_n, h2, w2, gx.ptr() + p * full);
    });
    return y;
  };
  return SubbandVars<T>{band_node(std::move(ll), detail::Band::LL),
                        band_node(std::move(lh), detail::Band::LH),
                        band_node(std::move(hl), detail::Band::HL),
                        band_node(std::move(hh), detail::Band::HH)};
}

// Haar synthesis from four {B,C,H/2,W/2} subbands; the up-sampling operator.
template <typename T>
Var<T> haar_up(Var<T> ll, Var<T> lh, Var<T> hl, Var<T> hh) {
  const Shape& s = ll.shape();
  if (s.size() != 4) throw DimensionError("haar_up subbands must be {B,C,H,W}");
  if (lh.shape() != s || hl.shape() != s || hh.shape() != s)
    throw DimensionError("haar_up: subband shapes disagree: ll " + shape_str(s) + ", lh " +
                         shape_str(lh.shape()) + ", hl " + shape_str(hl.shape()) + ", hh " +
                         shape_str(hh.shape()));
  const std::size_t planes = s[0] * s[1], h2 = s[2], w2 = s[3], sub_n = h2 * w2;

  Tensor<T> out({s[0], s[1], 2 * h2, 2 * w2});
  {
    const Tensor<T>&a = ll.value(), &b = lh.value(), &c = hl.value(), &d = hh.value();
    for (std::size_t p = 0; p < planes; ++p)
      detail::haar_reconstruct_plane(a.ptr() + p * sub_n, b.ptr() + p * sub_n,
                                     c.ptr() + p * sub_n, d.ptr() + p * sub_n, h2, w2,
                                     out.ptr() + p * 4 * sub_n);
  }

  Tape<T>* t = ll.tape;
  Var<T> y = t->make_node(std::move(out), {ll.idx, lh.idx, hl.idx, hh.idx});
  const std::int32_t yi = y.idx;
  const std::int32_t in_idx[4] = {ll.idx, lh.idx, hl.idx, hh.idx};
  t->set_backward(y, [t, yi, i0 = in_idx[0], i1 = in_idx[1], i2 = in_idx[2], i3 = in_idx[3],
                      planes, h2, w2, sub_n]() {
    const Tensor<T>& g = t->grad_of(yi);
    Tensor<T> gll({planes, sub_n}), glh({planes, sub_n}), ghl({planes, sub_n}),
        ghh({planes, sub_n});
    for (std::size_t p = 0; p < planes; ++p)
      detail::haar_decompose_plane(g.ptr() + p * 4 * sub_n, 2 * h2, 2 * w2,
                                   gll.ptr() + p * sub_n, glh.ptr() + p * sub_n,
                                   ghl.ptr() + p * sub_n, ghh.ptr() + p * sub_n);
    auto push = [&](std::int32_t idx, Tensor<T>& gb) {
      if (!t->needs_grad(idx)) return;
      Tensor<T>& dst = t->grad_of(idx);
      for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += gb[i];
    };
    push(i0, gll);
    push(i1, glh);
    push(i2, ghl);
    push(i3, ghh);
  });
  return y;
}

// Channel concatenation of {B,Ca,H,W} and {B,Cb,H,W}.
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
    throw DimensionError("concat_channels: incompatible shapes " + shape_str(as) + " and " +
                         shape_str(bs));
  const std::size_t batch = as[0], ca = as[1], cb = bs[1], hw = as[2] * as[3];

  Tensor<T> out({batch, ca + cb, as[2], as[3]});
  {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t s = 0; s < batch; ++s) {
      std::copy_n(av.ptr() + s * ca * hw, ca * hw, out.ptr() + s * (ca + cb) * hw);
      std::copy_n(bv.ptr() + s * cb * hw, cb * hw, out.ptr() + s * (ca + cb) * hw + ca * hw);
    }
  }

  Tape<T>* t = a.tape;
  Var<T> y = t->make_node(std::move(out), {a.idx, b.idx});
  const std::int32_t yi = y.idx, ai = a.idx, bi = b.idx;
  t->set_backward(y, [t, yi, ai, bi, batch, ca, cb, hw]() {
    const Tensor<T>& g = t->grad_of(yi);
    if (t->needs_grad(ai)) {
      Tensor<T>& ga = t->grad_of(ai);
      for (std::size_t s = 0; s < batch; ++s) {
        const T* src = g.ptr() + s * (ca + cb) * hw;
        T* dst = ga.ptr() + s * ca * hw;
        for (std::size_t i = 0; i < ca * hw; ++i) dst[i] += src[i];
      }
    }
    if (t->needs_grad(bi)) {
      Tensor<T>& gb = t->grad_of(bi);
      for (std::size_t s = 0; s < batch; ++s) {
        const T* src = g.ptr() + s * (ca + cb) * hw + ca * hw;
        T* dst = gb.ptr() + s * cb * hw;
        for (std::size_t i = 0; i < cb * hw; ++i) dst[i] += src[i];
      }
    }
  });
  return y;
}

}  // namespace restore
