#pragma once

// Neural-network building blocks templated on the scalar type so the same
// graph can train in float and be finite-difference-checked in double.
// Every layer implements forward(), backward() (which consumes the cached
// forward state), and collect() exposing named parameter/grad pairs.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "davse/tensor.hpp"

namespace davse::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

// ---------------------------------------------------------------------------
// Conv2d: [B,Cin,H,W] -> [B,Cout,Ho,Wo], zero padding, im2col + GEMM.
// ---------------------------------------------------------------------------
template <typename T>
struct Conv2d {
  int cin = 0, cout = 0, kh = 1, kw = 1, sh = 1, sw = 1, ph = 0, pw = 0;
  Param<T> w, b;  // w: [Cout, Cin*kh*kw]
  Tensor<T> x_;   // cached input
  AlignedVec<T> cols_;

  Conv2d() = default;
  Conv2d(int cin_, int cout_, int kh_, int kw_, int sh_, int sw_, int ph_, int pw_,
         Rng& rng)
      : cin(cin_), cout(cout_), kh(kh_), kw(kw_), sh(sh_), sw(sw_), ph(ph_), pw(pw_),
        w({cout_, cin_ * kh_ * kw_}), b({cout_}) {
    w.init_kaiming(rng, cin * kh * kw);
  }

  int out_h(int h) const { return (h + 2 * ph - kh) / sh + 1; }
  int out_w(int wd) const { return (wd + 2 * pw - kw) / sw + 1; }

  void im2col(const T* x, int h, int wd, int ho, int wo, T* cols) const {
    const int hw = h * wd;
    for (int c = 0; c < cin; ++c) {
      for (int ki = 0; ki < kh; ++ki) {
        for (int kj = 0; kj < kw; ++kj) {
          T* row = cols + static_cast<size_t>((c * kh + ki) * kw + kj) * ho * wo;
          for (int i = 0; i < ho; ++i) {
            const int hi = i * sh - ph + ki;
            T* dst = row + static_cast<size_t>(i) * wo;
            if (hi < 0 || hi >= h) {
              std::fill(dst, dst + wo, T(0));
              continue;
            }
            const T* src = x + static_cast<size_t>(c) * hw + static_cast<size_t>(hi) * wd;
            for (int j = 0; j < wo; ++j) {
              const int wi = j * sw - pw + kj;
              dst[j] = (wi >= 0 && wi < wd) ? src[wi] : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const T* cols, int h, int wd, int ho, int wo, T* dx) const {
    const int hw = h * wd;
    for (int c = 0; c < cin; ++c) {
      for (int ki = 0; ki < kh; ++ki) {
        for (int kj = 0; kj < kw; ++kj) {
          const T* row = cols + static_cast<size_t>((c * kh + ki) * kw + kj) * ho * wo;
          for (int i = 0; i < ho; ++i) {
            const int hi = i * sh - ph + ki;
            if (hi < 0 || hi >= h) continue;
            T* dst = dx + static_cast<size_t>(c) * hw + static_cast<size_t>(hi) * wd;
            const T* src = row + static_cast<size_t>(i) * wo;
            for (int j = 0; j < wo; ++j) {
              const int wi = j * sw - pw + kj;
              if (wi >= 0 && wi < wd) dst[wi] += src[j];
            }
          }
        }
      }
    }
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int B = x.dim(0), h = x.dim(2), wd = x.dim(3);
    if (x.dim(1) != cin) throw std::invalid_argument("conv2d: channel mismatch");
    const int ho = out_h(h), wo = out_w(wd);
    const int k = cin * kh * kw, hw = ho * wo;
    Tensor<T> y({B, cout, ho, wo});
    cols_.resize(static_cast<size_t>(k) * hw);
    CMatMap<T> wm(w.value.ptr(), cout, k);
    for (int bi = 0; bi < B; ++bi) {
      im2col(x.ptr() + static_cast<size_t>(bi) * cin * h * wd, h, wd, ho, wo,
             cols_.data());
      CMatMap<T> cm(cols_.data(), k, hw);
      MatMap<T> ym(y.ptr() + static_cast<size_t>(bi) * cout * hw, cout, hw);
      ym.noalias() = wm * cm;
      for (int c = 0; c < cout; ++c) ym.row(c).array() += b.value.data[c];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int B = x_.dim(0), h = x_.dim(2), wd = x_.dim(3);
    const int ho = dy.dim(2), wo = dy.dim(3);
    const int k = cin * kh * kw, hw = ho * wo;
    Tensor<T> dx(x_.shape);
    AlignedVec<T> dcols(static_cast<size_t>(k) * hw);
    CMatMap<T> wm(w.value.ptr(), cout, k);
    MatMap<T> dwm(w.grad.ptr(), cout, k);
    for (int bi = 0; bi < B; ++bi) {
      im2col(x_.ptr() + static_cast<size_t>(bi) * cin * h * wd, h, wd, ho, wo,
             cols_.data());
      CMatMap<T> cm(cols_.data(), k, hw);
      CMatMap<T> dym(dy.ptr() + static_cast<size_t>(bi) * cout * hw, cout, hw);
      dwm.noalias() += dym * cm.transpose();
      for (int c = 0; c < cout; ++c) b.grad.data[c] += dym.row(c).sum();
      MatMap<T> dcm(dcols.data(), k, hw);
      dcm.noalias() = wm.transpose() * dym;
      col2im(dcols.data(), h, wd, ho, wo,
             dx.ptr() + static_cast<size_t>(bi) * cin * h * wd);
    }
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out, const std::string& p) {
    out.push_back(w.ref(p + ".w"));
    out.push_back(b.ref(p + ".b"));
  }
};

// ---------------------------------------------------------------------------
// Transposed convolution along frequency only: [B,Cin,1,T] -> [B,Cout,KH,T].
// ---------------------------------------------------------------------------
template <typename T>
struct ConvTransposeFreq {
  int cin = 0, cout = 0, khe = 3;
  Param<T> w, b;  // w: [Cin, Cout, KH]
  Tensor<T> x_;

  ConvTransposeFreq() = default;
  ConvTransposeFreq(int cin_, int cout_, int kh_, Rng& rng)
      : cin(cin_), cout(cout_), khe(kh_), w({cin_, cout_, kh_}), b({cout_}) {
    w.init_kaiming(rng, cin);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int B = x.dim(0), tt = x.dim(3);
    if (x.dim(1) != cin || x.dim(2) != 1)
      throw std::invalid_argument("convtranspose: expected [B,C,1,T]");
    Tensor<T> y({B, cout, khe, tt});
    for (int bi = 0; bi < B; ++bi)
      for (int co = 0; co < cout; ++co)
        for (int f = 0; f < khe; ++f) {
          T* dst = y.ptr() + (((static_cast<size_t>(bi) * cout + co) * khe + f) * tt);
          for (int t = 0; t < tt; ++t) dst[t] = b.value.data[co];
          for (int ci = 0; ci < cin; ++ci) {
            const T wv = w.value.data[(static_cast<size_t>(ci) * cout + co) * khe + f];
            const T* src = x.ptr() + ((static_cast<size_t>(bi) * cin + ci) * tt);
            for (int t = 0; t < tt; ++t) dst[t] += wv * src[t];
          }
        }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int B = x_.dim(0), tt = x_.dim(3);
    Tensor<T> dx(x_.shape);
    for (int bi = 0; bi < B; ++bi)
      for (int co = 0; co < cout; ++co)
        for (int f = 0; f < khe; ++f) {
          const T* dyp = dy.ptr() + (((static_cast<size_t>(bi) * cout + co) * khe + f) * tt);
          for (int t = 0; t < tt; ++t) b.grad.data[co] += dyp[t];
          for (int ci = 0; ci < cin; ++ci) {
            const size_t wi = (static_cast<size_t>(ci) * cout + co) * khe + f;
            const T* src = x_.ptr() + ((static_cast<size_t>(bi) * cin + ci) * tt);
            T* dxp = dx.ptr() + ((static_cast<size_t>(bi) * cin + ci) * tt);
            T acc = 0;
            const T wv = w.value.data[wi];
            for (int t = 0; t < tt; ++t) {
              acc += dyp[t] * src[t];
              dxp[t] += wv * dyp[t];
            }
            w.grad.data[wi] += acc;
          }
        }
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out, const std::string& p) {
    out.push_back(w.ref(p + ".w"));
    out.push_back(b.ref(p + ".b"));
  }
};

// ---------------------------------------------------------------------------
// Conv3d for the visual front-end: [B,Cin,N,H,W] -> [B,Cout,N,Ho,Wo],
// temporal stride 1 (length preserved), spatial stride/pad configurable.
// ---------------------------------------------------------------------------
template <typename T>
struct Conv3d {
  int cin = 0, cout = 0, kt = 5, kh = 7, kw = 7, sh = 2, sw = 2, ph = 3, pw = 3;
  Param<T> w, b;  // w: [Cout, Cin*kt*kh*kw]
  Tensor<T> x_;
  AlignedVec<T> cols_;

  Conv3d() = default;
  Conv3d(int cin_, int cout_, int kt_, int kh_, int kw_, int sh_, int sw_, int ph_,
         int pw_, Rng& rng)
      : cin(cin_), cout(cout_), kt(kt_), kh(kh_), kw(kw_), sh(sh_), sw(sw_), ph(ph_),
        pw(pw_), w({cout_, cin_ * kt_ * kh_ * kw_}), b({cout_}) {
    w.init_kaiming(rng, cin * kt * kh * kw);
  }

  // spatial-only im2col of frame nf; xb points at one batch item laid out
  // [Cin,N,H,W], so channel c of frame nf lives at (c*n_frames+nf)*h*w
  void im2col_frame(const T* xb, int nf, int n_frames, int h, int wd, int ho, int wo,
                    T* cols) const {
    const size_t plane = static_cast<size_t>(h) * wd;
    for (int c = 0; c < cin; ++c) {
      const T* frame = xb + (static_cast<size_t>(c) * n_frames + nf) * plane;
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj) {
          T* row = cols + static_cast<size_t>((c * kh + ki) * kw + kj) * ho * wo;
          for (int i = 0; i < ho; ++i) {
            const int hi = i * sh - ph + ki;
            T* dst = row + static_cast<size_t>(i) * wo;
            if (hi < 0 || hi >= h) {
              std::fill(dst, dst + wo, T(0));
              continue;
            }
            const T* src = frame + static_cast<size_t>(hi) * wd;
            for (int j = 0; j < wo; ++j) {
              const int wi = j * sw - pw + kj;
              dst[j] = (wi >= 0 && wi < wd) ? src[wi] : T(0);
            }
          }
        }
    }
  }

  void col2im_frame(const T* cols, int nf, int n_frames, int h, int wd, int ho,
                    int wo, T* dxb) const {
    const size_t plane = static_cast<size_t>(h) * wd;
    for (int c = 0; c < cin; ++c) {
      T* dframe = dxb + (static_cast<size_t>(c) * n_frames + nf) * plane;
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj) {
          const T* row = cols + static_cast<size_t>((c * kh + ki) * kw + kj) * ho * wo;
          for (int i = 0; i < ho; ++i) {
            const int hi = i * sh - ph + ki;
            if (hi < 0 || hi >= h) continue;
            T* dst = dframe + static_cast<size_t>(hi) * wd;
            const T* src = row + static_cast<size_t>(i) * wo;
            for (int j = 0; j < wo; ++j) {
              const int wi = j * sw - pw + kj;
              if (wi >= 0 && wi < wd) dst[wi] += src[j];
            }
          }
        }
    }
  }

  // weight slice for one temporal tap: [cout, cin*kh*kw]
  RowMat<T> tap_weights(const T* src, int f) const {
    const int ksp = cin * kh * kw;
    RowMat<T> wf(cout, ksp);
    for (int co = 0; co < cout; ++co)
      for (int c = 0; c < cin; ++c)
        for (int s = 0; s < kh * kw; ++s)
          wf(co, c * kh * kw + s) =
              src[static_cast<size_t>(co) * cin * kt * kh * kw +
                  (static_cast<size_t>(c) * kt + f) * kh * kw + s];
    return wf;
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int B = x.dim(0), n_frames = x.dim(2), h = x.dim(3), wd = x.dim(4);
    if (x.dim(1) != cin) throw std::invalid_argument("conv3d: channel mismatch");
    const int ho = (h + 2 * ph - kh) / sh + 1;
    const int wo = (wd + 2 * pw - kw) / sw + 1;
    const int ksp = cin * kh * kw, hw = ho * wo;
    const int pt = (kt - 1) / 2;
    Tensor<T> y({B, cout, n_frames, ho, wo});
    std::vector<RowMat<T>> wtap;
    wtap.reserve(kt);
    for (int f = 0; f < kt; ++f) wtap.push_back(tap_weights(w.value.ptr(), f));
    cols_.resize(static_cast<size_t>(n_frames) * ksp * hw);
    RowMat<T> ym(cout, hw);
    const size_t in_frame = static_cast<size_t>(cin) * h * wd;
    for (int bi = 0; bi < B; ++bi) {
      const T* xb = x.ptr() + static_cast<size_t>(bi) * n_frames * in_frame;
      for (int nf = 0; nf < n_frames; ++nf)
        im2col_frame(xb, nf, n_frames, h, wd, ho, wo,
                     cols_.data() + static_cast<size_t>(nf) * ksp * hw);
      for (int n = 0; n < n_frames; ++n) {
        for (int c = 0; c < cout; ++c) ym.row(c).setConstant(b.value.data[c]);
        for (int f = 0; f < kt; ++f) {
          const int nf = n - pt + f;
          if (nf < 0 || nf >= n_frames) continue;
          CMatMap<T> cm(cols_.data() + static_cast<size_t>(nf) * ksp * hw, ksp, hw);
          ym.noalias() += wtap[static_cast<size_t>(f)] * cm;
        }
        for (int c = 0; c < cout; ++c)
          std::copy(ym.row(c).data(), ym.row(c).data() + hw,
                    y.ptr() + (((static_cast<size_t>(bi) * cout + c) * n_frames + n) *
                               hw));
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int B = x_.dim(0), n_frames = x_.dim(2), h = x_.dim(3), wd = x_.dim(4);
    const int ho = dy.dim(3), wo = dy.dim(4);
    const int ksp = cin * kh * kw, hw = ho * wo;
    const int pt = (kt - 1) / 2;
    Tensor<T> dx(x_.shape);
    std::vector<RowMat<T>> wtap, dwtap;
    for (int f = 0; f < kt; ++f) {
      wtap.push_back(tap_weights(w.value.ptr(), f));
      dwtap.emplace_back(RowMat<T>::Zero(cout, ksp));
    }
    cols_.resize(static_cast<size_t>(n_frames) * ksp * hw);
    AlignedVec<T> dcols(static_cast<size_t>(n_frames) * ksp * hw);
    RowMat<T> dym(cout, hw);
    const size_t in_frame = static_cast<size_t>(cin) * h * wd;
    for (int bi = 0; bi < B; ++bi) {
      const T* xb = x_.ptr() + static_cast<size_t>(bi) * n_frames * in_frame;
      T* dxb = dx.ptr() + static_cast<size_t>(bi) * n_frames * in_frame;
      for (int nf = 0; nf < n_frames; ++nf)
        im2col_frame(xb, nf, n_frames, h, wd, ho, wo,
                     cols_.data() + static_cast<size_t>(nf) * ksp * hw);
      std::fill(dcols.begin(), dcols.end(), T(0));
      for (int n = 0; n < n_frames; ++n) {
        for (int c = 0; c < cout; ++c) {
          const T* src = dy.ptr() +
                         (((static_cast<size_t>(bi) * cout + c) * n_frames + n) * hw);
          std::copy(src, src + hw, dym.row(c).data());
          b.grad.data[c] += dym.row(c).sum();
        }
        for (int f = 0; f < kt; ++f) {
          const int nf = n - pt + f;
          if (nf < 0 || nf >= n_frames) continue;
          CMatMap<T> cm(cols_.data() + static_cast<size_t>(nf) * ksp * hw, ksp, hw);
          dwtap[static_cast<size_t>(f)].noalias() += dym * cm.transpose();
          MatMap<T> dcm(dcols.data() + static_cast<size_t>(nf) * ksp * hw, ksp, hw);
          dcm.noalias() += wtap[static_cast<size_t>(f)].transpose() * dym;
        }
      }
      for (int nf = 0; nf < n_frames; ++nf)
        col2im_frame(dcols.data() + static_cast<size_t>(nf) * ksp * hw, nf, n_frames,
                     h, wd, ho, wo, dxb);
    }
    // fold the per-tap weight grads back into the [cout, cin*kt*kh*kw] layout
    for (int f = 0; f < kt; ++f)
      for (int co = 0; co < cout; ++co)
        for (int c = 0; c < cin; ++c)
          for (int s = 0; s < kh * kw; ++s)
            w.grad.data[static_cast<size_t>(co) * cin * kt * kh * kw +
                        (static_cast<size_t>(c) * kt + f) * kh * kw + s] +=
                dwtap[static_cast<size_t>(f)](co, c * kh * kw + s);
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out, const std::string& p) {
    out.push_back(w.ref(p + ".w"));
    out.push_back(b.ref(p + ".b"));
  }
};

// ---------------------------------------------------------------------------
// Depthwise Conv2d (3x3), one filter per channel.
// ---------------------------------------------------------------------------
template <typename T>
struct DepthwiseConv2d {
  int ch = 0, kh = 3, kw = 3, sh = 1, sw = 1, ph = 1, pw = 1;
  Param<T> w, b;  // w: [C, kh*kw]
  Tensor<T> x_;

  DepthwiseConv2d() = default;
  DepthwiseConv2d(int ch_, int k, int s, Rng& rng)
      : ch(ch_), kh(k), kw(k), sh(s), sw(s), ph(k / 2), pw(k / 2),
        w({ch_, k * k}), b({ch_}) {
    w.init_kaiming(rng, k * k);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int B = x.dim(0), h = x.dim(2), wd = x.dim(3);
    const int ho = (h + 2 * ph - kh) / sh + 1, wo = (wd + 2 * pw - kw) / sw + 1;
    Tensor<T> y({B, ch, ho, wo});
    for (int bi = 0; bi < B; ++bi)
      for (int c = 0; c < ch; ++c) {
        const T* xp = x.ptr() + (static_cast<size_t>(bi) * ch + c) * h * wd;
        T* yp = y.ptr() + (static_cast<size_t>(bi) * ch + c) * ho * wo;
        const T* wp = w.value.ptr() + static_cast<size_t>(c) * kh * kw;
        for (int i = 0; i < ho; ++i)
          for (int j = 0; j < wo; ++j) {
            T acc = b.value.data[c];
            for (int ki = 0; ki < kh; ++ki) {
              const int hi = i * sh - ph + ki;
              if (hi < 0 || hi >= h) continue;
              for (int kj = 0; kj < kw; ++kj) {
                const int wi = j * sw - pw + kj;
                if (wi >= 0 && wi < wd) acc += wp[ki * kw + kj] * xp[hi * wd + wi];
              }
            }
            yp[static_cast<size_t>(i) * wo + j] = acc;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int B = x_.dim(0), h = x_.dim(2), wd = x_.dim(3);
    const int ho = dy.dim(2), wo = dy.dim(3);
    Tensor<T> dx(x_.shape);
    for (int bi = 0; bi < B; ++bi)
      for (int c = 0; c < ch; ++c) {
        const T* xp = x_.ptr() + (static_cast<size_t>(bi) * ch + c) * h * wd;
        T* dxp = dx.ptr() + (static_cast<size_t>(bi) * ch + c) * h * wd;
        const T* dyp = dy.ptr() + (static_cast<size_t>(bi) * ch + c) * ho * wo;
        const T* wp = w.value.ptr() + static_cast<size_t>(c) * kh * kw;
        T* dwp = w.grad.ptr() + static_cast<size_t>(c) * kh * kw;
        for (int i = 0; i < ho; ++i)
          for (int j = 0; j < wo; ++j) {
            const T g = dyp[static_cast<size_t>(i) * wo + j];
            b.grad.data[c] += g;
            for (int ki = 0; ki < kh; ++ki) {
              const int hi = i * sh - ph + ki;
              if (hi < 0 || hi >= h) continue;
              for (int kj = 0; kj < kw; ++kj) {
                const int wi = j * sw - pw + kj;
                if (wi >= 0 && wi < wd) {
                  dwp[ki * kw + kj] += g * xp[hi * wd + wi];
                  dxp[hi * wd + wi] += g * wp[ki * kw + kj];
                }
              }
            }
          }
      }
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out, const std::string& p) {
    out.push_back(w.ref(p + ".w"));
    out.push_back(b.ref(p + ".b"));
  }
};

// ---------------------------------------------------------------------------
// Conv1d over [B,C,N] with dilation, symmetric "same" padding.
// ---------------------------------------------------------------------------
template <typename T>
struct Conv1d {
  int cin = 0, cout = 0, k = 3, dil = 1;
  Param<T> w, b;  // w: [Cout, Cin, k]
  Tensor<T> x_;

  Conv1d() = default;
  Conv1d(int cin_, int cout_, int k_, int dil_, Rng& rng)
      : cin(cin_), cout(cout_), k(k_), dil(dil_), w({cout_, cin_, k_}), b({cout_}) {
    w.init_kaiming(rng, cin * k);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int B = x.dim(0), n = x.dim(2);
    const int pad = dil * (k - 1) / 2;
    Tensor<T> y({B, cout, n});
    for (int bi = 0; bi < B; ++bi)
      for (int co = 0; co < cout; ++co) {
        T* yp = y.ptr() + (static_cast<size_t>(bi) * cout + co) * n;
        for (int t = 0; t < n; ++t) yp[t] = b.value.data[co];
        for (int ci = 0; ci < cin; ++ci) {
          const T* xp = x.ptr() + (static_cast<size_t>(bi) * cin + ci) * n;
          const T* wp = w.value.ptr() + (static_cast<size_t>(co) * cin + ci) * k;
          for (int kk = 0; kk < k; ++kk) {
            const int off = kk * dil - pad;
            const T wv = wp[kk];
            const int lo = std::max(0, -off), hi = std::min(n, n - off);
            for (int t = lo; t < hi; ++t) yp[t] += wv * xp[t + off];
          }
        }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int B = x_.dim(0), n = x_.dim(2);
    const int pad = dil * (k - 1) / 2;
    Tensor<T> dx(x_.shape);
    for (int bi = 0; bi < B; ++bi)
      for (int co = 0; co < cout; ++co) {
        const T* dyp = dy.ptr() + (static_cast<size_t>(bi) * cout + co) * n;
        for (int t = 0; t < n; ++t) b.grad.data[co] += dyp[t];
        for (int ci = 0; ci < cin; ++ci) {
          const T* xp = x_.ptr() + (static_cast<size_t>(bi) * cin + ci) * n;
          T* dxp = dx.ptr() + (static_cast<size_t>(bi) * cin + ci) * n;
          const T* wp = w.value.ptr() + (static_cast<size_t>(co) * cin + ci) * k;
          T* dwp = w.grad.ptr() + (static_cast<size_t>(co) * cin + ci) * k;
          for (int kk = 0; kk < k; ++kk) {
            const int off = kk * dil - pad;
            const T wv = wp[kk];
            T acc = 0;
            const int lo = std::max(0, -off), hi = std::min(n, n - off);
            for (int t = lo; t < hi; ++t) {
              acc += dyp[t] * xp[t + off];
              dxp[t + off] += wv * dyp[t];
            }
            dwp[kk] += acc;
          }
        }
      }
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out, const std::string& p) {
    out.push_back(w.ref(p + ".w"));
    out.push_back(b.ref(p + ".b"));
  }
};

// ---------------------------------------------------------------------------
// BatchNorm over axis 1 of [B,C,...]; train mode uses batch statistics,
// eval mode the running estimates.
// ---------------------------------------------------------------------------
template <typename T>
struct BatchNorm {
  int ch = 0;
  double eps = 1e-5, momentum = 0.1;
  Param<T> gamma, beta;
  Tensor<T> run_mean, run_var;  // not trained; saved in checkpoints
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  int b_ = 0, m_ = 0;

  BatchNorm() = default;
  explicit BatchNorm(int ch_) : ch(ch_), gamma({ch_}), beta({ch_}), run_mean({ch_}),
                                run_var({ch_}) {
    std::fill(gamma.value.data.begin(), gamma.value.data.end(), T(1));
    std::fill(run_var.data.begin(), run_var.data.end(), T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    const int B = x.dim(0);
    if (x.dim(1) != ch) throw std::invalid_argument("batchnorm: channel mismatch");
    int m = 1;
    for (int i = 2; i < x.rank(); ++i) m *= x.dim(i);
    b_ = B;
    m_ = m;
    Tensor<T> y(x.shape);
    inv_std_.assign(ch, T(0));
    if (train) xhat_ = Tensor<T>(x.shape);
    const size_t cm = static_cast<size_t>(m);
    for (int c = 0; c < ch; ++c) {
      T mean, istd;
      if (train) {
        double mu = 0.0;
        for (int bi = 0; bi < B; ++bi) {
          const T* xp = x.ptr() + (static_cast<size_t>(bi) * ch + c) * cm;
          for (int i = 0; i < m; ++i) mu += xp[i];
        }
        mu /= static_cast<double>(B) * m;
        double var = 0.0;
        for (int bi = 0; bi < B; ++bi) {
          const T* xp = x.ptr() + (static_cast<size_t>(bi) * ch + c) * cm;
          for (int i = 0; i < m; ++i) {
            const double d = xp[i] - mu;
            var += d * d;
          }
        }
        const double n = static_cast<double>(B) * m;
        var /= n;
        mean = static_cast<T>(mu);
        istd = static_cast<T>(1.0 / std::sqrt(var + eps));
        const double unbiased = (n > 1) ? var * n / (n - 1) : var;
        run_mean.data[c] = static_cast<T>((1.0 - momentum) * run_mean.data[c] +
                                          momentum * mu);
        run_var.data[c] = static_cast<T>((1.0 - momentum) * run_var.data[c] +
                                         momentum * unbiased);
      } else {
        mean = run_mean.data[c];
        istd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(run_var.data[c]) + eps));
      }
      inv_std_[c] = istd;
      const T g = gamma.value.data[c], be = beta.value.data[c];
      for (int bi = 0; bi < B; ++bi) {
        const T* xp = x.ptr() + (static_cast<size_t>(bi) * ch + c) * cm;
        T* yp = y.ptr() + (static_cast<size_t>(bi) * ch + c) * cm;
        T* hp = train ? xhat_.ptr() + (static_cast<size_t>(bi) * ch + c) * cm : nullptr;
        for (int i = 0; i < m; ++i) {
          const T xh = (xp[i] - mean) * istd;
          if (hp) hp[i] = xh;
          yp[i] = g * xh + be;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int B = b_, m = m_;
    const double n = static_cast<double>(B) * m;
    Tensor<T> dx(dy.shape);
    const size_t cm = static_cast<size_t>(m);
    for (int c = 0; c < ch; ++c) {
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (int bi = 0; bi < B; ++bi) {
        const T* dp = dy.ptr() + (static_cast<size_t>(bi) * ch + c) * cm;
        const T* hp = xhat_.ptr() + (static_cast<size_t>(bi) * ch + c) * cm;
        for (int i = 0; i < m; ++i) {
          sum_dy += dp[i];
          sum_dy_xh += dp[i] * hp[i];
        }
      }
      gamma.grad.data[c] += static_cast<T>(sum_dy_xh);
      beta.grad.data[c] += static_cast<T>(sum_dy);
      const double g_istd_n = gamma.value.data[c] * inv_std_[c] / n;
      for (int bi = 0; bi < B; ++bi) {
        const T* dp = dy.ptr() + (static_cast<size_t>(bi) * ch + c) * cm;
        const T* hp = xhat_.ptr() + (static_cast<size_t>(bi) * ch + c) * cm;
        T* xp = dx.ptr() + (static_cast<size_t>(bi) * ch + c) * cm;
        for (int i = 0; i < m; ++i)
          xp[i] = static_cast<T>(g_istd_n * (n * dp[i] - sum_dy - hp[i] * sum_dy_xh));
      }
    }
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out, const std::string& p) {
    out.push_back(gamma.ref(p + ".gamma"));
    out.push_back(beta.ref(p + ".beta"));
  }
  // Running stats are persisted but never touched by the optimizer.
  void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out,
                     const std::string& p) {
    out.push_back({p + ".run_mean", &run_mean});
    out.push_back({p + ".run_var", &run_var});
  }
};

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------
template <typename T>
struct ReLU {
  Tensor<T> y_;
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (auto& v : y_.data) v = std::max(v, T(0));
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape);
    for (size_t i = 0; i < dy.size(); ++i)
      dx.data[i] = (y_.data[i] > T(0)) ? dy.data[i] : T(0);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// MaxPool2d 2x2 stride 2 (floor), over the last two axes of [B,C,H,W] or
// [B,C,N,H,W] (treats leading dims as a flat batch).
// ---------------------------------------------------------------------------
template <typename T>
struct MaxPool2x2 {
  std::vector<int> in_shape_;
  std::vector<size_t> argmax_;

  Tensor<T> forward(const Tensor<T>& x) {
    in_shape_ = x.shape;
    const int r = x.rank();
    const int h = x.dim(r - 2), wd = x.dim(r - 1);
    const int ho = h / 2, wo = wd / 2;
    size_t planes = 1;
    for (int i = 0; i < r - 2; ++i) planes *= static_cast<size_t>(x.dim(i));
    std::vector<int> os(x.shape);
    os[r - 2] = ho;
    os[r - 1] = wo;
    Tensor<T> y(os);
    argmax_.assign(y.size(), 0);
    for (size_t p = 0; p < planes; ++p) {
      const T* xp = x.ptr() + p * h * wd;
      T* yp = y.ptr() + p * ho * wo;
      size_t* ap = argmax_.data() + p * ho * wo;
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          size_t best = static_cast<size_t>(2 * i) * wd + 2 * j;
          T bv = xp[best];
          for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj) {
              const size_t idx = static_cast<size_t>(2 * i + di) * wd + (2 * j + dj);
              if (xp[idx] > bv) {
                bv = xp[idx];
                best = idx;
              }
            }
          yp[static_cast<size_t>(i) * wo + j] = bv;
          ap[static_cast<size_t>(i) * wo + j] = p * h * wd + best;
        }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    for (size_t i = 0; i < dy.size(); ++i) dx.data[argmax_[i]] += dy.data[i];
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Average pooling with ceil output size; edge windows average their actual
// (clipped) element count. Kernel == stride, per axis in {1,2}.
// ---------------------------------------------------------------------------
template <typename T>
struct AvgPoolCeil {
  int kh = 2, kw = 1;
  std::vector<int> in_shape_;

  AvgPoolCeil() = default;
  AvgPoolCeil(int kh_, int kw_) : kh(kh_), kw(kw_) {}

  static int out_dim(int n, int k) { return (n + k - 1) / k; }

  Tensor<T> forward(const Tensor<T>& x) {
    in_shape_ = x.shape;
    const int r = x.rank();
    const int h = x.dim(r - 2), wd = x.dim(r - 1);
    const int ho = out_dim(h, kh), wo = out_dim(wd, kw);
    size_t planes = 1;
    for (int i = 0; i < r - 2; ++i) planes *= static_cast<size_t>(x.dim(i));
    std::vector<int> os(x.shape);
    os[r - 2] = ho;
    os[r - 1] = wo;
    Tensor<T> y(os);
    for (size_t p = 0; p < planes; ++p) {
      const T* xp = x.ptr() + p * h * wd;
      T* yp = y.ptr() + p * ho * wo;
      for (int i = 0; i < ho; ++i) {
        const int h0 = i * kh, h1 = std::min(h, h0 + kh);
        for (int j = 0; j < wo; ++j) {
          const int w0 = j * kw, w1 = std::min(wd, w0 + kw);
          T acc = 0;
          for (int a = h0; a < h1; ++a)
            for (int bb = w0; bb < w1; ++bb) acc += xp[static_cast<size_t>(a) * wd + bb];
          yp[static_cast<size_t>(i) * wo + j] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int r = static_cast<int>(in_shape_.size());
    const int h = in_shape_[r - 2], wd = in_shape_[r - 1];
    const int ho = out_dim(h, kh), wo = out_dim(wd, kw);
    size_t planes = 1;
    for (int i = 0; i < r - 2; ++i) planes *= static_cast<size_t>(in_shape_[i]);
    Tensor<T> dx(in_shape_);
    for (size_t p = 0; p < planes; ++p) {
      const T* dyp = dy.ptr() + p * ho * wo;
      T* dxp = dx.ptr() + p * h * wd;
      for (int i = 0; i < ho; ++i) {
        const int h0 = i * kh, h1 = std::min(h, h0 + kh);
        for (int j = 0; j < wo; ++j) {
          const int w0 = j * kw, w1 = std::min(wd, w0 + kw);
          const T g = dyp[static_cast<size_t>(i) * wo + j] /
                      static_cast<T>((h1 - h0) * (w1 - w0));
          for (int a = h0; a < h1; ++a)
            for (int bb = w0; bb < w1; ++bb) dxp[static_cast<size_t>(a) * wd + bb] += g;
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Linear on row-matrix inputs [R, Cin] -> [R, Cout].
// ---------------------------------------------------------------------------
template <typename T>
struct Linear {
  int cin = 0, cout = 0;
  Param<T> w, b;  // w: [Cout, Cin]
  Tensor<T> x_;

  Linear() = default;
  Linear(int cin_, int cout_, Rng& rng) : cin(cin_), cout(cout_), w({cout_, cin_}),
                                          b({cout_}) {
    w.init_kaiming(rng, cin);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int rr = x.dim(0);
    if (x.dim(1) != cin) throw std::invalid_argument("linear: width mismatch");
    Tensor<T> y({rr, cout});
    CMatMap<T> xm(x.ptr(), rr, cin);
    CMatMap<T> wm(w.value.ptr(), cout, cin);
    MatMap<T> ym(y.ptr(), rr, cout);
    ym.noalias() = xm * wm.transpose();
    for (int c = 0; c < cout; ++c) ym.col(c).array() += b.value.data[c];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int rr = x_.dim(0);
    Tensor<T> dx(x_.shape);
    CMatMap<T> xm(x_.ptr(), rr, cin);
    CMatMap<T> dym(dy.ptr(), rr, cout);
    CMatMap<T> wm(w.value.ptr(), cout, cin);
    MatMap<T> dwm(w.grad.ptr(), cout, cin);
    MatMap<T> dxm(dx.ptr(), rr, cin);
    dwm.noalias() += dym.transpose() * xm;
    for (int c = 0; c < cout; ++c) b.grad.data[c] += dym.col(c).sum();
    dxm.noalias() = dym * wm;
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out, const std::string& p) {
    out.push_back(w.ref(p + ".w"));
    out.push_back(b.ref(p + ".b"));
  }
};

// ---------------------------------------------------------------------------
// SAM: per-frame single-head self-attention over spatial tokens with output
// projection and residual. The attention matrix is recomputed in backward
// rather than cached (it is S x S per frame).
// ---------------------------------------------------------------------------
template <typename T>
struct Sam {
  int ch = 0;
  Param<T> wq, wk, wv, wo;  // each [C, C]: row-major, projection applied as X*W^T
  Param<T> bq, bk, bv, bo;
  Tensor<T> x_;             // [B,C,N,H,W]
  Tensor<T> q_, k_, v_;     // [B,N,S,C]

  Sam() = default;
  Sam(int ch_, Rng& rng)
      : ch(ch_), wq({ch_, ch_}), wk({ch_, ch_}), wv({ch_, ch_}), wo({ch_, ch_}),
        bq({ch_}), bk({ch_}), bv({ch_}), bo({ch_}) {
    const double s = 1.0 / std::sqrt(static_cast<double>(ch));
    wq.value.fill_gaussian(rng, s);
    wk.value.fill_gaussian(rng, s);
    wv.value.fill_gaussian(rng, s);
    // wo stays zero: SAM starts as the identity map (residual passthrough).
  }

  static void softmax_rows(RowMat<T>& a) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      auto row = a.row(i).array();
      const T mx = row.maxCoeff();
      row = (row - mx).exp();
      row /= row.sum();
    }
  }

  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    const int B = x.dim(0), n_frames = x.dim(2), h = x.dim(3), wd = x.dim(4);
    if (x.dim(1) != ch) throw std::invalid_argument("sam: channel mismatch");
    const int s = h * wd;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(ch)));
    q_ = Tensor<T>({B, n_frames, s, ch});
    k_ = Tensor<T>({B, n_frames, s, ch});
    v_ = Tensor<T>({B, n_frames, s, ch});
    Tensor<T> y = x;
    RowMat<T> xm(s, ch), a(s, s);
    CMatMap<T> wqm(wq.value.ptr(), ch, ch), wkm(wk.value.ptr(), ch, ch),
        wvm(wv.value.ptr(), ch, ch), wom(wo.value.ptr(), ch, ch);
    for (int bi = 0; bi < B; ++bi)
      for (int n = 0; n < n_frames; ++n) {
        // tokens: xm(s, c) = x[bi, c, n, :, :]
        for (int c = 0; c < ch; ++c) {
          const T* src = x.ptr() +
                         ((static_cast<size_t>(bi) * ch + c) * n_frames + n) * s;
          for (int t = 0; t < s; ++t) xm(t, c) = src[t];
        }
        const size_t off = ((static_cast<size_t>(bi) * n_frames) + n) * s * ch;
        MatMap<T> qm(q_.ptr() + off, s, ch), km(k_.ptr() + off, s, ch),
            vm(v_.ptr() + off, s, ch);
        qm.noalias() = xm * wqm.transpose();
        km.noalias() = xm * wkm.transpose();
        vm.noalias() = xm * wvm.transpose();
        for (int c = 0; c < ch; ++c) {
          qm.col(c).array() += bq.value.data[c];
          km.col(c).array() += bk.value.data[c];
          vm.col(c).array() += bv.value.data[c];
        }
        a.noalias() = qm * km.transpose() * scale;
        softmax_rows(a);
        RowMat<T> yv = a * vm;                       // [S, C]
        RowMat<T> o = yv * wom.transpose();          // [S, C]
        for (int c = 0; c < ch; ++c) {
          T* dst = y.ptr() + ((static_cast<size_t>(bi) * ch + c) * n_frames + n) * s;
          const T bias = bo.value.data[c];
          for (int t = 0; t < s; ++t) dst[t] += o(t, c) + bias;
        }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int B = x_.dim(0), n_frames = x_.dim(2), h = x_.dim(3), wd = x_.dim(4);
    const int s = h * wd;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(ch)));
    Tensor<T> dx = dy;  // residual path
    RowMat<T> xm(s, ch), dout(s, ch), a(s, s);
    CMatMap<T> wqm(wq.value.ptr(), ch, ch), wkm(wk.value.ptr(), ch, ch),
        wvm(wv.value.ptr(), ch, ch), wom(wo.value.ptr(), ch, ch);
    MatMap<T> dwq(wq.grad.ptr(), ch, ch), dwk(wk.grad.ptr(), ch, ch),
        dwv(wv.grad.ptr(), ch, ch), dwo(wo.grad.ptr(), ch, ch);
    for (int bi = 0; bi < B; ++bi)
      for (int n = 0; n < n_frames; ++n) {
        for (int c = 0; c < ch; ++c) {
          const T* xs = x_.ptr() +
                        ((static_cast<size_t>(bi) * ch + c) * n_frames + n) * s;
          const T* ds = dy.ptr() +
                        ((static_cast<size_t>(bi) * ch + c) * n_frames + n) * s;
          for (int t = 0; t < s; ++t) {
            xm(t, c) = xs[t];
            dout(t, c) = ds[t];
          }
        }
        const size_t off = ((static_cast<size_t>(bi) * n_frames) + n) * s * ch;
        CMatMap<T> qm(q_.ptr() + off, s, ch), km(k_.ptr() + off, s, ch),
            vm(v_.ptr() + off, s, ch);
        a.noalias() = qm * km.transpose() * scale;
        softmax_rows(a);
        RowMat<T> yv = a * vm;
        // output projection
        dwo.noalias() += dout.transpose() * yv;
        for (int c = 0; c < ch; ++c) bo.grad.data[c] += dout.col(c).sum();
        RowMat<T> dyv = dout * wom;
        // attention
        RowMat<T> da = dyv * vm.transpose();
        RowMat<T> dv = a.transpose() * dyv;
        for (Eigen::Index i = 0; i < s; ++i) {
          const T dot = (da.row(i).array() * a.row(i).array()).sum();
          da.row(i).array() = a.row(i).array() * (da.row(i).array() - dot);
        }
        RowMat<T> dq = da * km * scale;
        RowMat<T> dk = da.transpose() * qm * scale;
        // projections
        dwq.noalias() += dq.transpose() * xm;
        dwk.noalias() += dk.transpose() * xm;
        dwv.noalias() += dv.transpose() * xm;
        for (int c = 0; c < ch; ++c) {
          bq.grad.data[c] += dq.col(c).sum();
          bk.grad.data[c] += dk.col(c).sum();
          bv.grad.data[c] += dv.col(c).sum();
        }
        RowMat<T> dxm = dq * wqm + dk * wkm + dv * wvm;
        for (int c = 0; c < ch; ++c) {
          T* dst = dx.ptr() + ((static_cast<size_t>(bi) * ch + c) * n_frames + n) * s;
          for (int t = 0; t < s; ++t) dst[t] += dxm(t, c);
        }
      }
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out, const std::string& p) {
    out.push_back(wq.ref(p + ".wq"));
    out.push_back(bq.ref(p + ".bq"));
    out.push_back(wk.ref(p + ".wk"));
    out.push_back(bk.ref(p + ".bk"));
    out.push_back(wv.ref(p + ".wv"));
    out.push_back(bv.ref(p + ".bv"));
    out.push_back(wo.ref(p + ".wo"));
    out.push_back(bo.ref(p + ".bo"));
  }
};

// ---------------------------------------------------------------------------
// Nearest-neighbor upsample by integer factors (1 or 2 per axis) on the last
// two axes of [B,C,H,W].
// ---------------------------------------------------------------------------
template <typename T>
struct UpsampleNN {
  int fh = 2, fw = 2;
  std::vector<int> in_shape_;

  UpsampleNN() = default;
  UpsampleNN(int fh_, int fw_) : fh(fh_), fw(fw_) {}

  Tensor<T> forward(const Tensor<T>& x) {
    in_shape_ = x.shape;
    const int r = x.rank();
    const int h = x.dim(r - 2), wd = x.dim(r - 1);
    size_t planes = 1;
    for (int i = 0; i < r - 2; ++i) planes *= static_cast<size_t>(x.dim(i));
    std::vector<int> os(x.shape);
    os[r - 2] = h * fh;
    os[r - 1] = wd * fw;
    Tensor<T> y(os);
    for (size_t p = 0; p < planes; ++p) {
      const T* xp = x.ptr() + p * h * wd;
      T* yp = y.ptr() + p * h * fh * wd * fw;
      for (int i = 0; i < h * fh; ++i)
        for (int j = 0; j < wd * fw; ++j)
          yp[static_cast<size_t>(i) * wd * fw + j] =
              xp[static_cast<size_t>(i / fh) * wd + j / fw];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int r = static_cast<int>(in_shape_.size());
    const int h = in_shape_[r - 2], wd = in_shape_[r - 1];
    size_t planes = 1;
    for (int i = 0; i < r - 2; ++i) planes *= static_cast<size_t>(in_shape_[i]);
    Tensor<T> dx(in_shape_);
    for (size_t p = 0; p < planes; ++p) {
      const T* dyp = dy.ptr() + p * h * fh * wd * fw;
      T* dxp = dx.ptr() + p * h * wd;
      for (int i = 0; i < h * fh; ++i)
        for (int j = 0; j < wd * fw; ++j)
          dxp[static_cast<size_t>(i / fh) * wd + j / fw] +=
              dyp[static_cast<size_t>(i) * wd * fw + j];
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Bilinear resize (align_corners) to an exact target size on the last two
// axes; used to land decoder stages on the paired skip's shape.
// ---------------------------------------------------------------------------
template <typename T>
struct ResizeBilinear {
  int th = 1, tw = 1;
  std::vector<int> in_shape_;

  ResizeBilinear() = default;

  static void coords(int src, int dst, int i, int& i0, int& i1, T& frac) {
    if (dst == 1 || src == 1) {
      i0 = i1 = 0;
      frac = 0;
      if (src > 1 && dst == 1) i0 = i1 = 0;
      return;
    }
    const double sc = static_cast<double>(src - 1) / (dst - 1);
    const double pos = i * sc;
    i0 = static_cast<int>(pos);
    i1 = std::min(src - 1, i0 + 1);
    frac = static_cast<T>(pos - i0);
  }

  Tensor<T> forward(const Tensor<T>& x, int target_h, int target_w) {
    th = target_h;
    tw = target_w;
    in_shape_ = x.shape;
    const int r = x.rank();
    const int h = x.dim(r - 2), wd = x.dim(r - 1);
    if (h == th && wd == tw) return x;
    size_t planes = 1;
    for (int i = 0; i < r - 2; ++i) planes *= static_cast<size_t>(x.dim(i));
    std::vector<int> os(x.shape);
    os[r - 2] = th;
    os[r - 1] = tw;
    Tensor<T> y(os);
    for (size_t p = 0; p < planes; ++p) {
      const T* xp = x.ptr() + p * h * wd;
      T* yp = y.ptr() + p * th * tw;
      for (int i = 0; i < th; ++i) {
        int i0, i1;
        T fi;
        coords(h, th, i, i0, i1, fi);
        for (int j = 0; j < tw; ++j) {
          int j0, j1;
          T fj;
          coords(wd, tw, j, j0, j1, fj);
          const T v00 = xp[static_cast<size_t>(i0) * wd + j0];
          const T v01 = xp[static_cast<size_t>(i0) * wd + j1];
          const T v10 = xp[static_cast<size_t>(i1) * wd + j0];
          const T v11 = xp[static_cast<size_t>(i1) * wd + j1];
          yp[static_cast<size_t>(i) * tw + j] = (1 - fi) * ((1 - fj) * v00 + fj * v01) +
                                                fi * ((1 - fj) * v10 + fj * v11);
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int r = static_cast<int>(in_shape_.size());
    const int h = in_shape_[r - 2], wd = in_shape_[r - 1];
    if (h == th && wd == tw) return dy;
    size_t planes = 1;
    for (int i = 0; i < r - 2; ++i) planes *= static_cast<size_t>(in_shape_[i]);
    Tensor<T> dx(in_shape_);
    for (size_t p = 0; p < planes; ++p) {
      const T* dyp = dy.ptr() + p * th * tw;
      T* dxp = dx.ptr() + p * h * wd;
      for (int i = 0; i < th; ++i) {
        int i0, i1;
        T fi;
        coords(h, th, i, i0, i1, fi);
        for (int j = 0; j < tw; ++j) {
          int j0, j1;
          T fj;
          coords(wd, tw, j, j0, j1, fj);
          const T g = dyp[static_cast<size_t>(i) * tw + j];
          dxp[static_cast<size_t>(i0) * wd + j0] += (1 - fi) * (1 - fj) * g;
          dxp[static_cast<size_t>(i0) * wd + j1] += (1 - fi) * fj * g;
          dxp[static_cast<size_t>(i1) * wd + j0] += fi * (1 - fj) * g;
          dxp[static_cast<size_t>(i1) * wd + j1] += fi * fj * g;
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Channel concat/split and global-average-pool helpers (stateless).
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank()) throw std::invalid_argument("concat: rank mismatch");
  for (int i = 0; i < a.rank(); ++i)
    if (i != 1 && a.dim(i) != b.dim(i))
      throw std::invalid_argument("concat: non-channel dim mismatch");
  std::vector<int> os(a.shape);
  os[1] = a.dim(1) + b.dim(1);
  Tensor<T> y(os);
  size_t inner = 1;
  for (int i = 2; i < a.rank(); ++i) inner *= static_cast<size_t>(a.dim(i));
  const int B = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  for (int bi = 0; bi < B; ++bi) {
    std::copy(a.ptr() + static_cast<size_t>(bi) * ca * inner,
              a.ptr() + static_cast<size_t>(bi + 1) * ca * inner,
              y.ptr() + static_cast<size_t>(bi) * (ca + cb) * inner);
    std::copy(b.ptr() + static_cast<size_t>(bi) * cb * inner,
              b.ptr() + static_cast<size_t>(bi + 1) * cb * inner,
              y.ptr() + (static_cast<size_t>(bi) * (ca + cb) + ca) * inner);
  }
  return y;
}

template <typename T>
void split_channels(const Tensor<T>& dy, int ca, Tensor<T>& da, Tensor<T>& db) {
  std::vector<int> sa(dy.shape), sb(dy.shape);
  sa[1] = ca;
  sb[1] = dy.dim(1) - ca;
  da = Tensor<T>(sa);
  db = Tensor<T>(sb);
  size_t inner = 1;
  for (int i = 2; i < dy.rank(); ++i) inner *= static_cast<size_t>(dy.dim(i));
  const int B = dy.dim(0), cb = sb[1];
  for (int bi = 0; bi < B; ++bi) {
    std::copy(dy.ptr() + static_cast<size_t>(bi) * (ca + cb) * inner,
              dy.ptr() + (static_cast<size_t>(bi) * (ca + cb) + ca) * inner,
              da.ptr() + static_cast<size_t>(bi) * ca * inner);
    std::copy(dy.ptr() + (static_cast<size_t>(bi) * (ca + cb) + ca) * inner,
              dy.ptr() + static_cast<size_t>(bi + 1) * (ca + cb) * inner,
              db.ptr() + static_cast<size_t>(bi) * cb * inner);
  }
}

// Mean over the last axis: [..., M] -> [...]
template <typename T>
Tensor<T> mean_last(const Tensor<T>& x) {
  const int r = x.rank();
  const int m = x.dim(r - 1);
  std::vector<int> os(x.shape.begin(), x.shape.end() - 1);
  Tensor<T> y(os);
  for (size_t p = 0; p < y.size(); ++p) {
    T acc = 0;
    const T* xp = x.ptr() + p * m;
    for (int i = 0; i < m; ++i) acc += xp[i];
    y.data[p] = acc / static_cast<T>(m);
  }
  return y;
}

template <typename T>
Tensor<T> mean_last_backward(const Tensor<T>& dy, int m) {
  std::vector<int> os(dy.shape);
  os.push_back(m);
  Tensor<T> dx(os);
  for (size_t p = 0; p < dy.size(); ++p) {
    const T g = dy.data[p] / static_cast<T>(m);
    T* xp = dx.ptr() + p * m;
    for (int i = 0; i < m; ++i) xp[i] = g;
  }
  return dx;
}

// Mean over axis 2 of [B,C,F,T] -> [B,C,T]
template <typename T>
Tensor<T> mean_axis2(const Tensor<T>& x) {
  const int B = x.dim(0), c = x.dim(1), f = x.dim(2), t = x.dim(3);
  Tensor<T> y({B, c, t});
  for (int bi = 0; bi < B; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      T* yp = y.ptr() + (static_cast<size_t>(bi) * c + ci) * t;
      std::fill(yp, yp + t, T(0));
      for (int fi = 0; fi < f; ++fi) {
        const T* xp = x.ptr() + ((static_cast<size_t>(bi) * c + ci) * f + fi) * t;
        for (int ti = 0; ti < t; ++ti) yp[ti] += xp[ti];
      }
      for (int ti = 0; ti < t; ++ti) yp[ti] /= static_cast<T>(f);
    }
  return y;
}

template <typename T>
Tensor<T> mean_axis2_backward(const Tensor<T>& dy, int f) {
  const int B = dy.dim(0), c = dy.dim(1), t = dy.dim(2);
  Tensor<T> dx({B, c, f, t});
  for (int bi = 0; bi < B; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const T* dyp = dy.ptr() + (static_cast<size_t>(bi) * c + ci) * t;
      for (int fi = 0; fi < f; ++fi) {
        T* xp = dx.ptr() + ((static_cast<size_t>(bi) * c + ci) * f + fi) * t;
        for (int ti = 0; ti < t; ++ti) xp[ti] = dyp[ti] / static_cast<T>(f);
      }
    }
  return dx;
}

// [B,C,N,H,W] -> [B,C,N] spatial global average pool
template <typename T>
Tensor<T> gap_spatial(const Tensor<T>& x) {
  const int B = x.dim(0), c = x.dim(1), n = x.dim(2);
  const int hw = x.dim(3) * x.dim(4);
  Tensor<T> y({B, c, n});
  for (size_t p = 0; p < y.size(); ++p) {
    const T* xp = x.ptr() + p * hw;
    T acc = 0;
    for (int i = 0; i < hw; ++i) acc += xp[i];
    y.data[p] = acc / static_cast<T>(hw);
  }
  return y;
}

template <typename T>
Tensor<T> gap_spatial_backward(const Tensor<T>& dy, int h, int w) {
  std::vector<int> os(dy.shape);
  os.push_back(h);
  os.push_back(w);
  Tensor<T> dx(os);
  const int hw = h * w;
  for (size_t p = 0; p < dy.size(); ++p) {
    const T g = dy.data[p] / static_cast<T>(hw);
    T* xp = dx.ptr() + p * hw;
    for (int i = 0; i < hw; ++i) xp[i] = g;
  }
  return dx;
}

}  // namespace davse::nn
