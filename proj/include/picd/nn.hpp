#pragma once

// Minimal neural network engine.
//
// Layers are concrete structs templated on the scalar type; models wire
// them together explicitly and implement forward/backward by hand. There
// is no autograd tape: each layer caches what its backward pass needs,
// controlled by a Cache mode so inference and gradient-only passes stay
// lean. Convolutions lower to im2col + Eigen GEMM, which is where nearly
// all cycles go.
//
// Gradient checks instantiate every layer with T = double; production
// code uses float. Keep the numerics scalar-generic.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "picd/rng.hpp"
#include "picd/tensor.hpp"

namespace picd::nn {

using picd::EArray;
using picd::EMatrix;
using picd::EVector;
using picd::Rng;
using picd::Tensor;

// What a forward pass retains for the corresponding backward pass.
//   kNone: nothing; backward is unavailable.
//   kData: activations only; backward propagates input gradients but
//          skips parameter gradients (used by sampling-time guidance,
//          where weights are frozen and im2col buffers would dominate
//          memory).
//   kFull: everything, for training.
enum class Cache { kNone, kData, kFull };

template <typename T>
struct ParamRef {
  std::string name;
  T* w;
  T* g;
  Eigen::Index size;
  bool trainable;
};

template <typename T>
using ParamRefs = std::vector<ParamRef<T>>;

template <typename T>
void add_param(ParamRefs<T>& out, const std::string& name, EMatrix<T>& w,
               EMatrix<T>& g, bool trainable) {
  out.push_back({name, w.data(), g.data(), w.size(), trainable});
}

template <typename T>
void add_param(ParamRefs<T>& out, const std::string& name, EVector<T>& w,
               EVector<T>& g, bool trainable) {
  out.push_back({name, w.data(), g.data(), w.size(), trainable});
}

template <typename T>
void zero_grads(ParamRefs<T>& refs) {
  for (auto& r : refs) Eigen::Map<EVector<T>>(r.g, r.size).setZero();
}

template <typename T>
Eigen::Index param_count(const ParamRefs<T>& refs) {
  Eigen::Index n = 0;
  for (const auto& r : refs) n += r.size;
  return n;
}

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
struct Conv2d {
  int in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0;
  EMatrix<T> W;  // out_ch x in_ch*k*k
  EVector<T> b;
  EMatrix<T> gW;
  EVector<T> gb;
  bool train_base = true;

  // Optional low-rank residual W + scale * B * A. Inactive by default;
  // activating with B = 0 leaves the effective weights untouched.
  bool lora_active = false;
  T lora_scale = T(0);
  EMatrix<T> lora_A, lora_B, g_lora_A, g_lora_B;

  Conv2d() = default;

  Conv2d(int in, int out, int kernel, int stride_, int pad_, Rng& rng, T gain = T(1))
      : in_ch(in), out_ch(out), k(kernel), stride(stride_), pad(pad_) {
    const int fan_in = in_ch * k * k;
    const T std = gain * T(std::sqrt(2.0 / double(fan_in)));
    W.resize(out_ch, fan_in);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = T(rng.normal()) * std;
    b = EVector<T>::Zero(out_ch);
    gW = EMatrix<T>::Zero(out_ch, fan_in);
    gb = EVector<T>::Zero(out_ch);
  }

  static Conv2d zero_init(int in, int out, int kernel, int stride_, int pad_) {
    Conv2d c;
    c.in_ch = in;
    c.out_ch = out;
    c.k = kernel;
    c.stride = stride_;
    c.pad = pad_;
    c.W = EMatrix<T>::Zero(out, in * kernel * kernel);
    c.b = EVector<T>::Zero(out);
    c.gW = EMatrix<T>::Zero(out, in * kernel * kernel);
    c.gb = EVector<T>::Zero(out);
    return c;
  }

  void add_lora(int rank, T scale, Rng& rng) {
    lora_active = true;
    lora_scale = scale;
    const int fan_in = in_ch * k * k;
    // A gets a spread start, B starts at zero: the residual is exactly
    // zero until training moves B.
    lora_A.resize(rank, fan_in);
    const T std = T(std::sqrt(1.0 / double(fan_in)));
    for (Eigen::Index i = 0; i < lora_A.size(); ++i)
      lora_A.data()[i] = T(rng.normal()) * std;
    lora_B = EMatrix<T>::Zero(out_ch, rank);
    g_lora_A = EMatrix<T>::Zero(rank, fan_in);
    g_lora_B = EMatrix<T>::Zero(out_ch, rank);
  }

  void merge_lora() {
    if (!lora_active) return;
    W += lora_scale * lora_B * lora_A;
    lora_active = false;
    lora_A.resize(0, 0);
    lora_B.resize(0, 0);
  }

  int out_hw(int in_hw) const { return (in_hw + 2 * pad - k) / stride + 1; }

  EMatrix<T> effective_weights() const {
    if (!lora_active) return W;
    return W + lora_scale * lora_B * lora_A;
  }

  Tensor<T> forward(const Tensor<T>& x, Cache mode) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), Win = x.dim(3);
    if (C != in_ch) throw std::runtime_error("Conv2d: channel mismatch");
    const int Ho = out_hw(H), Wo = out_hw(Win);
    EMatrix<T> cols = im2col(x, Ho, Wo);
    mode_ = mode;
    if (mode != Cache::kNone) {
      x_shape_ = x.shape();
      if (mode == Cache::kFull) cols_ = cols;
    }
    const EMatrix<T> Weff = effective_weights();
    EMatrix<T> out_mat = Weff * cols;
    out_mat.colwise() += b;
    Tensor<T> y({N, out_ch, Ho, Wo});
    const Eigen::Index hw = Eigen::Index(Ho) * Wo;
    using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    for (int n = 0; n < N; ++n)
      Eigen::Map<RowMajor>(y.data() + Eigen::Index(n) * out_ch * hw, out_ch, hw) =
          out_mat.middleCols(Eigen::Index(n) * hw, hw);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (mode_ == Cache::kNone)
      throw std::runtime_error("Conv2d: backward without cached forward");
    const int N = gy.dim(0), Ho = gy.dim(2), Wo = gy.dim(3);
    const Eigen::Index hw = Eigen::Index(Ho) * Wo;
    EMatrix<T> gy_mat(out_ch, Eigen::Index(N) * hw);
    using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    for (int n = 0; n < N; ++n)
      gy_mat.middleCols(Eigen::Index(n) * hw, hw) =
          Eigen::Map<const RowMajor>(gy.data() + Eigen::Index(n) * out_ch * hw, out_ch, hw);

    if (mode_ == Cache::kFull) {
      if (train_base || lora_active) {
        const EMatrix<T> gWeff = gy_mat * cols_.transpose();
        if (train_base) gW += gWeff;
        if (lora_active) {
          g_lora_B += lora_scale * gWeff * lora_A.transpose();
          g_lora_A += lora_scale * lora_B.transpose() * gWeff;
        }
      }
      gb += gy_mat.rowwise().sum();
    }
    const EMatrix<T> Weff = effective_weights();
    const EMatrix<T> gcols = Weff.transpose() * gy_mat;
    return col2im(gcols, Ho, Wo);
  }

  void collect(const std::string& prefix, ParamRefs<T>& out) {
    add_param(out, prefix + ".W", W, gW, train_base);
    add_param(out, prefix + ".b", b, gb, train_base);
    if (lora_active) {
      add_param(out, prefix + ".lora_A", lora_A, g_lora_A, true);
      add_param(out, prefix + ".lora_B", lora_B, g_lora_B, true);
    }
  }

 private:
  EMatrix<T> im2col(const Tensor<T>& x, int Ho, int Wo) const {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), Win = x.dim(3);
    EMatrix<T> cols(Eigen::Index(C) * k * k, Eigen::Index(N) * Ho * Wo);
    cols.setZero();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const Eigen::Index row = (Eigen::Index(c) * k + ky) * k + kx;
            for (int ho = 0; ho < Ho; ++ho) {
              const int ih = ho * stride - pad + ky;
              if (ih < 0 || ih >= H) continue;
              const Eigen::Index col0 = (Eigen::Index(n) * Ho + ho) * Wo;
              const T* src = x.data() + ((Eigen::Index(n) * C + c) * H + ih) * Win;
              for (int wo = 0; wo < Wo; ++wo) {
                const int iw = wo * stride - pad + kx;
                if (iw < 0 || iw >= Win) continue;
                cols(row, col0 + wo) = src[iw];
              }
            }
          }
    return cols;
  }

  Tensor<T> col2im(const EMatrix<T>& gcols, int Ho, int Wo) const {
    const int N = x_shape_[0], C = x_shape_[1], H = x_shape_[2], Win = x_shape_[3];
    Tensor<T> gx({N, C, H, Win});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const Eigen::Index row = (Eigen::Index(c) * k + ky) * k + kx;
            for (int ho = 0; ho < Ho; ++ho) {
              const int ih = ho * stride - pad + ky;
              if (ih < 0 || ih >= H) continue;
              const Eigen::Index col0 = (Eigen::Index(n) * Ho + ho) * Wo;
              T* dst = gx.data() + ((Eigen::Index(n) * C + c) * H + ih) * Win;
              for (int wo = 0; wo < Wo; ++wo) {
                const int iw = wo * stride - pad + kx;
                if (iw < 0 || iw >= Win) continue;
                dst[iw] += gcols(row, col0 + wo);
              }
            }
          }
    return gx;
  }

  Cache mode_ = Cache::kNone;
  std::vector<int> x_shape_;
  EMatrix<T> cols_;
};

// ---------------------------------------------------------------------------
// Normalization and activations

template <typename T>
struct GroupNorm {
  int groups = 8, ch = 0;
  T eps = T(1e-5);
  EVector<T> gamma, beta, ggamma, gbeta;
  bool trainable = true;

  GroupNorm() = default;

  GroupNorm(int groups_, int ch_) : groups(groups_), ch(ch_) {
    if (ch % groups != 0) throw std::runtime_error("GroupNorm: channels not divisible");
    gamma = EVector<T>::Ones(ch);
    beta = EVector<T>::Zero(ch);
    ggamma = EVector<T>::Zero(ch);
    gbeta = EVector<T>::Zero(ch);
  }

  Tensor<T> forward(const Tensor<T>& x, Cache mode) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int cpg = C / groups;
    const Eigen::Index gsize = Eigen::Index(cpg) * H * W;
    Tensor<T> xhat({N, C, H, W});
    istd_.resize(size_t(N) * size_t(groups));
    for (int n = 0; n < N; ++n)
      for (int g = 0; g < groups; ++g) {
        const Eigen::Index off = (Eigen::Index(n) * C + Eigen::Index(g) * cpg) * H * W;
        Eigen::Map<const EArray<T>> xin(x.data() + off, gsize);
        const T mean = xin.mean();
        const T var = (xin - mean).square().mean();
        const T istd = T(1) / std::sqrt(var + eps);
        istd_[size_t(n) * size_t(groups) + size_t(g)] = istd;
        Eigen::Map<EArray<T>>(xhat.data() + off, gsize) = (xin - mean) * istd;
      }
    Tensor<T> y({N, C, H, W});
    const Eigen::Index hw = Eigen::Index(H) * W;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const Eigen::Index off = (Eigen::Index(n) * C + c) * hw;
        Eigen::Map<EArray<T>>(y.data() + off, hw) =
            Eigen::Map<const EArray<T>>(xhat.data() + off, hw) * gamma[c] + beta[c];
      }
    if (mode != Cache::kNone) xhat_ = std::move(xhat);
    mode_ = mode;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int N = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
    const int cpg = C / groups;
    const Eigen::Index hw = Eigen::Index(H) * W;
    const Eigen::Index gsize = Eigen::Index(cpg) * hw;
    Tensor<T> gx({N, C, H, W});
    // Per-channel parameter gradients.
    if (mode_ == Cache::kFull) {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const Eigen::Index off = (Eigen::Index(n) * C + c) * hw;
          Eigen::Map<const EArray<T>> gyc(gy.data() + off, hw);
          Eigen::Map<const EArray<T>> xhc(xhat_.data() + off, hw);
          ggamma[c] += (gyc * xhc).sum();
          gbeta[c] += gyc.sum();
        }
    }
    // Input gradient per group.
    for (int n = 0; n < N; ++n)
      for (int g = 0; g < groups; ++g) {
        const Eigen::Index off = (Eigen::Index(n) * C + Eigen::Index(g) * cpg) * hw;
        EArray<T> gxhat(gsize);
        for (int cc = 0; cc < cpg; ++cc)
          gxhat.segment(Eigen::Index(cc) * hw, hw) =
              Eigen::Map<const EArray<T>>(gy.data() + off + Eigen::Index(cc) * hw, hw) *
              gamma[g * cpg + cc];
        Eigen::Map<const EArray<T>> xh(xhat_.data() + off, gsize);
        const T istd = istd_[size_t(n) * size_t(groups) + size_t(g)];
        const T m = T(gsize);
        const T sum_g = gxhat.sum();
        const T sum_gx = (gxhat * xh).sum();
        Eigen::Map<EArray<T>>(gx.data() + off, gsize) =
            (istd / m) * (m * gxhat - sum_g - xh * sum_gx);
      }
    return gx;
  }

  void collect(const std::string& prefix, ParamRefs<T>& out) {
    add_param(out, prefix + ".gamma", gamma, ggamma, trainable);
    add_param(out, prefix + ".beta", beta, gbeta, trainable);
  }

 private:
  Cache mode_ = Cache::kNone;
  Tensor<T> xhat_;
  std::vector<T> istd_;
};

template <typename T>
struct SiLU {
  Tensor<T> forward(const Tensor<T>& x, Cache mode) {
    Tensor<T> y = x;
    y.flat() = x.flat() / (T(1) + (-x.flat()).exp());
    if (mode != Cache::kNone) x_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    const auto s = (T(1) + (-x_.flat()).exp()).inverse();
    gx.flat() = gy.flat() * s * (T(1) + x_.flat() * (T(1) - s));
    return gx;
  }

 private:
  Tensor<T> x_;
};

template <typename T>
struct Linear {
  EMatrix<T> W;  // out x in
  EVector<T> b;
  EMatrix<T> gW;
  EVector<T> gb;
  bool trainable = true;

  Linear() = default;

  Linear(int in, int out, Rng& rng, T gain = T(1)) {
    const T std = gain * T(std::sqrt(2.0 / double(in)));
    W.resize(out, in);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = T(rng.normal()) * std;
    b = EVector<T>::Zero(out);
    gW = EMatrix<T>::Zero(out, in);
    gb = EVector<T>::Zero(out);
  }

  // x is {N, in}; returns {N, out}.
  Tensor<T> forward(const Tensor<T>& x, Cache mode) {
    const int N = x.dim(0), in = x.dim(1);
    if (in != W.cols()) throw std::runtime_error("Linear: size mismatch");
    if (mode == Cache::kFull) x_ = x;
    mode_ = mode;
    Tensor<T> y({N, int(W.rows())});
    Eigen::Map<const EMatrix<T>> xm(x.data(), in, N);  // column per sample
    Eigen::Map<EMatrix<T>> ym(y.data(), W.rows(), N);
    ym = W * xm;
    ym.colwise() += b;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int N = gy.dim(0);
    Eigen::Map<const EMatrix<T>> gym(gy.data(), W.rows(), N);
    if (mode_ == Cache::kFull && trainable) {
      Eigen::Map<const EMatrix<T>> xm(x_.data(), W.cols(), N);
      gW += gym * xm.transpose();
      gb += gym.rowwise().sum();
    }
    Tensor<T> gx({N, int(W.cols())});
    Eigen::Map<EMatrix<T>>(gx.data(), W.cols(), N) = W.transpose() * gym;
    return gx;
  }

  void collect(const std::string& prefix, ParamRefs<T>& out) {
    add_param(out, prefix + ".W", W, gW, trainable);
    add_param(out, prefix + ".b", b, gb, trainable);
  }

 private:
  Cache mode_ = Cache::kNone;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// Resampling

template <typename T>
struct UpsampleNearest2 {
  Tensor<T> forward(const Tensor<T>& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y({N, C, 2 * H, 2 * W});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < 2 * H; ++h)
          for (int w = 0; w < 2 * W; ++w)
            y(n, c, h, w) = x(n, c, h / 2, w / 2);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int N = gy.dim(0), C = gy.dim(1), H = gy.dim(2) / 2, W = gy.dim(3) / 2;
    Tensor<T> gx({N, C, H, W});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < 2 * H; ++h)
          for (int w = 0; w < 2 * W; ++w)
            gx(n, c, h / 2, w / 2) += gy(n, c, h, w);
    return gx;
  }
};

template <typename T>
struct AvgPool2 {
  Tensor<T> forward(const Tensor<T>& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2) / 2, W = x.dim(3) / 2;
    Tensor<T> y({N, C, H, W});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w)
            y(n, c, h, w) = (x(n, c, 2 * h, 2 * w) + x(n, c, 2 * h, 2 * w + 1) +
                             x(n, c, 2 * h + 1, 2 * w) + x(n, c, 2 * h + 1, 2 * w + 1)) /
                            T(4);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int N = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
    Tensor<T> gx({N, C, 2 * H, 2 * W});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < 2 * H; ++h)
          for (int w = 0; w < 2 * W; ++w)
            gx(n, c, h, w) = gy(n, c, h / 2, w / 2) / T(4);
    return gx;
  }
};

// Space-to-depth with block size r: {N,C,H,W} -> {N, C*r*r, H/r, W/r}.
// Pure data movement; backward is the exact inverse shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % r != 0 || W % r != 0)
    throw std::runtime_error("pixel_unshuffle: size not divisible by block");
  Tensor<T> y({N, C * r * r, H / r, W / r});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const int oc = (c * r + h % r) * r + w % r;
          y(n, oc, h / r, w / r) = x(n, c, h, w);
        }
  return y;
}

template <typename T>
Tensor<T> pixel_unshuffle_backward(const Tensor<T>& gy, int r, int C, int H, int W) {
  const int N = gy.dim(0);
  Tensor<T> gx({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const int oc = (c * r + h % r) * r + w % r;
          gx(n, c, h, w) = gy(n, oc, h / r, w / r);
        }
  return gx;
}

// Channel concatenation along dim 1 and its split for backward.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const int N = a.dim(0), H = a.dim(2), W = a.dim(3);
  if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W)
    throw std::runtime_error("concat_channels: shape mismatch");
  Tensor<T> y({N, a.dim(1) + b.dim(1), H, W});
  for (int n = 0; n < N; ++n) {
    const Eigen::Index hw = Eigen::Index(H) * W;
    const Eigen::Index an = Eigen::Index(a.dim(1)) * hw;
    const Eigen::Index bn = Eigen::Index(b.dim(1)) * hw;
    y.flat().segment(Eigen::Index(n) * (an + bn), an) =
        a.flat().segment(Eigen::Index(n) * an, an);
    y.flat().segment(Eigen::Index(n) * (an + bn) + an, bn) =
        b.flat().segment(Eigen::Index(n) * bn, bn);
  }
  return y;
}

template <typename T>
void split_channels(const Tensor<T>& gy, Tensor<T>& ga, Tensor<T>& gb, int a_ch) {
  const int N = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
  const int b_ch = gy.dim(1) - a_ch;
  ga = Tensor<T>({N, a_ch, H, W});
  gb = Tensor<T>({N, b_ch, H, W});
  const Eigen::Index hw = Eigen::Index(H) * W;
  const Eigen::Index an = Eigen::Index(a_ch) * hw, bn = Eigen::Index(b_ch) * hw;
  for (int n = 0; n < N; ++n) {
    ga.flat().segment(Eigen::Index(n) * an, an) =
        gy.flat().segment(Eigen::Index(n) * (an + bn), an);
    gb.flat().segment(Eigen::Index(n) * bn, bn) =
        gy.flat().segment(Eigen::Index(n) * (an + bn) + an, bn);
  }
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
struct Adam {
  T lr = T(1e-3), beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8);
  int64_t t = 0;

  explicit Adam(T lr_ = T(1e-3)) : lr(lr_) {}

  void step(ParamRefs<T>& refs) {
    if (m_.empty()) {
      m_.resize(refs.size());
      v_.resize(refs.size());
      for (size_t i = 0; i < refs.size(); ++i) {
        m_[i] = EArray<T>::Zero(refs[i].size);
        v_[i] = EArray<T>::Zero(refs[i].size);
      }
    }
    if (m_.size() != refs.size())
      throw std::runtime_error("Adam: parameter list changed between steps");
    ++t;
    const T bc1 = T(1) - T(std::pow(double(beta1), double(t)));
    const T bc2 = T(1) - T(std::pow(double(beta2), double(t)));
    for (size_t i = 0; i < refs.size(); ++i) {
      if (!refs[i].trainable) continue;
      Eigen::Map<EArray<T>> w(refs[i].w, refs[i].size);
      Eigen::Map<const EArray<T>> g(refs[i].g, refs[i].size);
      m_[i] = beta1 * m_[i] + (T(1) - beta1) * g;
      v_[i] = beta2 * v_[i] + (T(1) - beta2) * g.square();
      w -= lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps);
    }
  }

 private:
  std::vector<EArray<T>> m_, v_;
};

// Mean squared error and its input gradient, averaged over all elements.
template <typename T>
T mse(const Tensor<T>& a, const Tensor<T>& b) {
  return (a.flat() - b.flat()).square().mean();
}

template <typename T>
Tensor<T> mse_grad(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> g = a;
  g.flat() = (a.flat() - b.flat()) * (T(2) / T(a.size()));
  return g;
}

}  // namespace picd::nn
