#pragma once

// DualAVSE network: U-Net audio codec over complex spectrograms, visual
// branch (3D front-end, spatial attention, depthwise-separable backbone,
// temporal conv net), modality-attention fusion, and a linear cIRM head.
// Templated on the scalar so training runs in float and the gradient check
// runs in double.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "davse/dsp.hpp"
#include "davse/nn.hpp"

namespace davse::model {

using nn::Tensor;

struct ModelConfig {
  int base_channels = 64;
  int n_frames = 64;        // N
  int freq_bins = 257;      // F
  int time_frames = 256;    // T
  int frame_size = 112;     // square video frame side
  std::string variant = "dual_full";
  std::string visual_input = "face";
  double temperature_init = 1.0;
  double backbone_width = 1.0;

  void validate() const;
  // Number of frequency-halving pool stages: F must be 2^m + 1; K = m - 1.
  int freq_pools() const;
  // First of the two pool stages that also halve time.
  int time_pool_start() const {
    const int k = freq_pools();
    return std::min((k + 1) / 2, k - 2);
  }
  bool has_visual() const { return variant != "aose"; }
  bool has_sam() const { return variant == "avse_sam" || variant == "dual_full"; }
  bool has_mam() const { return variant == "avse_mam" || variant == "dual_full"; }
  // Encoder conv channel plan, 1-indexed: ch(i) for i in [1, K+2].
  int enc_channels(int i) const {
    const int k = freq_pools();
    const int j = k + 2 - i;  // distance from the last conv
    const int e = (j <= 2) ? 0 : std::min(3, (j - 1) / 2);
    return std::max(1, base_channels >> e);
  }
  int frontend_channels() const { return std::max(1, base_channels / 8); }
  int backbone_channels(int stage) const {  // stage in [1,3]
    const int raw = std::max(1, base_channels >> (3 - stage));
    return std::max(1, static_cast<int>(std::lround(backbone_width * raw)));
  }
  int visual_channels() const { return backbone_channels(3); }  // C_v
};

// --------------------------------------------------------------------------
// Sub-blocks
// --------------------------------------------------------------------------

// Depthwise-separable residual downsampling stage (stride 2).
template <typename T>
struct DsStage {
  nn::DepthwiseConv2d<T> dw;
  nn::BatchNorm<T> bn1;
  nn::ReLU<T> r1;
  nn::Conv2d<T> pw;
  nn::BatchNorm<T> bn2;
  nn::Conv2d<T> proj;
  nn::BatchNorm<T> bn3;
  nn::ReLU<T> r2;
  Tensor<T> sum_;

  DsStage() = default;
  DsStage(int cin, int cout, Rng& rng)
      : dw(cin, 3, 2, rng), bn1(cin), pw(cin, cout, 1, 1, 1, 1, 0, 0, rng), bn2(cout),
        proj(cin, cout, 1, 1, 2, 2, 0, 0, rng), bn3(cout) {}

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> m = r1.forward(bn1.forward(dw.forward(x), train));
    m = bn2.forward(pw.forward(m), train);
    Tensor<T> s = bn3.forward(proj.forward(x), train);
    for (size_t i = 0; i < m.size(); ++i) m.data[i] += s.data[i];
    return r2.forward(m);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = r2.backward(dy);
    Tensor<T> ds = bn3.backward(d);
    Tensor<T> dx = proj.backward(ds);
    Tensor<T> dm = bn2.backward(d);
    dm = dw.backward(bn1.backward(r1.backward(pw.backward(dm))));
    for (size_t i = 0; i < dx.size(); ++i) dx.data[i] += dm.data[i];
    return dx;
  }

  void collect(std::vector<nn::ParamRef<T>>& out, const std::string& p) {
    dw.collect(out, p + ".dw");
    bn1.collect(out, p + ".bn1");
    pw.collect(out, p + ".pw");
    bn2.collect(out, p + ".bn2");
    proj.collect(out, p + ".proj");
    bn3.collect(out, p + ".bn3");
  }
  void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out,
                     const std::string& p) {
    bn1.collect_state(out, p + ".bn1");
    bn2.collect_state(out, p + ".bn2");
    bn3.collect_state(out, p + ".bn3");
  }
};

// Residual TCN block: two dilated 1-D convs with BN/ReLU and skip.
template <typename T>
struct TcnBlock {
  nn::Conv1d<T> c1, c2;
  nn::BatchNorm<T> bn1, bn2;
  nn::ReLU<T> r1, r2;

  TcnBlock() = default;
  TcnBlock(int ch, int dil, Rng& rng)
      : c1(ch, ch, 3, dil, rng), c2(ch, ch, 3, dil, rng), bn1(ch), bn2(ch) {}

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> m = r1.forward(bn1.forward(c1.forward(x), train));
    m = bn2.forward(c2.forward(m), train);
    for (size_t i = 0; i < m.size(); ++i) m.data[i] += x.data[i];
    return r2.forward(m);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = r2.backward(dy);
    Tensor<T> dm = c1.backward(bn1.backward(r1.backward(c2.backward(bn2.backward(d)))));
    for (size_t i = 0; i < dm.size(); ++i) dm.data[i] += d.data[i];
    return dm;
  }

  void collect(std::vector<nn::ParamRef<T>>& out, const std::string& p) {
    c1.collect(out, p + ".conv1");
    bn1.collect(out, p + ".bn1");
    c2.collect(out, p + ".conv2");
    bn2.collect(out, p + ".bn2");
  }
  void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out,
                     const std::string& p) {
    bn1.collect_state(out, p + ".bn1");
    bn2.collect_state(out, p + ".bn2");
  }
};

// [B,C,N,h,w] <-> [B*N,C,h,w] permutations (frames folded into the batch).
template <typename T>
Tensor<T> fold_frames(const Tensor<T>& x) {
  const int B = x.dim(0), c = x.dim(1), n = x.dim(2), h = x.dim(3), w = x.dim(4);
  Tensor<T> y({B * n, c, h, w});
  const size_t hw = static_cast<size_t>(h) * w;
  for (int bi = 0; bi < B; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int ni = 0; ni < n; ++ni)
        std::copy(x.ptr() + ((static_cast<size_t>(bi) * c + ci) * n + ni) * hw,
                  x.ptr() + ((static_cast<size_t>(bi) * c + ci) * n + ni + 1) * hw,
                  y.ptr() + ((static_cast<size_t>(bi) * n + ni) * c + ci) * hw);
  return y;
}

template <typename T>
Tensor<T> unfold_frames(const Tensor<T>& x, int B, int n) {
  const int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({B, c, n, h, w});
  const size_t hw = static_cast<size_t>(h) * w;
  for (int bi = 0; bi < B; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int ni = 0; ni < n; ++ni)
        std::copy(x.ptr() + ((static_cast<size_t>(bi) * n + ni) * c + ci) * hw,
                  x.ptr() + ((static_cast<size_t>(bi) * n + ni) * c + ci + 1) * hw,
                  y.ptr() + ((static_cast<size_t>(bi) * c + ci) * n + ni) * hw);
  return y;
}

// [B,C,N] <-> [B*N, C] row matrices for per-time-step affine maps.
template <typename T>
Tensor<T> bcn_to_rows(const Tensor<T>& x) {
  const int B = x.dim(0), c = x.dim(1), n = x.dim(2);
  Tensor<T> y({B * n, c});
  for (int bi = 0; bi < B; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int ni = 0; ni < n; ++ni)
        y.data[(static_cast<size_t>(bi) * n + ni) * c + ci] =
            x.data[(static_cast<size_t>(bi) * c + ci) * n + ni];
  return y;
}

template <typename T>
Tensor<T> rows_to_bcn(const Tensor<T>& x, int B, int n) {
  const int c = x.dim(1);
  Tensor<T> y({B, c, n});
  for (int bi = 0; bi < B; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int ni = 0; ni < n; ++ni)
        y.data[(static_cast<size_t>(bi) * c + ci) * n + ni] =
            x.data[(static_cast<size_t>(bi) * n + ni) * c + ci];
  return y;
}

template <typename T>
struct ForwardResult {
  Tensor<T> mask;   // [B,2,F,T]
  Tensor<T> alpha;  // [B,2,N] when MAM is active, else empty
};

// Modality fusion: f_av[b,c,n] = alpha_v[b,n] * f_v[b,c,n] + alpha_a[b,n] *
// f_a[b,c,n], with alpha laid out [B,2,N] (visual weight first).
template <typename T>
Tensor<T> fuse_modalities(const Tensor<T>& alpha, const Tensor<T>& f_v,
                          const Tensor<T>& f_a) {
  if (!f_v.same_shape(f_a))
    throw std::invalid_argument("fuse_modalities: feature shape mismatch");
  if (alpha.rank() != 3 || alpha.dim(0) != f_a.dim(0) || alpha.dim(1) != 2 ||
      alpha.dim(2) != f_a.dim(2))
    throw std::invalid_argument("fuse_modalities: alpha must be [B,2,N]");
  const int B = f_a.dim(0), C = f_a.dim(1), N = f_a.dim(2);
  Tensor<T> f_av(f_a.shape);
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c)
      for (int n = 0; n < N; ++n) {
        const T av = alpha.data[(static_cast<size_t>(bi) * 2) * N + n];
        const T aa = alpha.data[(static_cast<size_t>(bi) * 2 + 1) * N + n];
        const size_t idx = (static_cast<size_t>(bi) * C + c) * N + n;
        f_av.data[idx] = av * f_v.data[idx] + aa * f_a.data[idx];
      }
  return f_av;
}

// --------------------------------------------------------------------------
// The network
// --------------------------------------------------------------------------
template <typename T>
struct DualAvseNet {
  ModelConfig cfg;
  int K = 7;  // frequency pool stages

  // audio encoder
  std::vector<nn::Conv2d<T>> enc_conv;
  std::vector<nn::BatchNorm<T>> enc_bn;
  std::vector<nn::ReLU<T>> enc_relu;
  std::vector<nn::AvgPoolCeil<T>> enc_pool;

  // decoder
  nn::ConvTransposeFreq<T> dec_expand;
  nn::BatchNorm<T> dec_expand_bn;
  nn::ReLU<T> dec_expand_relu;
  std::vector<nn::UpsampleNN<T>> dec_up;
  std::vector<nn::ResizeBilinear<T>> dec_resize;
  std::vector<nn::Conv2d<T>> dec_conv;
  std::vector<nn::BatchNorm<T>> dec_bn;
  std::vector<nn::ReLU<T>> dec_relu;
  nn::Conv2d<T> dec_head;

  // visual branch
  nn::Conv3d<T> frontend;
  nn::BatchNorm<T> frontend_bn;
  nn::ReLU<T> frontend_relu;
  nn::MaxPool2x2<T> frontend_pool;
  nn::Sam<T> sam;
  std::vector<DsStage<T>> backbone;
  std::vector<TcnBlock<T>> tcn;
  bool has_vis_proj = false;
  nn::Linear<T> vis_proj;

  // fusion
  nn::Linear<T> fuse_lin;  // concat fusion (avse_concat, avse_sam)
  nn::Linear<T> mam_fc;    // MAM logits (avse_mam, dual_full)
  nn::Param<T> tau;        // temperature parameter (softplus + 1e-4 = t)

  // -------- forward caches (model-level wiring) --------
  std::vector<Tensor<T>> skips_;
  int ma_freq_ = 0;
  Tensor<T> f_a_, f_v_, m_v_, alpha_, logits_rows_;
  Tensor<T> f_v_pre_proj_rows_;
  int batch_ = 0;
  int vis_h_ = 0, vis_w_ = 0;  // backbone output spatial dims

  DualAvseNet(const ModelConfig& c, uint64_t seed) : cfg(c) {
    cfg.validate();
    K = cfg.freq_pools();
    Rng rng = Rng::stream(seed, hash_label("model_init"));
    const int ts = cfg.time_pool_start();

    // encoder
    int prev = 2;
    for (int i = 1; i <= K + 2; ++i) {
      const int ch = cfg.enc_channels(i);
      const bool collapse = (i == K + 2);
      enc_conv.emplace_back(prev, ch, 3, 3, 1, 1, collapse ? 0 : 1, 1, rng);
      enc_bn.emplace_back(ch);
      enc_relu.emplace_back();
      prev = ch;
    }
    for (int i = 1; i <= K; ++i) {
      const bool tp = (i == ts || i == ts + 1);
      enc_pool.emplace_back(2, tp ? 2 : 1);
    }

    // decoder
    const int C = cfg.base_channels;
    dec_expand = nn::ConvTransposeFreq<T>(C, C, 3, rng);
    dec_expand_bn = nn::BatchNorm<T>(C);
    int cur = 2 * C;  // expand output concatenated with skip K
    for (int s = 1; s <= K; ++s) {
      const int inv_pool = K + 1 - s;
      const bool tp = (inv_pool == ts || inv_pool == ts + 1);
      dec_up.emplace_back(2, tp ? 2 : 1);
      dec_resize.emplace_back();
      const int skip_ch = (s < K) ? cfg.enc_channels(K - s) : 0;
      const int out_ch = cfg.enc_channels(K + 1 - s);
      dec_conv.emplace_back(cur + skip_ch, out_ch, 3, 3, 1, 1, 1, 1, rng);
      dec_bn.emplace_back(out_ch);
      dec_relu.emplace_back();
      cur = out_ch;
    }
    dec_head = nn::Conv2d<T>(cur, 2, 1, 1, 1, 1, 0, 0, rng);

    // visual branch
    if (cfg.has_visual()) {
      const int c0 = cfg.frontend_channels();
      frontend = nn::Conv3d<T>(1, c0, 5, 7, 7, 2, 2, 3, 3, rng);
      frontend_bn = nn::BatchNorm<T>(c0);
      if (cfg.has_sam()) sam = nn::Sam<T>(c0, rng);
      int vprev = c0;
      for (int s = 1; s <= 3; ++s) {
        backbone.emplace_back(vprev, cfg.backbone_channels(s), rng);
        vprev = cfg.backbone_channels(s);
      }
      const int cv = cfg.visual_channels();
      for (int dil : {1, 2, 4}) tcn.emplace_back(cv, dil, rng);
      if (cv != C) {
        has_vis_proj = true;
        vis_proj = nn::Linear<T>(cv, C, rng);
      }
      if (cfg.has_mam()) {
        mam_fc = nn::Linear<T>(cv + C, 2, rng);
        tau = nn::Param<T>({1});
        const double t0 = std::max(1e-3, cfg.temperature_init - 1e-4);
        tau.value.data[0] = static_cast<T>(std::log(std::expm1(t0)));
      } else {
        fuse_lin = nn::Linear<T>(2 * C, C, rng);
      }
    }
  }

  // ---- parameter registry ----
  void collect_params(std::vector<nn::ParamRef<T>>& out) {
    for (int i = 0; i < K + 2; ++i) {
      enc_conv[i].collect(out, "enc.conv" + std::to_string(i + 1));
      enc_bn[i].collect(out, "enc.bn" + std::to_string(i + 1));
    }
    dec_expand.collect(out, "dec.expand");
    dec_expand_bn.collect(out, "dec.expand_bn");
    for (int s = 0; s < K; ++s) {
      dec_conv[s].collect(out, "dec.stage" + std::to_string(s + 1) + ".conv");
      dec_bn[s].collect(out, "dec.stage" + std::to_string(s + 1) + ".bn");
    }
    dec_head.collect(out, "dec.head");
    if (cfg.has_visual()) {
      frontend.collect(out, "frontend.conv");
      frontend_bn.collect(out, "frontend.bn");
      if (cfg.has_sam()) sam.collect(out, "sam");
      for (int s = 0; s < 3; ++s)
        backbone[s].collect(out, "vis.stage" + std::to_string(s + 1));
      for (int s = 0; s < 3; ++s)
        tcn[s].collect(out, "vis.tcn" + std::to_string(s + 1));
      if (has_vis_proj) vis_proj.collect(out, "vis.proj");
      if (cfg.has_mam()) {
        mam_fc.collect(out, "mam.fc");
        out.push_back(tau.ref("mam.tau"));
      } else {
        fuse_lin.collect(out, "fuse.lin");
      }
    }
  }

  void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
    for (int i = 0; i < K + 2; ++i)
      enc_bn[i].collect_state(out, "enc.bn" + std::to_string(i + 1));
    dec_expand_bn.collect_state(out, "dec.expand_bn");
    for (int s = 0; s < K; ++s)
      dec_bn[s].collect_state(out, "dec.stage" + std::to_string(s + 1) + ".bn");
    if (cfg.has_visual()) {
      frontend_bn.collect_state(out, "frontend.bn");
      for (int s = 0; s < 3; ++s)
        backbone[s].collect_state(out, "vis.stage" + std::to_string(s + 1));
      for (int s = 0; s < 3; ++s)
        tcn[s].collect_state(out, "vis.tcn" + std::to_string(s + 1));
    }
  }

  void zero_grad() {
    std::vector<nn::ParamRef<T>> ps;
    collect_params(ps);
    for (auto& p : ps) p.grad->zero();
  }

  double temperature() const {
    if (!cfg.has_mam()) return 0.0;
    const double x = tau.value.data[0];
    const double sp = (x > 30.0) ? x : std::log1p(std::exp(x));
    return sp + 1e-4;
  }

  // ---- forward ----
  ForwardResult<T> forward(const Tensor<T>* video, const Tensor<T>& spec, bool train) {
    if (spec.rank() != 4 || spec.dim(1) != 2 || spec.dim(2) != cfg.freq_bins ||
        spec.dim(3) != cfg.time_frames)
      throw std::invalid_argument("forward: spectrogram must be [B,2,F,T]");
    if (cfg.has_visual()) {
      if (!video) throw std::invalid_argument("forward: variant requires video");
      if (video->rank() != 5 || video->dim(1) != 1 || video->dim(2) != cfg.n_frames ||
          video->dim(3) != cfg.frame_size || video->dim(4) != cfg.frame_size)
        throw std::invalid_argument("forward: video must be [B,1,N,S,S]");
      if (video->dim(0) != spec.dim(0))
        throw std::invalid_argument("forward: batch mismatch");
    }
    const int B = spec.dim(0);
    batch_ = B;

    // --- audio encoder ---
    skips_.assign(K, Tensor<T>());
    Tensor<T> x = spec;
    Tensor<T> ma_pre;
    for (int i = 0; i < K + 2; ++i) {
      x = enc_relu[i].forward(enc_bn[i].forward(enc_conv[i].forward(x), train));
      if (i == K - 1) {
        ma_pre = x;  // pre-collapse tap, [B,C,5,N]
        ma_freq_ = x.dim(2);
      }
      if (i < K) {
        x = enc_pool[i].forward(x);
        skips_[i] = x;
      }
    }
    // x: [B,C,1,N] -> f_a [B,C,N]
    f_a_ = Tensor<T>({B, cfg.base_channels, cfg.n_frames});
    std::copy(x.data.begin(), x.data.end(), f_a_.data.begin());
    Tensor<T> m_a = nn::mean_axis2(ma_pre);  // [B,C,N]

    // --- visual branch ---
    Tensor<T> f_av = f_a_;
    ForwardResult<T> res;
    if (cfg.has_visual()) {
      Tensor<T> v = frontend_relu.forward(
          frontend_bn.forward(frontend.forward(*video), train));
      v = frontend_pool.forward(v);  // [B,C0,N,28,28]
      if (cfg.has_sam()) v = sam.forward(v);
      Tensor<T> folded = fold_frames(v);  // [B*N,C0,h,w]
      for (auto& st : backbone) folded = st.forward(folded, train);
      vis_h_ = folded.dim(2);
      vis_w_ = folded.dim(3);
      // spatial GAP -> m_v [B,Cv,N]
      Tensor<T> rows({folded.dim(0), folded.dim(1)});
      const int hw = vis_h_ * vis_w_;
      for (size_t p = 0; p < rows.size(); ++p) {
        const T* src = folded.ptr() + p * hw;
        T acc = 0;
        for (int i = 0; i < hw; ++i) acc += src[i];
        rows.data[p] = acc / static_cast<T>(hw);
      }
      m_v_ = rows_to_bcn(rows, B, cfg.n_frames);
      Tensor<T> fv = m_v_;
      for (auto& blk : tcn) fv = blk.forward(fv, train);
      if (has_vis_proj) {
        f_v_pre_proj_rows_ = bcn_to_rows(fv);
        fv = rows_to_bcn(vis_proj.forward(f_v_pre_proj_rows_), B, cfg.n_frames);
      }
      f_v_ = fv;

      if (cfg.has_mam()) {
        // per-time-step logits from [m_v ; m_a]
        Tensor<T> cat_rows({B * cfg.n_frames, m_v_.dim(1) + cfg.base_channels});
        Tensor<T> mv_rows = bcn_to_rows(m_v_);
        Tensor<T> ma_rows = bcn_to_rows(m_a);
        const int cv = m_v_.dim(1), ca = cfg.base_channels;
        for (int r = 0; r < B * cfg.n_frames; ++r) {
          std::copy(mv_rows.ptr() + static_cast<size_t>(r) * cv,
                    mv_rows.ptr() + static_cast<size_t>(r + 1) * cv,
                    cat_rows.ptr() + static_cast<size_t>(r) * (cv + ca));
          std::copy(ma_rows.ptr() + static_cast<size_t>(r) * ca,
                    ma_rows.ptr() + static_cast<size_t>(r + 1) * ca,
                    cat_rows.ptr() + static_cast<size_t>(r) * (cv + ca) + cv);
        }
        logits_rows_ = mam_fc.forward(cat_rows);  // [B*N, 2]
        const T t = static_cast<T>(temperature());
        Tensor<T> a_rows(logits_rows_.shape);
        for (int r = 0; r < B * cfg.n_frames; ++r) {
          const T z0 = logits_rows_.data[2 * r] / t;
          const T z1 = logits_rows_.data[2 * r + 1] / t;
          const T mx = std::max(z0, z1);
          const T e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
          a_rows.data[2 * r] = e0 / (e0 + e1);
          a_rows.data[2 * r + 1] = e1 / (e0 + e1);
        }
        alpha_ = rows_to_bcn(a_rows, B, cfg.n_frames);  // [B,2,N]
        res.alpha = alpha_;
        f_av = fuse_modalities(alpha_, f_v_, f_a_);
      } else {
        // concat fusion
        Tensor<T> fv_rows = bcn_to_rows(f_v_);
        Tensor<T> fa_rows = bcn_to_rows(f_a_);
        const int C = cfg.base_channels;
        Tensor<T> cat({B * cfg.n_frames, 2 * C});
        for (int r = 0; r < B * cfg.n_frames; ++r) {
          std::copy(fv_rows.ptr() + static_cast<size_t>(r) * C,
                    fv_rows.ptr() + static_cast<size_t>(r + 1) * C,
                    cat.ptr() + static_cast<size_t>(r) * 2 * C);
          std::copy(fa_rows.ptr() + static_cast<size_t>(r) * C,
                    fa_rows.ptr() + static_cast<size_t>(r + 1) * C,
                    cat.ptr() + static_cast<size_t>(r) * 2 * C + C);
        }
        f_av = rows_to_bcn(fuse_lin.forward(cat), B, cfg.n_frames);
      }
    }

    // --- decoder ---
    Tensor<T> d({B, cfg.base_channels, 1, cfg.n_frames});
    std::copy(f_av.data.begin(), f_av.data.end(), d.data.begin());
    d = dec_expand_relu.forward(dec_expand_bn.forward(dec_expand.forward(d), train));
    d = nn::concat_channels(d, skips_[K - 1]);
    for (int s = 1; s <= K; ++s) {
      d = dec_up[s - 1].forward(d);
      int th, tw;
      if (s < K) {
        th = skips_[K - s - 1].dim(2);
        tw = skips_[K - s - 1].dim(3);
      } else {
        th = cfg.freq_bins;
        tw = cfg.time_frames;
      }
      d = dec_resize[s - 1].forward(d, th, tw);
      if (s < K) d = nn::concat_channels(d, skips_[K - s - 1]);
      d = dec_relu[s - 1].forward(dec_bn[s - 1].forward(dec_conv[s - 1].forward(d), train));
    }
    res.mask = dec_head.forward(d);
    return res;
  }

  // ---- backward (after a train-mode forward) ----
  void backward(const Tensor<T>& dmask) {
    const int B = batch_, C = cfg.base_channels, N = cfg.n_frames;
    Tensor<T> d = dec_head.backward(dmask);
    std::vector<Tensor<T>> skip_grads(K);
    for (int s = K; s >= 1; --s) {
      d = dec_conv[s - 1].backward(dec_bn[s - 1].backward(dec_relu[s - 1].backward(d)));
      if (s < K) {
        Tensor<T> dmain, dskip;
        nn::split_channels(d, d.dim(1) - skips_[K - s - 1].dim(1), dmain, dskip);
        accumulate(skip_grads[K - s - 1], dskip);
        d = std::move(dmain);
      }
      d = dec_up[s - 1].backward(dec_resize[s - 1].backward(d));
    }
    {
      Tensor<T> dmain, dskip;
      nn::split_channels(d, C, dmain, dskip);
      accumulate(skip_grads[K - 1], dskip);
      d = dec_expand.backward(
          dec_expand_bn.backward(dec_expand_relu.backward(dmain)));
    }
    Tensor<T> d_fav({B, C, N});
    std::copy(d.data.begin(), d.data.end(), d_fav.data.begin());

    // --- fusion backward ---
    Tensor<T> d_fa({B, C, N});
    Tensor<T> d_ma;  // [B,C,N] (MAM path)
    if (!cfg.has_visual()) {
      d_fa = d_fav;
    } else if (cfg.has_mam()) {
      Tensor<T> d_fv(f_v_.shape);
      Tensor<T> d_alpha({B, 2, N});
      for (int bi = 0; bi < B; ++bi)
        for (int n = 0; n < N; ++n) {
          const T av = alpha_.data[(static_cast<size_t>(bi) * 2) * N + n];
          const T aa = alpha_.data[(static_cast<size_t>(bi) * 2 + 1) * N + n];
          T gav = 0, gaa = 0;
          for (int c = 0; c < C; ++c) {
            const size_t idx = (static_cast<size_t>(bi) * C + c) * N + n;
            const T g = d_fav.data[idx];
            d_fv.data[idx] = av * g;
            d_fa.data[idx] = aa * g;
            gav += g * f_v_.data[idx];
            gaa += g * f_a_.data[idx];
          }
          d_alpha.data[(static_cast<size_t>(bi) * 2) * N + n] = gav;
          d_alpha.data[(static_cast<size_t>(bi) * 2 + 1) * N + n] = gaa;
        }
      // softmax-with-temperature backward
      const T t = static_cast<T>(temperature());
      Tensor<T> da_rows = bcn_to_rows(d_alpha);  // [B*N,2]
      Tensor<T> a_rows = bcn_to_rows(alpha_);
      Tensor<T> dlogit_rows(logits_rows_.shape);
      double dtau_acc = 0.0;
      for (int r = 0; r < B * N; ++r) {
        const T a0 = a_rows.data[2 * r], a1 = a_rows.data[2 * r + 1];
        const T g0 = da_rows.data[2 * r], g1 = da_rows.data[2 * r + 1];
        const T dot = g0 * a0 + g1 * a1;
        const T dz0 = a0 * (g0 - dot), dz1 = a1 * (g1 - dot);
        dlogit_rows.data[2 * r] = dz0 / t;
        dlogit_rows.data[2 * r + 1] = dz1 / t;
        dtau_acc += -(dz0 * logits_rows_.data[2 * r] +
                      dz1 * logits_rows_.data[2 * r + 1]) /
                    (static_cast<double>(t) * t);
      }
      const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(tau.value.data[0])));
      tau.grad.data[0] += static_cast<T>(dtau_acc * sig);
      Tensor<T> dcat = mam_fc.backward(dlogit_rows);  // [B*N, Cv+C]
      const int cv = m_v_.dim(1);
      Tensor<T> dmv_rows({B * N, cv}), dma_rows({B * N, C});
      for (int r = 0; r < B * N; ++r) {
        std::copy(dcat.ptr() + static_cast<size_t>(r) * (cv + C),
                  dcat.ptr() + static_cast<size_t>(r) * (cv + C) + cv,
                  dmv_rows.ptr() + static_cast<size_t>(r) * cv);
        std::copy(dcat.ptr() + static_cast<size_t>(r) * (cv + C) + cv,
                  dcat.ptr() + static_cast<size_t>(r + 1) * (cv + C),
                  dma_rows.ptr() + static_cast<size_t>(r) * C);
      }
      d_ma = rows_to_bcn(dma_rows, B, N);
      backward_visual(d_fv, rows_to_bcn(dmv_rows, B, N));
    } else {
      Tensor<T> dcat = fuse_lin.backward(bcn_to_rows(d_fav));  // [B*N, 2C]
      Tensor<T> dfv_rows({B * N, C}), dfa_rows({B * N, C});
      for (int r = 0; r < B * N; ++r) {
        std::copy(dcat.ptr() + static_cast<size_t>(r) * 2 * C,
                  dcat.ptr() + static_cast<size_t>(r) * 2 * C + C,
                  dfv_rows.ptr() + static_cast<size_t>(r) * C);
        std::copy(dcat.ptr() + static_cast<size_t>(r) * 2 * C + C,
                  dcat.ptr() + static_cast<size_t>(r + 1) * 2 * C,
                  dfa_rows.ptr() + static_cast<size_t>(r) * C);
      }
      d_fa = rows_to_bcn(dfa_rows, B, N);
      backward_visual(rows_to_bcn(dfv_rows, B, N), Tensor<T>());
    }

    // --- audio encoder backward (f_a tap, m_a tap, skip taps) ---
    Tensor<T> dx({B, C, 1, N});
    std::copy(d_fa.data.begin(), d_fa.data.end(), dx.data.begin());
    for (int i = K + 1; i >= 0; --i) {
      if (i < K) {
        accumulate(dx, skip_grads[i]);
        dx = enc_pool[i].backward(dx);
        if (i == K - 1 && d_ma.size() > 0)
          accumulate(dx, nn::mean_axis2_backward(d_ma, ma_freq_));
      }
      dx = enc_conv[i].backward(enc_bn[i].backward(enc_relu[i].backward(dx)));
    }
  }

  static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    if (dst.size() == 0) {
      dst = src;
      return;
    }
    for (size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
  }

  // d_fv: gradient on f_v [B,C,N] (post projection); d_mv_extra: MAM gradient
  // on m_v [B,Cv,N] or empty.
  void backward_visual(const Tensor<T>& d_fv, const Tensor<T>& d_mv_extra) {
    const int B = batch_, N = cfg.n_frames;
    Tensor<T> d = d_fv;
    if (has_vis_proj) {
      Tensor<T> drows = vis_proj.backward(bcn_to_rows(d));
      d = rows_to_bcn(drows, B, N);
    }
    for (int i = 2; i >= 0; --i) d = tcn[i].backward(d);
    if (d_mv_extra.size() > 0) accumulate(d, d_mv_extra);
    // GAP backward -> folded [B*N,Cv,h,w]
    Tensor<T> drows = bcn_to_rows(d);  // [B*N, Cv]
    const int hw = vis_h_ * vis_w_;
    Tensor<T> dfold({B * N, d.dim(1), vis_h_, vis_w_});
    for (size_t p = 0; p < drows.size(); ++p) {
      const T g = drows.data[p] / static_cast<T>(hw);
      T* dst = dfold.ptr() + p * hw;
      for (int i = 0; i < hw; ++i) dst[i] = g;
    }
    for (int i = 2; i >= 0; --i) dfold = backbone[i].backward(dfold);
    Tensor<T> dvis = unfold_frames(dfold, B, N);
    if (cfg.has_sam()) dvis = sam.backward(dvis);
    dvis = frontend_pool.backward(dvis);
    frontend.backward(frontend_bn.backward(frontend_relu.backward(dvis)));
  }
};

// Mean-square loss over every mask entry; writes d(loss)/d(pred) into dpred.
template <typename T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* dpred) {
  if (!pred.same_shape(target)) throw std::invalid_argument("loss: shape mismatch");
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  if (dpred) *dpred = Tensor<T>(pred.shape);
  for (size_t i = 0; i < pred.size(); ++i) {
    const double diff = static_cast<double>(pred.data[i]) - target.data[i];
    acc += diff * diff;
    if (dpred) dpred->data[i] = static_cast<T>(2.0 * diff / n);
  }
  return acc / n;
}

// --------------------------------------------------------------------------
// Checkpoints: versioned binary container ("DAVSE001") holding the config
// record plus named float32 tensors (parameters, batch-norm state, optimizer
// moments, best-validation snapshot).
// --------------------------------------------------------------------------
struct Checkpoint {
  ModelConfig cfg;
  dsp::StftConfig stft;
  uint64_t seed = 0;
  int64_t step = 0;
  double best_val = 0.0;
  std::map<std::string, nn::Tensor<float>> tensors;

  bool has_best() const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);
// Copies current parameters + batch-norm state into ck under
// snapshot_prefix + "param/" and snapshot_prefix + "state/".
void fill_checkpoint_from_net(DualAvseNet<float>& net, Checkpoint& ck,
                              const std::string& snapshot_prefix = "");
// Loads parameters and batch-norm state stored under snapshot_prefix
// ("" for the live snapshot, "best/" for the best-validation one).
void load_net_from_checkpoint(const Checkpoint& ck, DualAvseNet<float>& net,
                              const std::string& snapshot_prefix = "");

// Video preprocessing: optional lip crop (rows 56-112, cols 24-88 of a
// 112x112 frame, resized back to 112x112), scale to [0,1], then per-clip
// mean/std normalization. Returns [1,N,H,W]-shaped data as [N,H,W] floats.
template <typename T>
Tensor<T> preprocess_video(const std::vector<uint8_t>& frames, int n, int h, int w,
                           const std::string& visual_input) {
  Tensor<T> out({n, h, w});
  if (visual_input == "lip_crop") {
    if (h != 112 || w != 112)
      throw std::invalid_argument("lip_crop requires 112x112 frames");
    const int r0 = 56, r1 = 112, c0 = 24, c1 = 88;
    const int ch = r1 - r0, cw = c1 - c0;
    nn::ResizeBilinear<T> rs;
    Tensor<T> crop({n, ch, cw});
    for (int f = 0; f < n; ++f)
      for (int i = 0; i < ch; ++i)
        for (int j = 0; j < cw; ++j)
          crop.data[(static_cast<size_t>(f) * ch + i) * cw + j] = static_cast<T>(
              frames[(static_cast<size_t>(f) * h + r0 + i) * w + c0 + j]);
    out = rs.forward(crop, h, w);
  } else if (visual_input == "face") {
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = static_cast<T>(frames[i]);
  } else {
    throw std::invalid_argument("unknown visual_input: " + visual_input);
  }
  double mu = 0.0;
  for (auto v : out.data) mu += v / 255.0;
  mu /= static_cast<double>(out.size());
  double var = 0.0;
  for (auto& v : out.data) {
    v = static_cast<T>(v / 255.0 - mu);
    var += static_cast<double>(v) * v;
  }
  var /= static_cast<double>(out.size());
  const T istd = static_cast<T>(1.0 / (std::sqrt(var) + 1e-8));
  for (auto& v : out.data) v *= istd;
  return out;
}

}  // namespace davse::model
