// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// The SR-CorrNet network: correlation embedding, dual-path TF encoder,
// fixed/attractor split, weight-shared reconstruction decoder with speaker
// interaction, and the complex deep-filter head.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srcorrnet/corr.hpp"
#include "srcorrnet/signal.hpp"
#include "srcorrnet/tensor.hpp"

namespace srcorrnet {

enum class SplitKind { kFixed, kAttractor };
enum class FilterCombine { kSigmoidGate, kTanhNorm };

struct ModelConfig {
  int64_t C = 32;        // feature channels
  int64_t C_H = 64;      // ConvFFN hidden channels
  int64_t B_E = 1;       // encoder depth
  int64_t B_D = 2;       // decoder depth
  int64_t B_A = 2;       // attractor decoder depth
  int64_t heads = 2;
  int64_t conv_kernel = 3;
  int64_t L = 1, I = 1;  // context half-widths (frames, bins)
  int64_t M = 1;         // input channels
  int64_t K = 2;         // fixed speaker count, or K_0 for attractor split
  SplitKind split_kind = SplitKind::kFixed;
  FilterCombine filter_combine = FilterCombine::kSigmoidGate;
  NormKind corr_norm = NormKind::kScotBeta;
  double beta = 0.5;
  int64_t frame_len = 128;
  int64_t hop = 64;

  int64_t taps() const { return M * (2 * L + 1) * (2 * I + 1); }
  int64_t feat_channels() const { return 2 * taps(); }

  void validate() const {
    check(C % heads == 0, "config: C must be divisible by heads");
    check((C / heads) % 2 == 0, "config: head dim must be even for RoPE");
    check(B_E >= 1 && B_D >= 0, "config: B_E >= 1 and B_D >= 0 required");
    check(B_A >= 1, "config: B_A >= 1 required");
    check(conv_kernel % 2 == 1, "config: conv kernel must be odd");
    check(K >= 1 && M >= 1, "config: K, M >= 1 required");
    check(frame_len % 2 == 0 && hop > 0 && hop <= frame_len, "config: bad STFT geometry");
  }
};

namespace layers {

struct Linear {
  Tensor w, b;
  bool has_bias = true;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int64_t ci, int64_t co, bool bias = true)
      : has_bias(bias) {
    w = ps.create(name + ".w", {co, ci}, Init::kFanInUniform, ci);
    if (bias) b = ps.create(name + ".b", {co}, Init::kZeros);
  }

  Tensor fwd(const Tensor& x) const { return linear(x, w, has_bias ? &b : nullptr); }
};

struct Conv2d {
  Tensor w, b;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int64_t ci, int64_t co, int64_t kt, int64_t kf) {
    w = ps.create(name + ".w", {co, kt, kf, ci}, Init::kFanInUniform, ci * kt * kf);
    b = ps.create(name + ".b", {co}, Init::kZeros);
  }

  Tensor fwd(const Tensor& x) const { return conv2d(x, w, &b); }
};

struct Conv1d {
  Tensor w, b;
  int64_t groups = 1;

  Conv1d() = default;
  Conv1d(ParamStore& ps, const std::string& name, int64_t ci, int64_t co, int64_t k,
         int64_t groups_ = 1)
      : groups(groups_) {
    w = ps.create(name + ".w", {co, k, ci / groups_}, Init::kFanInUniform, (ci / groups_) * k);
    b = ps.create(name + ".b", {co}, Init::kZeros);
  }

  Tensor fwd(const Tensor& x) const { return conv1d_grouped(x, w, &b, groups); }
};

struct LayerNorm {
  Tensor g, b;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int64_t c) {
    g = ps.create(name + ".g", {c}, Init::kOnes);
    b = ps.create(name + ".b", {c}, Init::kZeros);
  }

  Tensor fwd(const Tensor& x) const { return layer_norm(x, g, b); }
};

// Multi-head attention over [B,S,C]; optional RoPE, causal mask, and
// cross-attention key/value input.
struct Mhsa {
  Linear wq, wk, wv, wo;
  int64_t heads = 1;
  bool use_rope = false;
  bool causal = false;

  Mhsa() = default;
  Mhsa(ParamStore& ps, const std::string& name, int64_t c, int64_t heads_, bool rope_,
       bool causal_ = false)
      : heads(heads_), use_rope(rope_), causal(causal_) {
    wq = Linear(ps, name + ".q", c, c);
    wk = Linear(ps, name + ".k", c, c);
    wv = Linear(ps, name + ".v", c, c);
    wo = Linear(ps, name + ".o", c, c);
  }

  Tensor fwd(const Tensor& x, const Tensor* kv_input = nullptr) const {
    const Tensor& kv_src = kv_input ? *kv_input : x;
    int64_t B = x.shape()[0], S = x.shape()[1], C = x.shape()[2];
    int64_t S2 = kv_src.shape()[1];
    int64_t d = C / heads;
    Tensor q = reshape(wq.fwd(x), {B, S, heads, d});
    Tensor k = reshape(wk.fwd(kv_src), {B, S2, heads, d});
    Tensor v = reshape(wv.fwd(kv_src), {B, S2, heads, d});
    if (use_rope) {
      q = rope(q);
      k = rope(k);
    }
    Tensor p = softmax_lastdim(attn_logits(q, k), causal);
    Tensor o = reshape(attn_apply(p, v), {B, S, C});
    return wo.fwd(o);
  }
};

// Two 1-D convolutions with a hidden SwiGLU; operates on [B,S,C].
struct ConvFFN {
  LayerNorm ln;
  Conv1d c1, c2;

  ConvFFN() = default;
  ConvFFN(ParamStore& ps, const std::string& name, int64_t c, int64_t ch, int64_t kernel) {
    ln = LayerNorm(ps, name + ".ln", c);
    c1 = Conv1d(ps, name + ".c1", c, 2 * ch, kernel);
    c2 = Conv1d(ps, name + ".c2", ch, c, kernel);
  }

  Tensor fwd(const Tensor& x) const { return c2.fwd(swiglu(c1.fwd(ln.fwd(x)))); }
};

// Macaron unit: half-weighted ConvFFN, MHSA with RoPE, half ConvFFN; all
// pre-norm residual. Sequence axis is whichever the caller folded to S.
struct UnitModule {
  ConvFFN ffn1, ffn2;
  LayerNorm attn_ln;
  Mhsa attn;

  UnitModule() = default;
  UnitModule(ParamStore& ps, const std::string& name, int64_t c, int64_t ch, int64_t heads,
             int64_t kernel) {
    ffn1 = ConvFFN(ps, name + ".ffn1", c, ch, kernel);
    attn_ln = LayerNorm(ps, name + ".attn_ln", c);
    attn = Mhsa(ps, name + ".attn", c, heads, /*rope=*/true);
    ffn2 = ConvFFN(ps, name + ".ffn2", c, ch, kernel);
  }

  Tensor fwd(const Tensor& x) const {
    Tensor h = add(x, scale(ffn1.fwd(x), 0.5));
    h = add(h, attn.fwd(attn_ln.fwd(h)));
    h = add(h, scale(ffn2.fwd(h), 0.5));
    return h;
  }
};

// Frequency module then time module over a [G,T,F,C] feature map.
struct TFBlock {
  UnitModule freq_mod, time_mod;

  TFBlock() = default;
  TFBlock(ParamStore& ps, const std::string& name, int64_t c, int64_t ch, int64_t heads,
          int64_t kernel) {
    freq_mod = UnitModule(ps, name + ".freq", c, ch, heads, kernel);
    time_mod = UnitModule(ps, name + ".time", c, ch, heads, kernel);
  }

  Tensor fwd(const Tensor& x, int64_t G, int64_t T, int64_t F, int64_t C) const {
    Tensor h = reshape(x, {G * T, F, C});
    h = freq_mod.fwd(h);
    h = transpose12(reshape(h, {G, T, F, C}), G, T, F, C);  // [G,F,T,C]
    h = time_mod.fwd(reshape(h, {G * F, T, C}));
    h = transpose12(reshape(h, {G, F, T, C}), G, F, T, C);  // back to [G,T,F,C]
    return h;
  }
};

// Self-attention across the K speaker streams at each (t,f) bin, then a
// 4C ReLU FFN; pre-norm residual, no positional encoding.
struct SpeakerInteraction {
  LayerNorm attn_ln, ffn_ln;
  Mhsa attn;
  Linear f1, f2;

  SpeakerInteraction() = default;
  SpeakerInteraction(ParamStore& ps, const std::string& name, int64_t c, int64_t heads) {
    attn_ln = LayerNorm(ps, name + ".attn_ln", c);
    attn = Mhsa(ps, name + ".attn", c, heads, /*rope=*/false);
    ffn_ln = LayerNorm(ps, name + ".ffn_ln", c);
    f1 = Linear(ps, name + ".f1", c, 4 * c);
    f2 = Linear(ps, name + ".f2", 4 * c, c);
  }

  Tensor fwd(const Tensor& x, int64_t K, int64_t T, int64_t F, int64_t C) const {
    // [K,T,F,C] -> [T*F, K, C]
    Tensor h = reshape(transpose12(reshape(x, {1, K, T * F, C}), 1, K, T * F, C), {T * F, K, C});
    h = add(h, attn.fwd(attn_ln.fwd(h)));
    h = add(h, f2.fwd(relu(f1.fwd(ffn_ln.fwd(h)))));
    return reshape(transpose12(reshape(h, {1, T * F, K, C}), 1, T * F, K, C), {K, T, F, C});
  }
};

}  // namespace layers

namespace detail {

// Sinusoidal encoding of a single position index into `dim` channels.
inline void sin_pe(double pos, int64_t dim, double* out) {
  for (int64_t c = 0; c < dim; ++c) {
    double rate = std::pow(10000.0, -double(c - (c % 2)) / double(dim));
    out[c] = (c % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
  }
}

// [T,F,C] constant, encoding only the frequency index.
inline Tensor freq_pe(int64_t T, int64_t F, int64_t C) {
  Tensor pe({T, F, C});
  std::vector<double> row(C);
  for (int64_t f = 0; f < F; ++f) {
    sin_pe(double(f), C, row.data());
    for (int64_t t = 0; t < T; ++t)
      std::copy_n(row.data(), C, &pe.val()[(t * F + f) * C]);
  }
  return pe;
}

// [T,F,C] constant, first half of the channels encoding t and the rest f.
inline Tensor pe_2d(int64_t T, int64_t F, int64_t C) {
  Tensor pe({T, F, C});
  int64_t half = C / 2;
  std::vector<double> rt(half), rf(C - half);
  for (int64_t t = 0; t < T; ++t) {
    sin_pe(double(t), half, rt.data());
    for (int64_t f = 0; f < F; ++f) {
      sin_pe(double(f), C - half, rf.data());
      double* dst = &pe.val()[(t * F + f) * C];
      std::copy_n(rt.data(), half, dst);
      std::copy_n(rf.data(), C - half, dst + half);
    }
  }
  return pe;
}

}  // namespace detail

// Correlation module: two 3x3 Conv2D layers with a SwiGLU between, LN, and a
// sinusoidal positional encoding along the frequency axis.
struct CorrelationEmbed {
  layers::Conv2d conv1, conv2;
  layers::LayerNorm ln;

  CorrelationEmbed() = default;
  CorrelationEmbed(ParamStore& ps, const std::string& name, int64_t feat_ch, int64_t c) {
    conv1 = layers::Conv2d(ps, name + ".conv1", feat_ch, 2 * c, 3, 3);
    conv2 = layers::Conv2d(ps, name + ".conv2", c, c, 3, 3);
    ln = layers::LayerNorm(ps, name + ".ln", c);
  }

  Tensor fwd(const Tensor& x, int64_t c) const {
    int64_t T = x.shape()[0], F = x.shape()[1];
    Tensor h = conv2.fwd(swiglu(conv1.fwd(x)));
    h = ln.fwd(h);
    return add(h, detail::freq_pe(T, F, c));
  }

  Tensor fwd(const RealFeature& feat, int64_t c) const {
    return fwd(Tensor::from({feat.T, feat.F, feat.channels}, feat.data), c);
  }
};

// Fixed split: C -> 2KC -> SwiGLU -> KC -> KC, reshape to K streams, LN.
struct SplitFixed {
  layers::Linear l1, l2;
  layers::LayerNorm ln;
  int64_t K = 0;

  SplitFixed() = default;
  SplitFixed(ParamStore& ps, const std::string& name, int64_t c, int64_t k) : K(k) {
    l1 = layers::Linear(ps, name + ".l1", c, 2 * k * c);
    l2 = layers::Linear(ps, name + ".l2", k * c, k * c);
    ln = layers::LayerNorm(ps, name + ".ln", c);
  }

  Tensor fwd(const Tensor& e, int64_t T, int64_t F, int64_t C) const {
    Tensor h = l2.fwd(swiglu(l1.fwd(e)));  // [T,F,KC]
    h = reshape(h, {1, T * F, K, C});
    h = reshape(transpose12(h, 1, T * F, K, C), {K, T, F, C});
    return ln.fwd(h);
  }
};

struct AttractorResult {
  Tensor probs;          // [K_0+1], graph tensor
  Tensor attractors;     // [K_0+1, C]
  int64_t K_selected = 0;
};

// Transformer-decoder attractor module: K_0+1 learnable queries attend to the
// flattened encoder feature (with 2-d positional embeddings); each block is
// cross-attention followed by causally masked self-attention.
struct SplitAttractor {
  Tensor queries;  // [K_0+1, C]
  struct Block {
    layers::LayerNorm cross_ln, self_ln;
    layers::Mhsa cross, self_attn;
  };
  std::vector<Block> blocks;
  layers::LayerNorm out_ln;
  layers::Linear prob_head;
  layers::Linear proj1, proj2;
  layers::LayerNorm stream_ln;
  int64_t K0 = 0;

  SplitAttractor() = default;
  SplitAttractor(ParamStore& ps, const std::string& name, int64_t c, int64_t k0, int64_t b_a,
                 int64_t heads)
      : K0(k0) {
    queries = ps.create(name + ".queries", {k0 + 1, c}, Init::kFanInUniform, c);
    for (int64_t b = 0; b < b_a; ++b) {
      Block blk;
      std::string bn = name + ".blk" + std::to_string(b);
      blk.cross_ln = layers::LayerNorm(ps, bn + ".cross_ln", c);
      blk.cross = layers::Mhsa(ps, bn + ".cross", c, heads, /*rope=*/false);
      blk.self_ln = layers::LayerNorm(ps, bn + ".self_ln", c);
      blk.self_attn = layers::Mhsa(ps, bn + ".self", c, heads, /*rope=*/false, /*causal=*/true);
      blocks.push_back(std::move(blk));
    }
    out_ln = layers::LayerNorm(ps, name + ".out_ln", c);
    prob_head = layers::Linear(ps, name + ".prob", c, 1);
    proj1 = layers::Linear(ps, name + ".proj1", 2 * c, 2 * c);
    proj2 = layers::Linear(ps, name + ".proj2", c, c);
    stream_ln = layers::LayerNorm(ps, name + ".stream_ln", c);
  }

  AttractorResult attractors_from(const Tensor& e, int64_t T, int64_t F, int64_t C) const {
    Tensor kv = reshape(add(e, detail::pe_2d(T, F, C)), {1, T * F, C});
    Tensor q = reshape(queries, {1, K0 + 1, C});
    for (const auto& blk : blocks) {
      q = add(q, blk.cross.fwd(blk.cross_ln.fwd(q), &kv));
      q = add(q, blk.self_attn.fwd(blk.self_ln.fwd(q)));
    }
    Tensor a = out_ln.fwd(reshape(q, {K0 + 1, C}));
    AttractorResult res;
    res.attractors = a;
    res.probs = reshape(sigmoid(prob_head.fwd(a)), {K0 + 1});
    return res;
  }

  // Leading-run rule: count attractors with p > 0.5 starting at slot 0,
  // stopping at the first inactive one; clamped to [1, K_0].
  int64_t infer_count(const std::vector<double>& probs) const {
    int64_t k = 0;
    while (k < K0 && probs[k] > 0.5) ++k;
    return std::max<int64_t>(1, k);
  }

  // Broadcast selected attractors, concatenate with E, project to K streams.
  Tensor split(const Tensor& e, const AttractorResult& res, int64_t K, int64_t T, int64_t F,
               int64_t C) const {
    check(K >= 1 && K <= K0, "split_attractor: K out of range");
    Tensor sel = slice_rows(res.attractors, K);       // [K, C]
    Tensor bcast = broadcast_tf(sel, T, F);           // [K,T,F,C]
    // Tile E across speakers, with gradients summed back onto the
    // single encoder feature.
    std::vector<double> tiled(size_t(K) * T * F * C);
    for (int64_t k = 0; k < K; ++k)
      std::copy_n(e.val().data(), T * F * C, &tiled[k * T * F * C]);
    Tensor e_tiled = make_op(
        Shape{K, T, F, C}, {e},
        [&](std::vector<double>& out) { out = tiled; },
        [K, T, F, C](Node& self) {
          auto& g = self.parents[0]->grad;
          for (int64_t k = 0; k < K; ++k)
            for (int64_t i = 0; i < T * F * C; ++i) g[i] += self.grad[k * T * F * C + i];
        });
    Tensor h = concat_lastdim(bcast, e_tiled);        // [K,T,F,2C]
    h = proj2.fwd(swiglu(proj1.fwd(h)));              // 2C -> 2C -> swiglu -> C -> C
    return stream_ln.fwd(h);
  }
};

// Deep-filter head: three parallel 1x1 projections (real, imag, magnitude
// gate) combined into complex taps.
struct FilterHead {
  layers::Linear hr, hi, hm;
  FilterCombine combine = FilterCombine::kSigmoidGate;

  FilterHead() = default;
  FilterHead(ParamStore& ps, const std::string& name, int64_t c, int64_t taps,
             FilterCombine comb)
      : combine(comb) {
    hr = layers::Linear(ps, name + ".r", c, taps);
    hi = layers::Linear(ps, name + ".i", c, taps);
    hm = layers::Linear(ps, name + ".m", c, taps);
  }

  // x: [K,T,F,C] -> (wr, wi) each [K,T,F,taps]
  std::pair<Tensor, Tensor> fwd(const Tensor& x) const {
    Tensor r = hr.fwd(x), i = hi.fwd(x), m = hm.fwd(x);
    if (combine == FilterCombine::kSigmoidGate) {
      Tensor gate = sigmoid(m);
      return {mul(gate, r), mul(gate, i)};
    }
    // tanh-normalized: w = tanh(|v|) * v / |v| with v = r + j i.
    Tensor mag = sqrt_t(add_const(add(mul(r, r), mul(i, i)), 1e-12));
    Tensor factor = div(tanh_t(mag), mag);
    return {mul(factor, r), mul(factor, i)};
  }
};

struct ModelOutput {
  // Packed complex spectra [K,T,F,2] per stage; index B_D is the final
  // output. In inference mode only the final stage is present.
  std::vector<Tensor> stage_packed;
  Tensor attractor_probs;  // defined only for attractor split
  int64_t K = 0;
  int64_t T = 0, F = 0;
};

class SRCorrNet {
 public:
  SRCorrNet(ModelConfig cfg, uint64_t seed) : cfg_(cfg), ps_(seed) {
    cfg_.validate();
    embed_ = CorrelationEmbed(ps_, "embed", cfg_.feat_channels(), cfg_.C);
    for (int64_t b = 0; b < cfg_.B_E; ++b)
      encoder_.emplace_back(ps_, "enc" + std::to_string(b), cfg_.C, cfg_.C_H, cfg_.heads,
                            cfg_.conv_kernel);
    if (cfg_.split_kind == SplitKind::kFixed)
      split_fixed_ = SplitFixed(ps_, "split", cfg_.C, cfg_.K);
    else
      split_attractor_ = SplitAttractor(ps_, "split", cfg_.C, cfg_.K, cfg_.B_A, cfg_.heads);
    for (int64_t b = 0; b < cfg_.B_D; ++b) {
      decoder_.emplace_back(ps_, "dec" + std::to_string(b), cfg_.C, cfg_.C_H, cfg_.heads,
                            cfg_.conv_kernel);
      interaction_.emplace_back(ps_, "spk" + std::to_string(b), cfg_.C, cfg_.heads);
    }
    if (cfg_.B_D > 0)
      aux_head_ = FilterHead(ps_, "aux_head", cfg_.C, cfg_.taps(), cfg_.filter_combine);
    final_head_ = FilterHead(ps_, "final_head", cfg_.C, cfg_.taps(), cfg_.filter_combine);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

  // K_true = 0 means infer the stream count (attractor split only).
  ModelOutput forward(const ComplexSpectrogram& X, int64_t K_true = 0,
                      bool train_mode = false) const {
    check(X.M == cfg_.M, "forward: channel count mismatch");
    ContextStack ctx = unfold_context(X, cfg_.L, cfg_.I);
    CorrelationTensor Z = compute_correlation(X, cfg_.L, cfg_.I, cfg_.corr_norm, cfg_.beta);
    RealFeature feat = to_real_features(Z);
    return forward_from_features(feat, ctx, K_true, train_mode);
  }

  ModelOutput forward_from_features(const RealFeature& feat, const ContextStack& ctx,
                                    int64_t K_true, bool train_mode) const {
    check(feat.channels == cfg_.feat_channels(), "forward: feature channel mismatch");
    return forward_from_feature_tensor(
        Tensor::from({feat.T, feat.F, feat.channels}, feat.data), ctx, K_true, train_mode);
  }

  // Same as above with the feature map as a graph tensor [T,F,channels].
  ModelOutput forward_from_feature_tensor(const Tensor& feat, const ContextStack& ctx,
                                          int64_t K_true, bool train_mode) const {
    int64_t T = feat.shape()[0], F = feat.shape()[1], C = cfg_.C;
    check(feat.shape()[2] == cfg_.feat_channels(), "forward: feature channel mismatch");
    Tensor e = embed_.fwd(feat, C);
    for (const auto& blk : encoder_) e = blk.fwd(reshape(e, {1, T, F, C}), 1, T, F, C);
    e = reshape(e, {T, F, C});

    ModelOutput out;
    out.T = T;
    out.F = F;
    Tensor d;
    if (cfg_.split_kind == SplitKind::kFixed) {
      check(K_true == 0 || K_true == cfg_.K, "forward: fixed split has a fixed K");
      out.K = cfg_.K;
      d = split_fixed_.fwd(e, T, F, C);
    } else {
      check(K_true <= cfg_.K, "forward: K_true exceeds K_0");
      AttractorResult res = split_attractor_.attractors_from(e, T, F, C);
      out.attractor_probs = res.probs;
      out.K = (K_true > 0) ? K_true : split_attractor_.infer_count(res.probs.val());
      d = split_attractor_.split(e, res, out.K, T, F, C);
    }

    auto emit = [&](const Tensor& feat_map, const FilterHead& head) {
      auto [wr, wi] = head.fwd(feat_map);
      out.stage_packed.push_back(apply_filter_node(wr, wi, ctx));
    };
    if (train_mode && cfg_.B_D > 0) emit(d, aux_head_);
    for (int64_t b = 0; b < cfg_.B_D; ++b) {
      d = decoder_[b].fwd(d, out.K, T, F, C);
      d = interaction_[b].fwd(d, out.K, T, F, C);
      if (train_mode && b < cfg_.B_D - 1) emit(d, aux_head_);
    }
    emit(d, final_head_);
    return out;
  }

  // Convenience: separated reference-channel waveforms from the final stage.
  Tensor synthesize(const ModelOutput& out, const StftConfig& stft_cfg, int64_t out_len) const {
    return istft_node(out.stage_packed.back(), stft_cfg.frame_len, stft_cfg.hop, stft_cfg.window,
                      out_len);
  }

 private:
  ModelConfig cfg_;
  ParamStore ps_;
  CorrelationEmbed embed_;
  std::vector<layers::TFBlock> encoder_;
  SplitFixed split_fixed_;
  SplitAttractor split_attractor_;
  std::vector<layers::TFBlock> decoder_;
  std::vector<layers::SpeakerInteraction> interaction_;
  FilterHead aux_head_, final_head_;
};

}  // namespace srcorrnet
