// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Waveform <-> spectrogram conversion, context unfolding, and deep-filter
// application. Plain (non-differentiable) versions operate on complex arrays;
// graph versions for training are provided at the bottom.

#pragma once

#include <vector>

#include "srcorrnet/common.hpp"
#include "srcorrnet/tensor.hpp"

namespace srcorrnet {

struct Waveform {
  std::vector<std::vector<double>> ch;  // [M][N]
  int sample_rate = 0;

  int64_t channels() const { return int64_t(ch.size()); }
  int64_t samples() const { return ch.empty() ? 0 : int64_t(ch[0].size()); }

  void validate() const {
    check(sample_rate > 0, "waveform: sample_rate must be positive");
    check(!ch.empty(), "waveform: no channels");
    for (const auto& c : ch) {
      check(c.size() == ch[0].size(), "waveform: channel lengths differ");
      for (double v : c) check(std::isfinite(v), "waveform: non-finite sample");
    }
  }
};

// [T frames x F bins x M channels], row-major with m fastest.
struct ComplexSpectrogram {
  std::vector<cplx> data;
  int64_t T = 0, F = 0, M = 0;
  int64_t frame_len = 0, hop = 0;
  int sample_rate = 0;

  cplx& at(int64_t t, int64_t f, int64_t m) { return data[(t * F + f) * M + m]; }
  const cplx& at(int64_t t, int64_t f, int64_t m) const { return data[(t * F + f) * M + m]; }
};

// [T x F x M*Lt*It] with tap ordering (freq offset outer, time offset, channel inner).
struct ContextStack {
  std::vector<cplx> data;
  int64_t T = 0, F = 0, M = 0;
  int64_t L = 0, I = 0;

  int64_t taps() const { return M * (2 * L + 1) * (2 * I + 1); }
  int64_t tap_index(int64_t i_off, int64_t l_off, int64_t m) const {
    return ((i_off + I) * (2 * L + 1) + (l_off + L)) * M + m;
  }
  const cplx& at(int64_t t, int64_t f, int64_t p) const { return data[(t * F + f) * taps() + p]; }
};

// [K x T x F x taps]; same geometry and tap ordering as the ContextStack it
// is applied to.
struct FilterTensor {
  std::vector<cplx> data;
  int64_t K = 0, T = 0, F = 0, taps = 0;

  cplx& at(int64_t k, int64_t t, int64_t f, int64_t p) {
    return data[((k * T + t) * F + f) * taps + p];
  }
  const cplx& at(int64_t k, int64_t t, int64_t f, int64_t p) const {
    return data[((k * T + t) * F + f) * taps + p];
  }
};

enum class WindowKind { kHann };

// Analysis/synthesis configuration shared between stft and istft.
struct StftConfig {
  int64_t frame_len = 128;
  int64_t hop = 64;
  std::vector<double> window;
};

// Periodic Hann; satisfies constant overlap-add at hop = length/2.
inline std::vector<double> make_window(WindowKind kind, int64_t length) {
  check(length >= 2, "make_window: length must be >= 2");
  check(kind == WindowKind::kHann, "make_window: unsupported kind");
  std::vector<double> w(length);
  for (int64_t n = 0; n < length; ++n)
    w[n] = 0.5 * (1.0 - std::cos(2.0 * kPi * double(n) / double(length)));
  return w;
}

inline StftConfig make_stft_config(int64_t frame_len, int64_t hop) {
  return StftConfig{frame_len, hop, make_window(WindowKind::kHann, frame_len)};
}

namespace detail {

// Precomputed DFT twiddles for one frame length.
struct DftTables {
  int64_t L, F;
  std::vector<double> cos_t, sin_t;  // [F][L]

  explicit DftTables(int64_t frame_len) : L(frame_len), F(frame_len / 2 + 1) {
    cos_t.resize(F * L);
    sin_t.resize(F * L);
    for (int64_t f = 0; f < F; ++f)
      for (int64_t n = 0; n < L; ++n) {
        double th = 2.0 * kPi * double(f) * double(n) / double(L);
        cos_t[f * L + n] = std::cos(th);
        sin_t[f * L + n] = std::sin(th);
      }
  }

  // 1.0 for DC and Nyquist, 2.0 for interior bins (one-sided doubling).
  double bin_weight(int64_t f) const { return (f == 0 || (L % 2 == 0 && f == F - 1)) ? 1.0 : 2.0; }
};

inline const DftTables& dft_tables(int64_t frame_len) {
  static std::map<int64_t, DftTables> cache;
  auto it = cache.find(frame_len);
  if (it == cache.end()) it = cache.emplace(frame_len, DftTables(frame_len)).first;
  return it->second;
}

}  // namespace detail

// Center convention: the signal is zero-padded by frame_len/2 on both ends;
// frame t covers padded samples [t*hop, t*hop + frame_len).
inline ComplexSpectrogram stft(const Waveform& x, int64_t frame_len, int64_t hop,
                               const std::vector<double>& window) {
  check(x.samples() > 0, "stft: empty signal");
  check(hop > 0, "stft: hop must be positive");
  check(frame_len % 2 == 0, "stft: frame_len must be even");
  check(hop <= frame_len, "stft: hop must not exceed frame_len");
  check(int64_t(window.size()) == frame_len, "stft: window length mismatch");
  const auto& tables = detail::dft_tables(frame_len);
  int64_t N = x.samples(), M = x.channels();
  int64_t pad = frame_len / 2;
  int64_t T = (N + 2 * pad - frame_len) / hop + 1;
  int64_t F = frame_len / 2 + 1;
  ComplexSpectrogram out;
  out.T = T;
  out.F = F;
  out.M = M;
  out.frame_len = frame_len;
  out.hop = hop;
  out.sample_rate = x.sample_rate;
  out.data.assign(T * F * M, cplx(0.0, 0.0));
  std::vector<double> frame(frame_len);
  for (int64_t m = 0; m < M; ++m) {
    const auto& sig = x.ch[m];
    for (int64_t t = 0; t < T; ++t) {
      for (int64_t n = 0; n < frame_len; ++n) {
        int64_t s = t * hop + n - pad;
        frame[n] = (s >= 0 && s < N) ? window[n] * sig[s] : 0.0;
      }
      for (int64_t f = 0; f < F; ++f) {
        const double* ct = &tables.cos_t[f * frame_len];
        const double* st = &tables.sin_t[f * frame_len];
        double re = 0.0, im = 0.0;
        for (int64_t n = 0; n < frame_len; ++n) {
          re += frame[n] * ct[n];
          im -= frame[n] * st[n];
        }
        out.at(t, f, m) = cplx(re, im);
      }
    }
  }
  return out;
}

namespace detail {

// Inverse one-sided DFT of a single frame into time domain (length L).
inline void frame_from_spectrum(const cplx* bins, const DftTables& tb, double* frame) {
  for (int64_t n = 0; n < tb.L; ++n) frame[n] = 0.0;
  for (int64_t f = 0; f < tb.F; ++f) {
    double wr = tb.bin_weight(f) / double(tb.L);
    double re = bins[f].real() * wr, im = bins[f].imag() * wr;
    const double* ct = &tb.cos_t[f * tb.L];
    const double* st = &tb.sin_t[f * tb.L];
    for (int64_t n = 0; n < tb.L; ++n) frame[n] += re * ct[n] - im * st[n];
  }
}

// Squared-window overlap-add normalizer over the padded output domain.
inline std::vector<double> ola_norm(int64_t T, int64_t frame_len, int64_t hop,
                                    const std::vector<double>& window) {
  std::vector<double> norm((T - 1) * hop + frame_len, 0.0);
  for (int64_t t = 0; t < T; ++t)
    for (int64_t n = 0; n < frame_len; ++n) norm[t * hop + n] += window[n] * window[n];
  return norm;
}

}  // namespace detail

// Weighted overlap-add with synthesis window equal to the analysis window.
inline Waveform istft(const ComplexSpectrogram& X, const std::vector<double>& window,
                      int64_t out_len) {
  check(int64_t(window.size()) == X.frame_len, "istft: window length mismatch");
  const auto& tb = detail::dft_tables(X.frame_len);
  int64_t pad = X.frame_len / 2;
  std::vector<double> norm = detail::ola_norm(X.T, X.frame_len, X.hop, window);
  Waveform out;
  out.sample_rate = X.sample_rate;
  out.ch.assign(X.M, std::vector<double>(out_len, 0.0));
  std::vector<double> frame(X.frame_len);
  std::vector<cplx> bins(X.F);
  for (int64_t m = 0; m < X.M; ++m) {
    std::vector<double> acc((X.T - 1) * X.hop + X.frame_len, 0.0);
    for (int64_t t = 0; t < X.T; ++t) {
      for (int64_t f = 0; f < X.F; ++f) bins[f] = X.at(t, f, m);
      detail::frame_from_spectrum(bins.data(), tb, frame.data());
      for (int64_t n = 0; n < X.frame_len; ++n) acc[t * X.hop + n] += window[n] * frame[n];
    }
    for (int64_t i = 0; i < out_len; ++i) {
      int64_t q = i + pad;
      check(q < int64_t(acc.size()), "istft: out_len exceeds synthesized range");
      check(norm[q] > 1e-12, "istft: zero overlap-add normalizer");
      out.ch[m][i] = acc[q] / norm[q];
    }
  }
  return out;
}

// entry (t, f, (i,l,m)) = X[(t+l), (f+i), m], zero outside range.
inline ContextStack unfold_context(const ComplexSpectrogram& X, int64_t L, int64_t I) {
  check(L >= 0 && I >= 0, "unfold_context: L, I must be >= 0");
  ContextStack out;
  out.T = X.T;
  out.F = X.F;
  out.M = X.M;
  out.L = L;
  out.I = I;
  int64_t P = out.taps();
  out.data.assign(X.T * X.F * P, cplx(0.0, 0.0));
  for (int64_t t = 0; t < X.T; ++t)
    for (int64_t f = 0; f < X.F; ++f) {
      cplx* row = &out.data[(t * X.F + f) * P];
      for (int64_t i = -I; i <= I; ++i) {
        int64_t fi = f + i;
        if (fi < 0 || fi >= X.F) continue;
        for (int64_t l = -L; l <= L; ++l) {
          int64_t ti = t + l;
          if (ti < 0 || ti >= X.T) continue;
          for (int64_t m = 0; m < X.M; ++m)
            row[out.tap_index(i, l, m)] = X.at(ti, fi, m);
        }
      }
    }
  return out;
}

// Y[k,t,f] = sum_p W[k,t,f,p] * Xctx[t,f,p]  (plain product, no conjugation)
inline ComplexSpectrogram apply_filter(const FilterTensor& W, const ContextStack& Xctx) {
  check(W.T == Xctx.T && W.F == Xctx.F && W.taps == Xctx.taps(),
        "apply_filter: geometry mismatch");
  ComplexSpectrogram out;
  out.T = W.T;
  out.F = W.F;
  out.M = W.K;  // speaker axis stored on the channel slot
  out.data.assign(W.K * W.T * W.F, cplx(0.0, 0.0));
  for (int64_t k = 0; k < W.K; ++k)
    for (int64_t t = 0; t < W.T; ++t)
      for (int64_t f = 0; f < W.F; ++f) {
        const cplx* wr = &W.data[((k * W.T + t) * W.F + f) * W.taps];
        const cplx* xr = &Xctx.data[(t * W.F + f) * W.taps];
        cplx acc(0.0, 0.0);
        for (int64_t p = 0; p < W.taps; ++p) acc += wr[p] * xr[p];
        out.at(t, f, k) = acc;
      }
  return out;
}

// ---- differentiable graph ops ----

// Filters as graph tensors, context as a constant. wr, wi: [K,T,F,P].
// Returns packed complex output [K,T,F,2] (real, imag).
inline Tensor apply_filter_node(const Tensor& wr, const Tensor& wi, const ContextStack& ctx) {
  Shape ws = wr.shape();
  check(ws.size() == 4, "apply_filter_node: expected [K,T,F,P] filters");
  check(wr.shape() == wi.shape(), "apply_filter_node: real/imag shape mismatch");
  int64_t K = ws[0], T = ws[1], F = ws[2], P = ws[3];
  check(T == ctx.T && F == ctx.F && P == ctx.taps(), "apply_filter_node: geometry mismatch");
  const auto& wrv = wr.val();
  const auto& wiv = wi.val();
  // The backward pass runs after the ContextStack may have gone out of
  // scope, so the closure owns a copy of the taps.
  auto cd = std::make_shared<std::vector<cplx>>(ctx.data);
  return make_op(
      Shape{K, T, F, 2}, {wr, wi},
      [&, cd](std::vector<double>& out) {
        for (int64_t k = 0; k < K; ++k)
          for (int64_t p0 = 0; p0 < T * F; ++p0) {
            const double* a = &wrv[(k * T * F + p0) * P];
            const double* b = &wiv[(k * T * F + p0) * P];
            const cplx* x = &(*cd)[p0 * P];
            double yr = 0.0, yi = 0.0;
            for (int64_t p = 0; p < P; ++p) {
              yr += a[p] * x[p].real() - b[p] * x[p].imag();
              yi += a[p] * x[p].imag() + b[p] * x[p].real();
            }
            out[(k * T * F + p0) * 2] = yr;
            out[(k * T * F + p0) * 2 + 1] = yi;
          }
      },
      [K, T, F, P, cd](Node& self) {
        auto& gr = self.parents[0]->grad;
        auto& gi = self.parents[1]->grad;
        for (int64_t k = 0; k < K; ++k)
          for (int64_t p0 = 0; p0 < T * F; ++p0) {
            double gyr = self.grad[(k * T * F + p0) * 2];
            double gyi = self.grad[(k * T * F + p0) * 2 + 1];
            if (gyr == 0.0 && gyi == 0.0) continue;
            const cplx* x = &(*cd)[p0 * P];
            double* a = &gr[(k * T * F + p0) * P];
            double* b = &gi[(k * T * F + p0) * P];
            for (int64_t p = 0; p < P; ++p) {
              a[p] += gyr * x[p].real() + gyi * x[p].imag();
              b[p] += -gyr * x[p].imag() + gyi * x[p].real();
            }
          }
      });
}

// |z| with epsilon guard; input packed [.. ,2], output [..].
inline Tensor complex_mag(const Tensor& packed, double eps = 1e-8) {
  Shape s = packed.shape();
  check(s.back() == 2, "complex_mag: expected packed complex");
  Shape out_shape(s.begin(), s.end() - 1);
  int64_t n = numel(out_shape);
  const auto& pv = packed.val();
  return make_op(
      out_shape, {packed},
      [&](std::vector<double>& out) {
        for (int64_t i = 0; i < n; ++i) {
          double r = pv[2 * i], im = pv[2 * i + 1];
          out[i] = std::sqrt(r * r + im * im + eps * eps);
        }
      },
      [n](Node& self) {
        auto& g = self.parents[0]->grad;
        const auto& pv = self.parents[0]->val;
        for (int64_t i = 0; i < n; ++i) {
          double inv = self.grad[i] / self.val[i];
          g[2 * i] += pv[2 * i] * inv;
          g[2 * i + 1] += pv[2 * i + 1] * inv;
        }
      });
}

// Pick one index of the last axis: [.., D] -> [..].
inline Tensor select_lastdim(const Tensor& x, int64_t idx) {
  Shape s = x.shape();
  int64_t D = s.back();
  check(idx >= 0 && idx < D, "select_lastdim: index out of range");
  Shape out_shape(s.begin(), s.end() - 1);
  int64_t n = numel(out_shape);
  const auto& xv = x.val();
  return make_op(
      out_shape, {x},
      [&](std::vector<double>& out) {
        for (int64_t i = 0; i < n; ++i) out[i] = xv[i * D + idx];
      },
      [n, D, idx](Node& self) {
        auto& g = self.parents[0]->grad;
        for (int64_t i = 0; i < n; ++i) g[i * D + idx] += self.grad[i];
      });
}

inline Tensor abs_t(const Tensor& x) {
  const auto& xv = x.val();
  return make_op(
      x.shape(), {x},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = std::abs(xv[i]);
      },
      [](Node& self) {
        auto& g = self.parents[0]->grad;
        const auto& xv = self.parents[0]->val;
        for (size_t i = 0; i < g.size(); ++i)
          g[i] += self.grad[i] * (xv[i] > 0 ? 1.0 : (xv[i] < 0 ? -1.0 : 0.0));
      });
}

// Differentiable weighted overlap-add synthesis of packed spectra.
// packed: [K,T,F,2] -> waveforms [K, out_len]. Linear in its input, so the
// backward pass is the exact adjoint.
inline Tensor istft_node(const Tensor& packed, int64_t frame_len, int64_t hop,
                         const std::vector<double>& window, int64_t out_len) {
  Shape s = packed.shape();
  check(s.size() == 4 && s.back() == 2, "istft_node: expected [K,T,F,2]");
  int64_t K = s[0], T = s[1], F = s[2];
  check(F == frame_len / 2 + 1, "istft_node: bin count mismatch");
  const auto& tb = detail::dft_tables(frame_len);
  int64_t pad = frame_len / 2;
  check(out_len + pad <= (T - 1) * hop + frame_len,
        "istft_node: out_len too long for the frame count");
  auto norm = std::make_shared<std::vector<double>>(detail::ola_norm(T, frame_len, hop, window));
  auto win = std::make_shared<std::vector<double>>(window);
  const auto& pv = packed.val();
  return make_op(
      Shape{K, out_len}, {packed},
      [&](std::vector<double>& out) {
        std::vector<double> frame(frame_len);
        std::vector<cplx> bins(F);
        for (int64_t k = 0; k < K; ++k) {
          std::vector<double> acc((T - 1) * hop + frame_len, 0.0);
          for (int64_t t = 0; t < T; ++t) {
            for (int64_t f = 0; f < F; ++f)
              bins[f] = cplx(pv[((k * T + t) * F + f) * 2], pv[((k * T + t) * F + f) * 2 + 1]);
            detail::frame_from_spectrum(bins.data(), tb, frame.data());
            for (int64_t n = 0; n < frame_len; ++n) acc[t * hop + n] += window[n] * frame[n];
          }
          for (int64_t i = 0; i < out_len; ++i) {
            check((*norm)[i + pad] > 1e-12, "istft_node: zero normalizer");
            out[k * out_len + i] = acc[i + pad] / (*norm)[i + pad];
          }
        }
      },
      [K, T, F, frame_len, hop, pad, out_len, norm, win, &tb](Node& self) {
        auto& g = self.parents[0]->grad;
        std::vector<double> dacc((T - 1) * hop + frame_len);
        std::vector<double> dframe(frame_len);
        for (int64_t k = 0; k < K; ++k) {
          std::fill(dacc.begin(), dacc.end(), 0.0);
          for (int64_t i = 0; i < out_len; ++i)
            dacc[i + pad] = self.grad[k * out_len + i] / (*norm)[i + pad];
          for (int64_t t = 0; t < T; ++t) {
            for (int64_t n = 0; n < frame_len; ++n)
              dframe[n] = (*win)[n] * dacc[t * hop + n];
            for (int64_t f = 0; f < F; ++f) {
              double wr = tb.bin_weight(f) / double(frame_len);
              const double* ct = &tb.cos_t[f * frame_len];
              const double* st = &tb.sin_t[f * frame_len];
              double dre = 0.0, dim = 0.0;
              for (int64_t n = 0; n < frame_len; ++n) {
                dre += dframe[n] * ct[n];
                dim -= dframe[n] * st[n];
              }
              g[((k * T + t) * F + f) * 2] += wr * dre;
              g[((k * T + t) * F + f) * 2 + 1] += wr * dim;
            }
          }
        }
      });
}

}  // namespace srcorrnet
