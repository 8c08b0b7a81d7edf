// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Normalized spatio-spectro-temporal correlation features (the model input).

#pragma once

#include <vector>

#include "srcorrnet/common.hpp"
#include "srcorrnet/signal.hpp"

namespace srcorrnet {

enum class NormKind { kNone, kPhatBeta, kScotBeta };

inline constexpr double kCorrEps = 1e-8;

// [T x F x M*Lt*It], same tap ordering as ContextStack.
struct CorrelationTensor {
  std::vector<cplx> data;
  int64_t T = 0, F = 0, M = 0, L = 0, I = 0;
  double beta = 0.0;
  NormKind norm_kind = NormKind::kNone;

  int64_t taps() const { return M * (2 * L + 1) * (2 * I + 1); }
  const cplx& at(int64_t t, int64_t f, int64_t p) const { return data[(t * F + f) * taps() + p]; }
};

// [T x F x 2*M*Lt*It], (real, imag) interleaved per tap.
struct RealFeature {
  std::vector<double> data;
  int64_t T = 0, F = 0, channels = 0;
};

// z(t,f,(i,l,m)) = X[t,f,1] * conj(X[t+l, f+i, m]), zero out of range.
inline CorrelationTensor correlate_miso(const ComplexSpectrogram& X, int64_t L, int64_t I) {
  check(X.M >= 1, "correlate_miso: need at least one channel");
  ContextStack ctx = unfold_context(X, L, I);
  CorrelationTensor out;
  out.T = X.T;
  out.F = X.F;
  out.M = X.M;
  out.L = L;
  out.I = I;
  int64_t P = out.taps();
  out.data.assign(X.T * X.F * P, cplx(0.0, 0.0));
  for (int64_t t = 0; t < X.T; ++t)
    for (int64_t f = 0; f < X.F; ++f) {
      cplx ref = X.at(t, f, 0);
      const cplx* xr = &ctx.data[(t * X.F + f) * P];
      cplx* zr = &out.data[(t * X.F + f) * P];
      for (int64_t p = 0; p < P; ++p) zr[p] = ref * std::conj(xr[p]);
    }
  return out;
}

// z <- z / max(|z|, eps)^beta; phase preserved exactly.
inline CorrelationTensor normalize_phat_beta(const CorrelationTensor& Z, double beta) {
  check(beta >= 0.0 && beta <= 1.0, "normalize_phat_beta: beta must be in [0,1]");
  CorrelationTensor out = Z;
  out.beta = beta;
  out.norm_kind = NormKind::kPhatBeta;
  for (auto& z : out.data) {
    double mag = std::max(std::abs(z), kCorrEps);
    z /= std::pow(mag, beta);
  }
  return out;
}

// Fused correlation + SCOT-beta: per-operand magnitudes in the denominator.
inline CorrelationTensor normalize_scot_beta(const ComplexSpectrogram& X, int64_t L, int64_t I,
                                             double beta) {
  check(beta >= 0.0 && beta <= 1.0, "normalize_scot_beta: beta must be in [0,1]");
  ContextStack ctx = unfold_context(X, L, I);
  CorrelationTensor out;
  out.T = X.T;
  out.F = X.F;
  out.M = X.M;
  out.L = L;
  out.I = I;
  out.beta = beta;
  out.norm_kind = NormKind::kScotBeta;
  int64_t P = out.taps();
  out.data.assign(X.T * X.F * P, cplx(0.0, 0.0));
  for (int64_t t = 0; t < X.T; ++t)
    for (int64_t f = 0; f < X.F; ++f) {
      cplx ref = X.at(t, f, 0);
      double ref_mag = std::pow(std::max(std::abs(ref), kCorrEps), beta);
      const cplx* xr = &ctx.data[(t * X.F + f) * P];
      cplx* zr = &out.data[(t * X.F + f) * P];
      for (int64_t p = 0; p < P; ++p) {
        double den = ref_mag * std::pow(std::max(std::abs(xr[p]), kCorrEps), beta);
        zr[p] = ref * std::conj(xr[p]) / den;
      }
    }
  return out;
}

inline CorrelationTensor compute_correlation(const ComplexSpectrogram& X, int64_t L, int64_t I,
                                             NormKind kind, double beta) {
  switch (kind) {
    case NormKind::kNone:
      return correlate_miso(X, L, I);
    case NormKind::kPhatBeta:
      return normalize_phat_beta(correlate_miso(X, L, I), beta);
    case NormKind::kScotBeta:
      return normalize_scot_beta(X, L, I, beta);
  }
  throw Error("compute_correlation: bad norm kind");
}

// Interleaved (re, im) per tap; bijective with the complex representation.
inline RealFeature to_real_features(const CorrelationTensor& Z) {
  RealFeature out;
  out.T = Z.T;
  out.F = Z.F;
  out.channels = 2 * Z.taps();
  out.data.resize(Z.data.size() * 2);
  for (size_t i = 0; i < Z.data.size(); ++i) {
    out.data[2 * i] = Z.data[i].real();
    out.data[2 * i + 1] = Z.data[i].imag();
  }
  return out;
}

inline CorrelationTensor from_real_features(const RealFeature& feat, const CorrelationTensor& like) {
  CorrelationTensor out = like;
  check(int64_t(feat.data.size()) == 2 * int64_t(like.data.size()),
        "from_real_features: size mismatch");
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = cplx(feat.data[2 * i], feat.data[2 * i + 1]);
  return out;
}

}  // namespace srcorrnet
