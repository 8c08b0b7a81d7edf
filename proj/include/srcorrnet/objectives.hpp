// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Training losses: SI-SNR with clipping, PIT assignment, magnitude auxiliary
// loss, L1 magnitude/RI losses, attractor BCE, and the combined schedules.
// Plain-double versions are the metric/oracle path; Tensor versions build the
// training graph with the same formulas.

#pragma once

#include <array>
#include <limits>
#include <vector>

#include "srcorrnet/signal.hpp"
#include "srcorrnet/tensor.hpp"

namespace srcorrnet {

inline constexpr double kLossEps = 1e-8;

enum class LossFamily { kSiSnr, kL1Tf };

struct LossConfig {
  double alpha = 0.5;
  double alpha_decay = 0.95;
  int64_t alpha_decay_start = 30;  // epochs
  double clip_db = 30.0;
  LossFamily family = LossFamily::kSiSnr;
};

struct PitAssignment {
  std::vector<int64_t> perm;  // output k separates source perm[k]
  double loss = 0.0;
};

// alpha(epoch) = alpha * decay^{max(0, epoch - start)}
inline double alpha_schedule(const LossConfig& cfg, int64_t epoch) {
  int64_t over = std::max<int64_t>(0, epoch - cfg.alpha_decay_start);
  return cfg.alpha * std::pow(cfg.alpha_decay, double(over));
}

// ---- plain (metric / oracle) versions ----

inline double si_snr(const std::vector<double>& y, const std::vector<double>& s,
                     double clip_db = 30.0) {
  check(y.size() == s.size(), "si_snr: length mismatch");
  double ss = 0.0, ys = 0.0, yy = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    ss += s[i] * s[i];
    ys += y[i] * s[i];
    yy += y[i] * y[i];
  }
  check(ss > 0.0, "si_snr: zero target signal");
  double num = ys * ys / ss;                    // ||gamma s||^2
  double den = std::max(yy - num, 0.0) + kLossEps;  // ||gamma s - y||^2
  double v = 10.0 * std::log10(num / den + kLossEps * kLossEps);
  return std::min(v, clip_db);
}

namespace detail {

// Classic O(n^3) assignment on a cost matrix (row potentials form).
inline std::vector<int64_t> hungarian(const std::vector<std::vector<double>>& cost) {
  int64_t n = int64_t(cost.size());
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int64_t> p(n + 1, 0), way(n + 1, 0);
  for (int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    int64_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int64_t i0 = p[j0], j1 = 0;
      double delta = kInf;
      for (int64_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int64_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int64_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int64_t> perm(n);
  for (int64_t j = 1; j <= n; ++j) perm[p[j] - 1] = j - 1;
  return perm;
}

}  // namespace detail

// loss_matrix[k][j] = loss of output k against source j. Exhaustive search
// for K <= 4, Hungarian above that.
inline PitAssignment pit_assign(const std::vector<std::vector<double>>& loss_matrix) {
  int64_t K = int64_t(loss_matrix.size());
  check(K >= 1, "pit_assign: empty matrix");
  for (const auto& row : loss_matrix)
    check(int64_t(row.size()) == K, "pit_assign: non-square matrix");
  PitAssignment out;
  if (K <= 4) {
    std::vector<int64_t> perm(K);
    for (int64_t i = 0; i < K; ++i) perm[i] = i;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int64_t> best_perm = perm;
    do {
      double total = 0.0;
      for (int64_t k = 0; k < K; ++k) total += loss_matrix[k][perm[k]];
      if (total < best) {
        best = total;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.perm = best_perm;
    out.loss = best;
  } else {
    out.perm = detail::hungarian(loss_matrix);
    out.loss = 0.0;
    for (int64_t k = 0; k < K; ++k) out.loss += loss_matrix[k][out.perm[k]];
  }
  return out;
}

// gamma = y^T s / ||s||^2, fitted in the time domain.
inline double sisnr_gamma(const std::vector<double>& y, const std::vector<double>& s) {
  double ss = 0.0, ys = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    ss += s[i] * s[i];
    ys += y[i] * s[i];
  }
  check(ss > 0.0, "sisnr_gamma: zero target signal");
  return ys / ss;
}

inline std::vector<double> spectrogram_mag(const std::vector<double>& x, const StftConfig& cfg,
                                           int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.ch = {x};
  ComplexSpectrogram X = stft(w, cfg.frame_len, cfg.hop, cfg.window);
  std::vector<double> mag(X.data.size());
  for (size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(X.data[i]);
  return mag;
}

// SI-SNR form on STFT magnitudes; gamma taken from the time domain.
inline double mag_loss_sisnr_form(const std::vector<double>& y, const std::vector<double>& s,
                                  const StftConfig& cfg, int sample_rate,
                                  double clip_db = 30.0) {
  check(y.size() == s.size(), "mag_loss_sisnr_form: length mismatch");
  double gamma = sisnr_gamma(y, s);
  std::vector<double> gs(s.size());
  for (size_t i = 0; i < s.size(); ++i) gs[i] = gamma * s[i];
  std::vector<double> a = spectrogram_mag(gs, cfg, sample_rate);
  std::vector<double> b = spectrogram_mag(y, cfg, sample_rate);
  double aa = 0.0, dd = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    aa += a[i] * a[i];
    dd += (a[i] - b[i]) * (a[i] - b[i]);
  }
  check(aa > 0.0, "mag_loss_sisnr_form: zero target spectrum");
  double v = 10.0 * std::log10(aa / (dd + kLossEps) + kLossEps * kLossEps);
  return -std::min(v, clip_db);
}

// L_M + 1/2 L_R + 1/2 L_I on the STFT of y and s (L1 norms).
inline double l1_tf_loss(const std::vector<double>& y, const std::vector<double>& s,
                         const StftConfig& cfg, int sample_rate) {
  check(y.size() == s.size(), "l1_tf_loss: length mismatch");
  Waveform wy, ws;
  wy.sample_rate = ws.sample_rate = sample_rate;
  wy.ch = {y};
  ws.ch = {s};
  ComplexSpectrogram Y = stft(wy, cfg.frame_len, cfg.hop, cfg.window);
  ComplexSpectrogram S = stft(ws, cfg.frame_len, cfg.hop, cfg.window);
  double lm = 0.0, lr = 0.0, li = 0.0;
  for (size_t i = 0; i < Y.data.size(); ++i) {
    lm += std::abs(std::abs(Y.data[i]) - std::abs(S.data[i]));
    lr += std::abs(Y.data[i].real() - S.data[i].real());
    li += std::abs(Y.data[i].imag() - S.data[i].imag());
  }
  return lm + 0.5 * lr + 0.5 * li;
}

// Mean over K_0+1 slots of BCE(p_k, 1) for the first K_true and BCE(p_k, 0)
// for the rest.
inline double attractor_bce(const std::vector<double>& probs, int64_t K_true) {
  int64_t slots = int64_t(probs.size());  // K_0 + 1
  check(K_true >= 1 && K_true <= slots - 1, "attractor_bce: K_true out of range");
  double acc = 0.0;
  // Only the log argument is floored, so saturated correct probabilities
  // (p=1 for active slots, p=0 for inactive) give a loss of exactly zero.
  for (int64_t k = 0; k < slots; ++k) {
    double arg = (k < K_true) ? probs[k] : 1.0 - probs[k];
    acc += -std::log(std::max(arg, kLossEps));
  }
  return acc / double(slots);
}

// L = (1-alpha) L_final + alpha * sum(aux) / B_D (+ attractor term).
inline double combine_stage_losses(double final_loss, const std::vector<double>& aux_losses,
                                   double alpha, double attractor_loss = 0.0,
                                   bool has_attractor = false) {
  double aux = 0.0;
  for (double v : aux_losses) aux += v;
  double bd = double(std::max<size_t>(aux_losses.size(), 1));
  double total = (1.0 - alpha) * final_loss + alpha * aux / bd;
  if (has_attractor) total += attractor_loss;
  return total;
}

// ---- graph (training) versions ----

// Negated clipped SI-SNR of a graph waveform y against a fixed target s.
inline Tensor neg_si_snr_loss(const Tensor& y, const std::vector<double>& s,
                              double clip_db = 30.0) {
  check(size_t(y.size()) == s.size(), "neg_si_snr_loss: length mismatch");
  double ss = 0.0;
  for (double v : s) ss += v * v;
  check(ss > 0.0, "neg_si_snr_loss: zero target signal");
  Tensor s_t = Tensor::from({int64_t(s.size())}, s);
  Tensor d = dot(y, s_t);                           // y^T s
  Tensor num = scale(mul(d, d), 1.0 / ss);          // ||gamma s||^2
  Tensor yy = dot(y, y);
  Tensor den = add_const(sub(yy, num), kLossEps);   // ||gamma s - y||^2
  Tensor ratio = add_const(div(num, den), kLossEps * kLossEps);
  Tensor si = scale(log_t(ratio), 10.0 / std::log(10.0));
  return scale(clamp_max(si, clip_db), -1.0);
}

// Magnitude SI-SNR form: graph magnitudes vs a fixed target magnitude array.
inline Tensor neg_mag_sisnr_loss(const Tensor& ymag, const std::vector<double>& smag,
                                 double clip_db = 30.0) {
  check(size_t(ymag.size()) == smag.size(), "neg_mag_sisnr_loss: length mismatch");
  double aa = 0.0;
  for (double v : smag) aa += v * v;
  check(aa > 0.0, "neg_mag_sisnr_loss: zero target spectrum");
  Tensor a = Tensor::from(ymag.shape(), smag);
  Tensor diff = sub(a, ymag);
  Tensor dd = add_const(dot(diff, diff), kLossEps);
  Tensor ratio = add_const(scale(div(Tensor::scalar(aa), reshape(dd, {1})), 1.0), kLossEps * kLossEps);
  Tensor si = scale(log_t(ratio), 10.0 / std::log(10.0));
  return scale(clamp_max(si, clip_db), -1.0);
}

// L1 TF loss of a packed graph spectrum [T,F,2] against a fixed complex target.
inline Tensor l1_tf_loss_node(const Tensor& packed, const std::vector<cplx>& target,
                              bool mag_only = false) {
  check(size_t(packed.size()) == 2 * target.size(), "l1_tf_loss_node: size mismatch");
  int64_t n = int64_t(target.size());
  std::vector<double> tr(n), ti(n), tm(n);
  for (int64_t i = 0; i < n; ++i) {
    tr[i] = target[i].real();
    ti[i] = target[i].imag();
    tm[i] = std::abs(target[i]);
  }
  Shape flat_shape{n};
  Tensor ym = complex_mag(packed);
  Tensor lm = sum_all(abs_t(sub(reshape(ym, flat_shape), Tensor::from(flat_shape, tm))));
  if (mag_only) return lm;
  Tensor yr = reshape(select_lastdim(packed, 0), flat_shape);
  Tensor yi = reshape(select_lastdim(packed, 1), flat_shape);
  Tensor lr = sum_all(abs_t(sub(yr, Tensor::from(flat_shape, tr))));
  Tensor li = sum_all(abs_t(sub(yi, Tensor::from(flat_shape, ti))));
  return add(lm, scale(add(lr, li), 0.5));
}

// probs: graph tensor [K_0+1]; targets 1 for the first K_true slots else 0.
inline Tensor attractor_bce_node(const Tensor& probs, int64_t K_true) {
  int64_t slots = probs.size();
  check(K_true >= 1 && K_true <= slots - 1, "attractor_bce_node: K_true out of range");
  std::vector<double> sign(slots), shift(slots);
  for (int64_t k = 0; k < slots; ++k) {
    sign[k] = (k < K_true) ? 1.0 : -1.0;
    shift[k] = (k < K_true) ? 0.0 : 1.0;
  }
  // k < K_true: -log(p); else: -log(1-p) = -log(shift + sign*p); the floor
  // matches the plain attractor_bce so saturated correct probs give zero.
  Tensor arg = clamp_min(
      add(Tensor::from(probs.shape(), shift), mul(Tensor::from(probs.shape(), sign), probs)),
      kLossEps);
  return scale(sum_all(log_t(arg)), -1.0 / double(slots));
}

inline Tensor combine_stage_losses_node(const Tensor& final_loss,
                                        const std::vector<Tensor>& aux_losses, double alpha,
                                        const Tensor* attractor_loss = nullptr) {
  Tensor total = scale(final_loss, 1.0 - alpha);
  if (!aux_losses.empty()) {
    Tensor aux = aux_losses[0];
    for (size_t i = 1; i < aux_losses.size(); ++i) aux = add(aux, aux_losses[i]);
    total = add(total, scale(aux, alpha / double(aux_losses.size())));
  }
  if (attractor_loss) total = add(total, *attractor_loss);
  return total;
}

}  // namespace srcorrnet
