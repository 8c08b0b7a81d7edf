// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Training loop (AdamW, warmup/decay schedules, gradient clipping),
// evaluation metrics, and chunk-wise continuous separation with stitching.

#pragma once

#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "srcorrnet/checkpoint.hpp"
#include "srcorrnet/mixsim.hpp"
#include "srcorrnet/model.hpp"
#include "srcorrnet/objectives.hpp"

namespace srcorrnet {

struct TrainHp {
  int64_t max_steps = 5000;
  double peak_lr = 1e-3;
  int64_t warmup_steps = 5000;
  double lr_decay = 0.95;
  int64_t lr_decay_start_epoch = 50;
  double grad_clip = 5.0;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double segment_s = 0.25;  // training crop length
  uint64_t seed = 1;
  int64_t log_every = 50;
  int64_t eval_every = 250;
};

// lr(step, epoch) = peak * min(1, step/warmup) * decay^{max(0, epoch - start)}
inline double lr_schedule(const TrainHp& hp, int64_t step, int64_t epoch) {
  double warm = hp.warmup_steps > 0
                    ? std::min(1.0, double(step) / double(hp.warmup_steps))
                    : 1.0;
  int64_t over = std::max<int64_t>(0, epoch - hp.lr_decay_start_epoch);
  return hp.peak_lr * warm * std::pow(hp.lr_decay, double(over));
}

// Global L2-norm clip; returns the pre-clip norm.
inline double clip_grad_norm(ParamStore& ps, double max_norm) {
  double total = 0.0;
  for (auto& [name, t] : ps.params) {
    t.node()->ensure_grad();
    for (double g : t.grad()) total += g * g;
  }
  total = std::sqrt(total);
  if (total > max_norm && total > 0.0) {
    double f = max_norm / total;
    for (auto& [name, t] : ps.params)
      for (double& g : t.grad()) g *= f;
  }
  return total;
}

// Adam with decoupled weight decay.
struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.01;
  std::map<std::string, std::vector<double>> m, v;
  int64_t t = 0;

  void step(ParamStore& ps, double lr) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, double(t));
    double bc2 = 1.0 - std::pow(beta2, double(t));
    for (auto& [name, p] : ps.params) {
      auto& mi = m[name];
      auto& vi = v[name];
      if (mi.empty()) {
        mi.assign(p.size(), 0.0);
        vi.assign(p.size(), 0.0);
      }
      auto& val = p.val();
      const auto& g = p.grad();
      for (int64_t i = 0; i < p.size(); ++i) {
        mi[i] = beta1 * mi[i] + (1.0 - beta1) * g[i];
        vi[i] = beta2 * vi[i] + (1.0 - beta2) * g[i] * g[i];
        double mhat = mi[i] / bc1;
        double vhat = vi[i] / bc2;
        val[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * val[i]);
      }
    }
  }
};

struct TrainState {
  int64_t step = 0;
  int64_t epoch = 0;
  AdamW opt;
  Rng data_rng{1};
  double best_metric = -1e300;
};

inline void save_train_state(const std::string& path, const SRCorrNet& model,
                             const TrainState& st) {
  Checkpoint ckpt;
  store_params(ckpt, model.params(), /*f64=*/true);
  for (const auto& [name, mv] : st.opt.m) ckpt.put("adam_m/" + name, {int64_t(mv.size())}, mv, true);
  for (const auto& [name, vv] : st.opt.v) ckpt.put("adam_v/" + name, {int64_t(vv.size())}, vv, true);
  ckpt.extra["step"] = st.step;
  ckpt.extra["epoch"] = st.epoch;
  ckpt.extra["adam_t"] = st.opt.t;
  ckpt.extra["best_metric"] = st.best_metric;
  ckpt.extra["rng"] = std::vector<uint64_t>(st.data_rng.s, st.data_rng.s + 4);
  save_checkpoint(path, ckpt);
}

inline void load_train_state(const std::string& path, SRCorrNet& model, TrainState& st) {
  Checkpoint ckpt = load_checkpoint(path);
  load_params(ckpt, model.params());
  st.step = ckpt.extra.value("step", int64_t(0));
  st.epoch = ckpt.extra.value("epoch", int64_t(0));
  st.opt.t = ckpt.extra.value("adam_t", int64_t(0));
  st.best_metric = ckpt.extra.value("best_metric", -1e300);
  if (ckpt.extra.contains("rng")) {
    auto rv = ckpt.extra["rng"].get<std::vector<uint64_t>>();
    std::copy(rv.begin(), rv.end(), st.data_rng.s);
  }
  for (const auto& [name, p] : model.params().params) {
    if (ckpt.records.count("adam_m/" + name)) {
      st.opt.m[name] = ckpt.get("adam_m/" + name).data;
      st.opt.v[name] = ckpt.get("adam_v/" + name).data;
    }
  }
}

namespace detail {

inline std::vector<double> crop(const std::vector<double>& x, int64_t start, int64_t len) {
  std::vector<double> out(len);
  std::copy_n(x.begin() + start, len, out.begin());
  return out;
}

inline Waveform crop_wave(const Waveform& w, int64_t start, int64_t len) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  for (const auto& c : w.ch) out.ch.push_back(crop(c, start, len));
  return out;
}

}  // namespace detail

// One training step on a (possibly cropped) mixture. Returns the scalar loss.
// PIT is solved on the final-stage loss and the permutation reused for every
// auxiliary stage.
inline double train_step(SRCorrNet& model, const MixtureSample& sample, const LossConfig& loss_cfg,
                         const TrainHp& hp, const StftConfig& stft_cfg, TrainState& st) {
  const ModelConfig& mc = model.config();
  int64_t n = sample.mixture.samples();
  int64_t seg = std::min<int64_t>(n, int64_t(hp.segment_s * sample.mixture.sample_rate));
  int64_t start = (n > seg) ? st.data_rng.uniform_int(0, n - seg) : 0;
  Waveform mix = detail::crop_wave(sample.mixture, start, seg);
  std::vector<std::vector<double>> targets;
  for (const auto& t : sample.targets) targets.push_back(detail::crop(t, start, seg));
  int64_t K = sample.K_true;

  ComplexSpectrogram X = stft(mix, stft_cfg.frame_len, stft_cfg.hop, stft_cfg.window);
  ModelOutput out = model.forward(X, K, /*train_mode=*/true);
  Tensor y = model.synthesize(out, stft_cfg, seg);  // [K, seg]

  // PIT on the final-stage criterion, from forward values only.
  std::vector<std::vector<double>> lm(K, std::vector<double>(K));
  for (int64_t k = 0; k < K; ++k) {
    std::vector<double> yk(y.val().begin() + k * seg, y.val().begin() + (k + 1) * seg);
    for (int64_t j = 0; j < K; ++j) {
      if (loss_cfg.family == LossFamily::kSiSnr)
        lm[k][j] = -si_snr(yk, targets[j], loss_cfg.clip_db);
      else
        lm[k][j] = l1_tf_loss(yk, targets[j], stft_cfg, mix.sample_rate);
    }
  }
  PitAssignment pit = pit_assign(lm);

  // Target spectra per assigned source.
  int64_t n_stages = int64_t(out.stage_packed.size());  // B_D + 1
  Tensor final_loss, attr_loss;
  std::vector<Tensor> aux_losses;
  for (int64_t k = 0; k < K; ++k) {
    const auto& s = targets[pit.perm[k]];
    if (loss_cfg.family == LossFamily::kSiSnr) {
      Tensor lk = neg_si_snr_loss(take_row(y, k), s, loss_cfg.clip_db);
      final_loss = final_loss.defined() ? add(final_loss, lk) : lk;
      if (n_stages > 1) {
        std::vector<double> yk(y.val().begin() + k * seg, y.val().begin() + (k + 1) * seg);
        double gamma = sisnr_gamma(yk, s);
        std::vector<double> gs(s.size());
        for (size_t i = 0; i < s.size(); ++i) gs[i] = gamma * s[i];
        std::vector<double> smag = spectrogram_mag(gs, stft_cfg, mix.sample_rate);
        for (int64_t b = 0; b < n_stages - 1; ++b) {
          Tensor ymag = reshape(complex_mag(take_row(out.stage_packed[b], k)),
                                {int64_t(smag.size())});
          Tensor lb = neg_mag_sisnr_loss(ymag, smag, loss_cfg.clip_db);
          if (int64_t(aux_losses.size()) <= b)
            aux_losses.push_back(lb);
          else
            aux_losses[b] = add(aux_losses[b], lb);
        }
      }
    } else {
      Waveform ws;
      ws.sample_rate = mix.sample_rate;
      ws.ch = {s};
      ComplexSpectrogram S = stft(ws, stft_cfg.frame_len, stft_cfg.hop, stft_cfg.window);
      Tensor lk = l1_tf_loss_node(take_row(out.stage_packed.back(), k), S.data);
      final_loss = final_loss.defined() ? add(final_loss, lk) : lk;
      for (int64_t b = 0; b < n_stages - 1; ++b) {
        Tensor lb = l1_tf_loss_node(take_row(out.stage_packed[b], k), S.data, /*mag_only=*/true);
        if (int64_t(aux_losses.size()) <= b)
          aux_losses.push_back(lb);
        else
          aux_losses[b] = add(aux_losses[b], lb);
      }
    }
  }
  if (mc.split_kind == SplitKind::kAttractor)
    attr_loss = attractor_bce_node(out.attractor_probs, K);

  double alpha = alpha_schedule(loss_cfg, st.epoch);
  Tensor loss = combine_stage_losses_node(final_loss, aux_losses, alpha,
                                          attr_loss.defined() ? &attr_loss : nullptr);
  if (loss.has_nan())
    throw Error("train_step: NaN loss at step " + std::to_string(st.step) + " (sample seed " +
                std::to_string(sample.seed) + ", crop " + std::to_string(start) + ")");

  model.params().zero_grad();
  backward(loss);
  clip_grad_norm(model.params(), hp.grad_clip);
  double lr = lr_schedule(hp, st.step + 1, st.epoch);
  st.opt.beta1 = hp.adam_beta1;
  st.opt.beta2 = hp.adam_beta2;
  st.opt.eps = hp.adam_eps;
  st.opt.weight_decay = hp.weight_decay;
  st.opt.step(model.params(), lr);
  ++st.step;
  return loss.item();
}

struct EvalResult {
  std::vector<double> si_snri;  // per sample
  std::vector<double> sdri;
  double mean_si_snri = 0.0;
  double mean_sdri = 0.0;
};

// SDR with least-squares projection of y onto s (no clipping).
inline double sdr_metric(const std::vector<double>& y, const std::vector<double>& s) {
  double gamma = sisnr_gamma(y, s);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    double p = gamma * s[i];
    num += p * p;
    den += (y[i] - p) * (y[i] - p);
  }
  return 10.0 * std::log10(num / (den + kLossEps) + kLossEps * kLossEps);
}

// Separate one full sample and report SI-SNRi / SDRi under PIT.
inline std::pair<double, double> evaluate_sample(const SRCorrNet& model,
                                                 const MixtureSample& sample,
                                                 const StftConfig& stft_cfg,
                                                 double clip_db = 30.0) {
  int64_t n = sample.mixture.samples();
  int64_t K = sample.K_true;
  ComplexSpectrogram X = stft(sample.mixture, stft_cfg.frame_len, stft_cfg.hop, stft_cfg.window);
  ModelOutput out = model.forward(X, K, /*train_mode=*/false);
  Tensor y = model.synthesize(out, stft_cfg, n);
  std::vector<std::vector<double>> yk(K);
  for (int64_t k = 0; k < K; ++k)
    yk[k].assign(y.val().begin() + k * n, y.val().begin() + (k + 1) * n);
  std::vector<std::vector<double>> lm(K, std::vector<double>(K));
  for (int64_t k = 0; k < K; ++k)
    for (int64_t j = 0; j < K; ++j) lm[k][j] = -si_snr(yk[k], sample.targets[j], clip_db);
  PitAssignment pit = pit_assign(lm);
  const auto& mix_ref = sample.mixture.ch[0];
  double si = 0.0, sd = 0.0;
  for (int64_t k = 0; k < K; ++k) {
    const auto& s = sample.targets[pit.perm[k]];
    si += si_snr(yk[k], s, clip_db) - si_snr(mix_ref, s, clip_db);
    sd += sdr_metric(yk[k], s) - sdr_metric(mix_ref, s);
  }
  return {si / double(K), sd / double(K)};
}

inline EvalResult evaluate(const SRCorrNet& model, const std::vector<MixtureSample>& samples,
                           const StftConfig& stft_cfg, double clip_db = 30.0) {
  EvalResult res;
  for (const auto& s : samples) {
    auto [si, sd] = evaluate_sample(model, s, stft_cfg, clip_db);
    res.si_snri.push_back(si);
    res.sdri.push_back(sd);
  }
  for (double v : res.si_snri) res.mean_si_snri += v;
  for (double v : res.sdri) res.mean_sdri += v;
  if (!samples.empty()) {
    res.mean_si_snri /= double(samples.size());
    res.mean_sdri /= double(samples.size());
  }
  return res;
}

// Speaker-count accuracy of the attractor split over a sample set.
inline double count_accuracy(const SRCorrNet& model, const std::vector<MixtureSample>& samples,
                             const StftConfig& stft_cfg) {
  int64_t hits = 0;
  for (const auto& s : samples) {
    ComplexSpectrogram X = stft(s.mixture, stft_cfg.frame_len, stft_cfg.hop, stft_cfg.window);
    ModelOutput out = model.forward(X, 0, /*train_mode=*/false);
    if (out.K == s.K_true) ++hits;
  }
  return samples.empty() ? 0.0 : double(hits) / double(samples.size());
}

// Full training driver. `on_eval` runs every eval_every steps; returning true
// stops training early.
struct TrainLog {
  std::vector<double> losses;
  std::vector<double> grad_norms;
};

inline TrainLog train(SRCorrNet& model, const std::vector<MixtureSample>& dataset,
                      const LossConfig& loss_cfg, const TrainHp& hp, const StftConfig& stft_cfg,
                      TrainState& st, const std::string& log_path = "",
                      const std::function<bool(int64_t)>& on_eval = nullptr) {
  check(!dataset.empty(), "train: empty dataset");
  TrainLog log;
  std::ofstream log_os;
  if (!log_path.empty()) {
    log_os.open(log_path, st.step > 0 ? std::ios::app : std::ios::out);
    check(log_os.good(), "train: cannot open log " + log_path);
  }
  int64_t n = int64_t(dataset.size());
  std::vector<int64_t> order(n);
  while (st.step < hp.max_steps) {
    // The shuffle is a pure function of (seed, epoch) rather than of the
    // running data_rng, so a run resumed mid-epoch replays the same order.
    Rng epoch_rng(hp.seed + 0x9e3779b97f4a7c15ULL * uint64_t(st.epoch + 1));
    for (int64_t i = 0; i < n; ++i) order[i] = i;
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[epoch_rng.uniform_int(0, i)]);
    int64_t start_i = st.step - st.epoch * n;  // offset within a resumed epoch
    check(start_i >= 0 && start_i <= n, "train: step/epoch state inconsistent");
    int64_t i = start_i;
    for (; i < n && st.step < hp.max_steps; ++i) {
      double loss = train_step(model, dataset[order[i]], loss_cfg, hp, stft_cfg, st);
      log.losses.push_back(loss);
      if (!log_path.empty() && (st.step % hp.log_every == 0 || st.step == 1)) {
        nlohmann::json rec{{"step", st.step},
                           {"epoch", st.epoch},
                           {"loss", loss},
                           {"lr", lr_schedule(hp, st.step, st.epoch)},
                           {"alpha", alpha_schedule(loss_cfg, st.epoch)}};
        log_os << rec.dump() << "\n";
        log_os.flush();
      }
      if (on_eval && st.step % hp.eval_every == 0)
        if (on_eval(st.step)) return log;
    }
    if (i == n) ++st.epoch;  // only after a full pass, not a max_steps cutoff
  }
  return log;
}

// ---- continuous separation ----

struct CssConfig {
  double V_h = 1.2, V = 0.8, V_f = 0.4;  // seconds
  int64_t K_streams = 2;
};

// Permutation of cur_head maximizing summed zero-lag normalized
// cross-correlation against prev_tail; exhaustive over K!.
inline std::vector<int64_t> stitch_align(const std::vector<std::vector<double>>& prev_tail,
                                         const std::vector<std::vector<double>>& cur_head) {
  int64_t K = int64_t(prev_tail.size());
  check(int64_t(cur_head.size()) == K, "stitch_align: stream count mismatch");
  for (int64_t k = 0; k < K; ++k)
    check(prev_tail[k].size() == cur_head[k].size(), "stitch_align: overlap length mismatch");
  auto ncc = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    return ab / (std::sqrt(aa * bb) + 1e-12);
  };
  std::vector<std::vector<double>> sim(K, std::vector<double>(K));
  for (int64_t k = 0; k < K; ++k)
    for (int64_t j = 0; j < K; ++j) sim[k][j] = ncc(prev_tail[k], cur_head[j]);
  std::vector<int64_t> perm(K), best(K);
  for (int64_t i = 0; i < K; ++i) perm[i] = i;
  double best_score = -1e300;
  do {
    double sc = 0.0;
    for (int64_t k = 0; k < K; ++k) sc += sim[k][perm[k]];
    if (sc > best_score) {
      best_score = sc;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;  // prev stream k continues as cur stream best[k]
}

// Chunk-wise separation of a long recording into K continuous streams.
inline std::vector<std::vector<double>> css_separate(const SRCorrNet& model,
                                                     const Waveform& input,
                                                     const CssConfig& cfg,
                                                     const StftConfig& stft_cfg) {
  int sr = input.sample_rate;
  int64_t N = input.samples();
  int64_t K = cfg.K_streams;
  int64_t vh = int64_t(cfg.V_h * sr), v = int64_t(cfg.V * sr), vf = int64_t(cfg.V_f * sr);
  check(v > 0, "css_separate: central segment must be positive");
  int64_t chunk_len = vh + v + vf;

  auto separate_chunk = [&](int64_t start, int64_t len) {
    Waveform w = detail::crop_wave(input, start, len);
    ComplexSpectrogram X = stft(w, stft_cfg.frame_len, stft_cfg.hop, stft_cfg.window);
    // Fixed split emits exactly K streams; the attractor split may emit
    // fewer, in which case remaining slots stay silent.
    ModelOutput out = model.forward(X, model.config().split_kind == SplitKind::kFixed ? K : 0,
                                    /*train_mode=*/false);
    Tensor y = model.synthesize(out, stft_cfg, len);
    std::vector<std::vector<double>> streams(K, std::vector<double>(len, 0.0));
    for (int64_t k = 0; k < std::min(K, out.K); ++k)
      streams[k].assign(y.val().begin() + k * len, y.val().begin() + (k + 1) * len);
    return streams;
  };

  std::vector<std::vector<double>> out(K, std::vector<double>(N, 0.0));
  if (N <= chunk_len) {
    auto streams = separate_chunk(0, N);
    for (int64_t k = 0; k < K; ++k) std::copy(streams[k].begin(), streams[k].end(), out[k].begin());
    return out;
  }

  std::vector<std::vector<double>> prev;  // previous chunk streams (aligned)
  int64_t prev_start = 0;
  for (int64_t ci = 0;; ++ci) {
    int64_t start = ci * v;
    if (start >= N) break;
    int64_t len = std::min(chunk_len, N - start);
    bool last = (start + chunk_len >= N);
    auto streams = separate_chunk(start, len);
    if (ci > 0) {
      // Align on the region both chunks separated: [start, prev_start + prev_len)
      int64_t prev_len = int64_t(prev[0].size());
      int64_t overlap = prev_start + prev_len - start;
      overlap = std::min({overlap, int64_t(streams[0].size()), prev_len});
      std::vector<std::vector<double>> tail(K), head(K);
      for (int64_t k = 0; k < K; ++k) {
        tail[k].assign(prev[k].end() - overlap, prev[k].end());
        head[k].assign(streams[k].begin(), streams[k].begin() + overlap);
      }
      std::vector<int64_t> perm = stitch_align(tail, head);
      std::vector<std::vector<double>> reordered(K);
      for (int64_t k = 0; k < K; ++k) reordered[k] = std::move(streams[perm[k]]);
      streams = std::move(reordered);
    }
    // Emit: first chunk contributes [0, vh+v); interior chunks the central v;
    // the last chunk runs through the end of the input.
    int64_t emit_from = (ci == 0) ? 0 : vh;
    int64_t emit_to = last ? len : vh + v;
    for (int64_t k = 0; k < K; ++k)
      for (int64_t i = emit_from; i < emit_to; ++i)
        if (start + i < N) out[k][start + i] = streams[k][i];
    prev = std::move(streams);
    prev_start = start;
    if (last) break;
  }
  return out;
}

}  // namespace srcorrnet
