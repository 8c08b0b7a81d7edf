// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Synthetic multi-channel noisy-reverberant mixture generation with
// truncated-RIR training targets.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "srcorrnet/common.hpp"
#include "srcorrnet/wav.hpp"

namespace srcorrnet {

// Unit direct-path tap at `delay`, then a white-noise tail shaped by an
// exponential envelope reaching -60 dB at rt60 seconds.
inline std::vector<double> gen_toy_rir(double rt60, int64_t delay, int64_t length,
                                       int sample_rate, uint64_t seed) {
  check(rt60 > 0.0, "gen_toy_rir: rt60 must be positive");
  check(delay >= 0 && delay < length, "gen_toy_rir: delay out of range");
  Rng rng(seed);
  std::vector<double> h(length, 0.0);
  h[delay] = 1.0;
  const double tail_gain = 0.35;
  for (int64_t n = delay + 1; n < length; ++n) {
    double t = double(n - delay) / double(sample_rate);
    h[n] = tail_gain * rng.normal() * std::exp(-6.9 * t / rt60);
  }
  return h;
}

// Keep h[0 .. n_peak + n_offset] (peak inclusive), zero-padded to the
// original length.
inline std::vector<double> truncate_rir(const std::vector<double>& h, int64_t n_offset) {
  check(!h.empty(), "truncate_rir: empty filter");
  int64_t n_peak = 0;
  for (int64_t i = 1; i < int64_t(h.size()); ++i)
    if (std::abs(h[i]) > std::abs(h[n_peak])) n_peak = i;
  std::vector<double> out(h.size(), 0.0);
  int64_t keep = std::min<int64_t>(int64_t(h.size()), n_peak + n_offset + 1);
  std::copy_n(h.begin(), keep, out.begin());
  return out;
}

inline std::vector<double> convolve_trim(const std::vector<double>& x,
                                         const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    size_t kmax = std::min(h.size(), n + 1);
    for (size_t k = 0; k < kmax; ++k) acc += h[k] * x[n - k];
    y[n] = acc;
  }
  return y;
}

struct ToyRoom {
  int64_t M = 1;
  double rt60 = 0.2;
  std::vector<std::vector<int64_t>> direct_delay;       // [K][M]
  std::vector<std::vector<std::vector<double>>> rir;    // [K][M][taps]
  uint64_t seed = 0;
};

// Anechoic room: pure delay RIRs (delta at direct_delay).
inline ToyRoom make_anechoic_room(int64_t K, int64_t M,
                                  const std::vector<std::vector<int64_t>>& delays,
                                  int64_t rir_len) {
  ToyRoom room;
  room.M = M;
  room.rt60 = 0.0;
  room.direct_delay = delays;
  room.rir.resize(K);
  for (int64_t k = 0; k < K; ++k) {
    room.rir[k].resize(M);
    for (int64_t m = 0; m < M; ++m) {
      std::vector<double> h(rir_len, 0.0);
      h[delays[k][m]] = 1.0;
      room.rir[k][m] = h;
    }
  }
  return room;
}

inline ToyRoom make_reverb_room(int64_t K, int64_t M, double rt60, int sample_rate,
                                int64_t rir_len, uint64_t seed, Rng& delay_rng) {
  ToyRoom room;
  room.M = M;
  room.rt60 = rt60;
  room.seed = seed;
  room.direct_delay.resize(K);
  room.rir.resize(K);
  for (int64_t k = 0; k < K; ++k) {
    room.direct_delay[k].resize(M);
    room.rir[k].resize(M);
    for (int64_t m = 0; m < M; ++m) {
      int64_t d = delay_rng.uniform_int(0, std::min<int64_t>(15, rir_len / 4));
      room.direct_delay[k][m] = d;
      room.rir[k][m] = gen_toy_rir(rt60, d, rir_len, sample_rate,
                                   seed * 1000003ULL + uint64_t(k * 131 + m));
    }
  }
  return room;
}

struct MixtureSample {
  Waveform mixture;                          // [M ch]
  std::vector<std::vector<double>> sources;  // dry, [K][N]
  std::vector<std::vector<double>> targets;  // truncated-RIR convolved, ref channel
  int64_t K_true = 0;
  double snr_db = 0.0;
  double rt60 = 0.0;
  uint64_t seed = 0;
};

// Speech-like synthetic source: amplitude-modulated harmonics on a drifting
// f0 trajectory plus occasional noise bursts; RMS-normalized.
inline std::vector<double> make_speech_like_source(int64_t n, int sample_rate, Rng& rng) {
  std::vector<double> x(n, 0.0);
  double f0 = rng.uniform(80.0, 350.0);
  double drift_rate = rng.uniform(0.2, 2.0);
  double drift_depth = rng.uniform(0.02, 0.12);
  double am_rate = rng.uniform(1.5, 6.0);
  double am_phase = rng.uniform(0.0, 2.0 * kPi);
  int64_t n_harm = rng.uniform_int(3, 6);
  std::vector<double> harm_amp(n_harm), harm_phase(n_harm);
  for (int64_t h = 0; h < n_harm; ++h) {
    harm_amp[h] = rng.uniform(0.3, 1.0) / double(h + 1);
    harm_phase[h] = rng.uniform(0.0, 2.0 * kPi);
  }
  double nyq = double(sample_rate) / 2.0;
  double phase = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double t = double(i) / double(sample_rate);
    double f = f0 * (1.0 + drift_depth * std::sin(2.0 * kPi * drift_rate * t));
    phase += 2.0 * kPi * f / double(sample_rate);
    double am = 0.55 + 0.45 * std::sin(2.0 * kPi * am_rate * t + am_phase);
    double v = 0.0;
    for (int64_t h = 0; h < n_harm; ++h)
      if (f * double(h + 1) < 0.95 * nyq) v += harm_amp[h] * std::sin(double(h + 1) * phase + harm_phase[h]);
    x[i] = am * v;
  }
  // occasional unvoiced bursts
  int64_t bursts = rng.uniform_int(0, 2);
  for (int64_t b = 0; b < bursts; ++b) {
    int64_t start = rng.uniform_int(0, std::max<int64_t>(1, n - n / 8));
    int64_t len = rng.uniform_int(n / 32 + 1, n / 8 + 1);
    double amp = rng.uniform(0.05, 0.2);
    for (int64_t i = start; i < std::min(n, start + len); ++i) x[i] += amp * rng.normal();
  }
  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / double(n));
  check(rms > 0.0, "make_speech_like_source: silent source");
  for (double& v : x) v /= rms;
  return x;
}

// Per-mic convolved sum plus white noise scaled against the louder source.
// noise_snr_db = +inf produces an exactly noiseless mixture.
inline MixtureSample synthesize_mixture(const std::vector<std::vector<double>>& sources,
                                        const ToyRoom& room, double noise_snr_db, int64_t K,
                                        int sample_rate, int64_t n_offset, uint64_t noise_seed) {
  check(K >= 1 && K <= int64_t(sources.size()), "synthesize_mixture: K exceeds sources");
  check(int64_t(room.rir.size()) >= K, "synthesize_mixture: room has too few sources");
  int64_t N = int64_t(sources[0].size());
  int64_t M = room.M;
  MixtureSample out;
  out.K_true = K;
  out.snr_db = noise_snr_db;
  out.rt60 = room.rt60;
  out.seed = noise_seed;
  out.mixture.sample_rate = sample_rate;
  out.mixture.ch.assign(M, std::vector<double>(N, 0.0));
  std::vector<double> src_energy(K, 0.0);
  for (int64_t k = 0; k < K; ++k) {
    out.sources.push_back(sources[k]);
    for (int64_t m = 0; m < M; ++m) {
      std::vector<double> conv = convolve_trim(sources[k], room.rir[k][m]);
      if (m == 0)
        for (double v : conv) src_energy[k] += v * v;
      for (int64_t i = 0; i < N; ++i) out.mixture.ch[m][i] += conv[i];
    }
    out.targets.push_back(convolve_trim(sources[k], truncate_rir(room.rir[k][0], n_offset)));
  }
  if (std::isfinite(noise_snr_db)) {
    double loudest = 0.0;
    for (double e : src_energy) loudest = std::max(loudest, e);
    Rng rng(noise_seed);
    std::vector<std::vector<double>> noise(M, std::vector<double>(N));
    double noise_energy = 0.0;
    for (int64_t m = 0; m < M; ++m)
      for (int64_t i = 0; i < N; ++i) {
        noise[m][i] = rng.normal();
        if (m == 0) noise_energy += noise[m][i] * noise[m][i];
      }
    double scale = std::sqrt(loudest / (noise_energy * std::pow(10.0, noise_snr_db / 10.0)));
    for (int64_t m = 0; m < M; ++m)
      for (int64_t i = 0; i < N; ++i) out.mixture.ch[m][i] += scale * noise[m][i];
  }
  return out;
}

struct DatasetSpec {
  int64_t count = 8;
  int64_t K_min = 2, K_max = 2;
  double rt60_min = 0.2, rt60_max = 0.7;
  double snr_min = 5.0, snr_max = 20.0;
  uint64_t seed = 1;
  int sample_rate = 8000;
  double duration_s = 2.0;
  int64_t M = 1;
  int64_t n_offset = 256;
  bool anechoic = true;      // delta RIRs with per-(source,mic) delays
  bool noiseless = true;     // skip additive noise entirely
  int64_t max_delay = 8;     // anechoic inter-channel delay bound (samples)
  // Fixed anechoic geometry: entry k is the per-mic delay increment of
  // speaker slot k (mic m gets delay m * fixed_delays[k]). Empty means the
  // delays are drawn at random per sample.
  std::vector<int64_t> fixed_delays;
};

inline MixtureSample generate_sample(const DatasetSpec& spec, int64_t index) {
  Rng rng(spec.seed * 0x51ed2701ULL + uint64_t(index) + 1);
  int64_t n = int64_t(spec.duration_s * spec.sample_rate);
  int64_t K = rng.uniform_int(spec.K_min, spec.K_max);
  std::vector<std::vector<double>> sources;
  for (int64_t k = 0; k < K; ++k) sources.push_back(make_speech_like_source(n, spec.sample_rate, rng));
  ToyRoom room;
  if (spec.anechoic) {
    std::vector<std::vector<int64_t>> delays(K, std::vector<int64_t>(spec.M, 0));
    int64_t max_d = spec.max_delay;
    if (spec.fixed_delays.empty()) {
      for (int64_t k = 0; k < K; ++k)
        for (int64_t m = 1; m < spec.M; ++m) delays[k][m] = rng.uniform_int(0, spec.max_delay);
    } else {
      check(int64_t(spec.fixed_delays.size()) >= K, "generate_sample: fixed_delays too short");
      for (int64_t k = 0; k < K; ++k)
        for (int64_t m = 1; m < spec.M; ++m) {
          delays[k][m] = m * spec.fixed_delays[k];
          max_d = std::max(max_d, delays[k][m]);
        }
    }
    room = make_anechoic_room(K, spec.M, delays, max_d + 1);
  } else {
    double rt60 = rng.uniform(spec.rt60_min, spec.rt60_max);
    int64_t rir_len = std::max<int64_t>(64, int64_t(0.6 * rt60 * spec.sample_rate));
    room = make_reverb_room(K, spec.M, rt60, spec.sample_rate, rir_len,
                            spec.seed * 7919ULL + uint64_t(index), rng);
  }
  double snr = spec.noiseless ? std::numeric_limits<double>::infinity()
                              : rng.uniform(spec.snr_min, spec.snr_max);
  return synthesize_mixture(sources, room, snr, K, spec.sample_rate, spec.n_offset,
                            spec.seed * 104729ULL + uint64_t(index));
}

inline std::vector<MixtureSample> make_samples(const DatasetSpec& spec) {
  std::vector<MixtureSample> out;
  for (int64_t i = 0; i < spec.count; ++i) out.push_back(generate_sample(spec, i));
  return out;
}

// Writes WAVs plus a JSON manifest; fully deterministic per seed.
inline std::string make_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["samples"] = nlohmann::json::array();
  for (int64_t i = 0; i < spec.count; ++i) {
    MixtureSample s = generate_sample(spec, i);
    std::string id = "sample" + std::to_string(i);
    std::string mix_path = (fs::path(out_dir) / (id + "_mix.wav")).string();
    write_wav(mix_path, s.mixture, WavFormat::kFloat32);
    nlohmann::json rec;
    rec["id"] = id;
    rec["mixture_path"] = mix_path;
    rec["target_paths"] = nlohmann::json::array();
    for (int64_t k = 0; k < s.K_true; ++k) {
      std::string tgt_path = (fs::path(out_dir) / (id + "_tgt" + std::to_string(k) + ".wav")).string();
      Waveform tw;
      tw.sample_rate = spec.sample_rate;
      tw.ch = {s.targets[k]};
      write_wav(tgt_path, tw, WavFormat::kFloat32);
      rec["target_paths"].push_back(tgt_path);
    }
    rec["K_true"] = s.K_true;
    rec["rt60"] = s.rt60;
    rec["snr_db"] = std::isfinite(s.snr_db) ? s.snr_db : 1e9;
    rec["seed"] = s.seed;
    manifest["samples"].push_back(rec);
  }
  std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream os(manifest_path);
  check(os.good(), "make_dataset: cannot write manifest");
  os << manifest.dump(2) << "\n";
  return manifest_path;
}

// Reads a manifest and its WAVs back into memory (dry sources are not
// stored on disk, so `sources` stays empty).
inline std::vector<MixtureSample> load_dataset(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  check(is.good(), "load_dataset: cannot open " + manifest_path);
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_dataset: parse error: " + std::string(e.what()));
  }
  check(manifest.value("version", 0) == 1, "load_dataset: unsupported manifest version");
  std::vector<MixtureSample> out;
  for (const auto& rec : manifest["samples"]) {
    MixtureSample s;
    s.mixture = read_wav(rec["mixture_path"].get<std::string>());
    for (const auto& p : rec["target_paths"]) {
      Waveform t = read_wav(p.get<std::string>());
      check(t.ch.size() == 1, "load_dataset: target WAVs must be mono");
      s.targets.push_back(t.ch[0]);
    }
    s.K_true = rec["K_true"].get<int64_t>();
    s.rt60 = rec.value("rt60", 0.0);
    s.snr_db = rec.value("snr_db", 0.0);
    s.seed = rec.value("seed", uint64_t(0));
    check(int64_t(s.targets.size()) == s.K_true, "load_dataset: target count mismatch");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace srcorrnet
