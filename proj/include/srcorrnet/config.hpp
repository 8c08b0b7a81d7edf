// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// JSON (de)serialization for model and run configuration. Parsing is
// strict: unknown keys are rejected so typos fail loudly.

#pragma once

#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "srcorrnet/mixsim.hpp"
#include "srcorrnet/model.hpp"
#include "srcorrnet/pipeline.hpp"

namespace srcorrnet {

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  check(j.is_object(), "config: " + where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    check(allowed.count(it.key()) > 0, "config: unknown key '" + it.key() + "' in " + where);
}

}  // namespace detail

inline nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{
      {"C", c.C},
      {"C_H", c.C_H},
      {"B_E", c.B_E},
      {"B_D", c.B_D},
      {"B_A", c.B_A},
      {"heads", c.heads},
      {"conv_kernel", c.conv_kernel},
      {"L", c.L},
      {"I", c.I},
      {"M", c.M},
      {"K", c.K},
      {"split", c.split_kind == SplitKind::kFixed ? "fixed" : "attractor"},
      {"filter_combine",
       c.filter_combine == FilterCombine::kSigmoidGate ? "sigmoid_gate" : "tanh_norm"},
      {"corr_norm", c.corr_norm == NormKind::kScotBeta ? "scot_beta"
                    : c.corr_norm == NormKind::kPhatBeta ? "phat_beta"
                                                         : "none"},
      {"beta", c.beta},
      {"frame_len", c.frame_len},
      {"hop", c.hop},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"C", "C_H", "B_E", "B_D", "B_A", "heads", "conv_kernel", "L", "I", "M",
                          "K", "split", "filter_combine", "corr_norm", "beta", "frame_len", "hop"},
                         "model config");
  ModelConfig c;
  c.C = j.value("C", c.C);
  c.C_H = j.value("C_H", c.C_H);
  c.B_E = j.value("B_E", c.B_E);
  c.B_D = j.value("B_D", c.B_D);
  c.B_A = j.value("B_A", c.B_A);
  c.heads = j.value("heads", c.heads);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.L = j.value("L", c.L);
  c.I = j.value("I", c.I);
  c.M = j.value("M", c.M);
  c.K = j.value("K", c.K);
  if (j.contains("split")) {
    std::string s = j["split"];
    if (s == "fixed")
      c.split_kind = SplitKind::kFixed;
    else if (s == "attractor")
      c.split_kind = SplitKind::kAttractor;
    else
      throw Error("config: bad split '" + s + "'");
  }
  if (j.contains("filter_combine")) {
    std::string s = j["filter_combine"];
    if (s == "sigmoid_gate")
      c.filter_combine = FilterCombine::kSigmoidGate;
    else if (s == "tanh_norm")
      c.filter_combine = FilterCombine::kTanhNorm;
    else
      throw Error("config: bad filter_combine '" + s + "'");
  }
  if (j.contains("corr_norm")) {
    std::string s = j["corr_norm"];
    if (s == "scot_beta")
      c.corr_norm = NormKind::kScotBeta;
    else if (s == "phat_beta")
      c.corr_norm = NormKind::kPhatBeta;
    else if (s == "none")
      c.corr_norm = NormKind::kNone;
    else
      throw Error("config: bad corr_norm '" + s + "'");
  }
  c.beta = j.value("beta", c.beta);
  c.frame_len = j.value("frame_len", c.frame_len);
  c.hop = j.value("hop", c.hop);
  c.validate();
  return c;
}

// Top-level run configuration consumed by the command-line tool.
struct RunConfig {
  ModelConfig model;
  TrainHp train;
  LossConfig loss;
  DatasetSpec data;
  CssConfig css;
  int sample_rate = 8000;
};

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"count", "K_min", "K_max", "rt60_min", "rt60_max", "snr_min_db",
                          "snr_max_db", "seed", "sample_rate", "duration_s", "M", "n_offset",
                          "anechoic", "noiseless", "max_delay", "fixed_delays"},
                         "data config");
  // JSON keys use _db suffixes; the in-memory struct drops them.
  DatasetSpec d;
  d.count = j.value("count", d.count);
  d.K_min = j.value("K_min", d.K_min);
  d.K_max = j.value("K_max", d.K_max);
  d.rt60_min = j.value("rt60_min", d.rt60_min);
  d.rt60_max = j.value("rt60_max", d.rt60_max);
  d.snr_min = j.value("snr_min_db", d.snr_min);
  d.snr_max = j.value("snr_max_db", d.snr_max);
  d.seed = j.value("seed", d.seed);
  d.sample_rate = j.value("sample_rate", d.sample_rate);
  d.duration_s = j.value("duration_s", d.duration_s);
  d.M = j.value("M", d.M);
  d.n_offset = j.value("n_offset", d.n_offset);
  d.anechoic = j.value("anechoic", d.anechoic);
  d.noiseless = j.value("noiseless", d.noiseless);
  d.max_delay = j.value("max_delay", d.max_delay);
  d.fixed_delays = j.value("fixed_delays", d.fixed_delays);
  return d;
}

inline nlohmann::json to_json(const DatasetSpec& d) {
  return nlohmann::json{
      {"count", d.count},         {"K_min", d.K_min},
      {"K_max", d.K_max},         {"rt60_min", d.rt60_min},
      {"rt60_max", d.rt60_max},   {"snr_min_db", d.snr_min},
      {"snr_max_db", d.snr_max}, {"seed", d.seed},
      {"sample_rate", d.sample_rate}, {"duration_s", d.duration_s},
      {"M", d.M},                 {"n_offset", d.n_offset},
      {"anechoic", d.anechoic},   {"noiseless", d.noiseless},
      {"max_delay", d.max_delay}, {"fixed_delays", d.fixed_delays},
  };
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"model", "train", "loss", "data", "css", "sample_rate"}, "run config");
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::reject_unknown(t,
                           {"max_steps", "peak_lr", "warmup_steps", "lr_decay",
                            "lr_decay_start_epoch", "grad_clip", "weight_decay", "segment_s",
                            "seed", "log_every", "eval_every"},
                           "train config");
    c.train.max_steps = t.value("max_steps", c.train.max_steps);
    c.train.peak_lr = t.value("peak_lr", c.train.peak_lr);
    c.train.warmup_steps = t.value("warmup_steps", c.train.warmup_steps);
    c.train.lr_decay = t.value("lr_decay", c.train.lr_decay);
    c.train.lr_decay_start_epoch = t.value("lr_decay_start_epoch", c.train.lr_decay_start_epoch);
    c.train.grad_clip = t.value("grad_clip", c.train.grad_clip);
    c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    c.train.segment_s = t.value("segment_s", c.train.segment_s);
    c.train.seed = t.value("seed", c.train.seed);
    c.train.log_every = t.value("log_every", c.train.log_every);
    c.train.eval_every = t.value("eval_every", c.train.eval_every);
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    detail::reject_unknown(l, {"family", "clip_db", "alpha", "alpha_decay", "alpha_decay_start"},
                           "loss config");
    if (l.contains("family")) {
      std::string s = l["family"];
      if (s == "si_snr")
        c.loss.family = LossFamily::kSiSnr;
      else if (s == "l1_tf")
        c.loss.family = LossFamily::kL1Tf;
      else
        throw Error("config: bad loss family '" + s + "'");
    }
    c.loss.clip_db = l.value("clip_db", c.loss.clip_db);
    c.loss.alpha = l.value("alpha", c.loss.alpha);
    c.loss.alpha_decay = l.value("alpha_decay", c.loss.alpha_decay);
    c.loss.alpha_decay_start = l.value("alpha_decay_start", c.loss.alpha_decay_start);
  }
  if (j.contains("data")) c.data = dataset_spec_from_json(j["data"]);
  if (j.contains("css")) {
    const auto& s = j["css"];
    detail::reject_unknown(s, {"V_h", "V", "V_f", "K_streams"}, "css config");
    c.css.V_h = s.value("V_h", c.css.V_h);
    c.css.V = s.value("V", c.css.V);
    c.css.V_f = s.value("V_f", c.css.V_f);
    c.css.K_streams = s.value("K_streams", c.css.K_streams);
  }
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  check(is.good(), "config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("config: parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace srcorrnet
