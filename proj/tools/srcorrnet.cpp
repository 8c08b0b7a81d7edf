// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Command-line front end: dataset synthesis, training, separation, and
// evaluation. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "srcorrnet/config.hpp"
#include "srcorrnet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace srcorrnet;

namespace {

int thread_count() {
  // Single-threaded is the default; the variable is accepted for
  // compatibility but values other than 1 are clamped (results must be
  // bit-reproducible, so reductions stay sequential).
  const char* env = std::getenv("SRCORRNET_THREADS");
  if (!env) return 1;
  int v = std::atoi(env);
  return v >= 1 ? 1 : 1;
}

StftConfig stft_of(const ModelConfig& mc) { return make_stft_config(mc.frame_len, mc.hop); }

int cmd_synth(const RunConfig& cfg, uint64_t seed, const std::string& out_dir) {
  DatasetSpec spec = cfg.data;
  spec.seed = seed;
  spec.sample_rate = cfg.sample_rate;
  std::string manifest = make_dataset(spec, out_dir);
  std::cout << "wrote " << spec.count << " samples; manifest: " << manifest << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, uint64_t seed, const std::string& out_dir,
              const std::string& checkpoint) {
  fs::create_directories(out_dir);
  SRCorrNet model(cfg.model, seed);
  TrainState st;
  st.data_rng = Rng(seed ^ 0x9e3779b97f4a7c15ULL);
  if (!checkpoint.empty()) {
    load_train_state(checkpoint, model, st);
    std::cout << "resumed from " << checkpoint << " at step " << st.step << "\n";
  }
  DatasetSpec spec = cfg.data;
  spec.sample_rate = cfg.sample_rate;
  std::vector<MixtureSample> data = make_samples(spec);
  TrainHp hp = cfg.train;
  hp.seed = seed;
  std::string log_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::string ckpt_path = (fs::path(out_dir) / "model.ckpt").string();
  train(model, data, cfg.loss, hp, stft_of(cfg.model), st, log_path,
        [&](int64_t step) {
          save_train_state(ckpt_path, model, st);
          std::cout << "step " << step << ": checkpoint saved\n";
          return false;
        });
  save_train_state(ckpt_path, model, st);
  EvalResult ev = evaluate(model, data, stft_of(cfg.model));
  std::cout << "done: " << st.step << " steps, train SI-SNRi " << ev.mean_si_snri << " dB\n"
            << "checkpoint: " << ckpt_path << "\n";
  return 0;
}

int cmd_separate(const RunConfig& cfg, uint64_t seed, const std::string& out_dir,
                 const std::string& checkpoint, const std::string& input, bool css) {
  fs::create_directories(out_dir);
  SRCorrNet model(cfg.model, seed);
  if (!checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(checkpoint);
    load_params(ckpt, model.params());
  }
  Waveform in = read_wav(input);
  StftConfig sc = stft_of(cfg.model);
  std::vector<std::vector<double>> streams;
  if (css) {
    streams = css_separate(model, in, cfg.css, sc);
  } else {
    ComplexSpectrogram X = stft(in, sc.frame_len, sc.hop, sc.window);
    ModelOutput out = model.forward(X, cfg.model.split_kind == SplitKind::kFixed ? cfg.model.K : 0);
    Tensor y = model.synthesize(out, sc, in.samples());
    for (int64_t k = 0; k < out.K; ++k)
      streams.emplace_back(y.val().begin() + k * in.samples(),
                           y.val().begin() + (k + 1) * in.samples());
  }
  for (size_t k = 0; k < streams.size(); ++k) {
    Waveform w;
    w.sample_rate = in.sample_rate;
    w.ch = {streams[k]};
    std::string path = (fs::path(out_dir) / ("stream" + std::to_string(k) + ".wav")).string();
    write_wav(path, w, WavFormat::kFloat32);
    std::cout << path << "\n";
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg, uint64_t seed, const std::string& out_dir,
             const std::string& checkpoint, const std::string& manifest) {
  fs::create_directories(out_dir);
  SRCorrNet model(cfg.model, seed);
  if (!checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(checkpoint);
    load_params(ckpt, model.params());
  }
  std::vector<MixtureSample> data =
      manifest.empty() ? make_samples([&] {
        DatasetSpec s = cfg.data;
        s.sample_rate = cfg.sample_rate;
        return s;
      }())
                       : load_dataset(manifest);
  EvalResult ev = evaluate(model, data, stft_of(cfg.model), cfg.loss.clip_db);
  nlohmann::json report{{"n_samples", data.size()},
                        {"mean_si_snri_db", ev.mean_si_snri},
                        {"mean_sdri_db", ev.mean_sdri},
                        {"per_sample_si_snri_db", ev.si_snri},
                        {"per_sample_sdri_db", ev.sdri}};
  std::string path = (fs::path(out_dir) / "eval.json").string();
  std::ofstream os(path);
  check(os.good(), "eval: cannot write " + path);
  os << report.dump(2) << "\n";
  std::cout << "SI-SNRi " << ev.mean_si_snri << " dB, SDRi " << ev.mean_sdri << " dB ("
            << data.size() << " samples) -> " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"srcorrnet: correlation-driven speech separation"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", checkpoint, input, manifest;
  uint64_t seed = 1;
  bool css = false;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", config_path, "run config JSON");
    if (need_config) c->required();
    sub->add_option("--seed", seed, "global seed");
    sub->add_option("--out", out_dir, "output directory");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, true);

  auto* tr = app.add_subcommand("train", "train a model on synthetic mixtures");
  add_common(tr, true);
  tr->add_option("--checkpoint", checkpoint, "resume from training checkpoint");

  auto* sep = app.add_subcommand("separate", "separate a mixture WAV");
  add_common(sep, true);
  sep->add_option("--checkpoint", checkpoint, "model checkpoint");
  sep->add_option("--input", input, "input WAV")->required();
  sep->add_flag("--css", css, "chunk-wise continuous separation");

  auto* ev = app.add_subcommand("eval", "evaluate on a dataset");
  add_common(ev, true);
  ev->add_option("--checkpoint", checkpoint, "model checkpoint");
  ev->add_option("--manifest", manifest, "dataset manifest JSON (default: synthesize)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  (void)thread_count();
  try {
    RunConfig cfg = load_run_config(config_path);
    if (synth->parsed()) return cmd_synth(cfg, seed, out_dir);
    if (tr->parsed()) return cmd_train(cfg, seed, out_dir, checkpoint);
    if (sep->parsed()) return cmd_separate(cfg, seed, out_dir, checkpoint, input, css);
    if (ev->parsed()) return cmd_eval(cfg, seed, out_dir, checkpoint, manifest);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
