// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "srcorrnet/objectives.hpp"

using namespace srcorrnet;

namespace {

std::vector<double> random_sig(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("si_snr closed-form cases") {
  std::vector<double> s = random_sig(64, 1);
  SECTION("perfect estimate clips at 30 dB") {
    REQUIRE_THAT(si_snr(s, s), Catch::Matchers::WithinAbs(30.0, 1e-12));
  }
  SECTION("scale invariance") {
    std::vector<double> y = random_sig(64, 2);
    std::vector<double> y2 = y;
    for (auto& v : y2) v *= 7.3;
    REQUIRE_THAT(si_snr(y, s), Catch::Matchers::WithinAbs(si_snr(y2, s), 1e-9));
  }
  SECTION("known SNR construction") {
    // y = s + e with e orthogonal to s and ||e||^2 = ||s||^2 / 100 -> 20 dB
    std::vector<double> y = s;
    double ss = 0.0;
    for (double v : s) ss += v * v;
    std::vector<double> e = random_sig(64, 3);
    double es = 0.0;
    for (size_t i = 0; i < e.size(); ++i) es += e[i] * s[i];
    for (size_t i = 0; i < e.size(); ++i) e[i] -= es / ss * s[i];  // orthogonalize
    double ee = 0.0;
    for (double v : e) ee += v * v;
    double want_db = 20.0;
    double k = std::sqrt(ss / (ee * std::pow(10.0, want_db / 10.0)));
    for (size_t i = 0; i < y.size(); ++i) y[i] += k * e[i];
    REQUIRE_THAT(si_snr(y, s), Catch::Matchers::WithinAbs(want_db, 1e-6));
  }
}

TEST_CASE("graph SI-SNR loss agrees with the plain metric and differentiates") {
  std::vector<double> s = random_sig(48, 5);
  std::vector<double> yv = random_sig(48, 6);
  Tensor y = Tensor::from({48}, yv, true);
  Tensor loss = neg_si_snr_loss(y, s);
  REQUIRE_THAT(loss.item(), Catch::Matchers::WithinAbs(-si_snr(yv, s), 1e-9));
  REQUIRE(fd_check([&](const Tensor& t) { return neg_si_snr_loss(t, s); }, y) < 1e-3);
}

TEST_CASE("pit exhaustive matches Hungarian at K=5") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    int64_t K = 5;
    std::vector<std::vector<double>> lm(K, std::vector<double>(K));
    for (auto& row : lm)
      for (auto& v : row) v = rng.normal();
    PitAssignment got = pit_assign(lm);  // K=5 -> Hungarian path
    // brute force
    std::vector<int64_t> perm(K);
    for (int64_t i = 0; i < K; ++i) perm[i] = i;
    double best = 1e300;
    do {
      double t = 0.0;
      for (int64_t k = 0; k < K; ++k) t += lm[k][perm[k]];
      best = std::min(best, t);
    } while (std::next_permutation(perm.begin(), perm.end()));
    REQUIRE_THAT(got.loss, Catch::Matchers::WithinAbs(best, 1e-10));
  }
}

TEST_CASE("pit picks the obvious assignment") {
  std::vector<std::vector<double>> lm = {{5.0, 0.1}, {0.2, 7.0}};
  PitAssignment a = pit_assign(lm);
  REQUIRE(a.perm == std::vector<int64_t>{1, 0});
  REQUIRE_THAT(a.loss, Catch::Matchers::WithinAbs(0.3, 1e-12));
}

TEST_CASE("attractor BCE closed forms") {
  // oracle probabilities: exact zeros
  REQUIRE_THAT(attractor_bce({1.0, 1.0, 0.0, 0.0}, 2), Catch::Matchers::WithinAbs(0.0, 1e-6));
  // uniform 0.5 everywhere -> ln 2 per slot
  REQUIRE_THAT(attractor_bce({0.5, 0.5, 0.5, 0.5}, 2),
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  // graph version agrees and differentiates
  std::vector<double> pv = {0.9, 0.8, 0.2, 0.1};
  Tensor p = Tensor::from({4}, pv, true);
  Tensor l = attractor_bce_node(p, 2);
  REQUIRE_THAT(l.item(), Catch::Matchers::WithinAbs(attractor_bce(pv, 2), 1e-12));
  REQUIRE(fd_check([](const Tensor& t) { return attractor_bce_node(t, 2); }, p) < 1e-3);
}

TEST_CASE("L1 TF loss closed form and component weights") {
  // build a tiny packed spectrum and a target with known diffs
  int64_t n = 4;
  std::vector<cplx> target = {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.5, 0.5}};
  std::vector<double> packed(2 * n);
  for (int64_t i = 0; i < n; ++i) {
    packed[2 * i] = target[i].real() + 0.1;
    packed[2 * i + 1] = target[i].imag() - 0.2;
  }
  Tensor p = Tensor::from({n, 2}, packed, true);
  Tensor l = l1_tf_loss_node(p, target);
  double lm = 0.0, lr = 0.0, li = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    cplx y(packed[2 * i], packed[2 * i + 1]);
    lm += std::abs(std::abs(y) - std::abs(target[i]));
    lr += std::abs(y.real() - target[i].real());
    li += std::abs(y.imag() - target[i].imag());
  }
  REQUIRE_THAT(l.item(), Catch::Matchers::WithinAbs(lm + 0.5 * lr + 0.5 * li, 1e-12));
  Tensor lmo = l1_tf_loss_node(p, target, /*mag_only=*/true);
  REQUIRE_THAT(lmo.item(), Catch::Matchers::WithinAbs(lm, 1e-12));
  REQUIRE(fd_check([&](const Tensor& t) { return l1_tf_loss_node(t, target); }, p) < 1e-3);
}

TEST_CASE("stage combination arithmetic") {
  std::vector<double> aux = {2.0, 4.0};
  double got = combine_stage_losses(10.0, aux, 0.25, 1.5, true);
  // (1-0.25)*10 + 0.25*(6/2) + 1.5
  REQUIRE_THAT(got, Catch::Matchers::WithinAbs(7.5 + 0.75 + 1.5, 1e-12));
  REQUIRE_THAT(combine_stage_losses(10.0, {}, 0.25), Catch::Matchers::WithinAbs(7.5, 1e-12));
  // graph version
  Tensor f = Tensor::scalar(10.0);
  std::vector<Tensor> auxt = {Tensor::scalar(2.0), Tensor::scalar(4.0)};
  Tensor attr = Tensor::scalar(1.5);
  REQUIRE_THAT(combine_stage_losses_node(f, auxt, 0.25, &attr).item(),
               Catch::Matchers::WithinAbs(9.75, 1e-12));
}

TEST_CASE("aux weight schedule closed form") {
  LossConfig cfg;  // alpha=0.5, decay 0.95 after epoch 30
  REQUIRE_THAT(alpha_schedule(cfg, 0), Catch::Matchers::WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(alpha_schedule(cfg, 30), Catch::Matchers::WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(alpha_schedule(cfg, 31), Catch::Matchers::WithinAbs(0.5 * 0.95, 1e-15));
  REQUIRE_THAT(alpha_schedule(cfg, 40), Catch::Matchers::WithinAbs(0.5 * std::pow(0.95, 10), 1e-15));
}

TEST_CASE("magnitude loss agrees between plain and graph forms") {
  auto cfg = make_stft_config(16, 8);
  int sr = 8000;
  std::vector<double> s = random_sig(64, 8);
  std::vector<double> yv = random_sig(64, 9);
  double gamma = sisnr_gamma(yv, s);
  std::vector<double> gs(s.size());
  for (size_t i = 0; i < s.size(); ++i) gs[i] = gamma * s[i];
  std::vector<double> smag = spectrogram_mag(gs, cfg, sr);
  std::vector<double> ymag = spectrogram_mag(yv, cfg, sr);
  Tensor ym = Tensor::from({int64_t(ymag.size())}, ymag, true);
  Tensor l = neg_mag_sisnr_loss(ym, smag);
  REQUIRE_THAT(l.item(), Catch::Matchers::WithinAbs(mag_loss_sisnr_form(yv, s, cfg, sr), 1e-9));
  REQUIRE(fd_check([&](const Tensor& t) { return neg_mag_sisnr_loss(t, smag); }, ym) < 1e-3);
}
