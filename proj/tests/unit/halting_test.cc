// Copyright 2026 The hsdacs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "hsdacs/errors.h"
#include "hsdacs/halting.h"
#include "hsdacs/rng.h"

using namespace hsdacs;

namespace {

std::vector<double> random_probs(Rng& rng, std::size_t n, double scale = 0.6) {
  std::vector<double> p(n);
  for (double& v : p) v = std::max(1e-6, rng.uniform() * scale);
  return p;
}

// Independent oracle: vectorised prefix sums, then the first index whose
// prefix strictly exceeds the threshold.
std::size_t prefix_oracle(const std::vector<double>& mass, double threshold, std::size_t w) {
  std::vector<double> prefix(w);
  double s = 0.0;
  for (std::size_t j = 0; j < w; ++j) prefix[j] = (s += mass[j]);
  for (std::size_t j = 0; j < w; ++j)
    if (prefix[j] > threshold) return j + 1;
  return w;
}

}  // namespace

TEST_CASE("energies") {
  const Tensor keys = Tensor::matrix({{1, 0}, {0, 1}, {3, 4}});
  const std::vector<double> q{0, 0};
  for (double e : ma_energy(q, keys)) CHECK(e == 0.0);
  CHECK(sigmoid_scalar(ma_energy(q, keys)[0]) == 0.5);

  // d_k = 4, |k|^2 = 4, q = 2 k / |k|^2: q.k = 2, scaled by 1/sqrt(4).
  const Tensor k1 = Tensor::matrix({{1, 1, 1, 1}});
  const std::vector<double> q1{0.5, 0.5, 0.5, 0.5};
  CHECK(ma_energy(q1, k1)[0] == 1.0);

  const std::vector<double> q2{0.3, -0.7};
  const std::vector<double> q2x2{0.6, -1.4};
  const auto e = ma_energy(q2, keys);
  const auto e2 = ma_energy(q2x2, keys);
  for (std::size_t j = 0; j < e.size(); ++j) CHECK(e2[j] == 2.0 * e[j]);
  for (std::size_t j = 0; j < e.size(); ++j) CHECK(e[j] == ma_energy_at(q2, keys.row(j)));
}

TEST_CASE("dacs halting examples") {
  const std::vector<double> p6(8, 0.6);
  const HaltResult a = dacs_halt(p6, 1.0, 8);
  CHECK(a.halt == 2);
  CHECK(a.reason == HaltReason::kThreshold);
  REQUIRE(a.truncated_weights.size() == 1);
  CHECK(a.truncated_weights[0] == std::vector<double>{0.6, 0.6});

  const std::vector<double> half{0.5, 0.5, 0.5};
  const HaltResult b = dacs_halt(half, 1.0, 3);
  CHECK(b.halt == 3);
  CHECK(b.reason == HaltReason::kThreshold);

  const std::vector<double> small(20, 0.01);
  const HaltResult c = dacs_halt(small, 1.0, 16);
  CHECK(c.halt == 16);
  CHECK(c.reason == HaltReason::kWindow);

  CHECK_THROWS_AS(dacs_halt(small, 1.0, 0), ContractError);
  CHECK_THROWS_AS(dacs_halt(small, 1.0, 21), ContractError);
}

TEST_CASE("hs-dacs halting examples") {
  const HaltingProbs two = HaltingProbs::from_probs(2, 2, {0.9, 0.9, 0.2, 0.2});
  const HaltResult a = hs_dacs_halt(two, 2.0, 2);
  CHECK(a.halt == 2);
  CHECK(a.reason == HaltReason::kThreshold);
  CHECK(a.truncated_weights.size() == 2);

  const HaltingProbs quiet = HaltingProbs::from_probs(4, 20, std::vector<double>(80, 1e-9));
  const HaltResult b = hs_dacs_halt(quiet, 4.0, 16);
  CHECK(b.halt == 16);
  CHECK(b.reason == HaltReason::kWindow);
  for (const auto& w : b.truncated_weights) CHECK(w.size() == 16);

  CHECK_THROWS_AS(hs_dacs_halt(quiet, 4.0, 0), ContractError);
}

TEST_CASE("probabilities from energies are sigmoids") {
  const HaltingProbs p = HaltingProbs::from_energies(1, 3, {0.0, std::log(3.0), -1.0});
  CHECK(p.probs[0] == 0.5);
  CHECK(std::fabs(p.probs[1] - 0.75) < 1e-15);
  for (double v : p.probs) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("single head hs-dacs equals dacs") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const auto p = random_probs(rng, n);
    const std::size_t w = 1 + rng() % n;
    const HaltResult d = dacs_halt(p, 1.0, w);
    const HaltResult h = hs_dacs_halt(HaltingProbs::from_probs(1, n, p), 1.0, w);
    CHECK(d.halt == h.halt);
    CHECK(d.reason == h.reason);
    CHECK(d.truncated_weights == h.truncated_weights);
  }
}

TEST_CASE("halting equals the prefix-sum oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t heads = 1 + rng() % 4, n = 1 + rng() % 64;
    const auto p = random_probs(rng, heads * n, 0.9);
    const std::size_t w = 1 + rng() % n;
    const double theta = 0.25 + 2.0 * rng.uniform();
    const std::vector<double> head0(p.begin(), p.begin() + static_cast<long>(n));
    CHECK(dacs_halt(head0, theta, w).halt == prefix_oracle(head0, theta, w));

    std::vector<double> pooled(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t h = 0; h < heads; ++h) pooled[j] += p[h * n + j];
    const double joint = theta * static_cast<double>(heads);
    CHECK(hs_dacs_halt(HaltingProbs::from_probs(heads, n, p), joint, w).halt ==
          prefix_oracle(pooled, joint, w));
  }
}

TEST_CASE("threshold and window monotonicity") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t heads = 1 + rng() % 4, n = 2 + rng() % 30;
    const auto p = random_probs(rng, heads * n);
    const HaltingProbs probs = HaltingProbs::from_probs(heads, n, p);
    double t1 = 4.0 * rng.uniform(), t2 = 4.0 * rng.uniform();
    if (t1 > t2) std::swap(t1, t2);
    CHECK(dacs_halt(probs.head(0), t1, n).halt <= dacs_halt(probs.head(0), t2, n).halt);
    CHECK(hs_dacs_halt(probs, t1, n).halt <= hs_dacs_halt(probs, t2, n).halt);
    std::size_t w1 = 1 + rng() % n, w2 = 1 + rng() % n;
    if (w1 > w2) std::swap(w1, w2);
    CHECK(dacs_halt(probs.head(0), 1.0, w1).halt <= dacs_halt(probs.head(0), 1.0, w2).halt);
    CHECK(hs_dacs_halt(probs, 2.0, w1).halt <= hs_dacs_halt(probs, 2.0, w2).halt);
  }
}

TEST_CASE("mass bound on threshold halts") {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    const auto p = random_probs(rng, n);
    const HaltResult r = dacs_halt(p, 1.0, n);
    double before = 0.0;
    for (std::size_t j = 0; j + 1 < r.halt; ++j) before += p[j];
    CHECK(before <= 1.0);
    if (r.reason == HaltReason::kThreshold) CHECK(before + p[r.halt - 1] > 1.0);
    CHECK(r.halt >= 1);
    CHECK(r.halt <= n);
  }
}

TEST_CASE("accumulator") {
  HaltAccumulator acc(1.0);
  CHECK(!acc.add(0.5));
  CHECK(!acc.add(0.5));  // exactly 1.0 does not halt
  CHECK(acc.add(1e-12));
  CHECK(acc.consumed() == 3);
}

TEST_CASE("truncated context") {
  const Tensor v = Tensor::matrix({{1, 0}, {0, 1}, {7, 7}});
  const std::vector<double> p{0.5, 0.25};
  CHECK(truncated_context(p, v) == std::vector<double>{0.5, 0.25});

  const std::vector<double> vanishing{sigmoid_scalar(-800.0), sigmoid_scalar(-800.0)};
  for (double c : truncated_context(vanishing, v)) CHECK(c == 0.0);

  Rng rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor vr(Shape{6, 3});
  for (double& x : vr.mutable_values()) x = normal(rng);
  const auto pr = random_probs(rng, 6);
  const auto c = truncated_context(pr, vr);
  for (std::size_t d = 0; d < 3; ++d) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += pr[j] * vr.at(j, d);
    CHECK(std::fabs(c[d] - s) < 1e-12);
  }
}

TEST_CASE("train_attention without truncation sums over every frame") {
  Rng rng(6);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto rand = [&](std::size_t r, std::size_t c) {
    Tensor t(Shape{r, c});
    for (double& x : t.mutable_values()) x = normal(rng);
    return t;
  };
  const std::vector<Tensor> q{rand(3, 4)}, k{rand(5, 4)}, v{rand(5, 4)};
  const double inf = std::numeric_limits<double>::infinity();
  const CrossAttentionOutput out = train_attention(q, k, v, HaltingMode::kDacs, inf);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out.halts[0][i] == 5);
    const auto e = ma_energy(q[0].row(i), k[0]);
    std::vector<double> p;
    for (double x : e) p.push_back(sigmoid_scalar(x));
    const auto expect = truncated_context(p, v[0]);
    for (std::size_t d = 0; d < 4; ++d) CHECK(out.contexts[0].at(i, d) == expect[d]);
  }
}

TEST_CASE("train_attention equals step-wise evaluation bit for bit") {
  Rng rng(7);
  std::normal_distribution<double> normal(0.0, 1.5);
  auto rand = [&](std::size_t r, std::size_t c) {
    Tensor t(Shape{r, c});
    for (double& x : t.mutable_values()) x = normal(rng);
    return t;
  };
  for (HaltingMode mode : {HaltingMode::kDacs, HaltingMode::kHsDacs}) {
    const std::size_t heads = 3, len = 6, frames = 12, dk = 4;
    std::vector<Tensor> q, k, v;
    for (std::size_t h = 0; h < heads; ++h) {
      q.push_back(rand(len, dk));
      k.push_back(rand(frames, dk));
      v.push_back(rand(frames, dk));
    }
    const double threshold = mode == HaltingMode::kDacs ? 1.0 : 3.0;
    const CrossAttentionOutput out = train_attention(q, k, v, mode, threshold);
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> energies;
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < frames; ++j)
          energies.push_back(ma_energy_at(q[h].row(i), k[h].row(j)));
      const HaltingProbs probs = HaltingProbs::from_energies(heads, frames, energies);
      std::vector<std::size_t> halts;
      if (mode == HaltingMode::kHsDacs) {
        halts.assign(heads, hs_dacs_halt(probs, threshold, frames).halt);
      } else {
        for (std::size_t h = 0; h < heads; ++h)
          halts.push_back(dacs_halt(probs.head(h), threshold, frames).halt);
      }
      for (std::size_t h = 0; h < heads; ++h) {
        CHECK(out.halts[h][i] == halts[h]);
        const auto p = probs.head(h).subspan(0, halts[h]);
        const auto c = truncated_context(p, v[h]);
        for (std::size_t d = 0; d < dk; ++d) CHECK(out.contexts[h].at(i, d) == c[d]);
        for (std::size_t j = 0; j < frames; ++j)
          CHECK(out.weights[h].at(i, j) == (j < halts[h] ? p[j] : 0.0));
      }
      if (mode == HaltingMode::kHsDacs)
        for (std::size_t h = 1; h < heads; ++h) CHECK(out.halts[h][i] == out.halts[0][i]);
    }
  }
}

TEST_CASE("train_attention: hand-built single step") {
  // One frame with energy 0 (p = 0.5) and value [2, 4]: context is [1, 2].
  const std::vector<Tensor> q{Tensor::matrix({{0, 0}})};
  const std::vector<Tensor> k{Tensor::matrix({{1, 1}})};
  const std::vector<Tensor> v{Tensor::matrix({{2, 4}})};
  const CrossAttentionOutput out = train_attention(q, k, v, HaltingMode::kHsDacs, 1.0);
  CHECK(out.contexts[0].at(0, 0) == 1.0);
  CHECK(out.contexts[0].at(0, 1) == 2.0);
  CHECK(out.halts[0][0] == 1);
}
