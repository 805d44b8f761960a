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

#include "hsdacs/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "hsdacs/data.h"
#include "hsdacs/halting.h"
#include "hsdacs/mask.h"
#include "hsdacs/rng.h"
#include "hsdacs/training.h"
#include "hsdacs/transformer.h"

namespace hsdacs {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

GradCheckResult finite_difference_check(const std::string& name,
                                        const std::function<Tensor()>& loss,
                                        std::vector<Tensor> inputs, double h) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    GradTape tape;
    tape.backward(loss());
  }
  std::vector<double> errors;
  for (Tensor& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double plus = loss().item();
      values[k] = saved - h;
      const double minus = loss().item();
      values[k] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      errors.push_back(relative_error(analytic.empty() ? 0.0 : analytic[k], numeric));
    }
  }
  GradCheckResult result;
  result.name = name;
  result.checked = errors.size();
  if (!errors.empty()) {
    result.max_rel_error = *std::max_element(errors.begin(), errors.end());
    std::nth_element(errors.begin(), errors.begin() + errors.size() / 2, errors.end());
    result.median_rel_error = errors[errors.size() / 2];
  }
  return result;
}

ModelConfig grad_check_config(HaltingMode mode) {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.d_ffn = 12;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.vocab_size = 7;
  c.d_feat = 3;
  c.max_lookahead = 4;
  c.chunk_central = 2;
  c.chunk_left = 2;
  c.chunk_right = 1;
  c.subsample_factor = 2;
  c.halting_mode = mode;
  c.seed = 5;
  return c;
}

GradCheckResult model_grad_check(HaltingMode mode, std::uint64_t seed) {
  ModelConfig config = grad_check_config(mode);
  config.seed = seed;
  Transformer model(config);

  Rng rng(seed, 17);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor features(Shape{14, config.d_feat});
  for (double& v : features.mutable_values()) v = normal(rng);
  const std::vector<int> target{2, 5, 3, 6};

  std::vector<Tensor> params;
  model.for_each_parameter([&](const std::string&, Tensor& p) { params.push_back(p); });
  return finite_difference_check(
      std::string("model/") + std::string(to_string(mode)),
      [&] { return sample_loss(model, features, target, 0.1); }, params);
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = dist(rng);
  return t;
}

// sum(f * w) for a fixed random weight w, so every output element matters.
std::function<Tensor()> weighted(std::function<Tensor()> f, Rng& rng) {
  const Tensor probe = f();
  const Tensor w = random_tensor(rng, probe.shape());
  return [f = std::move(f), w] { return sum(mul(f(), w)); };
}

}  // namespace

std::vector<GradCheckResult> grad_check_suite(std::uint64_t seed) {
  Rng rng(seed, 29);
  std::vector<GradCheckResult> out;
  auto check = [&](const std::string& name, std::function<Tensor()> f,
                   std::vector<Tensor> inputs) {
    out.push_back(finite_difference_check(name, weighted(std::move(f), rng), inputs));
  };

  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {4, 5});
  Tensor c = random_tensor(rng, {3, 4});
  Tensor bt = random_tensor(rng, {5, 4});
  Tensor bias = random_tensor(rng, {4});
  Tensor positive = random_tensor(rng, {3, 4}, 0.5, 2.0);
  Tensor gain = random_tensor(rng, {4}, 0.5, 1.5);

  check("matmul", [=] { return matmul(a, b); }, {a, b});
  check("matmul_transposed", [=] { return matmul_transposed(a, bt); }, {a, bt});
  check("transpose", [=] { return transpose(a); }, {a});
  check("add", [=] { return add(a, c); }, {a, c});
  check("sub", [=] { return sub(a, c); }, {a, c});
  check("mul", [=] { return mul(a, c); }, {a, c});
  check("add_bias", [=] { return add_bias(a, bias); }, {a, bias});
  check("scale", [=] { return scale(a, -0.7); }, {a});
  check("relu", [=] { return relu(a); }, {a});
  check("sigmoid", [=] { return sigmoid(a); }, {a});
  check("exp", [=] { return exp(a); }, {a});
  check("log", [=] { return log(positive); }, {positive});
  check("softmax_rows", [=] { return softmax_rows(a); }, {a});
  AttentionMask mask(3, 4);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t col = 0; col <= r + 1; ++col) mask.set(r, col, 1);
  check("softmax_rows/masked", [=] { return softmax_rows(a, &mask); }, {a});
  check("log_softmax_rows", [=] { return log_softmax_rows(a); }, {a});
  check("layer_norm", [=] { return layer_norm(a, gain, bias, 1e-5); }, {a, gain, bias});
  check("mean", [=] { return mean(a); }, {a});
  check("slice_rows", [=] { return slice_rows(a, 1, 3); }, {a});
  check("slice_cols", [=] { return slice_cols(a, 1, 3); }, {a});
  check("concat_rows", [=] { const Tensor p[] = {a, c}; return concat_rows(p); }, {a, c});
  check("concat_cols", [=] { const Tensor p[] = {a, c}; return concat_cols(p); }, {a, c});
  check("reshape", [=] { return a.reshape({2, 6}); }, {a});
  const std::vector<int> ids{2, 0, 2, 1};
  check("embedding", [=] { return embedding(a, ids); }, {a});

  for (HaltingMode mode : {HaltingMode::kOffline, HaltingMode::kDacs, HaltingMode::kHsDacs}) {
    std::vector<Tensor> q, k, v;
    for (int h = 0; h < 2; ++h) {
      q.push_back(random_tensor(rng, {3, 4}));
      k.push_back(random_tensor(rng, {6, 4}));
      v.push_back(random_tensor(rng, {6, 4}));
    }
    std::vector<Tensor> inputs = q;
    inputs.insert(inputs.end(), k.begin(), k.end());
    inputs.insert(inputs.end(), v.begin(), v.end());
    const double threshold = mode == HaltingMode::kHsDacs ? 2.0 : 1.0;
    check("train_attention/" + std::string(to_string(mode)),
          [=] {
            const CrossAttentionOutput o = train_attention(q, k, v, mode, threshold);
            return concat_cols(o.contexts);
          },
          inputs);
  }

  for (HaltingMode mode : {HaltingMode::kOffline, HaltingMode::kDacs, HaltingMode::kHsDacs})
    out.push_back(model_grad_check(mode, seed));
  return out;
}

}  // namespace hsdacs
