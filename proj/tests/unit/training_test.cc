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
#include <cstdio>
#include <filesystem>
#include <map>

#include "hsdacs/errors.h"
#include "hsdacs/training.h"

using namespace hsdacs;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

ModelConfig small_model(HaltingMode mode) {
  ModelConfig c;
  c.d_model = 16;
  c.heads = 2;
  c.d_ffn = 24;
  c.encoder_layers = 1;
  c.decoder_layers = 2;
  c.vocab_size = 8;
  c.d_feat = 4;
  c.max_lookahead = 8;
  c.chunk_central = 4;
  c.chunk_left = 4;
  c.chunk_right = 4;
  c.subsample_factor = 2;
  c.halting_mode = mode;
  c.seed = 3;
  return c;
}

DataConfig small_data() {
  DataConfig d;
  d.vocab_size = 8;
  d.d_feat = 4;
  d.min_length = 3;
  d.max_length = 6;
  d.train_samples = 48;
  d.eval_samples = 8;
  return d;
}

std::vector<double> flat_parameters(const Transformer& model) {
  std::vector<double> out;
  model.for_each_parameter([&](const std::string&, const Tensor& p) {
    out.insert(out.end(), p.values().begin(), p.values().end());
  });
  return out;
}

// Direct evaluation of the smoothed cross-entropy for one row.
double smoothed_row(const std::vector<double>& z, int target, double eps) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  double loss = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double q = static_cast<int>(k) == target ? 1.0 - eps
                                                    : eps / static_cast<double>(z.size() - 1);
    loss -= q * (z[k] - lse);
  }
  return loss;
}

}  // namespace

TEST_CASE("label_smoothed_ce examples") {
  SUBCASE("confident and correct gives zero loss") {
    const Tensor logits = Tensor::matrix({{0.0, 100.0, 0.0}, {0.0, 0.0, 100.0}});
    const std::vector<int> t{1, 2};
    CHECK(label_smoothed_ce(logits, t, 0.0).item() < 1e-40);
  }
  SUBCASE("uniform logits give ln V") {
    const Tensor logits(Shape{3, 5}, 0.7);
    const std::vector<int> t{0, 3, 4};
    CHECK(std::fabs(label_smoothed_ce(logits, t, 0.0).item() - std::log(5.0)) < 1e-12);
  }
  SUBCASE("eps 0.1, V 4, against the direct formula") {
    const std::vector<std::vector<double>> z{{0.3, -1.2, 2.0, 0.5}, {1.5, 0.1, -0.4, 0.9}};
    const std::vector<int> t{2, 3};
    const Tensor logits = Tensor::matrix({{0.3, -1.2, 2.0, 0.5}, {1.5, 0.1, -0.4, 0.9}});
    const double expect = (smoothed_row(z[0], 2, 0.1) + smoothed_row(z[1], 3, 0.1)) / 2.0;
    CHECK(std::fabs(label_smoothed_ce(logits, t, 0.1).item() - expect) < 1e-12);
    // Masked rows drop out of the mean.
    const std::vector<bool> mask{true, false};
    CHECK(std::fabs(label_smoothed_ce(logits, t, 0.1, mask).item() -
                    smoothed_row(z[0], 2, 0.1)) < 1e-12);
  }
  SUBCASE("errors") {
    const Tensor logits(Shape{2, 4});
    const std::vector<int> bad{1, 4};
    CHECK_THROWS_AS(label_smoothed_ce(logits, bad, 0.1), DataError);
    const std::vector<int> negative{-1, 0};
    CHECK_THROWS_AS(label_smoothed_ce(logits, negative, 0.1), DataError);
    const std::vector<int> ok{1, 2};
    CHECK_THROWS_AS(label_smoothed_ce(logits, ok, 0.1, {false, false}), ContractError);
  }
}

TEST_CASE("noam_lr") {
  CHECK(noam_lr(25000, 25000, 256, 1.0) == doctest::Approx(3.953e-4).epsilon(1e-3));
  CHECK(std::fabs(noam_lr(25000, 25000, 256, 1.0) - 1.0 / std::sqrt(256.0 * 25000.0)) < 1e-18);
  // Both arms agree at the crossover.
  const double w = 400.0;
  CHECK(std::fabs(noam_lr(400, 400, 64, 1.0) - 0.125 / std::sqrt(w)) < 1e-15);
  for (std::size_t s = 1; s < 400; ++s) CHECK(noam_lr(s + 1, 400, 64, 1.0) > noam_lr(s, 400, 64, 1.0));
  for (std::size_t s = 400; s < 1000; ++s) CHECK(noam_lr(s + 1, 400, 64, 1.0) < noam_lr(s, 400, 64, 1.0));
  CHECK_THROWS_AS(noam_lr(0, 400, 64, 1.0), ContractError);
}

TEST_CASE("batch loss is the mean of per-sample losses") {
  const Transformer model(small_model(HaltingMode::kHsDacs));
  const auto data = training_set(small_data());
  const std::span<const SyntheticSample> four(data.data(), 4);
  const PaddedBatch batch = pad_batch(four);
  double sum = 0.0;
  for (const auto& s : four) sum += sample_loss(model, s.features, s.target, 0.1).item();
  CHECK(std::fabs(batch_loss(model, batch, 0.1).item() - sum / 4.0) < 1e-9);
}

TEST_CASE("sample loss rejects reserved-range violations") {
  const Transformer model(small_model(HaltingMode::kDacs));
  const auto data = training_set(small_data());
  const std::vector<int> bad{2, 9};
  CHECK_THROWS_AS(sample_loss(model, data[0].features, bad, 0.1), DataError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  Transformer model(small_model(HaltingMode::kHsDacs));
  const auto before = flat_parameters(model);
  const auto data = training_set(small_data());
  TrainConfig tc;
  tc.base_lr = 0.0;
  tc.epochs = 1;
  Trainer trainer(model, data, tc);
  trainer.train_epoch();
  CHECK(trainer.global_step() == trainer.batches_per_epoch());
  CHECK(flat_parameters(model) == before);
}

TEST_CASE("every parameter receives gradient") {
  for (HaltingMode mode : {HaltingMode::kOffline, HaltingMode::kDacs, HaltingMode::kHsDacs}) {
    Transformer model(small_model(mode));
    const auto data = training_set(small_data());
    model.for_each_parameter([](const std::string&, Tensor& p) { p.zero_grad(); });
    std::map<std::string, bool> touched;
    for (std::size_t i = 0; i < 8; ++i) {
      GradTape tape;
      tape.backward(sample_loss(model, data[i].features, data[i].target, 0.1));
    }
    model.for_each_parameter([&](const std::string& name, const Tensor& p) {
      bool nonzero = false;
      if (p.has_grad())
        for (double g : p.grad()) nonzero = nonzero || g != 0.0;
      touched[name] = nonzero;
    });
    for (const auto& [name, ok] : touched) {
      INFO(name);
      CHECK(ok);
    }
  }
}

TEST_CASE("single-sample overfit") {
  Transformer model(small_model(HaltingMode::kHsDacs));
  DataConfig dc = small_data();
  dc.train_samples = 1;
  const auto data = training_set(dc);
  TrainConfig tc;
  tc.batch_size = 1;
  tc.label_smoothing = 0.0;
  tc.warmup_steps = 50;
  tc.base_lr = 2.0;
  Trainer trainer(model, data, tc);
  double loss = 1e9;
  std::size_t steps = 0;
  while (steps < 500 && loss >= 0.01) {
    loss = trainer.train_step();
    ++steps;
  }
  MESSAGE("overfit reached loss " << loss << " after " << steps << " steps");
  CHECK(loss < 0.01);
}

TEST_CASE("checkpoint serialisation round-trips") {
  Transformer model(small_model(HaltingMode::kDacs));
  const auto data = training_set(small_data());
  TrainConfig tc;
  tc.batch_size = 8;
  Trainer trainer(model, data, tc);
  trainer.train_step();
  trainer.train_step();
  const Checkpoint cp = trainer.checkpoint();
  const std::string bytes = serialize_checkpoint(cp);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.step == 2);
  CHECK(back.rng_state == cp.rng_state);
  CHECK(format_key_values(back.model_config.to_key_values()) ==
        format_key_values(cp.model_config.to_key_values()));
  REQUIRE(back.parameters.size() == cp.parameters.size());
  for (std::size_t i = 0; i < cp.parameters.size(); ++i) {
    CHECK(back.parameters[i].name == cp.parameters[i].name);
    CHECK(vals(back.parameters[i].value) == vals(cp.parameters[i].value));
  }
  CHECK(flat_parameters(model_from_checkpoint(back)) == flat_parameters(model));

  SUBCASE("file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "hsdacs_training_test.ckpt";
    save_checkpoint(cp, path.string());
    CHECK(serialize_checkpoint(load_checkpoint(path.string())) == bytes);
    std::filesystem::remove(path);
  }
  SUBCASE("malformed input") {
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), IoError);
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), IoError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/ckpt"), IoError);
  }
  SUBCASE("architecture mismatch") {
    ModelConfig other = small_model(HaltingMode::kDacs);
    other.d_ffn = 20;
    Transformer wrong(other);
    Trainer t2(wrong, data, tc);
    CHECK_THROWS_AS(t2.restore(back), IoError);
  }
}

TEST_CASE("resume mid-epoch equals an uninterrupted run") {
  const auto data = training_set(small_data());
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 2;

  Transformer straight(small_model(HaltingMode::kHsDacs));
  Trainer a(straight, data, tc);
  std::vector<double> losses_a;
  for (int i = 0; i < 9; ++i) losses_a.push_back(a.train_step());

  Transformer first(small_model(HaltingMode::kHsDacs));
  Trainer b(first, data, tc);
  std::vector<double> losses_b;
  for (int i = 0; i < 4; ++i) losses_b.push_back(b.train_step());
  const std::string saved = serialize_checkpoint(b.checkpoint());

  ModelConfig reseeded = small_model(HaltingMode::kHsDacs);
  reseeded.seed = 99;  // restore must overwrite every parameter
  Transformer resumed(reseeded);
  Trainer c(resumed, data, tc);
  c.restore(deserialize_checkpoint(saved));
  for (int i = 0; i < 5; ++i) losses_b.push_back(c.train_step());

  CHECK(losses_a == losses_b);
  CHECK(flat_parameters(resumed) == flat_parameters(straight));
  // The resumed model keeps its own config echo (seed 99); everything else matches.
  Checkpoint resumed_cp = c.checkpoint();
  CHECK(resumed_cp.model_config.seed == 99);
  resumed_cp.model_config = a.checkpoint().model_config;
  CHECK(serialize_checkpoint(resumed_cp) == serialize_checkpoint(a.checkpoint()));
}

TEST_CASE("save, load, step equals step") {
  const auto data = training_set(small_data());
  TrainConfig tc;
  tc.batch_size = 8;
  Transformer m1(small_model(HaltingMode::kDacs));
  Trainer t1(m1, data, tc);
  t1.train_step();
  Transformer m2 = model_from_checkpoint(deserialize_checkpoint(serialize_checkpoint(t1.checkpoint())));
  Trainer t2(m2, data, tc);
  t2.restore(t1.checkpoint());
  CHECK(t1.train_step() == t2.train_step());
  CHECK(flat_parameters(m1) == flat_parameters(m2));
}

TEST_CASE("training is deterministic and the loss falls") {
  for (HaltingMode mode : {HaltingMode::kDacs, HaltingMode::kHsDacs}) {
    DataConfig dc = small_data();
    dc.train_samples = 96;
    const auto data = training_set(dc);
    TrainConfig tc;
    tc.batch_size = 8;
    tc.epochs = 5;
    tc.warmup_steps = 20;
    Transformer m1(small_model(mode));
    Trainer t1(m1, data, tc);
    const auto r1 = t1.train();
    REQUIRE(r1.size() == 5);
    CHECK(r1[4].mean_loss < r1[0].mean_loss);
    Transformer m2(small_model(mode));
    Trainer t2(m2, data, tc);
    const auto r2 = t2.train();
    CHECK(r2.back().mean_loss == r1.back().mean_loss);
    CHECK(flat_parameters(m1) == flat_parameters(m2));
  }
}

TEST_CASE("train config keys") {
  TrainConfig tc;
  CHECK(tc.apply("epochs", "7"));
  CHECK(tc.apply("train_seed", "5"));
  CHECK_FALSE(tc.apply("d_model", "5"));
  CHECK(tc.epochs == 7);
  CHECK(tc.seed == 5);
  tc.label_smoothing = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  CHECK_THROWS_AS(tc.apply("epochs", "x"), ConfigError);
}
