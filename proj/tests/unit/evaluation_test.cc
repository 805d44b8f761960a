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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hsdacs/errors.h"
#include "hsdacs/evaluation.h"

using namespace hsdacs;

namespace {

std::vector<int> chars(const std::string& s) { return {s.begin(), s.end()}; }

// Plain recursion, no memo.
std::size_t lev(std::span<const int> a, std::span<const int> b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  const std::size_t sub = lev(a.subspan(1), b.subspan(1)) + (a[0] == b[0] ? 0 : 1);
  return std::min({sub, lev(a.subspan(1), b) + 1, lev(a, b.subspan(1)) + 1});
}

std::vector<std::vector<int>> all_sequences(std::size_t max_len, int alphabet) {
  std::vector<std::vector<int>> out{{}};
  std::size_t begin = 0;
  for (std::size_t n = 1; n <= max_len; ++n) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (int a = 0; a < alphabet; ++a) {
        auto s = out[i];
        s.push_back(a);
        out.push_back(std::move(s));
      }
    begin = end;
  }
  return out;
}

DecodeTrace hand_trace(std::size_t frames, const std::vector<std::size_t>& halts) {
  DecodeTrace t;
  t.frames = frames;
  t.layers = 1;
  t.heads = 1;
  for (std::size_t s : halts) {
    StepTrace st;
    LayerTrace layer;
    HeadTrace head;
    head.halt = s;
    layer.halt = s;
    layer.heads.push_back(head);
    st.layers.push_back(layer);
    t.steps.push_back(st);
  }
  return t;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("edit distance examples") {
  CHECK(edit_distance(chars("kitten"), chars("sitting")).distance == 3);
  const auto same = chars("abc");
  CHECK(edit_distance(same, same) == EditCounts{});
  const std::vector<int> empty;
  const EditCounts ins = edit_distance(empty, chars("abcd"));
  CHECK(ins.distance == 4);
  CHECK(ins.insertions == 4);
  const EditCounts del = edit_distance(chars("abc"), empty);
  CHECK(del.deletions == 3);
  const EditCounts k = edit_distance(chars("kitten"), chars("sitting"));
  CHECK(k.substitutions == 2);
  CHECK(k.insertions == 1);
  CHECK(k.deletions == 0);
}

TEST_CASE("edit distance agrees with the recursive definition") {
  const auto seqs = all_sequences(4, 3);
  for (const auto& a : seqs)
    for (const auto& b : seqs) {
      const EditCounts e = edit_distance(a, b);
      REQUIRE(e.distance == lev(a, b));
      REQUIRE(e.substitutions + e.insertions + e.deletions == e.distance);
      REQUIRE(a.size() + e.insertions - e.deletions == b.size());
    }
}

TEST_CASE("error rate") {
  const std::vector<std::vector<int>> refs{{2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  std::vector<std::vector<int>> hyps = refs;
  CHECK(error_rate(refs, hyps) == 0.0);
  hyps[0][3] = 20;
  CHECK(error_rate(refs, hyps) == 10.0);

  const std::vector<std::vector<int>> r2{{1, 2, 3, 4}, {1, 2, 3, 4, 5, 6}};
  const std::vector<std::vector<int>> h2{{1, 2, 3}, {1, 9, 3, 4, 5}};
  CHECK(error_rate(r2, h2) == doctest::Approx(30.0).epsilon(1e-15));

  CHECK_THROWS_AS(error_rate(refs, r2), DimensionError);
  const std::vector<std::vector<int>> empty_ref{{}};
  const std::vector<std::vector<int>> some{{3}};
  CHECK_THROWS_AS(error_rate(empty_ref, some), ContractError);
}

TEST_CASE("coverage ratio arithmetic") {
  CHECK(coverage_ratio(hand_trace(10, {3, 5})) == 0.4);
  CHECK(coverage_ratio(hand_trace(7, {7, 7, 7})) == 1.0);
  const std::vector<std::vector<std::vector<std::size_t>>> steps{{{2, 4}, {6, 8}}};
  CHECK(coverage_ratio(steps, 2, 2, 10) == doctest::Approx(0.5));
  CHECK_THROWS_AS(coverage_ratio(hand_trace(0, {0})), ContractError);
  CHECK_THROWS_AS(coverage_ratio(hand_trace(10, {})), ContractError);
}

TEST_CASE("sweep table layout") {
  const std::vector<SweepRow> rows{{4.0, 12.5, 0.6}, {1.0, 20.25, 0.4}};
  CHECK(format_sweep(rows, HaltingMode::kHsDacs) ==
        "joint-thr\terror(%)\tr\n4.00\t12.50\t0.600\n1.00\t20.25\t0.400\n");
  CHECK(format_sweep(rows, HaltingMode::kDacs).rfind("thr\terror(%)\tr\n", 0) == 0);
}

namespace {

ModelConfig tiny(HaltingMode mode) {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.d_ffn = 8;
  c.encoder_layers = 1;
  c.decoder_layers = 2;
  c.vocab_size = 6;
  c.d_feat = 3;
  c.max_lookahead = 3;
  c.chunk_central = 2;
  c.chunk_left = 2;
  c.chunk_right = 2;
  c.subsample_factor = 1;
  c.halting_mode = mode;
  c.seed = 17;
  return c;
}

DataConfig tiny_data() {
  DataConfig d;
  d.vocab_size = 6;
  d.d_feat = 3;
  d.min_length = 2;
  d.max_length = 4;
  d.train_samples = 0;
  d.eval_samples = 6;
  return d;
}

}  // namespace

TEST_CASE("evaluate and sweep on an untrained model") {
  const Transformer model(tiny(HaltingMode::kHsDacs));
  const auto eval = evaluation_set(tiny_data());
  const EvalResult r = evaluate(model, eval, 10);
  REQUIRE(r.decodes.size() == eval.size());
  CHECK(r.mean_ratio > 0.0);
  CHECK(r.mean_ratio <= 1.0);
  std::vector<std::vector<int>> refs, hyps;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    refs.push_back(eval[i].target);
    hyps.push_back(r.decodes[i].tokens);
  }
  CHECK(r.error_rate == error_rate(refs, hyps));

  const std::vector<double> thresholds{2.0, 1.5, 1.0, 0.5};
  const auto rows = sweep_thresholds(model, eval, HaltingMode::kHsDacs, thresholds, 10);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].threshold == thresholds[i]);
    CHECK(rows[i].ratio > 0.0);
    CHECK(rows[i].ratio <= 1.0);
  }
  const Transformer offline = model.with_halting(HaltingMode::kOffline, 1.0, 3);
  CHECK(evaluate(offline, eval, 10).mean_ratio == 1.0);
}

TEST_CASE("alignment grids zero everything past the halt") {
  const Transformer model(tiny(HaltingMode::kDacs));
  const auto eval = evaluation_set(tiny_data());
  const DecodeResult d = decode_greedy(model, model.encode(eval[0].features), 6);
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const auto grids = alignment_grid(d.trace, layer);
    REQUIRE(grids.size() == 2);
    for (std::size_t h = 0; h < 2; ++h) {
      CHECK(grids[h].shape() == Shape{d.trace.steps.size(), d.trace.frames});
      for (std::size_t i = 0; i < d.trace.steps.size(); ++i) {
        const HeadTrace& ht = d.trace.steps[i].layers[layer].heads[h];
        for (std::size_t j = 0; j < d.trace.frames; ++j) {
          CHECK(grids[h].at(i, j) >= 0.0);
          if (j >= ht.halt) CHECK(grids[h].at(i, j) == 0.0);
          else CHECK(grids[h].at(i, j) == ht.probs[j]);
        }
      }
    }
  }
  CHECK_THROWS_AS(alignment_grid(d.trace, 2), ContractError);
}

TEST_CASE("grid text formats") {
  const Tensor g = Tensor::matrix({{0.0, 0.5}, {1.0, 0.25}});
  CHECK(grid_csv(g) == "0,1\n0,0.5\n1,0.25\n");
  CHECK(grid_pgm(g) == "P2\n2 2\n255\n0 128\n255 64\n");
  CHECK(grid_pgm(Tensor(Shape{1, 2})) == "P2\n2 1\n255\n0 0\n");
}

TEST_CASE("export writes one csv and pgm per head") {
  const Transformer model(tiny(HaltingMode::kHsDacs));
  const auto eval = evaluation_set(tiny_data());
  const DecodeResult d = decode_greedy(model, model.encode(eval[1].features), 6);
  const auto dir = std::filesystem::temp_directory_path() / "hsdacs_eval_test";
  std::filesystem::create_directories(dir);
  const std::string prefix = (dir / "utt").string();
  const auto paths = export_alignment(d.trace, 1, prefix, HaltingMode::kHsDacs);
  REQUIRE(paths.size() == 4);
  CHECK(paths[0] == prefix + "_head0.csv");
  CHECK(paths[1] == prefix + "_head0.pgm");
  const auto grids = alignment_grid(d.trace, 1);
  CHECK(slurp(paths[0]) == grid_csv(grids[0]));
  CHECK(slurp(paths[3]) == grid_pgm(grids[1]));

  DecodeTrace broken = d.trace;
  broken.steps[0].layers[1].heads[1].halt += 1;
  CHECK_THROWS_AS(export_alignment(broken, 1, prefix, HaltingMode::kHsDacs), ContractError);
  CHECK_THROWS_AS(export_alignment(d.trace, 1, "/nonexistent/dir/x", HaltingMode::kHsDacs),
                  IoError);
  std::filesystem::remove_all(dir);
}
