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

#include "hsdacs/transformer.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "hsdacs/errors.h"

namespace hsdacs {

namespace {

// Parameters live at 32-bit precision so checkpoints are lossless.
double to_stored(double x) { return static_cast<double>(static_cast<float>(x)); }

Tensor xavier(Rng& rng, std::size_t in, std::size_t out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w(Shape{in, out});
  for (double& v : w.mutable_values()) v = to_stored((2.0 * rng.uniform() - 1.0) * limit);
  w.set_requires_grad(true);
  return w;
}

Tensor constant_param(Shape shape, double value) {
  Tensor t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

Linear make_linear(Rng& rng, std::size_t in, std::size_t out) {
  return Linear{xavier(rng, in, out), constant_param(Shape{out}, 0.0)};
}

LayerNormParams make_norm(std::size_t d) {
  return LayerNormParams{constant_param(Shape{d}, 1.0), constant_param(Shape{d}, 0.0)};
}

AttentionParams make_attention(Rng& rng, std::size_t d) {
  return AttentionParams{make_linear(rng, d, d), make_linear(rng, d, d),
                         make_linear(rng, d, d), make_linear(rng, d, d)};
}

// Halting heads start with energies near this value (p ~ 0.02 per frame), so
// early training attends broadly instead of halting after a few frames.
constexpr double kInitialHaltingEnergy = -4.0;

// query.bias = +c and key.bias = -c add -c^2 * sqrt(d_k) to every energy.
void offset_halting_energy(AttentionParams& p, std::size_t d_k) {
  const double c = to_stored(
      std::sqrt(-kInitialHaltingEnergy / std::sqrt(static_cast<double>(d_k))));
  for (double& v : p.query.bias.mutable_values()) v = c;
  for (double& v : p.key.bias.mutable_values()) v = -c;
}

FeedForwardParams make_ffn(Rng& rng, std::size_t d, std::size_t d_ffn) {
  return FeedForwardParams{make_linear(rng, d, d_ffn), make_linear(rng, d_ffn, d)};
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  Tensor keep(x.shape());
  const double scale_kept = 1.0 / (1.0 - p);
  for (double& v : keep.mutable_values()) v = rng.uniform() < p ? 0.0 : scale_kept;
  return mul(x, keep);
}

// Multi-head attention with optional dropout on the softmax weights.
Tensor attention_impl(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                      const AttentionMask* mask, const AttentionParams& params,
                      std::size_t heads, double drop, Rng* rng) {
  const Tensor q = params.query(q_in);
  const Tensor k = params.key(k_in);
  const Tensor v = params.value(v_in);
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("multi_head_attention: d_model " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
    const Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
    const Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
    Tensor w = softmax_rows(scale(matmul_transposed(qh, kh), inv_sqrt_dk), mask);
    if (rng != nullptr && drop > 0.0) w = dropout(w, drop, *rng);
    outs.push_back(matmul(w, vh));
  }
  return params.output(concat_cols(outs));
}

}  // namespace

AttentionMask causal_mask(std::size_t length) {
  AttentionMask m(length, length);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
  return m;
}

AttentionMask build_chunk_mask(std::size_t frames, std::size_t central,
                               std::size_t left, std::size_t right) {
  if (central < 1) throw ContractError("build_chunk_mask: central chunk must be >= 1");
  AttentionMask m(frames, frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t chunk_start = (t / central) * central;
    const std::size_t lo = chunk_start > left ? chunk_start - left : 0;
    const std::size_t hi = std::min(frames - 1, chunk_start + central - 1 + right);
    for (std::size_t j = lo; j <= hi; ++j) m.set(t, j, true);
  }
  return m;
}

std::size_t chunk_reach(std::size_t t, std::size_t frames, std::size_t layers,
                        std::size_t central, std::size_t right) {
  if (frames == 0) return 0;
  std::size_t reach = std::min(t, frames - 1);
  for (std::size_t l = 0; l < layers; ++l) {
    reach = std::min(frames - 1, (reach / central) * central + central - 1 + right);
  }
  return reach;
}

Tensor positional_encoding(std::size_t length, std::size_t d_model,
                           std::size_t offset) {
  Tensor pe(Shape{length, d_model});
  auto v = pe.mutable_values();
  for (std::size_t i = 0; i < length; ++i) {
    const double pos = static_cast<double>(offset + i);
    for (std::size_t k = 0; k < d_model; ++k) {
      const double rate = std::pow(10000.0, -static_cast<double>(k - k % 2) /
                                                static_cast<double>(d_model));
      v[i * d_model + k] = (k % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask* mask) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != k.cols() ||
      k.rows() != v.rows()) {
    throw DimensionError("scaled_dot_attention: Q " + shape_string(q.shape()) +
                         ", K " + shape_string(k.shape()) + ", V " +
                         shape_string(v.shape()));
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return matmul(softmax_rows(scale(matmul_transposed(q, k), inv_sqrt_dk), mask), v);
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask* mask,
                            const AttentionParams& params, std::size_t heads) {
  return attention_impl(q, k, v, mask, params, heads, 0.0, nullptr);
}

Tensor stack_frames(const Tensor& features, std::size_t factor) {
  if (features.rank() != 2) {
    throw DimensionError("stack_frames: expected F x d_feat features, got " +
                         shape_string(features.shape()));
  }
  if (factor < 1) throw ConfigError("stack_frames: subsample factor must be >= 1");
  const std::size_t frames = features.rows();
  if (frames == 0) throw DataError("subsample_frontend: empty input (0 frames)");
  const std::size_t out_frames = (frames + factor - 1) / factor;
  std::vector<double> values(features.values().begin(), features.values().end());
  values.resize(out_frames * factor * features.cols(), 0.0);
  return Tensor(Shape{out_frames, factor * features.cols()}, std::move(values));
}

Tensor subsample_frontend(const Tensor& features, std::size_t factor,
                          const Linear& projection) {
  const Tensor projected = projection(stack_frames(features, factor));
  return add(projected, positional_encoding(projected.rows(), projected.cols()));
}

// ---------------------------------------------------------------------------

Transformer::Transformer(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t d = config_.d_model;
  frontend_ = make_linear(rng, config_.d_feat * config_.subsample_factor, d);
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    encoder_layers_.push_back(EncoderLayerParams{
        make_norm(d), make_norm(d), make_attention(rng, d), make_ffn(rng, d, config_.d_ffn)});
  }
  encoder_norm_ = make_norm(d);
  embedding_ = Tensor(Shape{config_.vocab_size, d});
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  for (double& v : embedding_.mutable_values()) v = to_stored(normal(rng));
  embedding_.set_requires_grad(true);
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    DecoderLayerParams layer{make_norm(d), make_norm(d), make_norm(d),
                             make_attention(rng, d), make_attention(rng, d),
                             make_ffn(rng, d, config_.d_ffn)};
    if (config_.halting_mode != HaltingMode::kOffline)
      offset_halting_energy(layer.cross_attention, config_.d_k());
    decoder_layers_.push_back(std::move(layer));
  }
  decoder_norm_ = make_norm(d);
  output_ = make_linear(rng, d, config_.vocab_size);
}

Transformer Transformer::with_halting(HaltingMode mode, double threshold,
                                      std::size_t max_lookahead) const {
  ModelConfig c = config_;
  c.halting_mode = mode;
  if (mode == HaltingMode::kDacs) c.dacs_threshold = threshold;
  if (mode == HaltingMode::kHsDacs) c.joint_threshold = threshold;
  c.max_lookahead = max_lookahead;
  return with_config(std::move(c));
}

Transformer Transformer::with_config(ModelConfig config) const {
  config.validate();
  Transformer copy = *this;
  const bool same_shape = config.d_model == config_.d_model &&
                          config.heads == config_.heads &&
                          config.vocab_size == config_.vocab_size &&
                          config.d_ffn == config_.d_ffn &&
                          config.encoder_layers == config_.encoder_layers &&
                          config.decoder_layers == config_.decoder_layers &&
                          config.d_feat == config_.d_feat &&
                          config.subsample_factor == config_.subsample_factor;
  if (!same_shape) {
    throw ConfigError("with_config: architecture fields must match the weights");
  }
  copy.config_ = std::move(config);
  return copy;
}

EncoderStates Transformer::encode(const Tensor& features,
                                  const ForwardOptions& options) const {
  if (features.rank() != 2 || features.cols() != config_.d_feat) {
    throw DimensionError("encode: expected F x " + std::to_string(config_.d_feat) +
                         " features, got " + shape_string(features.shape()));
  }
  Tensor x = subsample_frontend(features, config_.subsample_factor, frontend_);
  const AttentionMask mask = build_chunk_mask(x.rows(), config_.chunk_central,
                                              config_.chunk_left, config_.chunk_right);
  for (const auto& layer : encoder_layers_) {
    const Tensor h = layer.norm_attention(x);
    x = add(x, attention_impl(h, h, h, &mask, layer.self_attention, config_.heads,
                              config_.dropout, options.dropout_rng));
    x = add(x, layer.ffn(layer.norm_ffn(x)));
  }
  return EncoderStates{encoder_norm_(x)};
}

Tensor Transformer::embed_tokens(std::span<const int> tokens, std::size_t offset) const {
  const double sqrt_d = std::sqrt(static_cast<double>(config_.d_model));
  return add(scale(embedding(embedding_, tokens), sqrt_d),
             positional_encoding(tokens.size(), config_.d_model, offset));
}

TeacherForcedOutput Transformer::forward_teacher_forced(
    const EncoderStates& encoder, std::span<const int> input_tokens,
    const ForwardOptions& options) const {
  if (input_tokens.empty()) {
    throw ContractError("forward_teacher_forced: empty decoder input (<sos> is required)");
  }
  const std::size_t heads = config_.heads;
  const std::size_t dk = config_.d_k();
  const AttentionMask self_mask = causal_mask(input_tokens.size());
  TeacherForcedOutput out;
  Tensor x = embed_tokens(input_tokens, 0);
  for (const auto& layer : decoder_layers_) {
    const Tensor h = layer.norm_self(x);
    x = add(x, attention_impl(h, h, h, &self_mask, layer.self_attention, heads,
                              config_.dropout, options.dropout_rng));

    const Tensor hc = layer.norm_cross(x);
    const Tensor q = layer.cross_attention.query(hc);
    const Tensor k = layer.cross_attention.key(encoder.states);
    const Tensor v = layer.cross_attention.value(encoder.states);
    std::vector<Tensor> qs, ks, vs;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      qs.push_back(slice_cols(q, hd * dk, (hd + 1) * dk));
      ks.push_back(slice_cols(k, hd * dk, (hd + 1) * dk));
      vs.push_back(slice_cols(v, hd * dk, (hd + 1) * dk));
    }
    CrossAttentionOutput cross = train_attention(qs, ks, vs, config_.halting_mode,
                                                 config_.active_threshold());
    x = add(x, layer.cross_attention.output(concat_cols(cross.contexts)));
    out.cross.push_back(std::move(cross));

    x = add(x, layer.ffn(layer.norm_ffn(x)));
  }
  out.logits = output_(decoder_norm_(x));
  return out;
}

void Transformer::for_each_parameter(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  auto linear = [&](const std::string& n, Linear& l) {
    fn(n + ".weight", l.weight);
    fn(n + ".bias", l.bias);
  };
  auto norm = [&](const std::string& n, LayerNormParams& p) {
    fn(n + ".gain", p.gain);
    fn(n + ".bias", p.bias);
  };
  auto attention = [&](const std::string& n, AttentionParams& a) {
    linear(n + ".query", a.query);
    linear(n + ".key", a.key);
    linear(n + ".value", a.value);
    linear(n + ".output", a.output);
  };
  auto ffn = [&](const std::string& n, FeedForwardParams& f) {
    linear(n + ".inner", f.inner);
    linear(n + ".outer", f.outer);
  };
  linear("frontend", frontend_);
  for (std::size_t l = 0; l < encoder_layers_.size(); ++l) {
    const std::string p = "encoder." + std::to_string(l);
    auto& layer = encoder_layers_[l];
    norm(p + ".norm_attention", layer.norm_attention);
    attention(p + ".self_attention", layer.self_attention);
    norm(p + ".norm_ffn", layer.norm_ffn);
    ffn(p + ".ffn", layer.ffn);
  }
  norm("encoder.norm", encoder_norm_);
  fn("decoder.embedding", embedding_);
  for (std::size_t l = 0; l < decoder_layers_.size(); ++l) {
    const std::string p = "decoder." + std::to_string(l);
    auto& layer = decoder_layers_[l];
    norm(p + ".norm_self", layer.norm_self);
    attention(p + ".self_attention", layer.self_attention);
    norm(p + ".norm_cross", layer.norm_cross);
    attention(p + ".cross_attention", layer.cross_attention);
    norm(p + ".norm_ffn", layer.norm_ffn);
    ffn(p + ".ffn", layer.ffn);
  }
  norm("decoder.norm", decoder_norm_);
  linear("output", output_);
}

void Transformer::for_each_parameter(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<Transformer*>(this)->for_each_parameter(
      [&](const std::string& name, Tensor& t) { fn(name, t); });
}

std::size_t Transformer::parameter_count() const {
  std::size_t n = 0;
  for_each_parameter([&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

}  // namespace hsdacs
