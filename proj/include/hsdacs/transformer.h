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

#ifndef HSDACS_TRANSFORMER_H_
#define HSDACS_TRANSFORMER_H_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hsdacs/config.h"
#include "hsdacs/halting.h"
#include "hsdacs/mask.h"
#include "hsdacs/rng.h"
#include "hsdacs/tensor.h"

namespace hsdacs {

inline constexpr double kLayerNormEps = 1e-5;

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out
  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
  Tensor operator()(const Tensor& x) const {
    return layer_norm(x, gain, bias, kLayerNormEps);
  }
};

struct AttentionParams {
  Linear query, key, value, output;
};

struct FeedForwardParams {
  Linear inner, outer;
  Tensor operator()(const Tensor& x) const { return outer(relu(inner(x))); }
};

struct EncoderLayerParams {
  LayerNormParams norm_attention, norm_ffn;
  AttentionParams self_attention;
  FeedForwardParams ffn;
};

struct DecoderLayerParams {
  LayerNormParams norm_self, norm_cross, norm_ffn;
  AttentionParams self_attention, cross_attention;
  FeedForwardParams ffn;
};

// Encoder output: T x d_model; rows are both keys and values for the
// decoder's cross-attention.
struct EncoderStates {
  Tensor states;
  std::size_t frames() const { return states.rows(); }
};

// Lower-triangular mask: row i may attend columns 0..i.
AttentionMask causal_mask(std::size_t length);

// Chunked self-attention mask over T frames. Frame t belongs to central chunk
// n = t / central and may attend [n*central - left, (n+1)*central - 1 + right]
// clipped to [0, T).
AttentionMask build_chunk_mask(std::size_t frames, std::size_t central,
                               std::size_t left, std::size_t right);

// Last input frame that can influence encoder output frame t through
// `layers` applications of the chunk mask.
std::size_t chunk_reach(std::size_t t, std::size_t frames, std::size_t layers,
                        std::size_t central, std::size_t right);

// Sinusoidal encodings for positions offset .. offset + length - 1.
Tensor positional_encoding(std::size_t length, std::size_t d_model,
                           std::size_t offset = 0);

// softmax(Q K^T / sqrt(d_k) [masked]) V.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask* mask = nullptr);

// Concat(head_1..head_H) W^O with head_h = Attention(Q W^Q_h, K W^K_h,
// V W^V_h). The per-head projections are column blocks of the d_model x
// d_model projection weights.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask* mask,
                            const AttentionParams& params, std::size_t heads);

// Groups `factor` consecutive frames into one row of factor * d_feat values,
// zero-padding the last group. F x d_feat -> ceil(F / factor) x (factor *
// d_feat). Throws DataError for F = 0.
Tensor stack_frames(const Tensor& features, std::size_t factor);

// stack_frames, linear projection to d_model, plus positional encoding.
Tensor subsample_frontend(const Tensor& features, std::size_t factor,
                          const Linear& projection);

struct ForwardOptions {
  // When set and the config has dropout > 0, softmax attention weights are
  // dropped with that probability.
  Rng* dropout_rng = nullptr;
};

// Teacher-forced decoder output.
struct TeacherForcedOutput {
  Tensor logits;  // L x vocab
  // Per decoder layer cross-attention record (halts and applied weights).
  std::vector<CrossAttentionOutput> cross;
};

// The full encoder-decoder model. Copies share parameter storage.
class Transformer {
 public:
  // Initialises parameters from config.seed.
  explicit Transformer(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  // Shallow copy sharing the weights with different halting settings.
  Transformer with_halting(HaltingMode mode, double threshold,
                           std::size_t max_lookahead) const;
  Transformer with_config(ModelConfig config) const;

  EncoderStates encode(const Tensor& features,
                       const ForwardOptions& options = {}) const;

  // input_tokens starts with <sos>; row i of the logits predicts token i+1.
  TeacherForcedOutput forward_teacher_forced(
      const EncoderStates& encoder, std::span<const int> input_tokens,
      const ForwardOptions& options = {}) const;

  const Linear& frontend() const { return frontend_; }
  const std::vector<EncoderLayerParams>& encoder_layers() const { return encoder_layers_; }
  const LayerNormParams& encoder_norm() const { return encoder_norm_; }
  const Tensor& token_embedding() const { return embedding_; }
  const std::vector<DecoderLayerParams>& decoder_layers() const { return decoder_layers_; }
  const LayerNormParams& decoder_norm() const { return decoder_norm_; }
  const Linear& output() const { return output_; }

  // Embedded decoder inputs (scaled embedding + positions from offset).
  Tensor embed_tokens(std::span<const int> tokens, std::size_t offset) const;

  // Visits every parameter in a fixed order with a stable dotted name.
  void for_each_parameter(
      const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_parameter(
      const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
  Linear frontend_;
  std::vector<EncoderLayerParams> encoder_layers_;
  LayerNormParams encoder_norm_;
  Tensor embedding_;
  std::vector<DecoderLayerParams> decoder_layers_;
  LayerNormParams decoder_norm_;
  Linear output_;
};

}  // namespace hsdacs

#endif  // HSDACS_TRANSFORMER_H_
