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

#include "hsdacs/training.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hsdacs/errors.h"

namespace hsdacs {

namespace {

double to_stored(double x) { return static_cast<double>(static_cast<float>(x)); }

std::vector<Tensor> parameter_list(const Transformer& model) {
  std::vector<Tensor> out;
  model.for_each_parameter([&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw ConfigError("label_smoothing must be in [0, 1)");
  }
  if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be > 0");
  if (base_lr < 0.0) throw ConfigError("base_lr must be >= 0");
}

bool TrainConfig::apply(std::string_view key, std::string_view value) {
  if (key == "epochs") epochs = parse_uint(key, value);
  else if (key == "batch_size") batch_size = parse_uint(key, value);
  else if (key == "base_lr") base_lr = parse_double(key, value);
  else if (key == "warmup_steps") warmup_steps = parse_uint(key, value);
  else if (key == "label_smoothing") label_smoothing = parse_double(key, value);
  else if (key == "grad_clip_norm") grad_clip_norm = parse_double(key, value);
  else if (key == "checkpoint_path") checkpoint_path = std::string(value);
  else if (key == "train_seed") seed = parse_uint(key, value);
  else return false;
  return true;
}

KeyValues TrainConfig::to_key_values() const {
  return {
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"base_lr", format_double(base_lr)},
      {"warmup_steps", std::to_string(warmup_steps)},
      {"label_smoothing", format_double(label_smoothing)},
      {"grad_clip_norm", format_double(grad_clip_norm)},
      {"checkpoint_path", checkpoint_path},
      {"train_seed", std::to_string(seed)},
  };
}

// ---------------------------------------------------------------------------
// Loss and schedule

Tensor label_smoothed_ce(const Tensor& logits, std::span<const int> targets,
                         double eps, const std::vector<bool>& mask) {
  if (logits.rank() != 2 || logits.rows() != targets.size()) {
    throw DimensionError("label_smoothed_ce: logits " + shape_string(logits.shape()) +
                         " for " + std::to_string(targets.size()) + " targets");
  }
  if (!mask.empty() && mask.size() != targets.size()) {
    throw DimensionError("label_smoothed_ce: mask length differs from targets");
  }
  const std::size_t rows = logits.rows(), vocab = logits.cols();
  const double off = vocab > 1 ? eps / static_cast<double>(vocab - 1) : 0.0;
  Tensor q(logits.shape());
  auto qv = q.mutable_values();
  std::size_t counted = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw DataError("label_smoothed_ce: target " + std::to_string(t) +
                      " outside [0, " + std::to_string(vocab) + ")");
    }
    if (!mask.empty() && !mask[i]) continue;
    ++counted;
    for (std::size_t v = 0; v < vocab; ++v) qv[i * vocab + v] = off;
    qv[i * vocab + static_cast<std::size_t>(t)] = 1.0 - eps;
  }
  if (counted == 0) throw ContractError("label_smoothed_ce: no unmasked positions");
  return scale(sum(mul(log_softmax_rows(logits), q)), -1.0 / static_cast<double>(counted));
}

double noam_lr(std::size_t step, std::size_t warmup, std::size_t d_model,
               double base) {
  if (step < 1) throw ContractError("noam_lr: step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return base * std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

Tensor sample_loss(const Transformer& model, const Tensor& features,
                   std::span<const int> target, double label_smoothing,
                   const ForwardOptions& options) {
  const int vocab = static_cast<int>(model.config().vocab_size);
  for (int t : target) {
    if (t < 0 || t >= vocab) {
      throw DataError("target token " + std::to_string(t) + " outside vocabulary of " +
                      std::to_string(vocab));
    }
  }
  const EncoderStates enc = model.encode(features, options);
  std::vector<int> input{kSosId};
  input.insert(input.end(), target.begin(), target.end());
  std::vector<int> output(target.begin(), target.end());
  output.push_back(kEosId);
  const TeacherForcedOutput out = model.forward_teacher_forced(enc, input, options);
  return label_smoothed_ce(out.logits, output, label_smoothing);
}

Tensor batch_loss(const Transformer& model, const PaddedBatch& batch,
                  double label_smoothing, const ForwardOptions& options) {
  const std::size_t n = batch.batch_size();
  if (n == 0) throw ContractError("batch_loss: empty batch");
  Tensor total;
  for (std::size_t b = 0; b < n; ++b) {
    const Tensor loss = sample_loss(model, batch.item_features(b), batch.item_target(b),
                                    label_smoothing, options);
    total = b == 0 ? loss : add(total, loss);
  }
  return scale(total, 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Optimiser

Adam::Adam(const Transformer& model) {
  for (const Tensor& p : parameter_list(model)) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step(Transformer& model, double lr) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(kBeta1, t);
  const double bias2 = 1.0 - std::pow(kBeta2, t);
  std::size_t i = 0;
  model.for_each_parameter([&](const std::string&, Tensor& p) {
    auto values = p.mutable_values();
    const auto grad = p.grad();
    auto m = m_[i].mutable_values();
    auto v = v_[i].mutable_values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      m[k] = to_stored(kBeta1 * m[k] + (1.0 - kBeta1) * g);
      v[k] = to_stored(kBeta2 * v[k] + (1.0 - kBeta2) * g * g);
      const double update = lr * (m[k] / bias1) / (std::sqrt(v[k] / bias2) + kEpsilon);
      values[k] = to_stored(values[k] - update);
    }
    ++i;
  });
}

double clip_gradients(Transformer& model, double max_norm) {
  double sq = 0.0;
  model.for_each_parameter([&](const std::string&, Tensor& p) {
    for (double g : p.grad()) sq += g * g;
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    model.for_each_parameter([&](const std::string&, Tensor& p) {
      if (!p.has_grad()) return;
      for (double& g : p.mutable_grad()) g *= factor;
    });
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kMagic[8] = {'H', 'S', 'D', 'A', 'C', 'S', '0', '1'};

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(std::string_view s) { out_.append(s); }
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  void tensor(const NamedTensor& t) {
    string(t.name);
    u32(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) u32(static_cast<std::uint32_t>(d));
    for (double v : t.value.values()) f32(static_cast<float>(v));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  std::string_view raw(std::size_t n) {
    if (in_.size() - pos_ < n) throw IoError("checkpoint: unexpected end of data");
    const auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    const auto b = raw(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto b = raw(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string string() { return std::string(raw(u32())); }
  NamedTensor tensor() {
    NamedTensor t;
    t.name = string();
    const std::uint32_t rank = u32();
    if (rank > 8) throw IoError("checkpoint: implausible tensor rank for '" + t.name + "'");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(u32());
    const std::size_t n = shape_numel(shape);
    if (n * 4 > in_.size() - pos_) {
      throw IoError("checkpoint: tensor '" + t.name + "' overruns the file");
    }
    std::vector<double> values(n);
    for (double& v : values) v = f32();
    t.value = Tensor(std::move(shape), std::move(values));
    return t;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  ByteWriter w;
  w.raw(std::string_view(kMagic, sizeof(kMagic)));
  w.u32(checkpoint.version);
  w.string(format_key_values(checkpoint.model_config.to_key_values()));
  w.u32(static_cast<std::uint32_t>(checkpoint.parameters.size()));
  for (const auto& t : checkpoint.parameters) w.tensor(t);
  w.u32(static_cast<std::uint32_t>(checkpoint.moments.size()));
  for (const auto& t : checkpoint.moments) w.tensor(t);
  for (std::uint64_t word : checkpoint.rng_state) w.u64(word);
  w.u64(checkpoint.step);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.raw(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw IoError("checkpoint: bad magic (not an HSDACS01 file)");
  }
  Checkpoint c;
  c.version = r.u32();
  if (c.version != Checkpoint::kFormatVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(c.version));
  }
  try {
    c.model_config = ModelConfig::from_key_values(parse_key_values(r.string(), "checkpoint"));
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: bad model config: ") + e.what());
  }
  const std::uint32_t params = r.u32();
  for (std::uint32_t i = 0; i < params; ++i) c.parameters.push_back(r.tensor());
  const std::uint32_t moments = r.u32();
  for (std::uint32_t i = 0; i < moments; ++i) c.moments.push_back(r.tensor());
  for (auto& word : c.rng_state) word = r.u64();
  c.step = r.u64();
  if (!r.done()) throw IoError("checkpoint: trailing bytes after step counter");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

namespace {

void copy_parameters(Transformer& model, const std::vector<NamedTensor>& params) {
  std::size_t i = 0;
  model.for_each_parameter([&](const std::string& name, Tensor& p) {
    if (i >= params.size() || params[i].name != name ||
        params[i].value.shape() != p.shape()) {
      throw IoError("checkpoint: parameter '" + name + "' missing or mis-shaped");
    }
    const auto src = params[i].value.values();
    std::copy(src.begin(), src.end(), p.mutable_values().begin());
    ++i;
  });
  if (i != params.size()) throw IoError("checkpoint: unexpected extra parameters");
}

}  // namespace

Transformer model_from_checkpoint(const Checkpoint& checkpoint) {
  Transformer model(checkpoint.model_config);
  copy_parameters(model, checkpoint.parameters);
  return model;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(Transformer& model, std::span<const SyntheticSample> data,
                 TrainConfig config)
    : model_(model),
      data_(data),
      config_(std::move(config)),
      optimizer_(model),
      rng_(config_.seed, 0x64726f70 /* dropout stream */) {
  config_.validate();
  if (data_.empty()) throw ContractError("Trainer: empty training set");
}

std::size_t Trainer::batches_per_epoch() const {
  return (data_.size() + config_.batch_size - 1) / config_.batch_size;
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(config_.seed, epoch);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  return order;
}

double Trainer::train_step() {
  const std::size_t per_epoch = batches_per_epoch();
  const std::size_t epoch = step_ / per_epoch;
  const std::size_t batch = step_ % per_epoch;
  const auto order = epoch_order(epoch);
  const std::size_t begin = batch * config_.batch_size;
  const std::size_t end = std::min(order.size(), begin + config_.batch_size);
  const double inv_count = 1.0 / static_cast<double>(end - begin);

  model_.for_each_parameter([](const std::string&, Tensor& p) { p.zero_grad(); });
  ForwardOptions options;
  if (model_.config().dropout > 0.0) options.dropout_rng = &rng_;
  double total = 0.0;
  for (std::size_t k = begin; k < end; ++k) {
    const SyntheticSample& s = data_[order[k]];
    GradTape tape;
    const Tensor loss = sample_loss(model_, s.features, s.target, config_.label_smoothing,
                                    options);
    if (!std::isfinite(loss.item())) {
      throw DivergenceError("non-finite loss " + format_double(loss.item()) +
                            " at step " + std::to_string(step_ + 1) + " (sample " +
                            std::to_string(order[k]) + ")");
    }
    tape.backward(scale(loss, inv_count));
    total += loss.item();
  }
  clip_gradients(model_, config_.grad_clip_norm);
  const double lr = noam_lr(step_ + 1, config_.warmup_steps, model_.config().d_model,
                            config_.base_lr);
  optimizer_.step(model_, lr);
  ++step_;
  const double mean_loss = total * inv_count;
  epoch_loss_sum_ += mean_loss;
  ++epoch_batches_;
  return mean_loss;
}

EpochReport Trainer::train_epoch() {
  const std::size_t per_epoch = batches_per_epoch();
  EpochReport report;
  report.epoch = step_ / per_epoch;
  do {
    train_step();
  } while (step_ % per_epoch != 0);
  report.mean_loss = epoch_loss_sum_ / static_cast<double>(epoch_batches_);
  report.lr = noam_lr(step_, config_.warmup_steps, model_.config().d_model, config_.base_lr);
  epoch_loss_sum_ = 0.0;
  epoch_batches_ = 0;
  return report;
}

std::vector<EpochReport> Trainer::train(
    const std::function<void(const EpochReport&)>& on_epoch) {
  std::vector<EpochReport> reports;
  while (step_ < config_.epochs * batches_per_epoch()) {
    reports.push_back(train_epoch());
    if (on_epoch) on_epoch(reports.back());
  }
  return reports;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.model_config = model_.config();
  model_.for_each_parameter([&](const std::string& name, const Tensor& t) {
    c.parameters.push_back({name, t.detach()});
  });
  for (std::size_t i = 0; i < c.parameters.size(); ++i)
    c.moments.push_back({"adam.m." + c.parameters[i].name,
                         optimizer_.first_moments()[i].detach()});
  for (std::size_t i = 0; i < c.parameters.size(); ++i)
    c.moments.push_back({"adam.v." + c.parameters[i].name,
                         optimizer_.second_moments()[i].detach()});
  c.rng_state = rng_.state();
  c.step = step_;
  return c;
}

void Trainer::restore(const Checkpoint& checkpoint) {
  copy_parameters(model_, checkpoint.parameters);
  const std::size_t n = checkpoint.parameters.size();
  if (checkpoint.moments.size() != 2 * n) {
    throw IoError("checkpoint: expected " + std::to_string(2 * n) + " optimiser moments");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = checkpoint.moments[i].value;
    const auto& v = checkpoint.moments[n + i].value;
    if (m.shape() != optimizer_.first_moments()[i].shape() ||
        v.shape() != optimizer_.second_moments()[i].shape()) {
      throw IoError("checkpoint: optimiser moment shape mismatch at '" +
                    checkpoint.parameters[i].name + "'");
    }
    optimizer_.first_moments()[i] = m.detach();
    optimizer_.second_moments()[i] = v.detach();
  }
  optimizer_.set_steps(checkpoint.step);
  rng_.set_state(checkpoint.rng_state);
  step_ = checkpoint.step;
  epoch_loss_sum_ = 0.0;
  epoch_batches_ = 0;
}

}  // namespace hsdacs
