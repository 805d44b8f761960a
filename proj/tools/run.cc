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

#include "run.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "hsdacs/decoder.h"
#include "hsdacs/errors.h"
#include "hsdacs/evaluation.h"
#include "hsdacs/gradcheck.h"

namespace hsdacs::cli {

void RunConfig::apply(std::string_view key, std::string_view value) {
  // Shared keys (vocab_size, d_feat) must reach both model and data.
  const bool in_model = model.apply(key, value);
  const bool in_data = data.apply(key, value);
  const bool in_train = train.apply(key, value);
  if (!in_model && !in_data && !in_train) {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
}

void RunConfig::apply_all(const KeyValues& kv) {
  for (const auto& [key, value] : kv) apply(key, value);
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  apply_all(parse_key_values(text.str(), path));
}

void RunConfig::apply_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  }
  auto trim = [](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
  };
  apply(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  data.validate();
  if (model.vocab_size != data.vocab_size || model.d_feat != data.d_feat) {
    throw ConfigError("model and data disagree on vocab_size or d_feat");
  }
}

namespace {

std::string join_tokens(const std::vector<int>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(tokens[i]);
  }
  return s;
}

struct Common {
  std::string config_path;
  std::vector<std::string> assignments;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "key = value configuration file");
    app->add_option("--set", assignments, "override one setting, key=value")
        ->allow_extra_args(false);
  }

  RunConfig load() const {
    RunConfig rc;
    if (!config_path.empty()) rc.load_file(config_path);
    for (const auto& a : assignments) rc.apply_assignment(a);
    return rc;
  }
};

// Halting flags shared by decode, sweep and export-align.
struct Halting {
  std::string mode;
  double threshold = 0.0;
  std::size_t max_lookahead = 0;
  CLI::Option* threshold_opt = nullptr;
  CLI::Option* lookahead_opt = nullptr;

  void add_to(CLI::App* app) {
    app->add_option("--mode", mode, "offline, dacs or hsdacs");
    threshold_opt = app->add_option("--threshold", threshold, "halting threshold");
    lookahead_opt = app->add_option("--max-lookahead", max_lookahead, "look-ahead bound M");
  }

  // Model sharing the checkpoint weights with the requested halting setup.
  Transformer configure(const Transformer& base, std::ostream& err) const {
    const ModelConfig& c = base.config();
    const HaltingMode m = mode.empty() ? c.halting_mode : parse_halting_mode(mode);
    if (m == HaltingMode::kOffline) {
      if (threshold_opt->count() > 0)
        err << "warning: --threshold is ignored in offline mode\n";
      if (lookahead_opt->count() > 0)
        err << "warning: --max-lookahead is ignored in offline mode\n";
    }
    double thr = m == HaltingMode::kDacs ? c.dacs_threshold : c.effective_joint_threshold();
    if (threshold_opt->count() > 0) thr = threshold;
    const std::size_t lookahead = lookahead_opt->count() > 0 ? max_lookahead : c.max_lookahead;
    Transformer model = base.with_halting(m, thr, lookahead);
    model.config().validate();
    return model;
  }
};

int do_train(const RunConfig& rc, const std::string& log_path, std::ostream& out) {
  if (rc.train.checkpoint_path.empty()) {
    throw ConfigError("train needs a checkpoint path (--checkpoint or checkpoint_path)");
  }
  const std::vector<SyntheticSample> data = training_set(rc.data);
  Transformer model(rc.model);
  Trainer trainer(model, data, rc.train);
  const std::string log_file = log_path.empty() ? rc.train.checkpoint_path + ".log" : log_path;
  std::ofstream log(log_file, std::ios::trunc);
  if (!log) throw IoError("cannot open loss log '" + log_file + "'");
  log << "epoch\tloss\tlr\n";
  out << "parameters\t" << model.parameter_count() << "\n";
  trainer.train([&](const EpochReport& r) {
    char line[96];
    std::snprintf(line, sizeof(line), "%zu\t%.6f\t%.6e\n", r.epoch, r.mean_loss, r.lr);
    log << line << std::flush;
    out << "epoch " << line << std::flush;
    save_checkpoint(trainer.checkpoint(), rc.train.checkpoint_path);
  });
  out << "checkpoint\t" << rc.train.checkpoint_path << "\n";
  return kExitOk;
}

std::vector<SyntheticSample> utterances(DataConfig data, std::optional<std::uint64_t> seed,
                                        std::size_t count) {
  if (seed) data.sample_seed = *seed;
  data.eval_samples = count;
  return evaluation_set(data);
}

int do_decode(const RunConfig& rc, const Halting& halting, const std::string& checkpoint,
              std::size_t beam, std::optional<std::uint64_t> seed, std::size_t num_utts,
              std::ostream& out, std::ostream& err) {
  if (beam == 0) throw ConfigError("--beam must be >= 1");
  const Transformer model = halting.configure(model_from_checkpoint(load_checkpoint(checkpoint)), err);
  const auto samples = utterances(rc.data, seed, num_utts);
  std::vector<std::vector<int>> refs, hyps;
  double ratio_sum = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const EncoderStates enc = model.encode(samples[k].features);
    const DecodeResult d = beam == 1 ? decode_greedy(model, enc, rc.max_decode_len())
                                     : decode_beam(model, enc, beam, rc.max_decode_len());
    const double r = coverage_ratio(d.trace);
    ratio_sum += r;
    char ratio[32];
    std::snprintf(ratio, sizeof(ratio), "%.4f", r);
    out << "utt " << k << "\tref: " << join_tokens(samples[k].target)
        << "\thyp: " << join_tokens(d.tokens) << "\tr: " << ratio << "\n";
    refs.push_back(samples[k].target);
    hyps.push_back(d.tokens);
  }
  char summary[96];
  std::snprintf(summary, sizeof(summary), "error_rate\t%.2f\nmean_r\t%.4f\n",
                error_rate(refs, hyps), ratio_sum / static_cast<double>(samples.size()));
  out << summary;
  return kExitOk;
}

int do_sweep(const RunConfig& rc, const Halting& halting, const std::string& checkpoint,
             const std::string& thresholds, std::size_t num_utts, const std::string& out_path,
             std::ostream& out, std::ostream& err) {
  const Transformer base = model_from_checkpoint(load_checkpoint(checkpoint));
  const Transformer model = halting.configure(base, err);
  const HaltingMode mode = model.config().halting_mode;
  if (mode == HaltingMode::kOffline) throw ConfigError("sweep needs --mode dacs or hsdacs");
  std::vector<double> list;
  if (!thresholds.empty()) {
    list = parse_double_list("--thresholds", thresholds);
  } else {
    const double top = mode == HaltingMode::kHsDacs
                           ? static_cast<double>(model.config().heads)
                           : 1.0;
    list = {top, 0.75 * top, 0.5 * top, 0.25 * top};
  }
  const auto samples = utterances(rc.data, std::nullopt, num_utts);
  const auto rows = sweep_thresholds(model, samples, mode, list, rc.max_decode_len());
  const std::string table = format_sweep(rows, mode);
  out << table;
  if (!out_path.empty()) {
    std::ofstream file(out_path, std::ios::trunc);
    if (!file || !(file << table)) throw IoError("cannot write sweep report '" + out_path + "'");
  }
  return kExitOk;
}

int do_export(const RunConfig& rc, const Halting& halting, const std::string& checkpoint,
              std::uint64_t utt_seed, std::optional<std::size_t> layer,
              const std::string& prefix, std::ostream& out, std::ostream& err) {
  const Transformer model = halting.configure(model_from_checkpoint(load_checkpoint(checkpoint)), err);
  DataConfig data = rc.data;
  data.sample_seed = utt_seed;
  const SyntheticSample sample = generate_sample(data, 0);
  const std::size_t l = layer.value_or(model.config().decoder_layers - 1);
  if (l >= model.config().decoder_layers) {
    throw ConfigError("--layer " + std::to_string(l) + " out of range for " +
                      std::to_string(model.config().decoder_layers) + " decoder layers");
  }
  const DecodeResult d = decode_greedy(model, model.encode(sample.features), rc.max_decode_len());
  out << "ref: " << join_tokens(sample.target) << "\nhyp: " << join_tokens(d.tokens) << "\n";
  for (const auto& path : export_alignment(d.trace, l, prefix, model.config().halting_mode))
    out << path << "\n";
  return kExitOk;
}

int do_grad_check(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& r : grad_check_suite(seed)) {
    const bool pass = r.max_rel_error < 1e-3 && r.median_rel_error < 1e-4;
    ok = ok && pass;
    char line[160];
    std::snprintf(line, sizeof(line), "%-26s %6zu  max %.2e  median %.2e  %s\n",
                  r.name.c_str(), r.checked, r.max_rel_error, r.median_rel_error,
                  pass ? "ok" : "FAIL");
    out << line;
  }
  out << (ok ? "grad-check passed\n" : "grad-check FAILED\n");
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming transformer with synchronous head halting"};
  app.name("hsdacs");
  app.require_subcommand(1);

  Common common;
  std::string checkpoint, log_path, mode_train, thresholds, out_path;
  std::size_t epochs = 0, beam = 1, num_utts = 10, sweep_utts = 0, layer = 0;
  std::uint64_t seed = 0, utt_seed = 0, check_seed = 3;

  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  common.add_to(train);
  auto* train_ckpt = train->add_option("--checkpoint", checkpoint, "output checkpoint path");
  train->add_option("--log", log_path, "loss log path (default <checkpoint>.log)");
  auto* train_mode = train->add_option("--mode", mode_train, "offline, dacs or hsdacs");
  auto* train_epochs = train->add_option("--epochs", epochs, "number of epochs");

  CLI::App* decode = app.add_subcommand("decode", "decode synthetic utterances");
  Common decode_common;
  Halting decode_halting;
  decode_common.add_to(decode);
  decode_halting.add_to(decode);
  decode->add_option("--checkpoint", checkpoint, "checkpoint to load (required)");
  decode->add_option("--beam", beam, "beam width (1 = greedy)");
  auto* seed_opt = decode->add_option("--seed", seed, "utterance sample seed");
  decode->add_option("--num-utts", num_utts, "number of utterances");

  CLI::App* sweep = app.add_subcommand("sweep", "threshold sweep over the evaluation set");
  Common sweep_common;
  Halting sweep_halting;
  sweep_common.add_to(sweep);
  sweep_halting.add_to(sweep);
  sweep->add_option("--checkpoint", checkpoint, "checkpoint to load (required)");
  sweep->add_option("--thresholds", thresholds, "comma-separated thresholds");
  auto* sweep_utts_opt = sweep->add_option("--num-utts", sweep_utts, "number of utterances");
  sweep->add_option("--out", out_path, "also write the table to this file");

  CLI::App* align = app.add_subcommand("export-align", "export per-head attention weights");
  Common align_common;
  Halting align_halting;
  align_common.add_to(align);
  align_halting.add_to(align);
  align->add_option("--checkpoint", checkpoint, "checkpoint to load (required)");
  align->add_option("--utt-seed", utt_seed, "sample seed of the utterance");
  auto* layer_opt = align->add_option("--layer", layer, "decoder layer (default top)");
  align->add_option("--out", out_path, "output path prefix (required)");

  CLI::App* check = app.add_subcommand("grad-check", "finite-difference gradient checks");
  check->add_option("--seed", check_seed, "seed of the random cases");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*train) {
      RunConfig rc = common.load();
      if (train_ckpt->count() > 0) rc.train.checkpoint_path = checkpoint;
      if (train_mode->count() > 0) rc.model.halting_mode = parse_halting_mode(mode_train);
      if (train_epochs->count() > 0) rc.train.epochs = epochs;
      rc.validate();
      return do_train(rc, log_path, out);
    }
    if (*decode) {
      if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
      const RunConfig rc = decode_common.load();
      rc.validate();
      return do_decode(rc, decode_halting, checkpoint, beam,
                       seed_opt->count() > 0 ? std::optional(seed) : std::nullopt, num_utts,
                       out, err);
    }
    if (*sweep) {
      if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
      const RunConfig rc = sweep_common.load();
      rc.validate();
      return do_sweep(rc, sweep_halting, checkpoint, thresholds,
                      sweep_utts_opt->count() > 0 ? sweep_utts : rc.data.eval_samples,
                      out_path, out, err);
    }
    if (*align) {
      if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
      if (out_path.empty()) throw ConfigError("--out is required");
      const RunConfig rc = align_common.load();
      rc.validate();
      return do_export(rc, align_halting, checkpoint, utt_seed,
                       layer_opt->count() > 0 ? std::optional(layer) : std::nullopt, out_path,
                       out, err);
    }
    if (*check) return do_grad_check(check_seed, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace hsdacs::cli
