// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop, checkpoints and ablation grids.

#pragma once

#include "ral/config.hpp"
#include "ral/eval.hpp"
#include "ral/model.hpp"
#include "ral/objectives.hpp"
#include "ral/optim.hpp"
#include "ral/synthdata.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ral {

struct TrainConfig {
  std::uint64_t seed = 0;
  long epochs = 100;
  Index batch_size = 128;
  double lr = 1e-4;
  Index proxies = 6;           // K
  bool proxy_sampling = true;  // false: every proxy is the mean
  double tau_pm = 0.1;
  LossWeights weights;
  bool msra_on = true;
  bool csa_on = true;
  bool clip_branch_on = false;
  bool support_set_on = true;
  GateNorm gate_norm = GateNorm::softmax;
  Index joint_dim = 32;
  std::vector<Index> clip_scales{4, 8, 16};
  long eval_every = 1;
  long patience = 10;
  long uncertainty_every = 0;  // 0 disables the uncertainty trace
};

KeyValueList train_config_entries(const TrainConfig& c);
// Returns false for keys that are not training keys.
bool apply_train_key(TrainConfig& c, const std::string& key, const std::string& value);
// Throws ConfigError on invalid combinations.
void validate(const TrainConfig& c);
std::uint64_t config_hash(const TrainConfig& c);

ModelConfig model_config(const TrainConfig& c, Index input_dim);

struct LogRow {
  long epoch = 0;
  double nce = 0.0;
  double trip = 0.0;
  double da = 0.0;
  double pm = 0.0;
  double total = 0.0;
  std::optional<double> test_sumr;
};

std::string train_log_csv(const std::vector<LogRow>& log);

struct Checkpoint {
  std::vector<std::string> names;  // creation order
  std::vector<Tensor> values;
  std::vector<Tensor> first_moments;
  std::vector<Tensor> second_moments;
  long adam_steps = 0;
  long epoch = 0;
  double best_sumr = 0.0;
  std::uint64_t config_hash = 0;
  TrainConfig config;
  Index input_dim = 0;
};

Checkpoint capture(const RalModel& model, const Adam& adam, long epoch, double best_sumr,
                   const TrainConfig& config);
// Rebuilds the model and writes the stored values into it.
RalModel restore_model(const Checkpoint& checkpoint);

// Directory with manifest.txt and params.bin.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
// Throws DataError on a missing, truncated or inconsistent checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct TrainResult {
  Checkpoint best;
  std::vector<LogRow> log;
  std::vector<UncertaintyRecord> uncertainty_trace;
  long epochs_run = 0;
  long best_epoch = 0;
};

// Trains on dataset.train and evaluates on dataset.test. Throws NumericError
// with batch diagnostics when a loss or gradient goes non-finite.
TrainResult train(const TrainConfig& config, const Dataset& dataset);

// Loss parts of one batch of (query index, video index) pairs of `split`.
// `rng` drives proxy sampling.
LossParts batch_losses(const RalModel& model, const TrainConfig& config, const Split& split,
                       std::span<const std::size_t> query_indices,
                       std::span<const std::size_t> video_indices, std::mt19937_64& rng);

// Fixed epoch schedule: one query per video per round, rounds in shuffled
// order, chunked into batches. Each batch is a list of query indices.
std::vector<std::vector<std::size_t>> epoch_batches(const Split& split, Index batch_size,
                                                    std::mt19937_64& rng);

struct AblationRow {
  std::string name;
  KeyValueList overrides;
  Recall recall;
  long best_epoch = 0;
};

// Named override sets: table2, table3, table4, lambda.
std::vector<std::pair<std::string, KeyValueList>> ablation_grid(const std::string& name);
std::vector<AblationRow> ablate(const TrainConfig& base, const Dataset& dataset,
                                const std::vector<std::pair<std::string, KeyValueList>>& grid);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace ral
