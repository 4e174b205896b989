// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "getnet/events.hpp"
#include "getnet/model.hpp"

namespace getnet {

enum class OptimizerKind { Sgd, Adam };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 1e-2;
  std::size_t steps = 300;
  std::size_t batch_size = 0;  // 0: full batch
  std::uint64_t seed = 0;
  // Ablation hook: drop group-attention gradients before every update.
  bool freeze_gsa = false;
  unsigned threads = 1;

  /// steps >= 1, lr finite and >= 0; throws Error{ConfigError}.
  void validate() const;
};

/// Plain SGD or Adam (beta 0.9/0.999, eps 1e-8), no decay or schedule.
/// State is keyed by position in the tensor list passed to step().
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr);
  void step(std::vector<Tensor<float>>& params);
  std::size_t steps_taken() const { return t_; }

 private:
  OptimizerKind kind_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct LabeledStream {
  EventStream stream;
  std::size_t label = 0;
};

/// Alternating moving_bar (label 0) / rotating_dot (label 1) samples.
std::vector<LabeledStream> make_toy_dataset(std::size_t samples = 64, std::uint64_t seed = 0,
                                            std::uint32_t width = 16, std::uint32_t height = 16,
                                            std::size_t events_per_sample = 512);

/// Model used by the toy run: 16x16, P=4, K=2, G=4, embed 8, stages [1,1],
/// window 2x2, two classes.
GetConfig micro_config();

struct TrainResult {
  ModelParams<float> params;
  std::vector<double> losses;  // batch loss before each update
  double final_loss = 0.0;     // dataset loss after the last update
};

/// Deterministic given cfg.seed and tcfg.seed. Throws Error{ConfigError}
/// or Error{EmptyDataset}.
TrainResult train_toy(const std::vector<LabeledStream>& dataset, const GetConfig& cfg,
                      const TrainConfig& tcfg);

/// Fraction of top-1 hits; throws Error{EmptyDataset}.
double evaluate(const std::vector<LabeledStream>& dataset, const ModelParams<float>& params,
                const GetConfig& cfg);

/// Mean cross-entropy over the dataset.
double dataset_loss(const std::vector<LabeledStream>& dataset, const ModelParams<float>& params,
                    const GetConfig& cfg);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);

}  // namespace getnet
