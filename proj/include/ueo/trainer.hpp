// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ueo/model.hpp"
#include "ueo/objectives.hpp"

namespace ueo {

/// Trainable parameter groups. The affine scale/shift stand in for the
/// normalization-layer affines of the image encoder.
struct ParamGroups {
  bool prompt = true;
  bool affine_scale = true;
  bool affine_shift = true;

  bool any() const { return prompt || affine_scale || affine_shift; }
  friend bool operator==(const ParamGroups&, const ParamGroups&) = default;
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  ParamGroups param_groups;
  LossConfig loss;
  bool shuffle = true;
  double momentum = 0.0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// lr0 * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

struct TrainLogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double mean_w = 0.0;
  double mean_entropy = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::vector<std::string> warnings;

  /// step,epoch,lr,loss,mean_w,mean_entropy
  std::string to_csv() const;
};

struct TrainResult {
  ModelState state;  // last-epoch state
  TrainLog log;
};

/// Mini-batch SGD over the enabled groups. Each step computes MCM weights on
/// the frozen reference, predictions on the current state, and one update
/// along the gradient of cfg.loss. `pool` carries features only.
///
/// For the oracle method the binary per-row weights must be supplied in
/// `oracle_weights` (aligned with pool rows); they replace the MCM weights.
TrainResult train(const Matrix& pool, const ClassHead& head, const TrainConfig& cfg,
                  std::span<const double> oracle_weights = {});

}  // namespace ueo
