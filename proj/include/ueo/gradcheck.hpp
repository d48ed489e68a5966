// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ueo/objectives.hpp"

namespace ueo {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so that coordinates whose true
  /// gradient is ~0 are compared absolutely.
  double abs_floor = 1e-6;
  /// Negative control: perturbs every analytic gradient before comparison.
  bool corrupt_analytic = false;
};

struct GradCheckEntry {
  LossMethod method;
  WeightFn weight_fn;
  std::size_t trials = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::string worst_group;  // parameter group of the worst coordinate
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // one per method x weight fn; empty when trials = 0
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  bool passed() const { return max_rel_error < tolerance; }
};

/// A random small problem: n <= 8 samples, C <= 5 classes, d <= 16.
struct GradCheckInstance {
  ModelState state;
  Matrix batch;
  std::vector<double> weights;
  double beta = 1.0;
};

GradCheckInstance random_gradcheck_instance(std::uint64_t seed, LossMethod method);

/// Straight transcription of the forward pass and every loss in extended
/// precision. Shares no code with forward()/loss_value(); it is the
/// finite-difference oracle.
long double reference_loss(const LossConfig& cfg, const ModelState& state, const Matrix& batch,
                           std::span<const double> w);

/// |analytic - numeric| / max(|analytic|, |numeric|, floor) maximised over
/// all coordinates, numeric by central differences of reference_loss().
GradCheckEntry check_instance(const LossConfig& cfg, const GradCheckInstance& inst,
                              const GradCheckOptions& options);

/// Compares grad() against central finite differences on `trials` random
/// instances for every method x weight function.
GradCheckReport check_gradients(std::uint64_t seed, std::size_t trials,
                                const GradCheckOptions& options = {});

nlohmann::json to_json(const GradCheckReport& report);

}  // namespace ueo
