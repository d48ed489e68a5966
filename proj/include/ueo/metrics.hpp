// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ueo/embedding_cache.hpp"
#include "ueo/model.hpp"
#include "ueo/shift.hpp"

namespace ueo {

/// Row indices of the test cache, partitioned by label:
/// id holds labels in L_e n L_p, ood holds labels in L_e \ L_p.
/// Rows whose label is outside L_e belong to neither.
struct EvalSplit {
  std::vector<std::size_t> id;
  std::vector<std::size_t> ood;
};

EvalSplit split_eval(const EmbeddingCache& cache, const ShiftSpec& spec);

struct ClassAccuracy {
  std::map<std::int32_t, double> per_class;  // classes with >= 1 sample only
  double macro = 0.0;
};

/// Macro-averaged accuracy over the classes in `classes` that have samples.
ClassAccuracy per_class_accuracy(std::span<const std::int32_t> preds,
                                 std::span<const std::int32_t> labels, const LabelSet& classes);

/// Exact Mann-Whitney AUC, ties credited 1/2, computed from midranks.
double auc(std::span<const double> id_scores, std::span<const double> ood_scores);

enum class Detection : std::uint8_t { kOod = 0, kId = 1 };

/// ID iff score >= lambda.
std::vector<Detection> detect(std::span<const double> scores, double lambda);

struct OpenSetPoint {
  double lambda = 0.0;
  double os = 0.0;           // mean over known classes plus the unknown class
  double hos = 0.0;          // harmonic mean of known-mean and unknown accuracy
  double known_acc = 0.0;
  double unknown_acc = 0.0;
};

/// OS/HOS at each threshold. Samples scoring below lambda are predicted
/// "unknown". Only rows with labels in L_e contribute. Requires both known
/// and OOD samples. Output is sorted by lambda.
std::vector<OpenSetPoint> os_hos_curve(std::span<const std::int32_t> preds,
                                       std::span<const std::int32_t> labels,
                                       std::span<const double> scores, const ShiftSpec& spec,
                                       std::span<const double> lambdas);

/// `count` evenly spaced quantiles (nearest rank) of the scores.
std::vector<double> quantile_grid(std::span<const double> scores, std::size_t count = 101);

struct EvalOptions {
  bool curves = false;
  std::vector<double> lambdas;  // empty: quantile_grid of pooled ID+OOD scores
};

struct EvalReport {
  std::map<std::int32_t, double> per_class_acc;
  double acc = 0.0;         // macro over L_p n L_e classes present
  double global_acc = 0.0;  // sample-weighted accuracy on the ID set
  std::optional<double> auc;
  std::vector<OpenSetPoint> curve;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

/// Predictions map head row i to label spec.predefined[i].
EvalReport evaluate(const ModelState& state, const EmbeddingCache& test, const ShiftSpec& spec,
                    const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// lambda,os,hos
std::string curve_csv(const std::vector<OpenSetPoint>& curve);

}  // namespace ueo
