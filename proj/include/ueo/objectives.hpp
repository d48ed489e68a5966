// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ueo/matrix.hpp"
#include "ueo/model.hpp"
#include "ueo/shift.hpp"

namespace ueo {

/// Monotonically decreasing map from confidence to OOD emphasis.
enum class WeightFn { kInv, kInvSqrt, kInvSq, kOneMinus, kOneMinusSqrt, kOneMinusSq };

enum class LossMethod { kUeo, kUeoSample, kEntMin, kInfoMax, kUeoOracle };

enum class WeightDirection { kForward, kReverse };

std::string_view to_string(WeightFn fn);
std::string_view to_string(LossMethod method);
WeightFn parse_weight_fn(std::string_view name);
LossMethod parse_loss_method(std::string_view name);

inline constexpr WeightFn kAllWeightFns[] = {WeightFn::kInv,      WeightFn::kInvSqrt,
                                             WeightFn::kInvSq,    WeightFn::kOneMinus,
                                             WeightFn::kOneMinusSqrt, WeightFn::kOneMinusSq};
inline constexpr LossMethod kAllLossMethods[] = {LossMethod::kUeo, LossMethod::kUeoSample,
                                                 LossMethod::kEntMin, LossMethod::kInfoMax,
                                                 LossMethod::kUeoOracle};

struct LossConfig {
  LossMethod method = LossMethod::kUeo;
  WeightFn weight_fn = WeightFn::kInv;
  double beta = 1.0;   // trade-off on the maximization term
  double eps_w = 1e-6; // weights are clipped to [eps_w, 1]

  /// eps_w must lie in (0, 1/num_classes]; beta >= 0.
  void validate(std::size_t num_classes) const;
};

nlohmann::json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const nlohmann::json& j);

double apply_weight_fn(WeightFn fn, double w);

/// Shannon entropy in nats, 0 ln 0 = 0. Throws ValidationError on negative entries.
double entropy(std::span<const double> p);

/// Clips w to [eps_w, 1], then returns w / sum(w) (forward) or
/// phi(w) / sum(phi(w)) (reverse). If every phi(w) is zero, which only
/// happens for the 1-w family when all weights are 1, the reverse weights
/// fall back to uniform.
std::vector<double> normalized_weights(std::span<const double> w, WeightFn fn,
                                       WeightDirection direction, double eps_w = 1e-6);

/// sum_x fw(x) H(p(x)) - beta H(pbar), pbar = sum_x rw(x) p(x).
double loss_ueo(const Matrix& probs, std::span<const double> w, const LossConfig& cfg);
/// sum_x fw(x) H(p(x)) - beta sum_x rw(x) H(p(x)).
double loss_ueo_sample(const Matrix& probs, std::span<const double> w, const LossConfig& cfg);
double loss_entmin(const Matrix& probs);
double loss_infomax(const Matrix& probs);

/// 1 for labels in the predefined list, 0 otherwise.
std::vector<double> oracle_weights(std::span<const std::int32_t> labels, const LabelSet& predefined);

/// Dispatches on cfg.method. `w` is ignored by entmin and infomax.
double loss_value(const LossConfig& cfg, const Matrix& probs, std::span<const double> w);

/// dL/dlogits for the selected loss, treating w as a constant.
Matrix loss_logit_gradient(const LossConfig& cfg, const Matrix& probs, std::span<const double> w);

struct LossGradient {
  double loss = 0.0;
  AdapterGradient grad;
  Matrix probs;  // predictions the gradient was taken at
};

/// Loss and its analytic gradient w.r.t. (scale, shift, context).
/// Throws NumericalError naming the parameter group on non-finite output.
LossGradient grad(const LossConfig& cfg, const ModelState& state, const Matrix& batch,
                  std::span<const double> w);

}  // namespace ueo
