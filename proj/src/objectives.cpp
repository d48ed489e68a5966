// SPDX-License-Identifier: Apache-2.0
#include "ueo/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "ueo/errors.hpp"

namespace ueo {

std::string_view to_string(WeightFn fn) {
  switch (fn) {
    case WeightFn::kInv: return "inv";
    case WeightFn::kInvSqrt: return "inv_sqrt";
    case WeightFn::kInvSq: return "inv_sq";
    case WeightFn::kOneMinus: return "one_minus";
    case WeightFn::kOneMinusSqrt: return "one_minus_sqrt";
    case WeightFn::kOneMinusSq: return "one_minus_sq";
  }
  return "unknown";
}

std::string_view to_string(LossMethod method) {
  switch (method) {
    case LossMethod::kUeo: return "ueo";
    case LossMethod::kUeoSample: return "ueo_sample";
    case LossMethod::kEntMin: return "entmin";
    case LossMethod::kInfoMax: return "infomax";
    case LossMethod::kUeoOracle: return "ueo_oracle";
  }
  return "unknown";
}

WeightFn parse_weight_fn(std::string_view name) {
  for (auto fn : kAllWeightFns)
    if (to_string(fn) == name) return fn;
  throw ValidationError("unknown weight function '" + std::string(name) + "'");
}

LossMethod parse_loss_method(std::string_view name) {
  for (auto m : kAllLossMethods)
    if (to_string(m) == name) return m;
  throw ValidationError("unknown loss method '" + std::string(name) + "'");
}

void LossConfig::validate(std::size_t num_classes) const {
  if (!(beta >= 0.0)) throw ValidationError("loss: beta must be >= 0");
  if (!(eps_w > 0.0) || (num_classes > 0 && eps_w > 1.0 / static_cast<double>(num_classes)))
    throw ValidationError("loss: eps_w must lie in (0, 1/C]");
}

nlohmann::json to_json(const LossConfig& cfg) {
  nlohmann::ordered_json j;
  j["method"] = to_string(cfg.method);
  j["weight_fn"] = to_string(cfg.weight_fn);
  j["beta"] = cfg.beta;
  j["eps_w"] = cfg.eps_w;
  return j;
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  LossConfig cfg;
  try {
    if (j.contains("method")) cfg.method = parse_loss_method(j["method"].get<std::string>());
    if (j.contains("weight_fn")) cfg.weight_fn = parse_weight_fn(j["weight_fn"].get<std::string>());
    cfg.beta = j.value("beta", cfg.beta);
    cfg.eps_w = j.value("eps_w", cfg.eps_w);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("LossConfig JSON: ") + e.what());
  }
  cfg.validate(0);
  return cfg;
}

double apply_weight_fn(WeightFn fn, double w) {
  switch (fn) {
    case WeightFn::kInv: return 1.0 / w;
    case WeightFn::kInvSqrt: return std::sqrt(1.0 / w);
    case WeightFn::kInvSq: return (1.0 / w) * (1.0 / w);
    case WeightFn::kOneMinus: return std::max(0.0, 1.0 - w);
    case WeightFn::kOneMinusSqrt: return std::sqrt(std::max(0.0, 1.0 - w));
    case WeightFn::kOneMinusSq: return std::max(0.0, 1.0 - w) * std::max(0.0, 1.0 - w);
  }
  return 0.0;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v < 0.0) throw ValidationError("entropy: negative probability");
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::vector<double> normalized_weights(std::span<const double> w, WeightFn fn,
                                       WeightDirection direction, double eps_w) {
  if (w.empty()) throw ValidationError("normalized_weights: empty batch");
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (std::isnan(w[i])) throw ValidationError("normalized_weights: NaN weight");
    const double clipped = std::clamp(w[i], eps_w, 1.0);
    out[i] = direction == WeightDirection::kForward ? clipped : apply_weight_fn(fn, clipped);
  }
  double total = 0.0;
  for (double v : out) total += v;
  if (total == 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(w.size()));
    return out;
  }
  for (auto& v : out) v /= total;
  return out;
}

namespace {

void check_weights(const Matrix& probs, std::span<const double> w) {
  if (probs.rows() == 0) throw ValidationError("loss: empty batch");
  if (w.size() != probs.rows()) throw ValidationError("loss: weight count != batch size");
}

std::vector<double> uniform(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

// sum_i a_i H(p_i) - beta H(sum_i r_i p_i)
double two_term_marginal(const Matrix& probs, std::span<const double> a, std::span<const double> r,
                         double beta) {
  double first = 0.0;
  std::vector<double> pbar(probs.cols(), 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto p = probs.row(i);
    first += a[i] * entropy(p);
    for (std::size_t c = 0; c < p.size(); ++c) pbar[c] += r[i] * p[c];
  }
  return first - beta * entropy(pbar);
}

// d H(softmax(l)) / dl_c = -p_c (ln p_c + H)
void add_entropy_logit_grad(std::span<const double> p, double coeff, std::span<double> out) {
  if (coeff == 0.0) return;
  const double h = entropy(p);
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) out[c] -= coeff * p[c] * (std::log(p[c]) + h);
  }
}

// Logit gradient of  sum_i a_i H(p_i) - beta H(sum_i r_i p_i).
Matrix marginal_logit_grad(const Matrix& probs, std::span<const double> a,
                           std::span<const double> r, double beta) {
  const std::size_t n = probs.rows();
  const std::size_t c_count = probs.cols();
  Matrix out(n, c_count, 0.0);
  std::vector<double> pbar(c_count, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = probs.row(i);
    for (std::size_t c = 0; c < c_count; ++c) pbar[c] += r[i] * p[c];
  }
  std::vector<double> log_pbar(c_count);
  for (std::size_t c = 0; c < c_count; ++c) log_pbar[c] = pbar[c] > 0.0 ? std::log(pbar[c]) : 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    auto p = probs.row(i);
    auto g = out.row(i);
    add_entropy_logit_grad(p, a[i], g);
    if (beta == 0.0 || r[i] == 0.0) continue;
    // -beta dH(pbar)/dl_ic = beta r_i p_ic (ln pbar_c - sum_j p_ij ln pbar_j)
    double mean_log = 0.0;
    for (std::size_t c = 0; c < c_count; ++c) mean_log += p[c] * log_pbar[c];
    for (std::size_t c = 0; c < c_count; ++c)
      g[c] += beta * r[i] * p[c] * (log_pbar[c] - mean_log);
  }
  return out;
}

}  // namespace

double loss_ueo(const Matrix& probs, std::span<const double> w, const LossConfig& cfg) {
  check_weights(probs, w);
  const auto a = normalized_weights(w, cfg.weight_fn, WeightDirection::kForward, cfg.eps_w);
  const auto r = normalized_weights(w, cfg.weight_fn, WeightDirection::kReverse, cfg.eps_w);
  return two_term_marginal(probs, a, r, cfg.beta);
}

double loss_ueo_sample(const Matrix& probs, std::span<const double> w, const LossConfig& cfg) {
  check_weights(probs, w);
  const auto a = normalized_weights(w, cfg.weight_fn, WeightDirection::kForward, cfg.eps_w);
  const auto r = normalized_weights(w, cfg.weight_fn, WeightDirection::kReverse, cfg.eps_w);
  double first = 0.0;
  double second = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double h = entropy(probs.row(i));
    first += a[i] * h;
    second += r[i] * h;
  }
  return first - cfg.beta * second;
}

double loss_entmin(const Matrix& probs) {
  if (probs.rows() == 0) throw ValidationError("loss: empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) s += entropy(probs.row(i));
  return s / static_cast<double>(probs.rows());
}

double loss_infomax(const Matrix& probs) {
  if (probs.rows() == 0) throw ValidationError("loss: empty batch");
  const auto u = uniform(probs.rows());
  return two_term_marginal(probs, u, u, 1.0);
}

std::vector<double> oracle_weights(std::span<const std::int32_t> labels,
                                   const LabelSet& predefined) {
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) w[i] = contains(predefined, labels[i]) ? 1.0 : 0.0;
  return w;
}

double loss_value(const LossConfig& cfg, const Matrix& probs, std::span<const double> w) {
  switch (cfg.method) {
    case LossMethod::kUeo:
    case LossMethod::kUeoOracle: return loss_ueo(probs, w, cfg);
    case LossMethod::kUeoSample: return loss_ueo_sample(probs, w, cfg);
    case LossMethod::kEntMin: return loss_entmin(probs);
    case LossMethod::kInfoMax: return loss_infomax(probs);
  }
  throw ValidationError("unknown loss method");
}

Matrix loss_logit_gradient(const LossConfig& cfg, const Matrix& probs, std::span<const double> w) {
  const std::size_t n = probs.rows();
  if (n == 0) throw ValidationError("loss: empty batch");
  switch (cfg.method) {
    case LossMethod::kUeo:
    case LossMethod::kUeoOracle: {
      check_weights(probs, w);
      const auto a = normalized_weights(w, cfg.weight_fn, WeightDirection::kForward, cfg.eps_w);
      const auto r = normalized_weights(w, cfg.weight_fn, WeightDirection::kReverse, cfg.eps_w);
      return marginal_logit_grad(probs, a, r, cfg.beta);
    }
    case LossMethod::kInfoMax: {
      const auto u = uniform(n);
      return marginal_logit_grad(probs, u, u, 1.0);
    }
    case LossMethod::kUeoSample: {
      check_weights(probs, w);
      const auto a = normalized_weights(w, cfg.weight_fn, WeightDirection::kForward, cfg.eps_w);
      const auto r = normalized_weights(w, cfg.weight_fn, WeightDirection::kReverse, cfg.eps_w);
      Matrix out(n, probs.cols(), 0.0);
      for (std::size_t i = 0; i < n; ++i)
        add_entropy_logit_grad(probs.row(i), a[i] - cfg.beta * r[i], out.row(i));
      return out;
    }
    case LossMethod::kEntMin: {
      Matrix out(n, probs.cols(), 0.0);
      const double coeff = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) add_entropy_logit_grad(probs.row(i), coeff, out.row(i));
      return out;
    }
  }
  throw ValidationError("unknown loss method");
}

LossGradient grad(const LossConfig& cfg, const ModelState& state, const Matrix& batch,
                  std::span<const double> w) {
  const Forward fwd = forward(state, batch);
  LossGradient out;
  out.loss = loss_value(cfg, fwd.probs, w);
  if (!std::isfinite(out.loss)) throw NumericalError("non-finite loss");
  const Matrix dlogits = loss_logit_gradient(cfg, fwd.probs, w);
  out.grad = backward(state, batch, fwd, dlogits);
  out.probs = fwd.probs;
  auto check = [](std::span<const double> v, const char* group) {
    for (double x : v)
      if (!std::isfinite(x)) throw NumericalError(std::string("non-finite gradient in ") + group);
  };
  check(out.grad.scale, "affine_scale");
  check(out.grad.shift, "affine_shift");
  check(out.grad.context.data(), "prompt");
  return out;
}

}  // namespace ueo
