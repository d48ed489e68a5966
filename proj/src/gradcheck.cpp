// SPDX-License-Identifier: Apache-2.0
#include "ueo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ueo {

GradCheckInstance random_gradcheck_instance(std::uint64_t seed, LossMethod method) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](int lo, int hi) {
    return static_cast<std::size_t>(std::uniform_int_distribution<int>(lo, hi)(rng));
  };

  const std::size_t n = pick(1, 8);
  const std::size_t c_count = pick(2, 5);
  const std::size_t d = pick(4, 16);
  const std::size_t m = pick(0, 3);
  const std::size_t k = m == 0 ? 0 : std::min<std::size_t>(pick(1, 4), d / m);

  // Prototypes are small perturbations of a shared direction so that the
  // logits (cosine / 0.01) stay O(1) and the softmax is not saturated.
  const double spread = 0.005 + 0.045 * unit(rng);
  std::vector<double> common(d);
  for (auto& v : common) v = normal(rng);
  const double cn = norm2(common);
  Matrix base(c_count, d);
  for (std::size_t c = 0; c < c_count; ++c)
    for (std::size_t i = 0; i < d; ++i) base(c, i) = common[i] / cn + spread * normal(rng);

  GradCheckInstance inst;
  const std::uint64_t seed_u = rng();
  inst.state = ModelState::initial(ClassHead::build(std::move(base), m, k, seed_u));
  auto& a = inst.state.adapter;
  for (auto& s : a.scale) s = 1.0 + 0.2 * normal(rng);
  for (auto& s : a.shift) s = 0.1 * normal(rng);
  for (auto& s : a.context.data()) s = 0.05 * normal(rng);

  inst.batch = Matrix(n, d);
  for (auto& v : inst.batch.data()) v = normal(rng);

  inst.weights.resize(n);
  for (auto& w : inst.weights) {
    w = method == LossMethod::kUeoOracle ? (unit(rng) < 0.6 ? 1.0 : 0.0) : 0.05 + 0.95 * unit(rng);
  }
  inst.beta = 0.2 + 1.8 * unit(rng);
  return inst;
}

namespace {

using Real = long double;

Real entropy_ld(const std::vector<Real>& p) {
  Real h = 0;
  for (Real v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

Real phi_ld(WeightFn fn, Real w) {
  switch (fn) {
    case WeightFn::kInv: return 1 / w;
    case WeightFn::kInvSqrt: return std::sqrt(1 / w);
    case WeightFn::kInvSq: return 1 / (w * w);
    case WeightFn::kOneMinus: return 1 - w;
    case WeightFn::kOneMinusSqrt: return std::sqrt(1 - w);
    case WeightFn::kOneMinusSq: return (1 - w) * (1 - w);
  }
  return 0;
}

}  // namespace

long double reference_loss(const LossConfig& cfg, const ModelState& state, const Matrix& batch,
                           std::span<const double> w) {
  const auto& head = state.head;
  const auto& ad = state.adapter;
  const std::size_t n = batch.rows(), d = head.dim(), cc = head.num_classes();
  const std::size_t p = ad.m * ad.k;

  std::vector<std::vector<Real>> protos(cc, std::vector<Real>(d));
  for (std::size_t c = 0; c < cc; ++c) {
    Real sq = 0;
    for (std::size_t i = 0; i < d; ++i) {
      Real q = head.base_prototypes(c, i);
      for (std::size_t j = 0; j < p; ++j)
        q += static_cast<Real>(head.projection(i, j)) * ad.context.data()[j];
      protos[c][i] = q;
      sq += q * q;
    }
    for (auto& v : protos[c]) v /= std::sqrt(sq);
  }

  std::vector<std::vector<Real>> probs(n, std::vector<Real>(cc));
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<Real> u(d);
    Real sq = 0;
    for (std::size_t i = 0; i < d; ++i) {
      u[i] = static_cast<Real>(ad.scale[i]) * batch(r, i) + ad.shift[i];
      sq += u[i] * u[i];
    }
    const Real nu = std::sqrt(sq);
    std::vector<Real> logit(cc);
    Real mx = -INFINITY;
    for (std::size_t c = 0; c < cc; ++c) {
      Real s = 0;
      for (std::size_t i = 0; i < d; ++i) s += u[i] / nu * protos[c][i];
      logit[c] = s / head.tau;
      mx = std::max(mx, logit[c]);
    }
    Real z = 0;
    for (std::size_t c = 0; c < cc; ++c) z += std::exp(logit[c] - mx);
    for (std::size_t c = 0; c < cc; ++c) probs[r][c] = std::exp(logit[c] - mx) / z;
  }

  std::vector<Real> fw(n), rw(n);
  if (cfg.method == LossMethod::kEntMin || cfg.method == LossMethod::kInfoMax) {
    std::fill(fw.begin(), fw.end(), Real(1) / n);
    rw = fw;
  } else {
    Real sf = 0, sr = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const Real wc = std::clamp<Real>(w[r], cfg.eps_w, 1);
      fw[r] = wc;
      rw[r] = phi_ld(cfg.weight_fn, wc);
      sf += fw[r];
      sr += rw[r];
    }
    for (std::size_t r = 0; r < n; ++r) {
      fw[r] /= sf;
      rw[r] = sr > 0 ? rw[r] / sr : Real(1) / n;
    }
  }

  Real first = 0, second = 0;
  std::vector<Real> pbar(cc, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const Real h = entropy_ld(probs[r]);
    first += fw[r] * h;
    second += rw[r] * h;
    for (std::size_t c = 0; c < cc; ++c) pbar[c] += rw[r] * probs[r][c];
  }
  switch (cfg.method) {
    case LossMethod::kEntMin: return first;
    case LossMethod::kInfoMax: return first - entropy_ld(pbar);
    case LossMethod::kUeoSample: return first - cfg.beta * second;
    case LossMethod::kUeo:
    case LossMethod::kUeoOracle: return first - cfg.beta * entropy_ld(pbar);
  }
  return 0;
}

GradCheckEntry check_instance(const LossConfig& cfg, const GradCheckInstance& inst,
                              const GradCheckOptions& options) {
  GradCheckEntry entry{cfg.method, cfg.weight_fn, 0, 0, 0.0, {}};
  entry.trials = 1;
  LossGradient analytic = grad(cfg, inst.state, inst.batch, inst.weights);
  if (options.corrupt_analytic) {
    for (auto& g : analytic.grad.scale) g = g * 1.01 + 1e-3;
    for (auto& g : analytic.grad.shift) g = g * 1.01 + 1e-3;
    for (auto& g : analytic.grad.context.data()) g = g * 1.01 + 1e-3;
  }

  ModelState probe = inst.state;
  auto eval = [&] { return reference_loss(cfg, probe, inst.batch, inst.weights); };
  auto check_group = [&](std::vector<double>& params, const std::vector<double>& g,
                         const char* group) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + options.step;
      const long double up = eval();
      params[i] = saved - options.step;
      const long double down = eval();
      params[i] = saved;
      // The perturbed parameter is what the double path would see.
      const long double h2 = static_cast<long double>(saved + options.step) - (saved - options.step);
      const double numeric = static_cast<double>((up - down) / h2);
      const double denom = std::max({std::abs(g[i]), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(g[i] - numeric) / denom;
      ++entry.coordinates;
      if (rel > entry.max_rel_error || std::isnan(rel)) {
        entry.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        entry.worst_group = group;
      }
    }
  };
  check_group(probe.adapter.scale, analytic.grad.scale, "affine_scale");
  check_group(probe.adapter.shift, analytic.grad.shift, "affine_shift");
  check_group(probe.adapter.context.data(), analytic.grad.context.data(), "prompt");
  return entry;
}

GradCheckReport check_gradients(std::uint64_t seed, std::size_t trials,
                                const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;
  if (trials == 0) return report;
  std::mt19937_64 master(seed);
  for (auto method : kAllLossMethods) {
    for (auto fn : kAllWeightFns) {
      GradCheckEntry total{method, fn, 0, 0, 0.0, {}};
      for (std::size_t t = 0; t < trials; ++t) {
        const auto inst = random_gradcheck_instance(master(), method);
        LossConfig cfg{method, fn, inst.beta, 1e-6};
        const auto e = check_instance(cfg, inst, options);
        total.trials += 1;
        total.coordinates += e.coordinates;
        if (e.max_rel_error >= total.max_rel_error) {
          total.max_rel_error = e.max_rel_error;
          total.worst_group = e.worst_group;
        }
      }
      report.max_rel_error = std::max(report.max_rel_error, total.max_rel_error);
      report.entries.push_back(total);
    }
  }
  return report;
}

nlohmann::json to_json(const GradCheckReport& report) {
  nlohmann::ordered_json j;
  j["tolerance"] = report.tolerance;
  j["max_rel_error"] = report.max_rel_error;
  j["passed"] = report.passed();
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    nlohmann::ordered_json r;
    r["method"] = to_string(e.method);
    r["weight_fn"] = to_string(e.weight_fn);
    r["trials"] = e.trials;
    r["coordinates"] = e.coordinates;
    r["max_rel_error"] = e.max_rel_error;
    r["worst_group"] = e.worst_group;
    entries.push_back(r);
  }
  j["entries"] = entries;
  return j;
}

}  // namespace ueo
