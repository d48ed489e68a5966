// SPDX-License-Identifier: Apache-2.0
#include "ueo/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ueo/errors.hpp"

namespace ueo {
namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw ValidationError(std::string(what) + " contains non-finite entries");
}

}  // namespace

AdapterParams AdapterParams::identity(std::size_t d, std::size_t m, std::size_t k,
                                      std::uint64_t seed_u) {
  AdapterParams a;
  a.scale.assign(d, 1.0);
  a.shift.assign(d, 0.0);
  a.context = Matrix(m, k, 0.0);
  a.m = m;
  a.k = k;
  a.seed_u = seed_u;
  return a;
}

bool AdapterParams::is_identity() const {
  return std::all_of(scale.begin(), scale.end(), [](double s) { return s == 1.0; }) &&
         std::all_of(shift.begin(), shift.end(), [](double s) { return s == 0.0; }) &&
         std::all_of(context.data().begin(), context.data().end(),
                     [](double s) { return s == 0.0; });
}

void AdapterParams::validate() const {
  if (scale.size() != shift.size()) throw ValidationError("adapter: scale/shift size mismatch");
  if (context.rows() != m || context.cols() != k)
    throw ValidationError("adapter: context must be m x k");
  check_finite(scale, "adapter scale");
  check_finite(shift, "adapter shift");
  check_finite(context.data(), "adapter context");
}

Matrix orthonormal_projection(std::size_t d, std::size_t cols, std::uint64_t seed) {
  if (cols > d)
    throw ValidationError("projection: m*k = " + std::to_string(cols) + " exceeds d = " +
                          std::to_string(d));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Columns built by modified Gram-Schmidt, stored column-major then transposed.
  std::vector<std::vector<double>> basis;
  while (basis.size() < cols) {
    std::vector<double> v(d);
    for (auto& x : v) x = normal(rng);
    for (const auto& b : basis) {
      const double p = dot(v, b);
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * b[i];
    }
    const double r = norm2(v);
    if (r < 1e-8) continue;
    for (auto& x : v) x /= r;
    basis.push_back(std::move(v));
  }
  Matrix u(d, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < d; ++i) u(i, j) = basis[j][i];
  return u;
}

ClassHead ClassHead::build(Matrix base_prototypes, std::size_t m, std::size_t k,
                           std::uint64_t seed_u, double tau) {
  ClassHead h;
  h.projection = orthonormal_projection(base_prototypes.cols(), m * k, seed_u);
  h.base_prototypes = std::move(base_prototypes);
  h.tau = tau;
  h.m = m;
  h.k = k;
  h.seed_u = seed_u;
  h.validate();
  return h;
}

void ClassHead::validate() const {
  if (num_classes() < 2) throw ValidationError("head: need at least 2 classes");
  if (!(tau > 0.0)) throw ValidationError("head: tau must be > 0");
  if (projection.rows() != dim()) throw ValidationError("head: projection rows != d");
  if (projection.cols() != m * k) throw ValidationError("head: projection width != m*k");
  check_finite(base_prototypes.data(), "base prototypes");
}

ModelState ModelState::reference(const ClassHead& head) {
  ModelState s{head, AdapterParams::identity(head.dim(), head.m, head.k, head.seed_u), true};
  s.validate();
  return s;
}

ModelState ModelState::initial(const ClassHead& head) {
  ModelState s = reference(head);
  s.frozen_reference = false;
  return s;
}

void ModelState::validate() const {
  head.validate();
  adapter.validate();
  if (adapter.dim() != head.dim()) throw ValidationError("state: adapter dimension != head dimension");
  if (adapter.m != head.m || adapter.k != head.k || adapter.seed_u != head.seed_u)
    throw ValidationError("state: adapter prompt shape or seed_U does not match the head");
  if (frozen_reference && !adapter.is_identity())
    throw ValidationError("state: frozen reference must carry the identity adapter");
}

nlohmann::json to_json(const HeadConfig& cfg) {
  nlohmann::ordered_json j;
  j["prompt_length"] = cfg.prompt_length;
  j["context_dim"] = cfg.context_dim;
  j["seed_U"] = cfg.seed_u;
  j["tau"] = cfg.tau;
  return j;
}

HeadConfig head_config_from_json(const nlohmann::json& j) {
  HeadConfig cfg;
  try {
    cfg.prompt_length = j.value("prompt_length", cfg.prompt_length);
    cfg.context_dim = j.value("context_dim", cfg.context_dim);
    cfg.seed_u = j.value("seed_U", cfg.seed_u);
    cfg.tau = j.value("tau", cfg.tau);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("head JSON: ") + e.what());
  }
  return cfg;
}

ClassHead build_head(const EmbeddingCache& prototypes, const LabelSet& predefined,
                     const HeadConfig& cfg) {
  Matrix base(predefined.size(), prototypes.d);
  for (std::size_t c = 0; c < predefined.size(); ++c) {
    const auto it = std::find(prototypes.labels.begin(), prototypes.labels.end(), predefined[c]);
    if (it == prototypes.labels.end())
      throw ValidationError("prototype cache has no row for class " + std::to_string(predefined[c]));
    auto src = prototypes.row(static_cast<std::size_t>(it - prototypes.labels.begin()));
    std::copy(src.begin(), src.end(), base.row(c).begin());
  }
  const std::size_t k = cfg.prompt_length == 0 ? 0 : cfg.context_dim;
  return ClassHead::build(std::move(base), cfg.prompt_length, k, cfg.seed_u, cfg.tau);
}

Matrix text_prototypes(const ClassHead& head, const AdapterParams& adapter) {
  const std::size_t c_count = head.num_classes();
  const std::size_t d = head.dim();
  const std::size_t p = adapter.m * adapter.k;
  if (head.projection.cols() != p || adapter.dim() != d)
    throw ValidationError("text_prototypes: shape mismatch");

  // offset = U * vec(context); vec is row-major flattening of the m x k block.
  std::vector<double> offset(d, 0.0);
  const auto& v = adapter.context.data();
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += head.projection(i, j) * v[j];
    offset[i] = s;
  }

  Matrix out(c_count, d);
  for (std::size_t c = 0; c < c_count; ++c) {
    auto q = out.row(c);
    auto b = head.base_prototypes.row(c);
    for (std::size_t i = 0; i < d; ++i) q[i] = b[i] + offset[i];
    const double r = norm2(q);
    if (r == 0.0) throw NumericalError("degenerate prototype for class " + std::to_string(c));
    for (auto& x : q) x /= r;
  }
  return out;
}

std::vector<double> image_forward(const AdapterParams& adapter, std::span<const double> x) {
  if (x.size() != adapter.dim()) throw ValidationError("image_forward: dimension mismatch");
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw ValidationError("image_forward: non-finite input");
    z[i] = adapter.scale[i] * x[i] + adapter.shift[i];
  }
  const double r = norm2(z);
  if (r == 0.0) throw NumericalError("degenerate image embedding: affine output is zero");
  for (auto& v : z) v /= r;
  return z;
}

Forward forward(const ModelState& state, const Matrix& batch) {
  const auto& head = state.head;
  const auto& adapter = state.adapter;
  const std::size_t n = batch.rows();
  const std::size_t d = head.dim();
  const std::size_t c_count = head.num_classes();
  if (batch.cols() != d)
    throw ValidationError("batch dimension " + std::to_string(batch.cols()) + " != model dimension " +
                          std::to_string(d));

  Forward f;
  f.pre_image = Matrix(n, d);
  f.image = Matrix(n, d);
  f.image_norm.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto x = batch.row(r);
    auto z = f.pre_image.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::isfinite(x[i])) throw ValidationError("forward: non-finite input");
      z[i] = adapter.scale[i] * x[i] + adapter.shift[i];
    }
    const double nz = norm2(z);
    if (nz == 0.0) throw NumericalError("degenerate image embedding at row " + std::to_string(r));
    f.image_norm[r] = nz;
    auto u = f.image.row(r);
    for (std::size_t i = 0; i < d; ++i) u[i] = z[i] / nz;
  }

  const std::size_t p = adapter.m * adapter.k;
  std::vector<double> offset(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += head.projection(i, j) * adapter.context.data()[j];
    offset[i] = s;
  }
  f.pre_proto = Matrix(c_count, d);
  f.proto = Matrix(c_count, d);
  f.proto_norm.resize(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    auto q = f.pre_proto.row(c);
    auto b = head.base_prototypes.row(c);
    for (std::size_t i = 0; i < d; ++i) q[i] = b[i] + offset[i];
    const double nq = norm2(q);
    if (nq == 0.0) throw NumericalError("degenerate prototype for class " + std::to_string(c));
    f.proto_norm[c] = nq;
    auto t = f.proto.row(c);
    for (std::size_t i = 0; i < d; ++i) t[i] = q[i] / nq;
  }

  f.logits = Matrix(n, c_count);
  f.probs = Matrix(n, c_count);
  for (std::size_t r = 0; r < n; ++r) {
    auto l = f.logits.row(r);
    for (std::size_t c = 0; c < c_count; ++c) l[c] = dot(f.image.row(r), f.proto.row(c)) / head.tau;
    const double mx = *std::max_element(l.begin(), l.end());
    auto p_row = f.probs.row(r);
    double z = 0.0;
    for (std::size_t c = 0; c < c_count; ++c) {
      p_row[c] = std::exp(l[c] - mx);
      z += p_row[c];
    }
    for (auto& v : p_row) v /= z;
  }
  return f;
}

Matrix predict_probs(const ModelState& state, const Matrix& batch) {
  return forward(state, batch).probs;
}

std::vector<double> mcm_score(const Matrix& probs) {
  std::vector<double> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    out[r] = *std::max_element(row.begin(), row.end());
  }
  return out;
}

std::vector<std::size_t> predict_class(const Matrix& probs) {
  std::vector<std::size_t> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    // max_element returns the first maximum, which gives the lowest-index tie-break.
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double AdapterGradient::max_abs() const {
  double m = 0.0;
  for (double v : scale) m = std::max(m, std::abs(v));
  for (double v : shift) m = std::max(m, std::abs(v));
  for (double v : context.data()) m = std::max(m, std::abs(v));
  return m;
}

AdapterGradient backward(const ModelState& state, const Matrix& batch, const Forward& fwd,
                         const Matrix& dlogits) {
  const auto& head = state.head;
  const std::size_t n = batch.rows();
  const std::size_t d = head.dim();
  const std::size_t c_count = head.num_classes();
  const double inv_tau = 1.0 / head.tau;

  AdapterGradient g;
  g.scale.assign(d, 0.0);
  g.shift.assign(d, 0.0);
  g.context = Matrix(state.adapter.m, state.adapter.k, 0.0);

  Matrix d_proto(c_count, d, 0.0);
  std::vector<double> d_image(d);
  for (std::size_t r = 0; r < n; ++r) {
    auto dl = dlogits.row(r);
    auto u = fwd.image.row(r);
    std::fill(d_image.begin(), d_image.end(), 0.0);
    for (std::size_t c = 0; c < c_count; ++c) {
      const double a = dl[c] * inv_tau;
      if (a == 0.0) continue;
      auto t = fwd.proto.row(c);
      auto dt = d_proto.row(c);
      for (std::size_t i = 0; i < d; ++i) {
        d_image[i] += a * t[i];
        dt[i] += a * u[i];
      }
    }
    // Through u = z/|z|: dz = (du - u <u, du>) / |z|.
    const double radial = dot(u, d_image);
    const double inv_norm = 1.0 / fwd.image_norm[r];
    auto x = batch.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const double dz = (d_image[i] - u[i] * radial) * inv_norm;
      g.scale[i] += dz * x[i];
      g.shift[i] += dz;
    }
  }

  const std::size_t p = state.adapter.m * state.adapter.k;
  if (p > 0) {
    std::vector<double> d_offset(d, 0.0);
    for (std::size_t c = 0; c < c_count; ++c) {
      auto t = fwd.proto.row(c);
      auto dt = d_proto.row(c);
      const double radial = dot(t, dt);
      const double inv_norm = 1.0 / fwd.proto_norm[c];
      for (std::size_t i = 0; i < d; ++i) d_offset[i] += (dt[i] - t[i] * radial) * inv_norm;
    }
    auto& dv = g.context.data();
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += head.projection(i, j) * d_offset[i];
      dv[j] = s;
    }
  }
  return g;
}

nlohmann::json to_json(const AdapterParams& a) {
  nlohmann::json ctx = nlohmann::json::array();
  for (std::size_t i = 0; i < a.m; ++i) {
    auto r = a.context.row(i);
    ctx.push_back(std::vector<double>(r.begin(), r.end()));
  }
  nlohmann::ordered_json j;
  j["scale"] = a.scale;
  j["shift"] = a.shift;
  j["context"] = ctx;
  j["m"] = a.m;
  j["k"] = a.k;
  j["seed_U"] = a.seed_u;
  return j;
}

AdapterParams adapter_from_json(const nlohmann::json& j) {
  AdapterParams a;
  try {
    a.scale = j.at("scale").get<std::vector<double>>();
    a.shift = j.at("shift").get<std::vector<double>>();
    a.m = j.at("m").get<std::size_t>();
    a.k = j.at("k").get<std::size_t>();
    a.seed_u = j.at("seed_U").get<std::uint64_t>();
    a.context = Matrix(a.m, a.k);
    const auto rows = j.at("context").get<std::vector<std::vector<double>>>();
    if (rows.size() != a.m) throw ValidationError("adapter JSON: context must have m rows");
    for (std::size_t i = 0; i < a.m; ++i) {
      if (rows[i].size() != a.k) throw ValidationError("adapter JSON: context rows must have k entries");
      std::copy(rows[i].begin(), rows[i].end(), a.context.row(i).begin());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("adapter JSON: ") + e.what());
  }
  a.validate();
  return a;
}

}  // namespace ueo
