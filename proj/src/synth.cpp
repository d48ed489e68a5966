// SPDX-License-Identifier: Apache-2.0
#include "ueo/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "ueo/errors.hpp"

namespace ueo {
namespace {

using Rng = std::mt19937_64;

std::vector<double> gaussian_vector(Rng& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d);
  for (auto& x : v) x = normal(rng);
  return v;
}

void normalize_in_place(std::vector<double>& v) {
  const double r = norm2(v);
  if (r == 0.0) throw NumericalError("synth: zero vector cannot be normalized");
  for (auto& x : v) x /= r;
}

std::vector<double> random_unit(Rng& rng, std::size_t d) {
  auto v = gaussian_vector(rng, d);
  normalize_in_place(v);
  return v;
}

EmbeddingCache empty_cache(const SynthConfig& cfg, const char* source) {
  EmbeddingCache c;
  c.d = cfg.d;
  for (std::uint32_t i = 0; i < cfg.n_classes; ++i) c.class_names.push_back("class_" + std::to_string(i));
  c.source = source;
  c.normalized = true;
  return c;
}

void append_row(EmbeddingCache& c, const std::vector<double>& v, std::int32_t label) {
  for (double x : v) c.features.push_back(static_cast<float>(x));
  c.labels.push_back(label);
  ++c.n;
}

}  // namespace

void SynthConfig::validate() const {
  if (d < 2) throw ValidationError("synth: d must be >= 2");
  if (n_classes < 2) throw ValidationError("synth: n_classes must be >= 2");
  if (per_class < 1) throw ValidationError("synth: per_class must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ValidationError("synth: noise_sigma must be >= 0");
  if (!(shift_angle >= 0.0 && shift_angle < std::numbers::pi))
    throw ValidationError("synth: shift_angle must lie in [0, pi)");
  if (!(prototype_noise >= 0.0) || !(domain_noise >= 0.0) || !(domain_offset >= 0.0))
    throw ValidationError("synth: noise levels must be >= 0");
}

void rotate_in_plane(std::span<double> x, std::span<const double> e1, std::span<const double> e2,
                     double angle) {
  const double p = dot(x, e1);
  const double q = dot(x, e2);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double dp = (c - 1.0) * p - s * q;
  const double dq = s * p + (c - 1.0) * q;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += dp * e1[i] + dq * e2[i];
}

SynthData generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t d = config.d;

  std::vector<std::vector<double>> means;
  for (std::uint32_t c = 0; c < config.n_classes; ++c) means.push_back(random_unit(rng, d));

  // Rotation plane: Gram-Schmidt on two gaussian draws.
  auto e1 = random_unit(rng, d);
  auto e2 = gaussian_vector(rng, d);
  const double proj = dot(e2, e1);
  for (std::size_t i = 0; i < d; ++i) e2[i] -= proj * e1[i];
  normalize_in_place(e2);
  const auto offset_dir = random_unit(rng, d);

  SynthData out{empty_cache(config, "synth:train"), empty_cache(config, "synth:test"),
                empty_cache(config, "synth:prototypes")};

  for (std::uint32_t c = 0; c < config.n_classes; ++c) {
    auto proto = means[c];
    if (config.prototype_noise > 0.0) {
      const auto g = gaussian_vector(rng, d);
      for (std::size_t i = 0; i < d; ++i) proto[i] += config.prototype_noise * g[i];
      normalize_in_place(proto);
    }
    append_row(out.prototypes, proto, static_cast<std::int32_t>(c));
  }

  auto draw_pool = [&](EmbeddingCache& cache, std::uint32_t per_class) {
    for (std::uint32_t c = 0; c < config.n_classes; ++c) {
      for (std::uint32_t k = 0; k < per_class; ++k) {
        auto v = means[c];
        if (config.noise_sigma > 0.0) {
          const auto g = gaussian_vector(rng, d);
          for (std::size_t i = 0; i < d; ++i) v[i] += config.noise_sigma * g[i];
        }
        if (config.domain_noise > 0.0) {
          const auto g = gaussian_vector(rng, d);
          for (std::size_t i = 0; i < d; ++i) v[i] += config.domain_noise * g[i];
        }
        if (config.domain_offset > 0.0)
          for (std::size_t i = 0; i < d; ++i) v[i] += config.domain_offset * offset_dir[i];
        if (config.shift_angle > 0.0) rotate_in_plane(v, e1, e2, config.shift_angle);
        normalize_in_place(v);
        append_row(cache, v, static_cast<std::int32_t>(c));
      }
    }
  };
  draw_pool(out.train, config.per_class);
  draw_pool(out.test, config.test_per_class == 0 ? config.per_class : config.test_per_class);
  return out;
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"d", c.d},
          {"n_classes", c.n_classes},
          {"per_class", c.per_class},
          {"test_per_class", c.test_per_class},
          {"noise_sigma", c.noise_sigma},
          {"shift_angle", c.shift_angle},
          {"prototype_noise", c.prototype_noise},
          {"domain_noise", c.domain_noise},
          {"domain_offset", c.domain_offset},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.d = j.value("d", c.d);
    c.n_classes = j.value("n_classes", c.n_classes);
    c.per_class = j.value("per_class", c.per_class);
    c.test_per_class = j.value("test_per_class", c.test_per_class);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.shift_angle = j.value("shift_angle", c.shift_angle);
    c.prototype_noise = j.value("prototype_noise", c.prototype_noise);
    c.domain_noise = j.value("domain_noise", c.domain_noise);
    c.domain_offset = j.value("domain_offset", c.domain_offset);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("SynthConfig JSON: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace ueo
