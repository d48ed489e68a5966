// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include <json.hpp>

#include "ueo/embedding_cache.hpp"

namespace ueo {

/// Synthetic stand-in for a real embedding dataset. Class means are random
/// unit vectors; the target domain (both training pool and test set) is the
/// source geometry rotated by `shift_angle` inside a random 2-plane, plus an
/// optional common offset vector. Prototypes stay in the source geometry.
struct SynthConfig {
  std::uint32_t d = 64;
  std::uint32_t n_classes = 10;
  std::uint32_t per_class = 50;
  std::uint32_t test_per_class = 0;  // 0 = same as per_class
  double noise_sigma = 0.05;
  double shift_angle = 0.0;
  double prototype_noise = 0.0;  // perturbation of prototypes away from the class means
  double domain_noise = 0.0;     // extra isotropic noise on target-domain samples
  double domain_offset = 0.0;    // norm of a shared offset added to every target-domain sample
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  EmbeddingCache train;
  EmbeddingCache test;
  EmbeddingCache prototypes;
};

SynthData generate(const SynthConfig& config);

/// Applies the plane rotation x -> x + (cos a - 1)(p e1 + q e2) + sin a (p e2 - q e1),
/// with p = <x, e1>, q = <x, e2>, to `x` in place. e1, e2 must be orthonormal.
void rotate_in_plane(std::span<double> x, std::span<const double> e1, std::span<const double> e2,
                     double angle);

nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

}  // namespace ueo
