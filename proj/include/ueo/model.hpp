// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "ueo/embedding_cache.hpp"
#include "ueo/matrix.hpp"
#include "ueo/shift.hpp"

namespace ueo {

inline constexpr double kDefaultTau = 0.01;
inline constexpr std::size_t kDefaultPromptLength = 4;

/// The whole trainable state: a channel-wise affine on image embeddings and
/// m shared prompt-context vectors of dimension k.
struct AdapterParams {
  std::vector<double> scale;  // d, init 1
  std::vector<double> shift;  // d, init 0
  Matrix context;             // m x k, init 0
  std::size_t m = kDefaultPromptLength;
  std::size_t k = 0;
  std::uint64_t seed_u = 0;  // seed of the frozen projection U

  static AdapterParams identity(std::size_t d, std::size_t m, std::size_t k, std::uint64_t seed_u);

  std::size_t dim() const { return scale.size(); }
  bool is_identity() const;
  void validate() const;

  friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

/// Frozen text side. Prototypes are T_c = normalize(b_c + U * vec(context)).
struct ClassHead {
  Matrix base_prototypes;  // C x d
  Matrix projection;       // d x (m*k), orthonormal columns
  double tau = kDefaultTau;
  std::size_t m = kDefaultPromptLength;
  std::size_t k = 0;
  std::uint64_t seed_u = 0;

  /// U is regenerated from seed_u; it is never stored.
  static ClassHead build(Matrix base_prototypes, std::size_t m, std::size_t k,
                         std::uint64_t seed_u, double tau = kDefaultTau);

  std::size_t num_classes() const { return base_prototypes.rows(); }
  std::size_t dim() const { return base_prototypes.cols(); }
  void validate() const;
};

struct ModelState {
  ClassHead head;
  AdapterParams adapter;
  bool frozen_reference = false;

  /// Untrained snapshot used to compute confidence weights.
  static ModelState reference(const ClassHead& head);
  /// Fresh trainable state; identical to reference() apart from the flag.
  static ModelState initial(const ClassHead& head);

  void validate() const;
};

struct HeadConfig {
  std::size_t prompt_length = kDefaultPromptLength;  // m; 0 disables the prompt surface
  std::size_t context_dim = 8;                       // k
  std::uint64_t seed_u = 0;
  double tau = kDefaultTau;
};

nlohmann::json to_json(const HeadConfig& cfg);
HeadConfig head_config_from_json(const nlohmann::json& j);

/// Head over the predefined classes: row i holds the prototype labelled
/// predefined[i]. Throws ValidationError if a predefined label has no row.
ClassHead build_head(const EmbeddingCache& prototypes, const LabelSet& predefined,
                     const HeadConfig& cfg);

/// d x cols matrix with orthonormal columns, deterministic in seed.
Matrix orthonormal_projection(std::size_t d, std::size_t cols, std::uint64_t seed);

/// Unit-normalized class prototypes, C x d.
Matrix text_prototypes(const ClassHead& head, const AdapterParams& adapter);

/// normalize(scale * x + shift).
std::vector<double> image_forward(const AdapterParams& adapter, std::span<const double> x);

/// Softmax over cosine similarity / tau; n x C, rows sum to 1.
Matrix predict_probs(const ModelState& state, const Matrix& batch);

/// Per-row maximum probability.
std::vector<double> mcm_score(const Matrix& probs);

/// Per-row argmax; ties go to the lowest index.
std::vector<std::size_t> predict_class(const Matrix& probs);

/// Intermediates of one forward pass, kept for the backward pass.
struct Forward {
  Matrix pre_image;        // z = scale*x + shift, n x d
  std::vector<double> image_norm;
  Matrix image;            // u = z/|z|
  Matrix pre_proto;        // q = b + U v, C x d
  std::vector<double> proto_norm;
  Matrix proto;            // T = q/|q|
  Matrix logits;           // <u, T>/tau
  Matrix probs;
};

Forward forward(const ModelState& state, const Matrix& batch);

struct AdapterGradient {
  std::vector<double> scale;
  std::vector<double> shift;
  Matrix context;

  double max_abs() const;
};

/// Pulls dL/dlogits back to the adapter parameters.
AdapterGradient backward(const ModelState& state, const Matrix& batch, const Forward& fwd,
                         const Matrix& dlogits);

nlohmann::json to_json(const AdapterParams& adapter);
AdapterParams adapter_from_json(const nlohmann::json& j);

}  // namespace ueo
