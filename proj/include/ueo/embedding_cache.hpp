// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ueo/matrix.hpp"

namespace ueo {

/// n labelled d-dimensional embeddings. Rows have arbitrary norm; storage is
/// float32 so that EMB1 round-trips are bit-exact.
///
/// Class prototype caches use the same layout with n = C and labels 0..C-1.
struct EmbeddingCache {
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  std::vector<float> features;  // n*d, row-major
  std::vector<std::int32_t> labels;
  std::vector<std::string> class_names;
  std::string source;
  bool normalized = false;

  std::span<const float> row(std::size_t i) const { return {features.data() + i * d, d}; }

  /// Throws ValidationError unless every invariant holds: n, d >= 1, sizes
  /// consistent, labels in [0, class_names.size()), all entries finite.
  void validate() const;

  /// Features widened to double.
  Matrix to_matrix() const;

  friend bool operator==(const EmbeddingCache&, const EmbeddingCache&) = default;
};

inline constexpr char kEmbMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kEmbVersion = 1;

/// Sidecar path for a cache file: "<dir>/<stem>.meta.json".
std::filesystem::path meta_path_for(const std::filesystem::path& cache_path);

/// Writes the EMB1 payload and its sidecar.
void save_cache(const EmbeddingCache& cache, const std::filesystem::path& path);

/// Reads an EMB1 file. The sidecar is optional; without it class names are
/// synthesized as "0".."max_label".
EmbeddingCache load_cache(const std::filesystem::path& path);

/// Parses raw EMB1 bytes (no sidecar). Throws FormatError naming the field.
EmbeddingCache decode_emb1(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_emb1(const EmbeddingCache& cache);

}  // namespace ueo
