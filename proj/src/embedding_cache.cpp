// SPDX-License-Identifier: Apache-2.0
#include "ueo/embedding_cache.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "ueo/errors.hpp"

namespace ueo {
namespace {

static_assert(std::endian::native == std::endian::little,
              "EMB1 I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void EmbeddingCache::validate() const {
  if (n < 1) throw ValidationError("cache: n must be >= 1");
  if (d < 1) throw ValidationError("cache: d must be >= 1");
  if (features.size() != static_cast<std::size_t>(n) * d)
    throw ValidationError("cache: features size != n*d");
  if (labels.size() != n) throw ValidationError("cache: labels size != n");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_names.size())
      throw ValidationError("cache: label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " out of range");
  }
  for (float f : features)
    if (!std::isfinite(f)) throw ValidationError("cache: non-finite feature entry");
}

Matrix EmbeddingCache::to_matrix() const {
  return Matrix(n, d, std::vector<double>(features.begin(), features.end()));
}

std::filesystem::path meta_path_for(const std::filesystem::path& cache_path) {
  auto p = cache_path;
  p.replace_filename(cache_path.stem().string() + ".meta.json");
  return p;
}

std::vector<std::uint8_t> encode_emb1(const EmbeddingCache& cache) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + cache.features.size() * 4 + cache.labels.size() * 4);
  out.insert(out.end(), std::begin(kEmbMagic), std::end(kEmbMagic));
  put_u32(out, kEmbVersion);
  put_u32(out, cache.n);
  put_u32(out, cache.d);
  for (float f : cache.features) put_u32(out, std::bit_cast<std::uint32_t>(f));
  for (std::int32_t l : cache.labels) put_u32(out, std::bit_cast<std::uint32_t>(l));
  return out;
}

EmbeddingCache decode_emb1(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEmbMagic, 4) != 0)
    throw FormatError("bad magic");
  if (bytes.size() < 16) throw FormatError("truncated header");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kEmbVersion)
    throw FormatError("unsupported version " + std::to_string(version));
  EmbeddingCache c;
  c.n = get_u32(bytes.data() + 8);
  c.d = get_u32(bytes.data() + 12);
  if (c.n == 0) throw FormatError("n must be >= 1");
  if (c.d == 0) throw FormatError("d must be >= 1");
  const std::uint64_t n_feat = static_cast<std::uint64_t>(c.n) * c.d;
  const std::uint64_t expected = 16 + 4 * n_feat + 4 * static_cast<std::uint64_t>(c.n);
  if (bytes.size() < expected)
    throw FormatError("truncated payload: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()));
  if (bytes.size() > expected)
    throw FormatError("trailing bytes after labels: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()));
  c.features.resize(n_feat);
  const std::uint8_t* p = bytes.data() + 16;
  for (auto& f : c.features) {
    f = std::bit_cast<float>(get_u32(p));
    if (!std::isfinite(f)) throw FormatError("features contain NaN/Inf");
    p += 4;
  }
  c.labels.resize(c.n);
  for (auto& l : c.labels) {
    l = std::bit_cast<std::int32_t>(get_u32(p));
    if (l < 0) throw FormatError("label " + std::to_string(l) + " out of range");
    p += 4;
  }
  return c;
}

void save_cache(const EmbeddingCache& cache, const std::filesystem::path& path) {
  cache.validate();
  const auto bytes = encode_emb1(cache);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  nlohmann::ordered_json meta;
  meta["class_names"] = cache.class_names;
  meta["source"] = cache.source;
  meta["normalized"] = cache.normalized;
  std::ofstream out(meta_path_for(path));
  out << meta.dump(2) << "\n";
}

EmbeddingCache load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  EmbeddingCache c = decode_emb1(bytes);

  const auto meta_file = meta_path_for(path);
  if (std::filesystem::exists(meta_file)) {
    nlohmann::json meta;
    try {
      std::ifstream min(meta_file);
      meta = nlohmann::json::parse(min);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("meta.json: " + std::string(e.what()));
    }
    if (!meta.contains("class_names") || !meta["class_names"].is_array())
      throw FormatError("meta.json: missing class_names");
    c.class_names = meta["class_names"].get<std::vector<std::string>>();
    c.source = meta.value("source", "");
    c.normalized = meta.value("normalized", false);
  } else {
    const auto max_label = *std::max_element(c.labels.begin(), c.labels.end());
    for (std::int32_t i = 0; i <= max_label; ++i) c.class_names.push_back(std::to_string(i));
  }
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    if (static_cast<std::size_t>(c.labels[i]) >= c.class_names.size())
      throw FormatError("label " + std::to_string(c.labels[i]) + " at row " + std::to_string(i) +
                        " out of range for " + std::to_string(c.class_names.size()) +
                        " class names");
  }
  return c;
}

}  // namespace ueo
