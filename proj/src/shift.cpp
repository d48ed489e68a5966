// SPDX-License-Identifier: Apache-2.0
#include "ueo/shift.hpp"

#include <algorithm>
#include <iterator>

#include "ueo/errors.hpp"

namespace ueo {

std::string_view to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::kClosed: return "closed";
    case ShiftKind::kPartial: return "partial";
    case ShiftKind::kOpen: return "open";
    case ShiftKind::kOpenPartial: return "open-partial";
  }
  return "unknown";
}

ShiftKind parse_shift_kind(std::string_view name) {
  if (name == "closed") return ShiftKind::kClosed;
  if (name == "partial") return ShiftKind::kPartial;
  if (name == "open") return ShiftKind::kOpen;
  if (name == "open-partial" || name == "open_partial") return ShiftKind::kOpenPartial;
  throw ValidationError("unknown shift kind '" + std::string(name) + "'");
}

LabelSet label_range(std::int32_t begin, std::int32_t end) {
  LabelSet s;
  for (std::int32_t i = begin; i < end; ++i) s.push_back(i);
  return s;
}

LabelSet set_union(const LabelSet& a, const LabelSet& b) {
  LabelSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

LabelSet set_intersection(const LabelSet& a, const LabelSet& b) {
  LabelSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

LabelSet set_difference(const LabelSet& a, const LabelSet& b) {
  LabelSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool is_subset(const LabelSet& a, const LabelSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

bool contains(const LabelSet& s, std::int32_t label) {
  return std::binary_search(s.begin(), s.end(), label);
}

namespace {

void check_set(const LabelSet& s, const char* name) {
  if (s.empty()) throw ValidationError(std::string(name) + " must be non-empty");
  if (s.front() < 0) throw ValidationError(std::string(name) + " contains a negative label");
  if (std::adjacent_find(s.begin(), s.end(), std::greater_equal<>()) != s.end())
    throw ValidationError(std::string(name) + " must be sorted and unique");
}

}  // namespace

void ShiftSpec::validate() const {
  check_set(predefined, "L_p");
  check_set(train, "L_u");
  check_set(eval, "L_e");
  if (!is_subset(predefined, eval)) throw ValidationError("L_p must be a subset of L_e");
  if (!is_subset(train, eval)) throw ValidationError("L_u must be a subset of L_e");
}

ShiftKind ShiftSpec::kind() const {
  if (train == predefined) return ShiftKind::kClosed;
  if (is_subset(train, predefined)) return ShiftKind::kPartial;
  if (is_subset(predefined, train)) return ShiftKind::kOpen;
  if (set_intersection(train, predefined).empty())
    throw ValidationError("L_u and L_p are disjoint; no category-shift scenario applies");
  return ShiftKind::kOpenPartial;
}

ShiftSpec make_shift_spec(ShiftKind kind, std::int32_t n_predefined, std::int32_t n_eval,
                          std::int32_t n_extra_train, std::int32_t n_drop_train) {
  if (n_predefined < 1) throw ValidationError("n_p must be >= 1");
  if (n_eval < n_predefined) throw ValidationError("n_e must be >= n_p");
  if (n_extra_train < 0 || n_drop_train < 0)
    throw ValidationError("extra/drop counts must be non-negative");
  if (n_drop_train >= n_predefined)
    throw ValidationError("n_drop_train must leave at least one predefined class");
  if (n_predefined + n_extra_train > n_eval)
    throw ValidationError("n_p + n_extra_train exceeds n_e");

  const bool has_extra = n_extra_train > 0;
  const bool has_drop = n_drop_train > 0;
  switch (kind) {
    case ShiftKind::kClosed:
      if (has_extra || has_drop) throw ValidationError("closed shift takes no extra/drop classes");
      break;
    case ShiftKind::kPartial:
      if (!has_drop || has_extra)
        throw ValidationError("partial shift requires n_drop_train >= 1 and n_extra_train = 0");
      break;
    case ShiftKind::kOpen:
      if (!has_extra || has_drop)
        throw ValidationError("open shift requires n_extra_train >= 1 and n_drop_train = 0");
      break;
    case ShiftKind::kOpenPartial:
      if (!has_extra || !has_drop)
        throw ValidationError("open-partial shift requires n_extra_train >= 1 and n_drop_train >= 1");
      break;
  }

  ShiftSpec spec;
  spec.predefined = label_range(0, n_predefined);
  spec.eval = label_range(0, n_eval);
  spec.train = set_union(label_range(0, n_predefined - n_drop_train),
                         label_range(n_predefined, n_predefined + n_extra_train));
  spec.validate();
  return spec;
}

EmbeddingCache select_training_subset(const EmbeddingCache& cache, const ShiftSpec& spec) {
  EmbeddingCache out;
  out.d = cache.d;
  out.class_names = cache.class_names;
  out.source = cache.source;
  out.normalized = cache.normalized;
  for (std::size_t i = 0; i < cache.n; ++i) {
    if (!contains(spec.train, cache.labels[i])) continue;
    auto r = cache.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(cache.labels[i]);
  }
  out.n = static_cast<std::uint32_t>(out.labels.size());
  if (out.n == 0) throw ValidationError("no training samples in L_u");
  return out;
}

nlohmann::json to_json(const ShiftSpec& spec) {
  return {{"L_p", spec.predefined}, {"L_u", spec.train}, {"L_e", spec.eval}};
}

ShiftSpec shift_spec_from_json(const nlohmann::json& j) {
  ShiftSpec spec;
  try {
    spec.predefined = j.at("L_p").get<LabelSet>();
    spec.train = j.at("L_u").get<LabelSet>();
    spec.eval = j.at("L_e").get<LabelSet>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("ShiftSpec JSON: ") + e.what());
  }
  std::sort(spec.predefined.begin(), spec.predefined.end());
  std::sort(spec.train.begin(), spec.train.end());
  std::sort(spec.eval.begin(), spec.eval.end());
  spec.validate();
  return spec;
}

}  // namespace ueo
