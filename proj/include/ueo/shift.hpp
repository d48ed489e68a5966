// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ueo/embedding_cache.hpp"

namespace ueo {

using LabelSet = std::vector<std::int32_t>;  // sorted, unique

enum class ShiftKind { kClosed, kPartial, kOpen, kOpenPartial };

std::string_view to_string(ShiftKind kind);
ShiftKind parse_shift_kind(std::string_view name);

/// Label spaces of one category-shift scenario:
///   predefined: classes the model is asked to recognise
///   train:      classes present in the unlabeled training pool
///   eval:       classes present in the test set
struct ShiftSpec {
  LabelSet predefined;
  LabelSet train;
  LabelSet eval;

  /// Throws ValidationError unless all three sets are non-empty, sorted,
  /// unique, and predefined, train are both subsets of eval.
  void validate() const;

  /// Which of the four scenarios the sets describe.
  ShiftKind kind() const;

  friend bool operator==(const ShiftSpec&, const ShiftSpec&) = default;
};

LabelSet label_range(std::int32_t begin, std::int32_t end);
LabelSet set_union(const LabelSet& a, const LabelSet& b);
LabelSet set_intersection(const LabelSet& a, const LabelSet& b);
LabelSet set_difference(const LabelSet& a, const LabelSet& b);
bool is_subset(const LabelSet& a, const LabelSet& b);
bool contains(const LabelSet& s, std::int32_t label);

/// Contiguous-range construction:
///   predefined = [0, n_predefined), eval = [0, n_eval)
///   closed:       train = [0, n_predefined)
///   partial:      train = [0, n_predefined - n_drop_train)
///   open:         train = [0, n_predefined + n_extra_train)
///   open-partial: train = [0, n_predefined - n_drop_train) U [n_predefined, n_predefined + n_extra_train)
ShiftSpec make_shift_spec(ShiftKind kind, std::int32_t n_predefined, std::int32_t n_eval,
                          std::int32_t n_extra_train, std::int32_t n_drop_train);

/// Rows whose label lies in spec.train, original order preserved.
EmbeddingCache select_training_subset(const EmbeddingCache& cache, const ShiftSpec& spec);

/// {"L_p":[...], "L_u":[...], "L_e":[...]}
nlohmann::json to_json(const ShiftSpec& spec);
ShiftSpec shift_spec_from_json(const nlohmann::json& j);

}  // namespace ueo
