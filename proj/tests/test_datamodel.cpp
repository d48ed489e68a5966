// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "split_golden.hpp"
#include "test_util.hpp"
#include "ueo/embedding_cache.hpp"
#include "ueo/errors.hpp"
#include "ueo/shift.hpp"

using namespace ueo;

namespace {

EmbeddingCache random_cache(std::mt19937_64& rng, std::uint32_t n, std::uint32_t d, std::size_t classes) {
  std::normal_distribution<float> normal(0.0f, 3.0f);
  std::uniform_int_distribution<std::int32_t> label(0, static_cast<std::int32_t>(classes) - 1);
  EmbeddingCache c;
  c.n = n;
  c.d = d;
  for (std::size_t i = 0; i < std::size_t{n} * d; ++i) c.features.push_back(normal(rng));
  for (std::uint32_t i = 0; i < n; ++i) c.labels.push_back(label(rng));
  for (std::size_t i = 0; i < classes; ++i) c.class_names.push_back("cls " + std::to_string(i));
  c.source = "unit-test";
  c.normalized = false;
  return c;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("EMB1 round trip of a 3x4 cache is bit-exact") {
  const auto dir = ueo::testing::scratch_dir("rt34");
  std::mt19937_64 rng(7);
  const auto cache = random_cache(rng, 3, 4, 5);
  save_cache(cache, dir / "c.emb");
  const auto bytes = read_bytes(dir / "c.emb");
  const auto loaded = load_cache(dir / "c.emb");
  CHECK(loaded == cache);
  save_cache(loaded, dir / "d.emb");
  CHECK(read_bytes(dir / "d.emb") == bytes);
  CHECK(std::filesystem::exists(dir / "c.meta.json"));
}

TEST_CASE("EMB1 round trip property over random caches") {
  const auto dir = ueo::testing::scratch_dir("rtprop");
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const auto n = static_cast<std::uint32_t>(1 + rng() % 40);
    const auto d = static_cast<std::uint32_t>(1 + rng() % 17);
    const auto cache = random_cache(rng, n, d, 1 + rng() % 9);
    save_cache(cache, dir / "p.emb");
    CHECK(load_cache(dir / "p.emb") == cache);
    CHECK(decode_emb1(encode_emb1(cache)).features == cache.features);
  }
}

TEST_CASE("hand-composed 2x2 EMB1 bytes load to the expected values") {
  // Independent byte-level writer: every byte spelled out per the format.
  const std::vector<std::uint8_t> bytes = {
      'E', 'M', 'B', '1',                 // magic
      0x01, 0x00, 0x00, 0x00,             // version 1
      0x02, 0x00, 0x00, 0x00,             // n = 2
      0x02, 0x00, 0x00, 0x00,             // d = 2
      0x00, 0x00, 0x80, 0x3F,             // 1.0f
      0x00, 0x00, 0x00, 0x00,             // 0.0f
      0x00, 0x00, 0x00, 0x00,             // 0.0f
      0x00, 0x00, 0x80, 0x3F,             // 1.0f
      0x00, 0x00, 0x00, 0x00,             // label 0
      0x01, 0x00, 0x00, 0x00,             // label 1
  };
  const auto dir = ueo::testing::scratch_dir("hand");
  write_bytes(dir / "h.emb", bytes);
  const auto c = load_cache(dir / "h.emb");
  CHECK(c.n == 2);
  CHECK(c.d == 2);
  CHECK(c.features == std::vector<float>{1.0f, 0.0f, 0.0f, 1.0f});
  CHECK(c.labels == std::vector<std::int32_t>{0, 1});
  CHECK(c.class_names == std::vector<std::string>{"0", "1"});
  CHECK(encode_emb1(c) == bytes);
}

TEST_CASE("EMB1 format errors name the offending field") {
  EmbeddingCache c;
  c.n = 1;
  c.d = 2;
  c.features = {1.0f, 2.0f};
  c.labels = {0};
  c.class_names = {"a"};
  auto good = encode_emb1(c);

  auto bad_magic = good;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  CHECK_THROWS_WITH_AS(decode_emb1(bad_magic), "bad magic", FormatError);

  auto bad_version = good;
  bad_version[4] = 2;
  CHECK_THROWS_WITH_AS(decode_emb1(bad_version), doctest::Contains("version"), FormatError);

  auto truncated = good;
  truncated.pop_back();
  CHECK_THROWS_WITH_AS(decode_emb1(truncated), doctest::Contains("truncated"), FormatError);

  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_emb1(trailing), FormatError);

  auto negative_label = good;
  negative_label[good.size() - 1] = 0xFF;
  CHECK_THROWS_WITH_AS(decode_emb1(negative_label), doctest::Contains("label"), FormatError);

  auto nan_feature = good;
  const std::uint8_t nan_bytes[4] = {0x00, 0x00, 0xC0, 0x7F};
  std::memcpy(nan_feature.data() + 16, nan_bytes, 4);
  CHECK_THROWS_WITH_AS(decode_emb1(nan_feature), doctest::Contains("NaN"), FormatError);
}

TEST_CASE("label outside the sidecar class list is a format error") {
  const auto dir = ueo::testing::scratch_dir("sidecar");
  EmbeddingCache c;
  c.n = 2;
  c.d = 1;
  c.features = {1.0f, 2.0f};
  c.labels = {0, 1};
  c.class_names = {"a", "b"};
  save_cache(c, dir / "s.emb");
  std::ofstream(dir / "s.meta.json") << R"({"class_names": ["a"], "source": "x", "normalized": false})";
  CHECK_THROWS_WITH_AS(load_cache(dir / "s.emb"), doctest::Contains("label 1"), FormatError);
}

TEST_CASE("cache validation") {
  EmbeddingCache c;
  c.n = 1;
  c.d = 1;
  c.features = {1.0f};
  c.labels = {3};
  c.class_names = {"a"};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.labels = {0};
  CHECK_NOTHROW(c.validate());
  c.features = {std::numeric_limits<float>::infinity()};
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

namespace {

void check_kind_relations(const ShiftSpec& s, ShiftKind kind) {
  CHECK(is_subset(s.predefined, s.eval));
  CHECK(is_subset(s.train, s.eval));
  switch (kind) {
    case ShiftKind::kClosed: CHECK(s.train == s.predefined); break;
    case ShiftKind::kPartial:
      CHECK(is_subset(s.train, s.predefined));
      CHECK(s.train.size() < s.predefined.size());
      break;
    case ShiftKind::kOpen:
      CHECK(is_subset(s.predefined, s.train));
      CHECK(s.predefined.size() < s.train.size());
      break;
    case ShiftKind::kOpenPartial:
      CHECK_FALSE(set_intersection(s.train, s.predefined).empty());
      CHECK_FALSE(is_subset(s.train, s.predefined));
      CHECK_FALSE(is_subset(s.predefined, s.train));
      break;
  }
  CHECK(s.kind() == kind);
}

}  // namespace

TEST_CASE("make_shift_spec examples") {
  const auto office_op = make_shift_spec(ShiftKind::kOpenPartial, 25, 31, 3, 10);
  CHECK(office_op.train == set_union(label_range(0, 15), label_range(25, 28)));
  CHECK(office_op.predefined == label_range(0, 25));
  CHECK(office_op.eval == label_range(0, 31));

  const auto oh_open = make_shift_spec(ShiftKind::kOpen, 50, 65, 10, 0);
  CHECK(oh_open.train == label_range(0, 60));

  const auto closed = make_shift_spec(ShiftKind::kClosed, 5, 5, 0, 0);
  CHECK(closed.predefined == label_range(0, 5));
  CHECK(closed.train == label_range(0, 5));
  CHECK(closed.eval == label_range(0, 5));
}

TEST_CASE("make_shift_spec reproduces the published dataset splits") {
  const auto rows = ueo::testing::golden_splits();
  CHECK(rows.size() == 16);
  for (const auto& r : rows) {
    CAPTURE(r.dataset);
    CAPTURE(to_string(r.kind));
    const auto s = make_shift_spec(r.kind, r.n_p, r.n_e, r.n_extra, r.n_drop);
    CHECK(s.predefined == ueo::testing::from_intervals(r.lp));
    CHECK(s.eval == ueo::testing::from_intervals(r.le));
    CHECK(s.train == ueo::testing::from_intervals(r.lu));
    check_kind_relations(s, r.kind);
  }
}

TEST_CASE("make_shift_spec rejects inconsistent parameters") {
  CHECK_THROWS_AS(make_shift_spec(ShiftKind::kPartial, 10, 12, 0, 0), ValidationError);
  CHECK_THROWS_AS(make_shift_spec(ShiftKind::kPartial, 10, 12, 1, 2), ValidationError);
  CHECK_THROWS_AS(make_shift_spec(ShiftKind::kOpen, 10, 12, 0, 0), ValidationError);
  CHECK_THROWS_AS(make_shift_spec(ShiftKind::kOpen, 10, 12, 3, 0), ValidationError);
  CHECK_THROWS_AS(make_shift_spec(ShiftKind::kClosed, 10, 12, 1, 0), ValidationError);
  CHECK_THROWS_AS(make_shift_spec(ShiftKind::kOpenPartial, 10, 12, 1, 0), ValidationError);
  CHECK_THROWS_AS(make_shift_spec(ShiftKind::kOpenPartial, 10, 12, 1, 10), ValidationError);
  CHECK_THROWS_AS(make_shift_spec(ShiftKind::kClosed, 10, 9, 0, 0), ValidationError);
}

TEST_CASE("make_shift_spec output satisfies its kind's set relations") {
  std::mt19937_64 rng(3);
  const ShiftKind kinds[] = {ShiftKind::kClosed, ShiftKind::kPartial, ShiftKind::kOpen, ShiftKind::kOpenPartial};
  for (int trial = 0; trial < 200; ++trial) {
    const auto kind = kinds[trial % 4];
    const std::int32_t n_p = 2 + static_cast<std::int32_t>(rng() % 40);
    const std::int32_t n_e = n_p + 1 + static_cast<std::int32_t>(rng() % 20);
    const bool extra = kind == ShiftKind::kOpen || kind == ShiftKind::kOpenPartial;
    const bool drop = kind == ShiftKind::kPartial || kind == ShiftKind::kOpenPartial;
    const std::int32_t n_extra = extra ? 1 + static_cast<std::int32_t>(rng() % (n_e - n_p)) : 0;
    const std::int32_t n_drop = drop ? 1 + static_cast<std::int32_t>(rng() % (n_p - 1)) : 0;
    check_kind_relations(make_shift_spec(kind, n_p, n_e, n_extra, n_drop), kind);
  }
}

TEST_CASE("ShiftSpec validation and JSON") {
  ShiftSpec s{{0, 1}, {0, 5}, {0, 1, 2}};
  CHECK_THROWS_AS(s.validate(), ValidationError);  // L_u not inside L_e
  const auto spec = make_shift_spec(ShiftKind::kOpenPartial, 8, 12, 2, 2);
  const auto j = to_json(spec);
  CHECK(j["L_u"] == nlohmann::json({0, 1, 2, 3, 4, 5, 8, 9}));
  CHECK(shift_spec_from_json(j) == spec);
  CHECK_THROWS_AS(shift_spec_from_json(nlohmann::json{{"L_p", {0}}}), ValidationError);
  CHECK_THROWS_AS(shift_spec_from_json(nlohmann::json{{"L_p", {0, 0}}, {"L_u", {0}}, {"L_e", {0}}}),
                  ValidationError);
}

TEST_CASE("select_training_subset") {
  EmbeddingCache c;
  c.n = 4;
  c.d = 1;
  c.features = {10.0f, 11.0f, 12.0f, 13.0f};
  c.labels = {0, 1, 2, 3};
  c.class_names = {"a", "b", "c", "d"};

  ShiftSpec two{{0, 1}, {0, 1}, {0, 1, 2, 3}};
  const auto sub = select_training_subset(c, two);
  CHECK(sub.labels == std::vector<std::int32_t>{0, 1});
  CHECK(sub.features == std::vector<float>{10.0f, 11.0f});

  ShiftSpec all{{0, 1}, {0, 1, 2, 3}, {0, 1, 2, 3}};
  CHECK(select_training_subset(c, all) == c);

  ShiftSpec none{{0}, {0}, {0, 1, 2, 3}};
  c.labels = {1, 1, 2, 3};
  CHECK_THROWS_WITH_AS(select_training_subset(c, none), "no training samples in L_u", ValidationError);
}

TEST_CASE("select_training_subset on the Office open-partial split keeps {0..14} u {25..27}") {
  std::mt19937_64 rng(5);
  EmbeddingCache c;
  c.d = 2;
  for (std::int32_t i = 0; i < 31; ++i) c.class_names.push_back(std::to_string(i));
  std::map<std::int32_t, std::size_t> input_counts;
  for (int i = 0; i < 500; ++i) {
    const auto l = static_cast<std::int32_t>(rng() % 31);
    c.labels.push_back(l);
    c.features.push_back(static_cast<float>(i));
    c.features.push_back(static_cast<float>(l));
    ++input_counts[l];
  }
  c.n = static_cast<std::uint32_t>(c.labels.size());
  const auto spec = make_shift_spec(ShiftKind::kOpenPartial, 25, 31, 3, 10);
  const auto sub = select_training_subset(c, spec);

  // Set-arithmetic oracle.
  std::set<std::int32_t> expected;
  for (std::int32_t l = 0; l < 31; ++l)
    if ((l < 15) || (l >= 25 && l < 28)) expected.insert(l);
  const std::set<std::int32_t> retained(sub.labels.begin(), sub.labels.end());
  CHECK(retained == expected);

  std::map<std::int32_t, std::size_t> out_counts;
  for (auto l : sub.labels) ++out_counts[l];
  for (auto l : expected) CHECK(out_counts[l] == input_counts[l]);
  // Original order preserved: first feature column is the original row index.
  for (std::size_t i = 1; i < sub.n; ++i) CHECK(sub.features[2 * i] > sub.features[2 * (i - 1)]);
}
