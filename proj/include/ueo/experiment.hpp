// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ueo/metrics.hpp"
#include "ueo/synth.hpp"
#include "ueo/trainer.hpp"

namespace ueo {

namespace fs = std::filesystem;

inline constexpr const char* kZeroShot = "zero-shot";

struct NamedShift {
  std::string name;
  ShiftSpec spec;
};

/// Everything `run` and `sweep` need. Methods are "zero-shot" or any loss
/// method name (entmin, infomax, ueo, ueo_sample, ueo_oracle).
struct RunConfig {
  fs::path train_path;
  fs::path test_path;
  fs::path prototypes_path;
  std::vector<NamedShift> shifts;
  TrainConfig train;
  HeadConfig head;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds{0};
  /// Per-method learning-rate overrides; EntMin defaults to 1e-5.
  std::map<std::string, double> method_lr{{"entmin", 1e-5}};
  bool curves = false;
  fs::path out_dir = "results";

  void validate() const;
};

/// Parses a RunConfig. Relative cache paths resolve against `base_dir`.
///
/// Shifts come from either "shifts": [{"name", "L_p", "L_u", "L_e"} | {"kind", "n_p", "n_e",
/// "n_extra_train", "n_drop_train"}] or "shift_protocol": {"n_p", "n_e", "n_extra_train",
/// "n_drop_train", "kinds": [...]}, where each kind keeps only the counts it admits.
RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir = {});

/// Shift of the given kind from protocol counts (extra/drop zeroed where the kind forbids them).
NamedShift protocol_shift(ShiftKind kind, std::int32_t n_p, std::int32_t n_e,
                          std::int32_t n_extra_train, std::int32_t n_drop_train);

struct RunRecord {
  std::size_t shift_index = 0;
  std::size_t method_index = 0;
  std::string shift;
  std::string method;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::optional<EvalReport> report;
};

struct AggregateRow {
  std::string method;
  std::string shift;
  std::optional<double> acc;  // empty when any seed failed
  std::optional<double> auc;  // empty also when the test set has no OOD samples
  std::size_t runs = 0;
};

/// Loaded caches shared by all runs of one config.
struct RunInputs {
  EmbeddingCache train;
  EmbeddingCache test;
  EmbeddingCache prototypes;

  static RunInputs load(const RunConfig& cfg);
};

struct RunOutcome {
  RunRecord record;
  std::optional<ModelState> state;
  TrainLog log;
};

/// Trains (unless zero-shot) and evaluates one (shift, method, seed) cell.
/// Failures are captured in record.error rather than thrown.
RunOutcome execute_run(const RunInputs& inputs, const RunConfig& cfg, std::size_t shift_index,
                       std::size_t method_index, std::uint64_t seed, const EvalOptions& eval = {});

/// Arithmetic mean over seeds per (shift, method), in config order.
std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records);

/// method,shift,ACC,AUC with six decimals; missing cells are "NA".
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

struct RunSummary {
  std::vector<RunRecord> records;
  std::vector<AggregateRow> rows;
};

/// Every method x shift x seed; writes runs/<shift>/<method>/seed_<s>.{json,trainlog.csv,adapter.json}
/// and aggregate.csv under cfg.out_dir.
RunSummary cmd_run(const RunConfig& cfg);

/// Reads runs/**.json under `dir`, rewrites aggregate.csv and returns the rows.
std::vector<AggregateRow> cmd_report(const fs::path& dir);
std::string format_table(const std::vector<AggregateRow>& rows);

enum class SweepAxis { kBeta, kBatchSize, kWeightFn, kLambda };
SweepAxis parse_sweep_axis(const std::string& name);
std::string to_string(SweepAxis axis);

/// Re-runs `cmd_run` once per axis value (lambda re-evaluates the trained
/// states instead). Writes sweep_<axis>.csv and one SVG per metric.
std::string cmd_sweep(const RunConfig& cfg, SweepAxis axis, const std::vector<std::string>& values);

/// Writes train.emb, test.emb, prototypes.emb (+ sidecars) into `out_dir`.
SynthData cmd_synth(const SynthConfig& cfg, const fs::path& out_dir);

/// Validates an EMB1 file from the extractor: payload, sidecar presence,
/// label range and finiteness. Returns a JSON summary.
nlohmann::json extract_passthrough(const fs::path& path);

void write_text(const fs::path& path, const std::string& content);
std::string read_text(const fs::path& path);

}  // namespace ueo
