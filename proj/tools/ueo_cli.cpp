// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: synth / run / sweep / report / check-grad / extract-passthrough.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ueo/errors.hpp"
#include "ueo/experiment.hpp"
#include "ueo/gradcheck.hpp"

namespace {

using namespace ueo;

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse " + path + ": " + e.what());
  }
}

struct RunFlags {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods;
  std::vector<std::string> shifts;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "RunConfig JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory (overrides config)");
  cmd->add_option("--seed", f.seeds, "comma-separated seeds")->delimiter(',');
  cmd->add_option("--method", f.methods, "comma-separated methods")->delimiter(',');
  cmd->add_option("--shift", f.shifts, "closed|partial|open|open-partial")->delimiter(',');
}

RunConfig resolve_run_config(const RunFlags& f) {
  RunConfig cfg = run_config_from_json(read_json(f.config), fs::path(f.config).parent_path());
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.methods.empty()) cfg.methods = f.methods;
  if (!f.shifts.empty()) {
    std::vector<NamedShift> kept;
    for (const auto& want : f.shifts) {
      const auto kind = parse_shift_kind(want);
      for (const auto& s : cfg.shifts)
        if (s.name == want || s.spec.kind() == kind) kept.push_back(s);
    }
    if (kept.empty()) throw ValidationError("--shift matched none of the configured shifts");
    cfg.shifts = kept;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised universal fine-tuning engine over embedding caches"};
  app.require_subcommand(1);

  std::string synth_config, synth_out = "data";
  std::vector<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "generate synthetic train/test/prototype caches");
  synth->add_option("--config", synth_config, "SynthConfig JSON")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", synth_seed, "seed override")->delimiter(',');

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "train and evaluate every method x shift x seed");
  add_run_flags(run, run_flags);

  RunFlags sweep_flags;
  std::string axis;
  std::vector<std::string> values;
  auto* sweep = app.add_subcommand("sweep", "vary one hyperparameter and plot ACC/AUC or OS/HOS");
  add_run_flags(sweep, sweep_flags);
  sweep->add_option("--axis", axis, "beta|batch_size|weight_fn|lambda")->required();
  sweep->add_option("--values", values, "comma-separated axis values")->required()->delimiter(',');

  std::string report_dir;
  auto* report = app.add_subcommand("report", "re-aggregate per-run JSON files");
  report->add_option("--out", report_dir, "results directory written by run")->required();

  std::uint64_t gc_seed = 0;
  std::size_t gc_trials = 20;
  std::string gc_out;
  auto* check = app.add_subcommand("check-grad", "analytic vs finite-difference gradients");
  check->add_option("--seed", gc_seed, "seed");
  check->add_option("--trials", gc_trials, "random instances per method x weight function");
  check->add_option("--out", gc_out, "write the JSON report here");

  std::vector<std::string> passthrough_files;
  auto* passthrough = app.add_subcommand("extract-passthrough", "validate EMB1 files from the extractor");
  passthrough->add_option("files", passthrough_files, "EMB1 files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      SynthConfig cfg = synth_config.empty() ? SynthConfig{} : synth_config_from_json(read_json(synth_config));
      if (!synth_seed.empty()) cfg.seed = synth_seed.front();
      const auto data = cmd_synth(cfg, synth_out);
      std::cout << "wrote " << synth_out << "/{train,test,prototypes}.emb: train n=" << data.train.n
                << " test n=" << data.test.n << " prototypes n=" << data.prototypes.n << " d=" << cfg.d << "\n";
    } else if (*run) {
      const auto summary = cmd_run(resolve_run_config(run_flags));
      std::cout << format_table(summary.rows);
      for (const auto& r : summary.records)
        if (!r.ok) std::cerr << "run failed: " << r.method << " " << r.shift << " seed " << r.seed << ": " << r.error << "\n";
    } else if (*sweep) {
      std::cout << cmd_sweep(resolve_run_config(sweep_flags), parse_sweep_axis(axis), values);
    } else if (*report) {
      std::cout << format_table(cmd_report(report_dir));
    } else if (*check) {
      const auto rep = check_gradients(gc_seed, gc_trials);
      const auto j = to_json(rep);
      if (!gc_out.empty()) write_text(gc_out, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
      return rep.passed() ? 0 : 1;
    } else if (*passthrough) {
      int status = 0;
      for (const auto& f : passthrough_files) {
        try {
          std::cout << extract_passthrough(f).dump(2) << "\n";
        } catch (const std::exception& e) {
          std::cout << nlohmann::json{{"path", f}, {"valid", false}, {"error", e.what()}}.dump(2) << "\n";
          status = 1;
        }
      }
      return status;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
