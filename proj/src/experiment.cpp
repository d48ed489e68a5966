// SPDX-License-Identifier: Apache-2.0
#include "ueo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ueo/errors.hpp"
#include "ueo/svg_plot.hpp"

namespace ueo {

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

bool is_known_method(const std::string& m) {
  if (m == kZeroShot) return true;
  try {
    parse_loss_method(m);
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_value(const std::string& s) {
  std::string out;
  for (char c : s) out += (c == '/' || c == ' ') ? '_' : c;
  return out;
}

}  // namespace

void RunConfig::validate() const {
  for (const auto* p : {&train_path, &test_path, &prototypes_path})
    if (!fs::exists(*p)) throw ValidationError("referenced file does not exist: " + p->string());
  if (methods.empty()) throw ValidationError("run: methods must be non-empty");
  for (const auto& m : methods)
    if (!is_known_method(m)) throw ValidationError("run: unknown method '" + m + "'");
  if (seeds.empty()) throw ValidationError("run: seeds must be non-empty");
  if (shifts.empty()) throw ValidationError("run: at least one shift is required");
  for (const auto& s : shifts) s.spec.validate();
  train.validate();
}

NamedShift protocol_shift(ShiftKind kind, std::int32_t n_p, std::int32_t n_e,
                          std::int32_t n_extra_train, std::int32_t n_drop_train) {
  const bool extra = kind == ShiftKind::kOpen || kind == ShiftKind::kOpenPartial;
  const bool drop = kind == ShiftKind::kPartial || kind == ShiftKind::kOpenPartial;
  return {std::string(to_string(kind)),
          make_shift_spec(kind, n_p, n_e, extra ? n_extra_train : 0, drop ? n_drop_train : 0)};
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  RunConfig cfg;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  try {
    cfg.train_path = resolve(j.at("train").get<std::string>());
    cfg.test_path = resolve(j.at("test").get<std::string>());
    cfg.prototypes_path = resolve(j.at("prototypes").get<std::string>());
    if (j.contains("train_config")) cfg.train = train_config_from_json(j["train_config"]);
    if (j.contains("head")) cfg.head = head_config_from_json(j["head"]);
    if (j.contains("methods")) cfg.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("method_lr")) cfg.method_lr = j["method_lr"].get<std::map<std::string, double>>();
    cfg.curves = j.value("curves", false);
    if (j.contains("out")) cfg.out_dir = resolve(j["out"].get<std::string>());

    auto parse_shift = [&](const nlohmann::json& s) -> NamedShift {
      if (s.contains("kind")) {
        const auto kind = parse_shift_kind(s["kind"].get<std::string>());
        NamedShift ns{s.value("name", std::string(to_string(kind))),
                      make_shift_spec(kind, s.at("n_p").get<std::int32_t>(), s.at("n_e").get<std::int32_t>(),
                                      s.value("n_extra_train", 0), s.value("n_drop_train", 0))};
        return ns;
      }
      return {s.value("name", std::string("custom")), shift_spec_from_json(s)};
    };
    if (j.contains("shifts")) {
      for (const auto& s : j["shifts"]) cfg.shifts.push_back(parse_shift(s));
    } else if (j.contains("shift")) {
      cfg.shifts.push_back(parse_shift(j["shift"]));
    }
    if (j.contains("shift_protocol")) {
      const auto& p = j["shift_protocol"];
      std::vector<std::string> kinds = p.value(
          "kinds", std::vector<std::string>{"closed", "partial", "open", "open-partial"});
      for (const auto& k : kinds)
        cfg.shifts.push_back(protocol_shift(parse_shift_kind(k), p.at("n_p").get<std::int32_t>(),
                                            p.at("n_e").get<std::int32_t>(), p.value("n_extra_train", 0),
                                            p.value("n_drop_train", 0)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("RunConfig JSON: ") + e.what());
  }
  return cfg;
}

RunInputs RunInputs::load(const RunConfig& cfg) {
  RunInputs in{load_cache(cfg.train_path), load_cache(cfg.test_path), load_cache(cfg.prototypes_path)};
  in.train.validate();
  in.test.validate();
  in.prototypes.validate();
  if (in.train.d != in.test.d || in.train.d != in.prototypes.d)
    throw ValidationError("train/test/prototype caches disagree on dimension");
  return in;
}

RunOutcome execute_run(const RunInputs& inputs, const RunConfig& cfg, std::size_t shift_index,
                       std::size_t method_index, std::uint64_t seed, const EvalOptions& eval) {
  const auto& shift = cfg.shifts.at(shift_index);
  const auto& method = cfg.methods.at(method_index);
  RunOutcome out;
  out.record = {shift_index, method_index, shift.name, method, seed, false, {}, std::nullopt};
  try {
    const ClassHead head = build_head(inputs.prototypes, shift.spec.predefined, cfg.head);
    ModelState state = ModelState::initial(head);
    if (method != kZeroShot) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      tc.loss.method = parse_loss_method(method);
      if (auto it = cfg.method_lr.find(method); it != cfg.method_lr.end()) tc.lr = it->second;
      const EmbeddingCache pool = select_training_subset(inputs.train, shift.spec);
      std::vector<double> oracle;
      if (tc.loss.method == LossMethod::kUeoOracle) oracle = oracle_weights(pool.labels, shift.spec.predefined);
      auto result = train(pool.to_matrix(), head, tc, oracle);
      state = std::move(result.state);
      out.log = std::move(result.log);
    }
    EvalOptions opts = eval;
    opts.curves = opts.curves || cfg.curves;
    out.record.report = evaluate(state, inputs.test, shift.spec, opts);
    out.record.ok = true;
    out.state = std::move(state);
  } catch (const std::exception& e) {
    out.record.error = e.what();
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records) {
  std::vector<RunRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.shift_index, a.method_index) < std::tie(b.shift_index, b.method_index);
  });
  std::vector<AggregateRow> rows;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    AggregateRow row{sorted[i].method, sorted[i].shift, std::nullopt, std::nullopt, 0};
    bool all_ok = true, all_auc = true;
    double acc = 0.0, au = 0.0;
    while (j < sorted.size() && sorted[j].shift_index == sorted[i].shift_index &&
           sorted[j].method_index == sorted[i].method_index) {
      const auto& r = sorted[j];
      ++row.runs;
      if (!r.ok || !r.report) {
        all_ok = false;
      } else {
        acc += r.report->acc;
        if (r.report->auc) au += *r.report->auc;
        else all_auc = false;
      }
      ++j;
    }
    if (all_ok) {
      row.acc = acc / static_cast<double>(row.runs);
      if (all_auc) row.auc = au / static_cast<double>(row.runs);
    }
    rows.push_back(row);
    i = j;
  }
  return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "method,shift,ACC,AUC\n";
  for (const auto& r : rows) {
    out += r.method + "," + r.shift + "," + (r.acc ? fmt6(*r.acc) : "NA") + "," +
           (r.auc ? fmt6(*r.auc) : "NA") + "\n";
  }
  return out;
}

namespace {

nlohmann::ordered_json record_json(const RunRecord& r, const RunConfig& cfg,
                                   const std::optional<ModelState>& state) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["shift"] = r.shift;
  j["seed"] = r.seed;
  j["shift_index"] = r.shift_index;
  j["method_index"] = r.method_index;
  j["status"] = r.ok ? "ok" : "failed";
  if (!r.ok) j["error"] = r.error;
  j["shift_spec"] = to_json(cfg.shifts[r.shift_index].spec);
  TrainConfig tc = cfg.train;
  tc.seed = r.seed;
  if (r.method != kZeroShot) {
    tc.loss.method = parse_loss_method(r.method);
    if (auto it = cfg.method_lr.find(r.method); it != cfg.method_lr.end()) tc.lr = it->second;
    j["train_config"] = to_json(tc);
  }
  j["head"] = to_json(cfg.head);
  j["report"] = r.report ? nlohmann::ordered_json(to_json(*r.report)) : nlohmann::ordered_json(nullptr);
  if (state) j["adapter_changed"] = !state->adapter.is_identity();
  return j;
}

RunRecord record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.method = j.at("method").get<std::string>();
  r.shift = j.at("shift").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.shift_index = j.at("shift_index").get<std::size_t>();
  r.method_index = j.at("method_index").get<std::size_t>();
  r.ok = j.at("status").get<std::string>() == "ok";
  r.error = j.value("error", "");
  if (!j.at("report").is_null()) r.report = eval_report_from_json(j["report"]);
  return r;
}

fs::path run_stem(const fs::path& out_dir, const RunRecord& r) {
  return out_dir / "runs" / fmt_value(r.shift) / fmt_value(r.method) / ("seed_" + std::to_string(r.seed));
}

}  // namespace

RunSummary cmd_run(const RunConfig& cfg) {
  cfg.validate();
  const RunInputs inputs = RunInputs::load(cfg);
  RunSummary summary;
  for (std::size_t s = 0; s < cfg.shifts.size(); ++s) {
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
      for (auto seed : cfg.seeds) {
        RunOutcome o = execute_run(inputs, cfg, s, m, seed);
        const fs::path stem = run_stem(cfg.out_dir, o.record);
        write_text(stem.string() + ".json", nlohmann::ordered_json(record_json(o.record, cfg, o.state)).dump(2) + "\n");
        if (!o.log.rows.empty()) write_text(stem.string() + ".trainlog.csv", o.log.to_csv());
        if (o.state) write_text(stem.string() + ".adapter.json", to_json(o.state->adapter).dump(2) + "\n");
        if (o.record.report && !o.record.report->curve.empty())
          write_text(stem.string() + ".curve.csv", curve_csv(o.record.report->curve));
        summary.records.push_back(std::move(o.record));
      }
    }
  }
  summary.rows = aggregate(summary.records);
  write_text(cfg.out_dir / "aggregate.csv", aggregate_csv(summary.rows));
  return summary;
}

std::vector<AggregateRow> cmd_report(const fs::path& dir) {
  const fs::path runs = dir / "runs";
  if (!fs::exists(runs)) throw ValidationError("no runs/ directory under " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(runs)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("seed_") && name.ends_with(".json") &&
        !name.ends_with(".adapter.json"))
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> records;
  for (const auto& f : files) {
    try {
      records.push_back(record_from_json(nlohmann::json::parse(read_text(f))));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed run record " + f.string() + ": " + e.what());
    }
  }
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.shift_index, a.method_index, a.seed) < std::tie(b.shift_index, b.method_index, b.seed);
  });
  auto rows = aggregate(records);
  write_text(dir / "aggregate.csv", aggregate_csv(rows));
  return rows;
}

std::string format_table(const std::vector<AggregateRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s %-14s %8s %8s %5s\n", "method", "shift", "ACC", "AUC", "runs");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %-14s %8s %8s %5zu\n", r.method.c_str(), r.shift.c_str(),
                  r.acc ? fmt6(*r.acc).c_str() : "NA", r.auc ? fmt6(*r.auc).c_str() : "NA", r.runs);
    out += buf;
  }
  return out;
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "beta") return SweepAxis::kBeta;
  if (name == "batch_size") return SweepAxis::kBatchSize;
  if (name == "weight_fn") return SweepAxis::kWeightFn;
  if (name == "lambda") return SweepAxis::kLambda;
  throw ValidationError("unknown sweep axis '" + name + "'");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kBeta: return "beta";
    case SweepAxis::kBatchSize: return "batch_size";
    case SweepAxis::kWeightFn: return "weight_fn";
    case SweepAxis::kLambda: return "lambda";
  }
  return "unknown";
}

namespace {

double parse_number(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("sweep value '" + s + "' is not a number");
  }
}

void write_plots(const fs::path& out_dir, const std::string& axis, const std::vector<std::string>& metrics,
                 const std::vector<std::string>& keys, const std::vector<double>& xs,
                 const std::vector<std::string>& tick_labels,
                 const std::map<std::string, std::map<std::string, std::vector<double>>>& values) {
  for (const auto& metric : metrics) {
    LinePlot plot;
    plot.title = metric + " vs " + axis;
    plot.x_label = axis;
    plot.y_label = metric;
    plot.x_tick_labels = tick_labels;
    for (const auto& key : keys) plot.series.push_back({key, xs, values.at(metric).at(key)});
    write_text(out_dir / ("sweep_" + axis + "_" + metric + ".svg"), render_svg(plot));
  }
}

}  // namespace

std::string cmd_sweep(const RunConfig& base, SweepAxis axis, const std::vector<std::string>& values) {
  base.validate();
  if (values.empty()) throw ValidationError("sweep: no axis values");
  const std::string axis_name = to_string(axis);
  std::vector<std::string> keys;  // method@shift, config order
  for (const auto& s : base.shifts)
    for (const auto& m : base.methods) keys.push_back(m + "@" + s.name);

  std::map<std::string, std::map<std::string, std::vector<double>>> series;
  std::vector<double> xs;
  std::vector<std::string> ticks;
  std::string csv;

  if (axis == SweepAxis::kLambda) {
    std::vector<double> lambdas;
    for (const auto& v : values) lambdas.push_back(parse_number(v));
    std::sort(lambdas.begin(), lambdas.end());
    xs = lambdas;
    csv = "lambda,method,shift,OS,HOS\n";
    const RunInputs inputs = RunInputs::load(base);
    EvalOptions eval{true, lambdas};
    std::vector<std::string> lines(lambdas.size());
    for (std::size_t s = 0; s < base.shifts.size(); ++s) {
      for (std::size_t m = 0; m < base.methods.size(); ++m) {
        const std::string key = base.methods[m] + "@" + base.shifts[s].name;
        std::vector<double> os(lambdas.size(), 0.0), hos(lambdas.size(), 0.0);
        bool ok = true;
        for (auto seed : base.seeds) {
          auto o = execute_run(inputs, base, s, m, seed, eval);
          if (!o.record.ok || o.record.report->curve.size() != lambdas.size()) {
            ok = false;
            break;
          }
          for (std::size_t i = 0; i < lambdas.size(); ++i) {
            os[i] += o.record.report->curve[i].os / static_cast<double>(base.seeds.size());
            hos[i] += o.record.report->curve[i].hos / static_cast<double>(base.seeds.size());
          }
        }
        if (!ok) {
          std::fill(os.begin(), os.end(), NAN);
          std::fill(hos.begin(), hos.end(), NAN);
        }
        series["OS"][key] = os;
        series["HOS"][key] = hos;
        for (std::size_t i = 0; i < lambdas.size(); ++i) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), "%.6g", lambdas[i]);
          lines[i] += std::string(buf) + "," + base.methods[m] + "," + base.shifts[s].name + "," +
                      (ok ? fmt6(os[i]) : "NA") + "," + (ok ? fmt6(hos[i]) : "NA") + "\n";
        }
      }
    }
    for (const auto& l : lines) csv += l;
    write_text(base.out_dir / "sweep_lambda.csv", csv);
    write_plots(base.out_dir, axis_name, {"OS", "HOS"}, keys, xs, ticks, series);
    return csv;
  }

  csv = axis_name + ",method,shift,ACC,AUC\n";
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    const std::string& v = values[vi];
    RunConfig cfg = base;
    switch (axis) {
      case SweepAxis::kBeta:
        cfg.train.loss.beta = parse_number(v);
        xs.push_back(cfg.train.loss.beta);
        break;
      case SweepAxis::kBatchSize: {
        const double b = parse_number(v);
        if (b < 1 || b != std::floor(b)) throw ValidationError("sweep: batch_size must be a positive integer");
        cfg.train.batch_size = static_cast<std::size_t>(b);
        xs.push_back(b);
        break;
      }
      case SweepAxis::kWeightFn:
        cfg.train.loss.weight_fn = parse_weight_fn(v);
        xs.push_back(static_cast<double>(vi));
        ticks.push_back(v);
        break;
      case SweepAxis::kLambda: break;
    }
    cfg.out_dir = base.out_dir / "sweep" / (axis_name + "_" + fmt_value(v));
    const auto summary = cmd_run(cfg);
    for (const auto& row : summary.rows) {
      const std::string key = row.method + "@" + row.shift;
      series["ACC"][key].push_back(row.acc.value_or(NAN));
      series["AUC"][key].push_back(row.auc.value_or(NAN));
      csv += v + "," + row.method + "," + row.shift + "," + (row.acc ? fmt6(*row.acc) : "NA") + "," +
             (row.auc ? fmt6(*row.auc) : "NA") + "\n";
    }
  }
  write_text(base.out_dir / ("sweep_" + axis_name + ".csv"), csv);
  write_plots(base.out_dir, axis_name, {"ACC", "AUC"}, keys, xs, ticks, series);
  return csv;
}

SynthData cmd_synth(const SynthConfig& cfg, const fs::path& out_dir) {
  SynthData data = generate(cfg);
  fs::create_directories(out_dir);
  save_cache(data.train, out_dir / "train.emb");
  save_cache(data.test, out_dir / "test.emb");
  save_cache(data.prototypes, out_dir / "prototypes.emb");
  return data;
}

nlohmann::json extract_passthrough(const fs::path& path) {
  if (!fs::exists(meta_path_for(path)))
    throw FormatError("missing sidecar " + meta_path_for(path).string());
  const EmbeddingCache c = load_cache(path);
  c.validate();
  double norm_sum = 0.0, norm_min = INFINITY, norm_max = 0.0;
  for (std::size_t i = 0; i < c.n; ++i) {
    double sq = 0.0;
    for (float f : c.row(i)) sq += static_cast<double>(f) * f;
    const double nrm = std::sqrt(sq);
    norm_sum += nrm;
    norm_min = std::min(norm_min, nrm);
    norm_max = std::max(norm_max, nrm);
  }
  std::map<std::int32_t, std::size_t> per_label;
  for (auto l : c.labels) ++per_label[l];
  nlohmann::ordered_json j;
  j["path"] = path.string();
  j["valid"] = true;
  j["n"] = c.n;
  j["d"] = c.d;
  j["num_classes"] = c.class_names.size();
  j["classes_present"] = per_label.size();
  j["source"] = c.source;
  j["normalized"] = c.normalized;
  j["norm"] = {{"mean", norm_sum / c.n}, {"min", norm_min}, {"max", norm_max}};
  if (c.normalized && (std::abs(norm_min - 1.0) > 1e-3 || std::abs(norm_max - 1.0) > 1e-3))
    j["warning"] = "sidecar claims normalized=true but row norms deviate from 1";
  return j;
}

}  // namespace ueo
