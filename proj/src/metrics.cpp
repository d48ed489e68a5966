// SPDX-License-Identifier: Apache-2.0
#include "ueo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ueo/errors.hpp"

namespace ueo {

EvalSplit split_eval(const EmbeddingCache& cache, const ShiftSpec& spec) {
  EvalSplit s;
  for (std::size_t i = 0; i < cache.labels.size(); ++i) {
    const auto l = cache.labels[i];
    if (!contains(spec.eval, l)) continue;
    (contains(spec.predefined, l) ? s.id : s.ood).push_back(i);
  }
  return s;
}

ClassAccuracy per_class_accuracy(std::span<const std::int32_t> preds,
                                 std::span<const std::int32_t> labels, const LabelSet& classes) {
  if (preds.size() != labels.size()) throw ValidationError("accuracy: preds/labels size mismatch");
  std::map<std::int32_t, std::pair<std::size_t, std::size_t>> counts;  // correct, total
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!contains(classes, labels[i])) continue;
    auto& c = counts[labels[i]];
    c.second += 1;
    if (preds[i] == labels[i]) c.first += 1;
  }
  if (counts.empty()) throw ValidationError("accuracy: class set is disjoint from labels");
  ClassAccuracy out;
  double sum = 0.0;
  for (const auto& [label, c] : counts) {
    const double a = static_cast<double>(c.first) / static_cast<double>(c.second);
    out.per_class[label] = a;
    sum += a;
  }
  out.macro = sum / static_cast<double>(counts.size());
  return out;
}

double auc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) throw ValidationError("AUC undefined: empty score set");
  struct Item {
    double score;
    bool id;
  };
  std::vector<Item> items;
  items.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) items.push_back({s, true});
  for (double s : ood_scores) items.push_back({s, false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Twice the ID rank sum, with midranks for tied blocks; exact in integers.
  std::uint64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    // 1-based ranks i+1..j, midrank = (i+1+j)/2.
    const std::uint64_t twice_midrank = static_cast<std::uint64_t>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (items[t].id) twice_rank_sum += twice_midrank;
    i = j;
  }
  const std::uint64_t n_id = id_scores.size();
  const std::uint64_t n_ood = ood_scores.size();
  const std::uint64_t twice_u = twice_rank_sum - n_id * (n_id + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * n_id * n_ood);
}

std::vector<Detection> detect(std::span<const double> scores, double lambda) {
  std::vector<Detection> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    out[i] = scores[i] >= lambda ? Detection::kId : Detection::kOod;
  return out;
}

std::vector<OpenSetPoint> os_hos_curve(std::span<const std::int32_t> preds,
                                       std::span<const std::int32_t> labels,
                                       std::span<const double> scores, const ShiftSpec& spec,
                                       std::span<const double> lambdas) {
  if (preds.size() != labels.size() || scores.size() != labels.size())
    throw ValidationError("os_hos_curve: size mismatch");
  const LabelSet known = set_intersection(spec.predefined, spec.eval);

  std::map<std::int32_t, std::vector<std::size_t>> known_rows;
  std::vector<std::size_t> ood_rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!contains(spec.eval, labels[i])) continue;
    if (contains(known, labels[i])) known_rows[labels[i]].push_back(i);
    else ood_rows.push_back(i);
  }
  if (known_rows.empty()) throw ValidationError("OS/HOS undefined without known-class samples");
  if (ood_rows.empty()) throw ValidationError("OS/HOS undefined without OOD samples");

  std::vector<double> sorted(lambdas.begin(), lambdas.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<OpenSetPoint> curve;
  for (double lambda : sorted) {
    OpenSetPoint pt;
    pt.lambda = lambda;
    double known_sum = 0.0;
    for (const auto& [label, rows] : known_rows) {
      std::size_t correct = 0;
      for (auto r : rows)
        if (scores[r] >= lambda && preds[r] == label) ++correct;
      known_sum += static_cast<double>(correct) / static_cast<double>(rows.size());
    }
    std::size_t rejected = 0;
    for (auto r : ood_rows)
      if (scores[r] < lambda) ++rejected;
    const double k = static_cast<double>(known_rows.size());
    pt.known_acc = known_sum / k;
    pt.unknown_acc = static_cast<double>(rejected) / static_cast<double>(ood_rows.size());
    pt.os = (known_sum + pt.unknown_acc) / (k + 1.0);
    pt.hos = (pt.known_acc == 0.0 || pt.unknown_acc == 0.0)
                 ? 0.0
                 : 2.0 * pt.known_acc * pt.unknown_acc / (pt.known_acc + pt.unknown_acc);
    curve.push_back(pt);
  }
  return curve;
}

std::vector<double> quantile_grid(std::span<const double> scores, std::size_t count) {
  if (scores.empty() || count == 0) return {};
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> grid(count);
  const double last = static_cast<double>(sorted.size() - 1);
  for (std::size_t q = 0; q < count; ++q) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(q) / static_cast<double>(count - 1);
    grid[q] = sorted[static_cast<std::size_t>(std::lround(frac * last))];
  }
  return grid;
}

EvalReport evaluate(const ModelState& state, const EmbeddingCache& test, const ShiftSpec& spec,
                    const EvalOptions& options) {
  spec.validate();
  if (state.head.num_classes() != spec.predefined.size())
    throw ValidationError("evaluate: head has " + std::to_string(state.head.num_classes()) +
                          " classes but L_p has " + std::to_string(spec.predefined.size()));
  const EvalSplit split = split_eval(test, spec);
  if (split.id.empty()) throw ValidationError("evaluate: no ID samples in the test set");

  const Matrix probs = predict_probs(state, test.to_matrix());
  const auto cls = predict_class(probs);
  const auto scores = mcm_score(probs);
  std::vector<std::int32_t> preds(cls.size());
  for (std::size_t i = 0; i < cls.size(); ++i) preds[i] = spec.predefined[cls[i]];

  EvalReport report;
  report.n_id = split.id.size();
  report.n_ood = split.ood.size();

  std::vector<std::int32_t> id_preds, id_labels;
  std::vector<double> id_scores, ood_scores;
  std::size_t correct = 0;
  for (auto i : split.id) {
    id_preds.push_back(preds[i]);
    id_labels.push_back(test.labels[i]);
    id_scores.push_back(scores[i]);
    if (preds[i] == test.labels[i]) ++correct;
  }
  for (auto i : split.ood) ood_scores.push_back(scores[i]);

  const auto acc = per_class_accuracy(id_preds, id_labels, set_intersection(spec.predefined, spec.eval));
  report.per_class_acc = acc.per_class;
  report.acc = acc.macro;
  report.global_acc = static_cast<double>(correct) / static_cast<double>(split.id.size());
  if (!ood_scores.empty()) report.auc = auc(id_scores, ood_scores);

  if (options.curves && !ood_scores.empty()) {
    std::vector<double> lambdas = options.lambdas;
    if (lambdas.empty()) {
      std::vector<double> pooled = id_scores;
      pooled.insert(pooled.end(), ood_scores.begin(), ood_scores.end());
      lambdas = quantile_grid(pooled);
    }
    report.curve = os_hos_curve(preds, test.labels, scores, spec, lambdas);
  }
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["acc"] = r.acc;
  j["global_acc"] = r.global_acc;
  j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [label, a] : r.per_class_acc) per_class[std::to_string(label)] = a;
  j["per_class_acc"] = per_class;
  j["counts"] = {{"id", r.n_id}, {"ood", r.n_ood}};
  auto os = nlohmann::ordered_json::array();
  auto hos = nlohmann::ordered_json::array();
  for (const auto& p : r.curve) {
    os.push_back({p.lambda, p.os});
    hos.push_back({p.lambda, p.hos});
  }
  j["os_curve"] = os;
  j["hos_curve"] = hos;
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.acc = j.at("acc").get<double>();
    r.global_acc = j.value("global_acc", 0.0);
    if (j.contains("auc") && !j["auc"].is_null()) r.auc = j["auc"].get<double>();
    for (const auto& [k, v] : j.at("per_class_acc").items()) r.per_class_acc[std::stoi(k)] = v.get<double>();
    r.n_id = j.at("counts").at("id").get<std::size_t>();
    r.n_ood = j.at("counts").at("ood").get<std::size_t>();
    const auto& os = j.at("os_curve");
    const auto& hos = j.at("hos_curve");
    for (std::size_t i = 0; i < os.size(); ++i)
      r.curve.push_back({os[i][0].get<double>(), os[i][1].get<double>(), hos[i][1].get<double>(), 0.0, 0.0});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("EvalReport JSON: ") + e.what());
  }
  return r;
}

std::string curve_csv(const std::vector<OpenSetPoint>& curve) {
  std::string out = "lambda,os,hos\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.lambda, p.os, p.hos);
    out += buf;
  }
  return out;
}

}  // namespace ueo
