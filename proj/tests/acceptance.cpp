// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: prints one PASS/FAIL line per criterion, exits non-zero on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "split_golden.hpp"
#include "test_util.hpp"
#include "ueo/experiment.hpp"
#include "ueo/gradcheck.hpp"
#include "ueo/metrics.hpp"
#include "ueo/objectives.hpp"
#include "ueo/trainer.hpp"

using namespace ueo;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto report = check_gradients(2024, 20);
  const double secs = seconds_since(t0);
  std::size_t combos = 0;
  for (const auto& e : report.entries)
    if (e.trials >= 20) ++combos;
  const bool all_combos = combos == std::size(kAllLossMethods) * std::size(kAllWeightFns);
  return {all_combos && report.max_rel_error < 1e-4 && secs < 10.0,
          fmt("max rel err %.3g over %.0f method x weight combos x 20 trials (tol 1e-4), %.2f s (< 10 s)",
              report.max_rel_error, static_cast<double>(combos), secs)};
}

Outcome degeneracy_identity() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 128, C = 2 + rng() % 40;
    const double temp = 0.1 + 5.0 * std::uniform_real_distribution<double>()(rng);
    Matrix p(n, C);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += (p(i, c) = std::exp(temp * normal(rng)));
      for (std::size_t c = 0; c < C; ++c) p(i, c) /= s;
    }
    const std::vector<double> w(n, std::uniform_real_distribution<double>(1e-6, 1.0)(rng));
    LossConfig cfg;
    cfg.beta = 1.0;
    cfg.weight_fn = kAllWeightFns[t % std::size(kAllWeightFns)];
    worst = std::max(worst, std::abs(loss_ueo(p, w, cfg) - loss_infomax(p)));
  }
  return {worst < 1e-12, fmt("max |UEO(uniform w) - InfoMax| = %.3g on 100 batches (tol 1e-12)", worst)};
}

Outcome auc_oracle() {
  std::mt19937_64 rng(91);
  int exact = 0;
  std::size_t largest = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n_id = 1 + rng() % 200, n_ood = 1 + rng() % 200;
    largest = std::max({largest, n_id, n_ood});
    const int levels = 2 + static_cast<int>(rng() % 50);  // coarse grids force ties
    std::vector<double> id(n_id), ood(n_ood);
    for (auto& v : id) v = static_cast<double>(rng() % levels) / levels;
    for (auto& v : ood) v = static_cast<double>(rng() % levels) / levels;
    double pairs = 0.0;
    for (double a : id)
      for (double b : ood) pairs += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    const double brute = pairs / (static_cast<double>(n_id) * static_cast<double>(n_ood));
    if (auc(id, ood) == brute) ++exact;
  }
  return {exact == 100, fmt("%.0f/100 score sets bit-equal to brute-force pair count (n up to %.0f, with ties)",
                            exact, static_cast<double>(largest))};
}

Outcome split_protocol() {
  int ok = 0;
  std::string bad;
  const auto rows = ueo::testing::golden_splits();
  for (const auto& r : rows) {
    const auto s = make_shift_spec(r.kind, r.n_p, r.n_e, r.n_extra, r.n_drop);
    if (s.predefined == ueo::testing::from_intervals(r.lp) && s.eval == ueo::testing::from_intervals(r.le) &&
        s.train == ueo::testing::from_intervals(r.lu))
      ++ok;
    else
      bad += std::string(" ") + r.dataset + "/" + std::string(to_string(r.kind));
  }
  return {ok == 16 && rows.size() == 16, fmt("%.0f/16 dataset x shift rows reproduced", ok) + bad};
}

Outcome identity_preservation() {
  SynthConfig sc;
  sc.n_classes = 12;
  sc.per_class = 20;
  sc.noise_sigma = 0.3;
  sc.prototype_noise = 0.3;
  sc.seed = 5;
  const auto data = generate(sc);
  const auto head = build_head(data.prototypes, label_range(0, 12), HeadConfig{});
  const auto probe = data.test.to_matrix();
  const auto ref = predict_probs(ModelState::reference(head), probe);
  const bool untrained = predict_probs(ModelState::initial(head), probe) == ref;
  TrainConfig tc;
  tc.epochs = 0;
  const auto r = train(data.train.to_matrix(), head, tc);
  const bool noop = r.state.adapter.is_identity() && r.log.rows.empty() && predict_probs(r.state, probe) == ref;
  return {untrained && noop, std::string("untrained == reference: ") + (untrained ? "bit-exact" : "DIFFERS") +
                                 "; epochs=0 no-op: " + (noop ? "yes" : "NO")};
}

Outcome method_ordering() {
  const auto t0 = Clock::now();
  const auto root = ueo::testing::scratch_dir("acceptance_bench");
  const std::vector<std::string> methods = {kZeroShot, "entmin", "infomax", "ueo", "ueo_oracle"};
  std::map<std::string, std::pair<double, double>> mean;  // method -> (acc, auc)
  const int n_seeds = 5;
  for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
    SynthConfig sc;
    sc.d = 64;
    sc.n_classes = 32;  // 20 ID + 6 OOD seen in training + 6 OOD only at test time
    sc.per_class = 50;
    sc.noise_sigma = 0.15;
    sc.shift_angle = 0.3;
    sc.prototype_noise = 0.3;
    sc.domain_offset = 1.0;
    sc.seed = seed;
    const auto dir = root / ("seed_" + std::to_string(seed));
    cmd_synth(sc, dir / "data");
    RunConfig rc;
    rc.train_path = dir / "data" / "train.emb";
    rc.test_path = dir / "data" / "test.emb";
    rc.prototypes_path = dir / "data" / "prototypes.emb";
    rc.shifts = {protocol_shift(ShiftKind::kOpenPartial, 20, 32, 6, 5)};
    rc.train.lr = 1e-4;
    rc.train.epochs = 50;
    rc.train.batch_size = 64;
    rc.methods = methods;
    rc.seeds = {seed};
    rc.out_dir = dir / "out";
    for (const auto& row : cmd_run(rc).rows) {
      if (!row.acc || !row.auc) throw std::runtime_error("run failed for " + row.method);
      mean[row.method].first += *row.acc / n_seeds;
      mean[row.method].second += *row.auc / n_seeds;
    }
  }
  const double secs = seconds_since(t0);
  const bool a = mean["ueo"].second >= mean["entmin"].second;
  const bool b = mean["ueo"].first >= mean[kZeroShot].first;
  const bool c = mean["ueo_oracle"].second >= mean["ueo"].second;
  std::string detail;
  for (const auto& m : methods)
    detail += m + " ACC " + fmt("%.4f", mean[m].first) + " AUC " + fmt("%.4f", mean[m].second) + "; ";
  detail += std::string("(a) UEO AUC >= EntMin AUC: ") + (a ? "yes" : "NO");
  detail += std::string(", (b) UEO ACC >= zero-shot ACC: ") + (b ? "yes" : "NO");
  detail += std::string(", (c) UEO(O) AUC >= UEO AUC: ") + (c ? "yes" : "NO");
  detail += fmt(", %.1f s (< 120 s)", secs);
  return {a && b && c && secs < 120.0, detail};
}

Outcome os_hos_formula() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u;
  int below_ok = 0, oracle_ok = 0, instances = 0;
  double worst = 0.0;
  while (instances < 100) {
    const std::int32_t n_p = 2 + static_cast<std::int32_t>(rng() % 8);
    const std::int32_t extra = 1 + static_cast<std::int32_t>(rng() % 5);
    const auto spec = make_shift_spec(ShiftKind::kOpen, n_p, n_p + extra, extra, 0);
    std::vector<std::int32_t> labels, preds;
    std::vector<double> scores;
    for (int i = 0; i < 120; ++i) {
      labels.push_back(static_cast<std::int32_t>(rng() % (n_p + extra)));
      preds.push_back(static_cast<std::int32_t>(rng() % n_p));
      scores.push_back(u(rng));
    }
    bool has_ood = false, has_id = false;
    for (auto l : labels) (l >= n_p ? has_ood : has_id) = true;
    if (!has_ood || !has_id) continue;
    ++instances;
    const double min_score = *std::min_element(scores.begin(), scores.end());
    std::vector<double> lambdas = quantile_grid(scores, 21);
    lambdas.push_back(min_score - 1.0);
    const auto curve = os_hos_curve(preds, labels, scores, spec, lambdas);
    if (curve.front().unknown_acc == 0.0 && curve.front().hos == 0.0) ++below_ok;

    // Independent (K+1)-class confusion matrix at every threshold.
    bool inst_ok = true;
    for (const auto& pt : curve) {
      const std::size_t K = static_cast<std::size_t>(n_p);
      std::vector<std::vector<double>> cm(K + 1, std::vector<double>(K + 1, 0.0));
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t t = labels[i] < n_p ? static_cast<std::size_t>(labels[i]) : K;
        const std::size_t p = scores[i] < pt.lambda ? K : static_cast<std::size_t>(preds[i]);
        cm[t][p] += 1.0;
      }
      double sum = 0.0, known = 0.0;
      std::size_t present = 0;
      for (std::size_t k = 0; k <= K; ++k) {
        double row = 0.0;
        for (double v : cm[k]) row += v;
        if (row == 0.0) continue;
        sum += cm[k][k] / row;
        if (k < K) {
          known += cm[k][k] / row;
          ++present;
        }
      }
      double unk_row = 0.0;
      for (double v : cm[K]) unk_row += v;
      const double unk = cm[K][K] / unk_row;
      const double kn = known / static_cast<double>(present);
      const double os = sum / static_cast<double>(present + 1);
      const double hos = (kn > 0.0 && unk > 0.0) ? 2.0 * kn * unk / (kn + unk) : 0.0;
      const double err = std::max(std::abs(os - pt.os), std::abs(hos - pt.hos));
      worst = std::max(worst, err);
      if (err > 1e-12) inst_ok = false;
    }
    if (inst_ok) ++oracle_ok;
  }
  return {below_ok == 100 && oracle_ok == 100,
          fmt("lambda < min: unknown acc 0 and HOS 0 on %.0f/100; confusion-matrix oracle on %.0f/100 (max err %.2g)",
              below_ok, oracle_ok, worst)};
}

Outcome determinism() {
  const auto root = ueo::testing::scratch_dir("acceptance_det");
  SynthConfig sc;
  sc.d = 32;
  sc.n_classes = 16;
  sc.per_class = 20;
  sc.noise_sigma = 0.15;
  sc.shift_angle = 0.3;
  sc.prototype_noise = 0.3;
  sc.domain_offset = 1.0;
  sc.seed = 7;
  cmd_synth(sc, root / "data");
  std::string csv[2];
  for (int r = 0; r < 2; ++r) {
    RunConfig rc;
    rc.train_path = root / "data" / "train.emb";
    rc.test_path = root / "data" / "test.emb";
    rc.prototypes_path = root / "data" / "prototypes.emb";
    rc.shifts = {protocol_shift(ShiftKind::kOpenPartial, 10, 16, 3, 3)};
    rc.train.epochs = 10;
    rc.methods = {kZeroShot, "entmin", "infomax", "ueo", "ueo_oracle"};
    rc.seeds = {3, 4};
    rc.out_dir = root / ("run_" + std::to_string(r));
    cmd_run(rc);
    csv[r] = read_text(rc.out_dir / "aggregate.csv");
  }
  return {csv[0] == csv[1] && !csv[0].empty(),
          fmt("aggregate CSV %.0f bytes, identical across two runs: ", static_cast<double>(csv[0].size())) +
              (csv[0] == csv[1] ? "yes" : "NO")};
}

}  // namespace

int main() {
  criterion("gradient-fidelity", gradient_fidelity);
  criterion("degeneracy-identity", degeneracy_identity);
  criterion("auc-oracle", auc_oracle);
  criterion("split-protocol", split_protocol);
  criterion("identity-preservation", identity_preservation);
  criterion("method-ordering", method_ordering);
  criterion("os-hos-formula", os_hos_formula);
  criterion("determinism", determinism);
  std::printf("%s: %d failing criteria\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
