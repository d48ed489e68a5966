// SPDX-License-Identifier: Apache-2.0
#include "ueo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include "ueo/errors.hpp"

namespace ueo {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("train: lr must be > 0");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (!param_groups.any()) throw ValidationError("train: at least one parameter group must be enabled");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("train: momentum must lie in [0, 1)");
  loss.validate(0);
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["lr"] = cfg.lr;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  auto groups = nlohmann::json::array();
  if (cfg.param_groups.prompt) groups.push_back("prompt");
  if (cfg.param_groups.affine_scale) groups.push_back("affine_scale");
  if (cfg.param_groups.affine_shift) groups.push_back("affine_shift");
  j["param_groups"] = groups;
  j["loss"] = to_json(cfg.loss);
  j["shuffle"] = cfg.shuffle;
  j["momentum"] = cfg.momentum;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  try {
    cfg.lr = j.value("lr", cfg.lr);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.shuffle = j.value("shuffle", cfg.shuffle);
    cfg.momentum = j.value("momentum", cfg.momentum);
    if (j.contains("param_groups")) {
      cfg.param_groups = ParamGroups{false, false, false};
      for (const auto& g : j["param_groups"]) {
        const auto name = g.get<std::string>();
        if (name == "prompt") cfg.param_groups.prompt = true;
        else if (name == "affine_scale") cfg.param_groups.affine_scale = true;
        else if (name == "affine_shift") cfg.param_groups.affine_shift = true;
        else throw ValidationError("unknown parameter group '" + name + "'");
      }
    }
    if (j.contains("loss")) cfg.loss = loss_config_from_json(j["loss"]);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("TrainConfig JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) return lr0;
  const double t = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::string TrainLog::to_csv() const {
  std::string out = "step,epoch,lr,loss,mean_w,mean_entropy\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", r.step, r.epoch, r.lr,
                  r.loss, r.mean_w, r.mean_entropy);
    out += buf;
  }
  return out;
}

namespace {

void sgd_update(std::vector<double>& params, const std::vector<double>& g,
                std::vector<double>& velocity, double lr, double momentum) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + g[i];
    params[i] -= lr * velocity[i];
  }
}

}  // namespace

TrainResult train(const Matrix& pool, const ClassHead& head, const TrainConfig& cfg,
                  std::span<const double> oracle_weights) {
  cfg.validate();
  cfg.loss.validate(head.num_classes());
  if (pool.cols() != head.dim())
    throw ValidationError("train: pool dimension " + std::to_string(pool.cols()) +
                          " != prototype dimension " + std::to_string(head.dim()));
  if (pool.rows() == 0) throw ValidationError("train: empty pool");
  const bool oracle = cfg.loss.method == LossMethod::kUeoOracle;
  if (oracle && oracle_weights.size() != pool.rows())
    throw ValidationError("train: ueo_oracle requires one oracle weight per pool row");

  const ModelState reference = ModelState::reference(head);
  TrainResult result{ModelState::initial(head), {}};
  ModelState& state = result.state;

  const std::size_t n = pool.rows();
  const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * batches_per_epoch;

  const bool weighted = cfg.loss.method == LossMethod::kUeo ||
                        cfg.loss.method == LossMethod::kUeoSample || oracle;
  if (weighted && (n % cfg.batch_size == 1 || cfg.batch_size == 1) && total_steps > 0) {
    result.log.warnings.push_back(
        "batches of size 1 occur; the weighted objective degenerates to (1-beta) H(p) on them");
  }

  std::vector<double> v_scale(head.dim(), 0.0), v_shift(head.dim(), 0.0);
  std::vector<double> v_ctx(head.m * head.k, 0.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + epoch);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
    }
    for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Matrix batch = pool.gather_rows(idx);

      std::vector<double> w;
      if (oracle) {
        for (auto i : idx) w.push_back(oracle_weights[i]);
      } else {
        w = mcm_score(predict_probs(reference, batch));
      }

      LossGradient lg;
      try {
        lg = grad(cfg.loss, state, batch, w);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step));
      }

      const double lr = cosine_lr(step, total_steps, cfg.lr);
      if (cfg.param_groups.affine_scale)
        sgd_update(state.adapter.scale, lg.grad.scale, v_scale, lr, cfg.momentum);
      if (cfg.param_groups.affine_shift)
        sgd_update(state.adapter.shift, lg.grad.shift, v_shift, lr, cfg.momentum);
      if (cfg.param_groups.prompt)
        sgd_update(state.adapter.context.data(), lg.grad.context.data(), v_ctx, lr, cfg.momentum);

      TrainLogRow row{step, epoch, lr, lg.loss, 0.0, 0.0};
      for (double x : w) row.mean_w += x;
      row.mean_w /= static_cast<double>(w.size());
      row.mean_entropy = loss_entmin(lg.probs);
      result.log.rows.push_back(row);
    }
  }
  return result;
}

}  // namespace ueo
