#include "poe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "poe/errors.hpp"
#include "poe/rng.hpp"

namespace poe {

void validate(const TrainConfig& config) {
  if (config.epochs < 1) {
    throw InvalidConfig("train.epochs must be >= 1");
  }
  if (config.batch_size < 1) {
    throw InvalidConfig("train.batch_size must be >= 1");
  }
  if (!(config.alpha >= 0.0)) {
    throw InvalidConfig("train.alpha must be >= 0");
  }
  if (!(config.learning_rate > 0.0)) {
    throw InvalidConfig("train.learning_rate must be > 0");
  }
  if (!(config.adam_beta1 >= 0.0 && config.adam_beta1 < 1.0) ||
      !(config.adam_beta2 >= 0.0 && config.adam_beta2 < 1.0)) {
    throw InvalidConfig("train.adam betas must lie in [0, 1)");
  }
  if (!(config.adam_eps > 0.0)) {
    throw InvalidConfig("train.adam_eps must be > 0");
  }
  if (!(config.weight_decay >= 0.0)) {
    throw InvalidConfig("train.weight_decay must be >= 0");
  }
}

const num::LogitVector& FrozenWeakLogits::at(std::uint64_t id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) {
    throw MissingWeakLogits("no frozen weak logits for example id " +
                            std::to_string(id));
  }
  return it->second;
}

namespace {

LossGrad example_loss_grad(const Model& model, const Example& ex,
                           const TrainConfig& config,
                           const FrozenWeakLogits* frozen) {
  switch (config.loss_mode) {
    case LossMode::CE:
      return grad_ce(model, ex.features, ex.gold);
    case LossMode::PoE:
      return grad_poe(model, ex.features, ex.gold, frozen->at(ex.id));
    case LossMode::PoE_CE:
      return grad_multiloss(model, ex.features, ex.gold, frozen->at(ex.id),
                            config.alpha);
  }
  throw InvalidConfig("train: unknown loss mode");
}

}  // namespace

TrainRun train(Model model, std::span<const Example> data,
               const TrainConfig& config, const FrozenWeakLogits* frozen) {
  validate(config);
  if (config.loss_mode != LossMode::CE) {
    if (frozen == nullptr) {
      throw MissingWeakLogits("PoE training requires frozen weak logits");
    }
    for (const Example& ex : data) {
      (void)frozen->at(ex.id);  // fail fast on any uncovered id
    }
  }

  const std::size_t n = data.size();
  const std::size_t param_count = model.parameters.size();
  const std::size_t batches_per_epoch =
      n == 0 ? 0 : (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * batches_per_epoch;
  std::size_t warmup =
      config.warmup_steps >= 0
          ? static_cast<std::size_t>(config.warmup_steps)
          : std::max<std::size_t>(
                1, static_cast<std::size_t>(
                       std::llround(0.05 * static_cast<double>(total_steps))));
  warmup = std::min(warmup, total_steps);

  std::vector<double> adam_m(param_count, 0.0);
  std::vector<double> adam_v(param_count, 0.0);
  std::vector<double> grad(param_count, 0.0);

  TrainRun run;
  run.config = config;
  run.example_ids.reserve(n);
  for (const Example& ex : data) {
    run.example_ids.push_back(ex.id);
  }
  run.loss_curve.reserve(total_steps);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(config.seed, epoch));
      rng.shuffle(order);
    }

    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const LossGrad lg =
            example_loss_grad(model, data[order[i]], config, frozen);
        batch_loss += lg.loss;
        for (std::size_t p = 0; p < param_count; ++p) {
          grad[p] += lg.grad[p];
        }
      }
      batch_loss *= inv;
      for (double& g : grad) {
        g *= inv;
      }
      run.loss_curve.push_back(batch_loss);

      // Linear warmup to learning_rate, then linear decay to 0.
      ++step;
      double lr = config.learning_rate;
      if (step <= warmup) {
        lr *= static_cast<double>(step) / static_cast<double>(warmup);
      } else {
        lr *= static_cast<double>(total_steps - step) /
              static_cast<double>(total_steps - warmup);
      }

      const double bc1 =
          1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
      const double bc2 =
          1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
      const double decay = 1.0 - lr * config.weight_decay;
      for (std::size_t p = 0; p < param_count; ++p) {
        adam_m[p] = config.adam_beta1 * adam_m[p] +
                    (1.0 - config.adam_beta1) * grad[p];
        adam_v[p] = config.adam_beta2 * adam_v[p] +
                    (1.0 - config.adam_beta2) * grad[p] * grad[p];
        const double mhat = adam_m[p] / bc1;
        const double vhat = adam_v[p] / bc2;
        model.parameters[p] =
            model.parameters[p] * decay -
            lr * mhat / (std::sqrt(vhat) + config.adam_eps);
      }
    }

    // End-of-epoch dynamics snapshot: the model's own gold-label probability.
    std::vector<double> gold_prob(n);
    for (std::size_t i = 0; i < n; ++i) {
      const num::ProbVector p = num::softmax(forward(model, data[i].features));
      gold_prob[i] = p[data[i].gold];
    }
    run.per_epoch_gold_prob.push_back(std::move(gold_prob));
  }

  run.final_model = std::move(model);
  return run;
}

Predictions predict_all(const Model& model, std::span<const Example> data) {
  Predictions out;
  out.logits.reserve(data.size());
  out.losses.reserve(data.size());
  out.correct.reserve(data.size());
  for (const Example& ex : data) {
    num::LogitVector z = forward(model, ex.features);
    out.losses.push_back(num::cross_entropy(z, ex.gold));
    std::size_t best = 0;
    for (std::size_t j = 1; j < z.size(); ++j) {
      if (z[j] > z[best]) {
        best = j;
      }
    }
    out.correct.push_back(best == ex.gold);
    out.logits.push_back(std::move(z));
  }
  return out;
}

double accuracy(const Predictions& preds) {
  if (preds.correct.empty()) {
    return 0.0;
  }
  std::size_t hits = 0;
  for (bool c : preds.correct) {
    hits += c ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.correct.size());
}

TwoStageResult run_two_stage(const ModelSpec& weak_spec,
                             const ModelSpec& main_spec,
                             const DatasetBundle& bundle,
                             const TrainConfig& weak_cfg,
                             const TrainConfig& main_cfg) {
  if (weak_cfg.loss_mode != LossMode::CE) {
    throw InvalidConfig("two_stage: weak model must train with CE");
  }
  if (main_cfg.loss_mode == LossMode::CE) {
    throw InvalidConfig("two_stage: main model must train with PoE or PoE_CE");
  }

  TwoStageResult result;
  result.weak_run = train(init_model(weak_spec), bundle.train, weak_cfg);

  // Cache final-checkpoint weak logits over every split; the weak model is
  // never touched again.
  const Model& weak = result.weak_run.final_model;
  auto cache_split = [&](std::span<const Example> split) {
    for (const Example& ex : split) {
      result.frozen.by_id.emplace(ex.id, forward(weak, ex.features));
    }
  };
  cache_split(bundle.train);
  cache_split(bundle.eval_clean);
  cache_split(bundle.eval_anti);

  result.main_run =
      train(init_model(main_spec), bundle.train, main_cfg, &result.frozen);
  return result;
}

void write_dynamics_csv(const TrainRun& run, std::ostream& os) {
  char buf[64];
  os << "example_id,epoch,gold_prob\n";
  for (std::size_t e = 0; e < run.per_epoch_gold_prob.size(); ++e) {
    const auto& probs = run.per_epoch_gold_prob[e];
    for (std::size_t i = 0; i < probs.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", probs[i]);
      os << run.example_ids[i] << ',' << e << ',' << buf << '\n';
    }
  }
}

TrainRun read_dynamics_csv(std::istream& is) {
  TrainRun run;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line) || line != "example_id,epoch,gold_prob") {
    throw ParseError("dynamics: missing csv header", 1);
  }
  ++lineno;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) {
      throw ParseError("dynamics: expected 3 comma-separated fields", lineno);
    }
    try {
      const std::uint64_t id = std::stoull(line.substr(0, c1));
      const std::size_t epoch = std::stoull(line.substr(c1 + 1, c2 - c1 - 1));
      const double prob = std::stod(line.substr(c2 + 1));
      if (epoch == 0) {
        run.example_ids.push_back(id);
      }
      if (epoch >= run.per_epoch_gold_prob.size()) {
        run.per_epoch_gold_prob.resize(epoch + 1);
      }
      run.per_epoch_gold_prob[epoch].push_back(prob);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("dynamics: bad row '" + line + "'", lineno);
    }
  }
  for (const auto& epoch : run.per_epoch_gold_prob) {
    if (epoch.size() != run.example_ids.size()) {
      throw ParseError("dynamics: ragged epochs", lineno);
    }
  }
  return run;
}

}  // namespace poe
