#include "alttext/train.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "alttext/error.hpp"

namespace alttext::captioner {

double mean_nll(const ModelState& state, std::span<const Example> data) {
  NllSum total;
  for (const auto& ex : data) {
    const NllSum part = example_nll(state, ex);
    total.nll += part.nll;
    total.tokens += part.tokens;
  }
  if (total.tokens == 0) throw Error(Errc::EmptyMask, "dataset has no target positions");
  return total.mean();
}

void adam_step(ModelState& state, const std::vector<double>& grad, const TrainHyper& hyper) {
  const std::size_t n = state.params.size();
  if (state.adam_m.size() != n) state.adam_m.assign(n, 0.0);
  if (state.adam_v.size() != n) state.adam_v.assign(n, 0.0);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    double& m = state.adam_m[i];
    double& v = state.adam_v[i];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
    state.params[i] -= hyper.lr * (m / c1) / (std::sqrt(v / c2) + hyper.adam_eps);
  }
}

TrainResult train(const ModelConfig& config, std::span<const Example> train_set,
                  std::span<const Example> val_set, const TrainHyper& hyper) {
  return train(init_state(config), train_set, val_set, hyper);
}

TrainResult train(ModelState state, std::span<const Example> train_set,
                  std::span<const Example> val_set, const TrainHyper& hyper) {
  if (train_set.empty() || val_set.empty()) {
    throw Error(Errc::EmptyDataset, "training needs non-empty train and validation sets");
  }
  if (hyper.batch_size < 1) throw Error(Errc::InvalidArgument, "batch size must be >= 1");

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  std::vector<Example> batch;

  TrainResult result;
  result.best_val_nll = std::numeric_limits<double>::infinity();
  int stale = 0;
  long steps = 0;

  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    NllSum running;
    bool step_budget_hit = false;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(hyper.batch_size));
      batch.clear();
      for (std::size_t i = b; i < end; ++i) batch.push_back(train_set[order[i]]);
      const NllSum part = loss_and_gradient(state, batch, grad, rng());
      if (!std::isfinite(part.nll)) {
        throw Error(Errc::DivergedLoss, "non-finite training loss at step " + std::to_string(steps));
      }
      adam_step(state, grad, hyper);
      running.nll += part.nll;
      running.tokens += part.tokens;
      ++steps;
      if (hyper.max_steps > 0 && steps >= hyper.max_steps) {
        step_budget_hit = true;
        break;
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_nll = running.mean();
    entry.val_nll = mean_nll(state, val_set);
    entry.steps = steps;
    entry.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (!std::isfinite(entry.val_nll)) throw Error(Errc::DivergedLoss, "non-finite validation loss");
    result.log.push_back(entry);
    if (hyper.verbose) {
      std::fprintf(stderr, "epoch %3d  train %.5f  val %.5f  (%.1fs)\n", epoch, entry.train_nll,
                   entry.val_nll, entry.wall_seconds);
    }

    if (entry.val_nll < result.best_val_nll) {
      result.best_val_nll = entry.val_nll;
      result.best_epoch = epoch;
      result.best = state;
      stale = 0;
    } else if (++stale > hyper.patience) {
      break;
    }
    if (step_budget_hit) break;
  }
  result.last = std::move(state);
  return result;
}

void write_training_log(const std::vector<EpochLog>& log, std::ostream& out) {
  out << "epoch,train_nll,val_nll,wall_seconds\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.8f,%.8f,%.3f\n", e.epoch, e.train_nll, e.val_nll,
                  e.wall_seconds);
    out << buf;
  }
}

}  // namespace alttext::captioner
