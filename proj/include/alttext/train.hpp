#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "alttext/captioner.hpp"

namespace alttext::captioner {

struct TrainHyper {
  double lr = 1e-4;
  int batch_size = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int patience = 3;      // non-improving epochs tolerated before stopping
  int max_epochs = 100;
  long max_steps = 0;    // 0 = unlimited
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct EpochLog {
  int epoch = 0;
  double train_nll = 0.0;  // running mean over the epoch's batches
  double val_nll = 0.0;
  double wall_seconds = 0.0;
  long steps = 0;
};

struct TrainResult {
  ModelState best;  // checkpoint with the lowest validation NLL
  ModelState last;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_nll = 0.0;
};

/// Mean masked-token NLL over a dataset (nats per token).
double mean_nll(const ModelState& state, std::span<const Example> data);

/// One Adam update of every parameter from `grad`.
void adam_step(ModelState& state, const std::vector<double>& grad, const TrainHyper& hyper);

/// Mini-batch Adam with early stopping on validation NLL. Only the mapper and
/// decoder parameters are updated; image embeddings are read-only.
/// Errors: EmptyDataset, DivergedLoss.
TrainResult train(const ModelConfig& config, std::span<const Example> train_set,
                  std::span<const Example> val_set, const TrainHyper& hyper);
TrainResult train(ModelState init, std::span<const Example> train_set,
                  std::span<const Example> val_set, const TrainHyper& hyper);

/// CSV: epoch,train_nll,val_nll,wall_seconds
void write_training_log(const std::vector<EpochLog>& log, std::ostream& out);

}  // namespace alttext::captioner
