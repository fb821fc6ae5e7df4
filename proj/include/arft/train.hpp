#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arft/dataset.hpp"
#include "arft/losses.hpp"
#include "arft/model.hpp"

namespace arft {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_source = 64;
  std::size_t batch_target = 64;
  double lr0 = 1e-3;
  double lr_decay_per_epoch = 0.98;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  bool dropout_enabled = true;
  void validate() const;
};

// Mutable optimizer state. Velocity buffers mirror the parameter tensors in
// named_tensors() order.
struct TrainState {
  ModelParams params;
  std::vector<Tensor> velocity;
  std::size_t epoch = 0;
  std::size_t step = 0;

  explicit TrainState(ModelParams p);
};

// lr = lr0 * lr_decay_per_epoch^epoch.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

// v <- mu*v + (g + weight_decay*theta); theta <- theta - lr*v.
// grads must align with params.named_tensors(); a non-finite gradient aborts
// with a step-identified error.
void sgd_step(TrainState& state, const std::vector<const Tensor*>& grads, double lr,
              const TrainConfig& cfg);

struct TrainLogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0, lambda = 0.0, focal = 0.0, mmd = 0.0, total = 0.0;
};

struct TrainingLog {
  std::vector<TrainLogRow> rows;
  void write_csv(const std::string& path) const;
};

struct FitResult {
  ModelParams params;
  TrainingLog log;
};

// Rectangular [rows.size(), p] tensor gathering the given dataset rows.
Tensor make_matrix(const Dataset& d, const std::vector<std::size_t>& rows);

// Copy of d without labels (fit requires an unlabeled target by contract).
Dataset strip_labels(const Dataset& d);

// Full training loop. Per step: one shuffled-epoch source batch and one
// target batch (sampled with replacement when the target is smaller than the
// batch) run through the same staged parameters; composite focal+MMD loss
// with progress = step/total_steps; backward; SGD update. Deterministic:
// identical inputs and configs give bit-identical results.
FitResult fit(const Dataset& source, const Dataset& target, const ModelConfig& model_cfg,
              const FocalConfig& focal_cfg, const MMDConfig& mmd_cfg, const LossSchedule& sched,
              const TrainConfig& train_cfg);

}  // namespace arft
