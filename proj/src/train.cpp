#include "arft/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace arft {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_source < 1 || batch_target < 1) throw ConfigError("train: batch sizes must be >= 1");
  if (lr0 <= 0.0) throw ConfigError("train: lr0 must be > 0");
  if (lr_decay_per_epoch <= 0.0 || lr_decay_per_epoch > 1.0)
    throw ConfigError("train: lr_decay_per_epoch must be in (0,1]");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
}

TrainState::TrainState(ModelParams p) : params(std::move(p)) {
  for (const auto& [name, t] : params.named_tensors()) velocity.push_back(Tensor::zeros(t->shape));
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.lr_decay_per_epoch, static_cast<double>(epoch));
}

void sgd_step(TrainState& state, const std::vector<const Tensor*>& grads, double lr,
              const TrainConfig& cfg) {
  auto named = state.params.named_tensors();
  if (grads.size() != named.size())
    throw ContractError("sgd_step: got " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(named.size()) + " parameter tensors");

  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor& theta = *named[i].second;
    Tensor& v = state.velocity[i];
    const Tensor& g = *grads[i];
    if (!g.same_shape(theta))
      throw ShapeError("sgd_step: gradient shape " + shape_str(g.shape) + " for parameter " +
                       named[i].first + " of shape " + shape_str(theta.shape));
    for (std::size_t j = 0; j < theta.numel(); ++j) {
      if (!std::isfinite(g.data[j]))
        throw ContractError("sgd_step: non-finite gradient in " + named[i].first + " at step " +
                            std::to_string(state.step));
      v.data[j] = cfg.momentum * v.data[j] + (g.data[j] + cfg.weight_decay * theta.data[j]);
      theta.data[j] -= lr * v.data[j];
    }
  }
}

void TrainingLog::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open file for writing: " + path);
  out << "step,epoch,lr,lambda,focal,mmd,total\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.epoch,
                  r.lr, r.lambda, r.focal, r.mmd, r.total);
    out << buf;
  }
  if (!out) throw ParseError("write failed: " + path);
}

Tensor make_matrix(const Dataset& d, const std::vector<std::size_t>& rows) {
  const std::size_t p = d.n_features();
  Tensor m = Tensor::zeros({rows.size(), p});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= d.n_rows())
      throw ContractError("make_matrix: row index " + std::to_string(rows[i]) +
                          " out of range for " + std::to_string(d.n_rows()) + " rows");
    for (std::size_t j = 0; j < p; ++j) m.data[i * p + j] = d.features[rows[i]][j];
  }
  return m;
}

Dataset strip_labels(const Dataset& d) {
  Dataset out = d;
  out.labels.reset();
  return out;
}

namespace {

// Picks the representation the MMD term aligns, per the configured choice.
Var mmd_representation(Tape& t, const ForwardResult& fwd, const ModelConfig& cfg,
                       std::size_t n, MmdRepr repr) {
  switch (repr) {
    case MmdRepr::kCls:
      return fwd.cls_repr;
    case MmdRepr::kMeanTokens: {
      const std::size_t tokens = cfg.p + 1;
      Var ones = t.constant(Tensor::full({1, tokens}, 1.0));
      Var summed = matmul(ones, fwd.tokens_repr);  // [N,1,d]
      return reshape(mul_scalar(summed, 1.0 / static_cast<double>(tokens)), {n, cfg.d_token});
    }
    case MmdRepr::kAllTokens:
      return reshape(fwd.tokens_repr, {n, (cfg.p + 1) * cfg.d_token});
  }
  throw ContractError("mmd_representation: unknown repr choice");
}

}  // namespace

FitResult fit(const Dataset& source, const Dataset& target, const ModelConfig& model_cfg,
              const FocalConfig& focal_cfg, const MMDConfig& mmd_cfg, const LossSchedule& sched,
              const TrainConfig& train_cfg) {
  model_cfg.validate();
  focal_cfg.validate();
  mmd_cfg.validate();
  sched.validate();
  train_cfg.validate();

  if (!source.has_labels()) throw ContractError("fit: source dataset must be labeled");
  if (target.has_labels())
    throw ContractError("fit: target dataset must be unlabeled (labels are never read here; "
                        "strip them first)");
  if (source.metric_names != target.metric_names)
    throw SchemaError("fit: source and target metric schemas differ");
  if (model_cfg.p != source.n_features())
    throw ConfigError("fit: model expects p=" + std::to_string(model_cfg.p) +
                      " features, datasets have " + std::to_string(source.n_features()));
  if (source.n_rows() == 0 || target.n_rows() == 0)
    throw ContractError("fit: empty source or target dataset");

  {
    std::size_t pos = 0;
    for (int y : *source.labels) pos += static_cast<std::size_t>(y);
    if (pos == 0 || pos == source.n_rows())
      throw ContractError("fit: source dataset has a single class");
    if (2 * pos != source.n_rows())
      std::fprintf(stderr,
                   "warning: fit source is not class-balanced (%zu positives of %zu rows); "
                   "random_oversample is normally applied first\n",
                   pos, source.n_rows());
  }

  Rng rng(train_cfg.seed);
  TrainState state(init_params(model_cfg, rng));

  const std::size_t n_s = source.n_rows();
  const std::size_t n_t = target.n_rows();
  const std::size_t steps_per_epoch = (n_s + train_cfg.batch_source - 1) / train_cfg.batch_source;
  const std::size_t total_steps = steps_per_epoch * train_cfg.epochs;

  TrainingLog log;
  log.rows.reserve(total_steps);

  std::vector<std::size_t> source_order(n_s);
  for (std::size_t i = 0; i < n_s; ++i) source_order[i] = i;
  std::vector<std::size_t> target_pool(n_t);
  for (std::size_t i = 0; i < n_t; ++i) target_pool[i] = i;

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    state.epoch = epoch;
    const double lr = lr_schedule(epoch, train_cfg);
    rng.shuffle(source_order);

    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      // Source batch: next shuffled chunk (last one may be short).
      const std::size_t lo = b * train_cfg.batch_source;
      const std::size_t hi = std::min(lo + train_cfg.batch_source, n_s);
      std::vector<std::size_t> src_idx(source_order.begin() + static_cast<std::ptrdiff_t>(lo),
                                       source_order.begin() + static_cast<std::ptrdiff_t>(hi));
      std::vector<int> src_labels(src_idx.size());
      for (std::size_t i = 0; i < src_idx.size(); ++i)
        src_labels[i] = (*source.labels)[src_idx[i]];

      // Target batch: distinct rows when possible, with replacement otherwise.
      std::vector<std::size_t> tgt_idx;
      tgt_idx.reserve(train_cfg.batch_target);
      if (n_t >= train_cfg.batch_target) {
        for (std::size_t i = 0; i < train_cfg.batch_target; ++i) {
          const std::size_t j = i + rng.uniform_int(n_t - i);
          std::swap(target_pool[i], target_pool[j]);
          tgt_idx.push_back(target_pool[i]);
        }
      } else {
        for (std::size_t i = 0; i < train_cfg.batch_target; ++i)
          tgt_idx.push_back(rng.uniform_int(n_t));
      }

      const Tensor xs = make_matrix(source, src_idx);
      const Tensor xt = make_matrix(target, tgt_idx);
      const double progress =
          static_cast<double>(state.step) / static_cast<double>(total_steps);

      Tape t;
      StagedModel staged = stage(t, state.params, /*trainable=*/true);
      const bool training = train_cfg.dropout_enabled;
      ForwardResult fwd_s = run_forward(t, staged, model_cfg, xs, training, rng);
      ForwardResult fwd_t = run_forward(t, staged, model_cfg, xt, training, rng);

      Var probs = true_class_probs(t, fwd_s.logits, src_labels);
      Var repr_s = mmd_representation(t, fwd_s, model_cfg, xs.shape[0], mmd_cfg.repr);
      Var repr_t = mmd_representation(t, fwd_t, model_cfg, xt.shape[0], mmd_cfg.repr);
      CompositeParts parts =
          composite_loss(t, probs, repr_s, repr_t, progress, focal_cfg, mmd_cfg, sched);

      const double total = t.value(parts.total).data[0];
      const double focal = t.value(parts.focal_part).data[0];
      const double mmd = t.value(parts.mmd_part).data[0];
      if (!std::isfinite(total))
        throw ContractError("fit: non-finite loss at step " + std::to_string(state.step) +
                            " (focal=" + std::to_string(focal) + ", mmd=" + std::to_string(mmd) +
                            ")");

      t.backward(parts.total);
      std::vector<const Tensor*> grads;
      grads.reserve(staged.all.size());
      for (Var v : staged.all) grads.push_back(&t.grad(v));
      sgd_step(state, grads, lr, train_cfg);

      log.rows.push_back(
          TrainLogRow{state.step, epoch, lr, parts.lambda_used, focal, mmd, total});
      ++state.step;
    }
  }

  return FitResult{std::move(state.params), std::move(log)};
}

}  // namespace arft
