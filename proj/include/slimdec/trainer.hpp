#pragma once

// Minibatch training on the toy task with the transducer loss.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <thread>
#include <vector>

#include "slimdec/backprop.hpp"
#include "slimdec/config.hpp"
#include "slimdec/decode.hpp"
#include "slimdec/edit_distance.hpp"
#include "slimdec/errors.hpp"
#include "slimdec/optimizer.hpp"
#include "slimdec/toy_task.hpp"
#include "slimdec/weights.hpp"

namespace slimdec {

struct TrainHyperparams {
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  std::size_t epochs = 15;
  std::uint64_t seed = 1;
  std::size_t workers = 1;  // data-parallel gradient threads
  double clip_norm = 5.0;   // 0 disables clipping

  bool operator==(const TrainHyperparams &) const = default;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean per-utterance training loss over the epoch
  double dev_token_error_rate = 0.0;
  double wall_s = 0.0;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<EpochMetrics> epochs;
  std::size_t steps = 0;
};

inline std::size_t steps_per_epoch(std::size_t examples, std::size_t batch_size) {
  return batch_size == 0 ? 0 : (examples + batch_size - 1) / batch_size;
}

// Sum of per-example gradients, computed with up to `workers` threads. Each
// example's gradient is formed separately and the sum is taken in example
// order, so the result does not depend on the thread count.
inline double batch_gradient(const std::vector<const Utterance *> &batch, const ModelWeights &w,
                             const DecoderConfig &cfg, ModelWeights &grad, std::size_t workers = 1) {
  const std::size_t n = batch.size();
  std::vector<ModelWeights> per(n);
  std::vector<double> losses(n, 0.0);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) {
      per[i] = zero_weights(cfg);
      losses[i] = utterance_loss_and_grad(batch[i]->features, batch[i]->labels, w, cfg, per[i]);
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < workers; ++k) pool.emplace_back(work, k, workers);
    for (auto &th : pool) th.join();
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    add_scaled(grad, per[i], 1.0);
    total += losses[i];
  }
  return total;
}

// Sum of edit distances over sum of reference lengths, greedy decoding.
inline double token_error_rate(const std::vector<Utterance> &data, const ModelWeights &w, const DecoderConfig &cfg) {
  std::size_t errors = 0, words = 0;
  for (const auto &utt : data) {
    const auto frames = model_frames(utt.features, w, cfg);
    const auto hyp = greedy_decode(frames, w, cfg).labels;
    errors += edit_distance(hyp, utt.labels);
    words += utt.labels.size();
  }
  return words == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(words);
}

inline DecoderConfig config_for_task(DecoderConfig cfg, const ToyTaskSpec &task) {
  cfg.vocab_size = task.vocab_size;
  cfg.feature_dim = task.feature_dim;
  return cfg;
}

// Trains from init_weights(cfg, hp.seed). cfg.vocab_size and cfg.feature_dim
// must agree with the task. Throws DivergenceError on a non-finite loss.
inline TrainResult train(const DecoderConfig &cfg, const ToyDataset &data, const TrainHyperparams &hp,
                         const std::function<void(const EpochMetrics &)> &on_epoch = {},
                         const ModelWeights *initial = nullptr) {
  using Clock = std::chrono::steady_clock;
  cfg.validate();
  if (cfg.feature_dim == 0) throw ConfigError("training needs a model with a toy encoder (feature_dim > 0)");
  if (hp.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  TrainResult result;
  result.weights = initial ? *initial : init_weights(cfg, hp.seed);
  SgdMomentum opt(cfg, hp.learning_rate, hp.momentum, hp.clip_norm);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto start = Clock::now();
    SeededRng shuffle_rng(hp.seed ^ (0x5851f42d4c957f2dULL * epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, i - 1)]);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += hp.batch_size) {
      std::vector<const Utterance *> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + hp.batch_size); ++k) batch.push_back(&data.train[order[k]]);
      ModelWeights grad = zero_weights(cfg);
      const double loss = batch_gradient(batch, result.weights, cfg, grad, hp.workers);
      if (!std::isfinite(loss))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(result.steps));
      for (auto &[name, ref] : ModelWeights::tensor_refs(grad))
        for (double &x : ref.get().flat()) x /= static_cast<double>(batch.size());
      opt.step(result.weights, grad);
      epoch_loss += loss;
      ++result.steps;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = data.train.empty() ? 0.0 : epoch_loss / static_cast<double>(data.train.size());
    m.dev_token_error_rate = token_error_rate(data.dev, result.weights, cfg);
    m.wall_s = std::chrono::duration<double>(Clock::now() - start).count();
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

inline TrainResult train(const DecoderConfig &cfg, const ToyTaskSpec &task, const TrainHyperparams &hp,
                         const std::function<void(const EpochMetrics &)> &on_epoch = {}) {
  return train(config_for_task(cfg, task), make_toy_dataset(task), hp, on_epoch);
}

}  // namespace slimdec
