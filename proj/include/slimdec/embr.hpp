#pragma once

// Expected edit distance over an n-best list (minimum Bayes risk), its
// gradient, and fine-tuning steps that push that gradient through the
// transducer loss of every hypothesis.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "slimdec/backprop.hpp"
#include "slimdec/decode.hpp"
#include "slimdec/edit_distance.hpp"
#include "slimdec/errors.hpp"
#include "slimdec/optimizer.hpp"
#include "slimdec/toy_task.hpp"
#include "slimdec/trainer.hpp"

namespace slimdec {

struct NBestList {
  std::vector<NBestEntry> entries;  // log_prob need not be normalized
  LabelSequence reference;
};

struct EmbrRisk {
  double risk = 0.0;
  Vector posteriors;      // softmax of scaled log-probs
  Vector edit_distances;  // W(h)
  Vector grad;            // d risk / d log_prob(h)
};

// risk = sum_h P(h) W(h) with P = softmax(scale * log_prob) over the list;
// d risk / d log_prob(h) = scale * P(h) (W(h) - risk).
inline EmbrRisk embr_risk(const NBestList &nbest, double posterior_scale = 1.0) {
  if (nbest.entries.empty()) throw DomainError("EMBR risk of an empty n-best list");
  std::set<LabelSequence> seen;
  for (const auto &e : nbest.entries)
    if (!seen.insert(e.labels).second) throw DomainError("n-best list contains duplicate hypotheses");
  const std::size_t n = nbest.entries.size();
  EmbrRisk out;
  Vector scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = posterior_scale * nbest.entries[i].log_prob;
  const double lse = log_sum_exp<double>(scaled);
  out.posteriors.resize(n);
  out.edit_distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.posteriors[i] = std::exp(scaled[i] - lse);
    out.edit_distances[i] = static_cast<double>(edit_distance(nbest.entries[i].labels, nbest.reference));
    out.risk += out.posteriors[i] * out.edit_distances[i];
  }
  out.grad.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.grad[i] = posterior_scale * out.posteriors[i] * (out.edit_distances[i] - out.risk);
  return out;
}

struct EmbrOptions {
  std::size_t beam_width = 4;
  double posterior_scale = 1.0;
  bool add_reference = false;  // force the reference into every n-best list
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  std::size_t steps = 0;  // 0: a tenth of the main training steps
  double clip_norm = 5.0;

  bool operator==(const EmbrOptions &) const = default;
};

// Hypotheses scored with their exact log-likelihood (-transducer loss).
inline NBestList score_hypotheses(const Matrix &input, const std::vector<LabelSequence> &hyps,
                                  const LabelSequence &reference, const ModelWeights &w, const DecoderConfig &cfg) {
  NBestList list;
  list.reference = reference;
  for (const auto &h : hyps) list.entries.push_back({h, -utterance_loss(input, h, w, cfg)});
  return list;
}

// Risk of one utterance over a fixed set of hypotheses, with
// d risk / d theta accumulated into grad. log P(h) = -loss(h), so each
// hypothesis contributes its transducer-loss gradient scaled by -dR/dlogP(h).
inline EmbrRisk embr_utterance_gradient(const Matrix &input, const std::vector<LabelSequence> &hyps,
                                        const LabelSequence &reference, const ModelWeights &w,
                                        const DecoderConfig &cfg, ModelWeights &grad, double posterior_scale = 1.0) {
  std::vector<UtteranceCache> caches(hyps.size());
  std::vector<TransducerLoss> losses;
  NBestList list;
  list.reference = reference;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    auto logits = forward_utterance(input, hyps[i], w, cfg, caches[i]);
    losses.push_back(transducer_loss(logits, hyps[i]));
    list.entries.push_back({hyps[i], -losses.back().loss});
  }
  EmbrRisk risk = embr_risk(list, posterior_scale);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (risk.grad[i] == 0.0) continue;
    auto dlogits = losses[i].grad;
    for (double &x : dlogits.data) x *= -risk.grad[i];
    backward_utterance(caches[i], dlogits, w, cfg, grad);
  }
  return risk;
}

// Beam n-best label sequences for one utterance, optionally with the
// reference appended when missing.
inline std::vector<LabelSequence> nbest_labels(const Matrix &input, const LabelSequence &reference,
                                               const ModelWeights &w, const DecoderConfig &cfg,
                                               const EmbrOptions &opts) {
  const auto frames = model_frames(input, w, cfg);
  std::vector<LabelSequence> hyps;
  if (frames.rows() == 0) return hyps;
  for (auto &e : beam_decode(frames, w, cfg, opts.beam_width)) hyps.push_back(std::move(e.labels));
  if (opts.add_reference && std::find(hyps.begin(), hyps.end(), reference) == hyps.end()) hyps.push_back(reference);
  return hyps;
}

struct EmbrStepStats {
  double mean_risk = 0.0;
  std::size_t utterances = 0;
  std::size_t skipped = 0;  // empty beam output
  double grad_norm = 0.0;
};

// One EMBR update over a batch: beam search, risk, gradient, optimizer step.
inline EmbrStepStats embr_step(const std::vector<const Utterance *> &batch, ModelWeights &w, const DecoderConfig &cfg,
                               const EmbrOptions &opts, SgdMomentum &opt) {
  EmbrStepStats stats;
  ModelWeights grad = zero_weights(cfg);
  for (const Utterance *utt : batch) {
    const auto hyps = nbest_labels(utt->features, utt->labels, w, cfg, opts);
    if (hyps.empty()) {
      ++stats.skipped;
      continue;
    }
    const auto r = embr_utterance_gradient(utt->features, hyps, utt->labels, w, cfg, grad, opts.posterior_scale);
    stats.mean_risk += r.risk;
    ++stats.utterances;
  }
  if (stats.utterances == 0) return stats;
  const double inv = 1.0 / static_cast<double>(stats.utterances);
  for (auto &[name, ref] : ModelWeights::tensor_refs(grad))
    for (double &x : ref.get().flat()) x *= inv;
  stats.mean_risk *= inv;
  stats.grad_norm = std::sqrt(squared_norm(grad));
  if (!std::isfinite(stats.mean_risk) || !std::isfinite(stats.grad_norm))
    throw DivergenceError("non-finite EMBR risk or gradient");
  opt.step(w, grad);
  return stats;
}

// Mean n-best expected edit distance over a data set.
inline double mean_risk(const std::vector<Utterance> &data, const ModelWeights &w, const DecoderConfig &cfg,
                        const EmbrOptions &opts) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto &utt : data) {
    const auto hyps = nbest_labels(utt.features, utt.labels, w, cfg, opts);
    if (hyps.empty()) continue;
    total += embr_risk(score_hypotheses(utt.features, hyps, utt.labels, w, cfg), opts.posterior_scale).risk;
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

struct EmbrResult {
  std::vector<EmbrStepStats> steps;
};

// Runs `steps` EMBR updates over shuffled minibatches of the training split.
inline EmbrResult embr_finetune(ModelWeights &w, const DecoderConfig &cfg, const std::vector<Utterance> &train,
                                const EmbrOptions &opts, std::size_t steps, std::uint64_t seed) {
  if (opts.batch_size == 0) throw ConfigError("EMBR batch_size must be >= 1");
  EmbrResult result;
  if (train.empty()) return result;
  SgdMomentum opt(cfg, opts.learning_rate, opts.momentum, opts.clip_norm);
  SeededRng rng(seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<const Utterance *> batch;
    while (batch.size() < std::min(opts.batch_size, train.size())) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
        cursor = 0;
      }
      batch.push_back(&train[order[cursor++]]);
    }
    result.steps.push_back(embr_step(batch, w, cfg, opts, opt));
  }
  return result;
}

}  // namespace slimdec
