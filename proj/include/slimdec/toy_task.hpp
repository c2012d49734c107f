#pragma once

// Synthetic recognition task: every label is rendered as a short run of
// noisy one-hot feature frames.

#include <cstdint>
#include <set>
#include <vector>

#include "slimdec/decode.hpp"
#include "slimdec/errors.hpp"
#include "slimdec/math.hpp"

namespace slimdec {

struct ToyTaskSpec {
  std::size_t vocab_size = 4;
  std::size_t min_length = 2;
  std::size_t max_length = 5;
  std::size_t min_frames_per_label = 2;
  std::size_t max_frames_per_label = 4;
  std::size_t feature_dim = 4;
  double noise_std = 0.1;
  std::size_t train_size = 200;
  std::size_t dev_size = 50;
  std::uint64_t seed = 7;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("task vocab_size must be >= 2");
    if (feature_dim < vocab_size) throw ConfigError("task feature_dim must be >= vocab_size");
    if (min_length > max_length) throw ConfigError("task min_length > max_length");
    if (min_frames_per_label < 1 || min_frames_per_label > max_frames_per_label)
      throw ConfigError("task frames-per-label range is invalid");
    if (noise_std < 0) throw ConfigError("task noise_std must be >= 0");
  }

  bool operator==(const ToyTaskSpec &) const = default;
};

struct Utterance {
  Matrix features;  // T x feature_dim
  LabelSequence labels;
};

struct ToyDataset {
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
};

// Frames for a known label sequence with explicit per-label durations.
inline Matrix render_features(const LabelSequence &labels, const std::vector<std::size_t> &frames_per_label,
                              std::size_t feature_dim, double noise_std, SeededRng &rng) {
  if (labels.size() != frames_per_label.size()) throw ShapeError("one duration per label required");
  std::size_t total = 0;
  for (std::size_t d : frames_per_label) total += d;
  Matrix out(total, feature_dim);
  std::size_t t = 0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    for (std::size_t r = 0; r < frames_per_label[k]; ++r, ++t) {
      if (labels[k] >= feature_dim) throw DomainError("label does not fit the feature dimension");
      out(t, labels[k]) = 1.0;
      if (noise_std > 0)
        for (double &x : out.row(t)) x += rng.gaussian(0.0, noise_std);
    }
  return out;
}

// Label sequences never repeat a label back to back: with one-hot frames a
// doubled label would be indistinguishable from a single longer one.
inline Utterance sample_utterance(const ToyTaskSpec &spec, SeededRng &rng) {
  Utterance utt;
  const std::size_t len = rng.uniform_int(spec.min_length, spec.max_length);
  std::vector<std::size_t> durations;
  for (std::size_t k = 0; k < len; ++k) {
    std::size_t y = rng.uniform_int(0, spec.vocab_size - 1);
    if (k > 0 && y == utt.labels.back()) y = (y + 1 + rng.uniform_int(0, spec.vocab_size - 2)) % spec.vocab_size;
    utt.labels.push_back(y);
    durations.push_back(rng.uniform_int(spec.min_frames_per_label, spec.max_frames_per_label));
  }
  utt.features = render_features(utt.labels, durations, spec.feature_dim, spec.noise_std, rng);
  return utt;
}

// Deterministic in seed. No dev label sequence occurs in the train split.
inline ToyDataset make_toy_dataset(const ToyTaskSpec &spec, std::uint64_t seed) {
  spec.validate();
  SeededRng rng(seed);
  ToyDataset ds;
  std::set<LabelSequence> seen;
  for (std::size_t i = 0; i < spec.train_size; ++i) {
    ds.train.push_back(sample_utterance(spec, rng));
    seen.insert(ds.train.back().labels);
  }
  std::size_t attempts = 0;
  while (ds.dev.size() < spec.dev_size) {
    if (++attempts > 100 * (spec.dev_size + 1)) throw ConfigError("cannot draw a disjoint dev split; task too small");
    Utterance utt = sample_utterance(spec, rng);
    if (seen.count(utt.labels)) continue;
    ds.dev.push_back(std::move(utt));
  }
  return ds;
}

inline ToyDataset make_toy_dataset(const ToyTaskSpec &spec) { return make_toy_dataset(spec, spec.seed); }

}  // namespace slimdec
