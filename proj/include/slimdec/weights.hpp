#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "slimdec/config.hpp"
#include "slimdec/math.hpp"

namespace slimdec {

enum class InitKind { Gaussian, Zeros, Ones };

// Static description of one named tensor of a model.
struct TensorSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool decoder = true;      // counts towards the decoder size
  bool trainable = true;
  InitKind init = InitKind::Gaussian;
  double init_std = 0.0;
};

inline std::string lstm_tensor_name(std::size_t layer, const char *what) {
  return "lstm" + std::to_string(layer) + "." + what;
}

// Every tensor the config implies, in canonical order. The order fixes the
// RNG draw sequence in init_weights and the blob layout in archives.
inline std::vector<TensorSpec> tensor_specs(const DecoderConfig &cfg) {
  cfg.validate();
  const auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  const std::size_t de = cfg.embed_dim, dh = cfg.joint_dim, v = cfg.vocab_size;
  std::vector<TensorSpec> specs;
  specs.push_back({"embedding", cfg.embedding_rows(), de, true, true, InitKind::Gaussian, inv_sqrt(de)});
  if (cfg.variant == Variant::Reduced) {
    specs.push_back({"position", cfg.heads * cfg.history, de, true, cfg.position_trainable,
                     InitKind::Gaussian, inv_sqrt(de)});
    specs.push_back({"proj_w", de, de, true, true, InitKind::Gaussian, inv_sqrt(de)});
    specs.push_back({"proj_b", 1, de, true, true, InitKind::Zeros, 0.0});
    specs.push_back({"ln_gamma", 1, de, true, true, InitKind::Ones, 0.0});
    specs.push_back({"ln_beta", 1, de, true, true, InitKind::Zeros, 0.0});
  }
  if (cfg.variant == Variant::Lstm) {
    const std::size_t units = cfg.lstm_units, proj = cfg.lstm_proj;
    for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
      const std::size_t in = l == 0 ? de : proj;
      specs.push_back({lstm_tensor_name(l, "input_w"), in, 4 * units, true, true, InitKind::Gaussian,
                       inv_sqrt(in + proj)});
      specs.push_back({lstm_tensor_name(l, "recurrent_w"), proj, 4 * units, true, true,
                       InitKind::Gaussian, inv_sqrt(in + proj)});
      specs.push_back({lstm_tensor_name(l, "bias"), 1, 4 * units, true, true, InitKind::Zeros, 0.0});
      specs.push_back({lstm_tensor_name(l, "proj_w"), units, proj, true, true, InitKind::Gaussian,
                       inv_sqrt(units)});
    }
  }
  specs.push_back({"joint_enc_w", cfg.encoder_dim, dh, true, true, InitKind::Gaussian,
                   inv_sqrt(cfg.encoder_dim)});
  specs.push_back({"joint_pred_w", cfg.prediction_dim(), dh, true, true, InitKind::Gaussian,
                   inv_sqrt(cfg.prediction_dim())});
  specs.push_back({"joint_b", 1, dh, true, true, InitKind::Zeros, 0.0});
  if (!cfg.tied) specs.push_back({"output_w", v, dh, true, true, InitKind::Gaussian, inv_sqrt(dh)});
  specs.push_back({"blank_w", 1, dh, true, true, InitKind::Gaussian, inv_sqrt(dh)});
  specs.push_back({"output_b", 1, cfg.output_dim(), true, true, InitKind::Zeros, 0.0});
  if (cfg.feature_dim > 0) {
    specs.push_back({"encoder_w", cfg.feature_dim, cfg.encoder_dim, false, true, InitKind::Gaussian,
                     inv_sqrt(cfg.feature_dim)});
    specs.push_back({"encoder_b", 1, cfg.encoder_dim, false, true, InitKind::Zeros, 0.0});
  }
  return specs;
}

template <typename Real>
struct LstmLayerWeights {
  BasicMatrix<Real> input_w;      // in x 4U, gate order [input, forget, cell, output]
  BasicMatrix<Real> recurrent_w;  // P x 4U
  BasicMatrix<Real> bias;         // 1 x 4U
  BasicMatrix<Real> proj_w;       // U x P
};

template <typename Real>
struct BasicModelWeights {
  bool tied = false;

  BasicMatrix<Real> embedding;  // (|V|+1) x d_e, last row is the zero pad
  BasicMatrix<Real> position;   // (H*N) x d_e, row h*N + n
  BasicMatrix<Real> proj_w, proj_b, ln_gamma, ln_beta;
  std::vector<LstmLayerWeights<Real>> lstm;
  BasicMatrix<Real> joint_enc_w, joint_pred_w, joint_b;
  BasicMatrix<Real> output_w;  // |V| x d_h; empty when tied
  BasicMatrix<Real> blank_w;   // 1 x d_h, never tied
  BasicMatrix<Real> output_b;  // 1 x (|V|+1), blank bias last
  BasicMatrix<Real> encoder_w, encoder_b;

  // Output-layer vector of non-blank token v. When tied this is row v of the
  // embedding itself, so there is exactly one copy of it.
  std::span<const Real> output_row(std::size_t v) const {
    return tied ? embedding.row(v) : output_w.row(v);
  }

  template <typename Other>
  BasicModelWeights<Other> cast() const {
    BasicModelWeights<Other> out;
    out.tied = tied;
    out.lstm.resize(lstm.size());
    auto src = tensor_refs(*this);
    auto dst = BasicModelWeights<Other>::tensor_refs(out);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.get() = src[i].second.get().template cast<Other>();
    return out;
  }

  bool operator==(const BasicModelWeights &other) const {
    if (tied != other.tied) return false;
    auto a = tensor_refs(*this);
    auto b = tensor_refs(other);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(a[i].second.get() == b[i].second.get())) return false;
    return true;
  }

  // Name -> tensor pairs over every member slot (present or empty). LSTM
  // layers must already be sized.
  template <typename Self>
  static auto tensor_refs(Self &w) {
    using M = std::remove_reference_t<decltype((w.embedding))>;
    std::vector<std::pair<std::string, std::reference_wrapper<M>>> refs;
    refs.emplace_back("embedding", w.embedding);
    refs.emplace_back("position", w.position);
    refs.emplace_back("proj_w", w.proj_w);
    refs.emplace_back("proj_b", w.proj_b);
    refs.emplace_back("ln_gamma", w.ln_gamma);
    refs.emplace_back("ln_beta", w.ln_beta);
    for (std::size_t l = 0; l < w.lstm.size(); ++l) {
      refs.emplace_back(lstm_tensor_name(l, "input_w"), w.lstm[l].input_w);
      refs.emplace_back(lstm_tensor_name(l, "recurrent_w"), w.lstm[l].recurrent_w);
      refs.emplace_back(lstm_tensor_name(l, "bias"), w.lstm[l].bias);
      refs.emplace_back(lstm_tensor_name(l, "proj_w"), w.lstm[l].proj_w);
    }
    refs.emplace_back("joint_enc_w", w.joint_enc_w);
    refs.emplace_back("joint_pred_w", w.joint_pred_w);
    refs.emplace_back("joint_b", w.joint_b);
    refs.emplace_back("output_w", w.output_w);
    refs.emplace_back("blank_w", w.blank_w);
    refs.emplace_back("output_b", w.output_b);
    refs.emplace_back("encoder_w", w.encoder_w);
    refs.emplace_back("encoder_b", w.encoder_b);
    return refs;
  }
};

template <typename Real>
BasicMatrix<Real> &tensor_by_name(BasicModelWeights<Real> &w, const std::string &name) {
  for (auto &[n, ref] : BasicModelWeights<Real>::tensor_refs(w))
    if (n == name) return ref.get();
  throw DomainError("no tensor named '" + name + "'");
}

template <typename Real>
const BasicMatrix<Real> &tensor_by_name(const BasicModelWeights<Real> &w, const std::string &name) {
  for (auto &[n, ref] : BasicModelWeights<Real>::tensor_refs(w))
    if (n == name) return ref.get();
  throw DomainError("no tensor named '" + name + "'");
}

// Visits the tensors present for cfg, in tensor_specs order.
template <typename Weights, typename Fn>
void for_each_tensor(const DecoderConfig &cfg, Weights &w, Fn &&fn) {
  for (const auto &spec : tensor_specs(cfg)) fn(spec, tensor_by_name(w, spec.name));
}

using ModelWeights = BasicModelWeights<double>;

// Zero-valued tensors with the shapes cfg implies; also the gradient
// container for training.
template <typename Real = double>
BasicModelWeights<Real> zero_weights(const DecoderConfig &cfg) {
  BasicModelWeights<Real> w;
  w.tied = cfg.tied;
  if (cfg.variant == Variant::Lstm) w.lstm.resize(cfg.lstm_layers);
  for_each_tensor(cfg, w, [](const TensorSpec &s, BasicMatrix<Real> &m) {
    m = BasicMatrix<Real>(s.rows, s.cols);
  });
  return w;
}

// Gaussian(0, std) tensors per tensor_specs, biases zero, LayerNorm gain one,
// pad row zero. Deterministic in seed.
inline ModelWeights init_weights(const DecoderConfig &cfg, std::uint64_t seed) {
  ModelWeights w = zero_weights<double>(cfg);
  SeededRng rng(seed);
  for_each_tensor(cfg, w, [&](const TensorSpec &s, Matrix &m) {
    switch (s.init) {
      case InitKind::Zeros: m.fill(0.0); break;
      case InitKind::Ones: m.fill(1.0); break;
      case InitKind::Gaussian:
        for (double &x : m.flat()) x = rng.gaussian(0.0, s.init_std);
        break;
    }
  });
  for (double &x : w.embedding.row(cfg.pad_id())) x = 0.0;
  return w;
}

struct ParamEntry {
  std::string name;
  std::size_t count = 0;
  bool trainable = true;
};

struct ParamBreakdown {
  std::vector<ParamEntry> entries;
  std::size_t total = 0;
};

// Exact decoder parameter count (prediction + joint networks) from the config
// alone. The zero pad row is not a parameter; encoder tensors are excluded.
inline ParamBreakdown param_count(const DecoderConfig &cfg) {
  ParamBreakdown out;
  for (const auto &s : tensor_specs(cfg)) {
    if (!s.decoder) continue;
    std::size_t rows = s.name == "embedding" ? cfg.vocab_size : s.rows;
    out.entries.push_back({s.name, rows * s.cols, s.trainable});
    out.total += rows * s.cols;
  }
  return out;
}

// Parameters removed by sharing the embedding with the output layer.
inline std::size_t tying_savings(const DecoderConfig &cfg) { return cfg.joint_dim * cfg.vocab_size; }

}  // namespace slimdec
