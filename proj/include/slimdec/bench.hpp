#pragma once

// Single decoder steps for latency comparison: feed one label back, compute
// g_u, then the joint logits for a fixed frame.

#include <cstddef>
#include <cstdint>

#include "slimdec/config.hpp"
#include "slimdec/joint.hpp"
#include "slimdec/prediction.hpp"
#include "slimdec/timing.hpp"
#include "slimdec/weights.hpp"

namespace slimdec {

// Analytic floating-point operations of one step (a multiply-add counts
// as two). Elementwise nonlinearities count one per element.
inline double step_flops(const DecoderConfig &cfg) {
  const double de = static_cast<double>(cfg.embed_dim), dh = static_cast<double>(cfg.joint_dim);
  const double n = static_cast<double>(cfg.history), h = static_cast<double>(cfg.heads);
  double pred = 0.0;
  switch (cfg.variant) {
    case Variant::Reduced:
      pred = 2.0 * h * n * de  // head dot products
             + 2.0 * n * de    // weighted sum
             + 2.0 * de * de   // projection
             + 8.0 * de        // LayerNorm
             + 4.0 * de;       // Swish
      break;
    case Variant::Stateless1Emb:
    case Variant::Concat2Emb:
      break;
    case Variant::Lstm: {
      const double u = static_cast<double>(cfg.lstm_units), p = static_cast<double>(cfg.lstm_proj);
      for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
        const double in = l == 0 ? de : p;
        pred += 2.0 * (in + p) * 4.0 * u + 2.0 * u * p + 10.0 * u;
      }
      break;
    }
  }
  const double joint = 2.0 * static_cast<double>(cfg.encoder_dim) * dh + 2.0 * static_cast<double>(cfg.prediction_dim()) * dh +
                       2.0 * dh + 2.0 * dh * static_cast<double>(cfg.output_dim());
  return pred + joint;
}

// Everything a timed step touches, allocated up front.
template <typename Real>
struct StepBench {
  DecoderConfig cfg;
  BasicModelWeights<Real> weights;
  BasicVector<Real> frame;
  BasicPredictionState<Real> state;
  std::size_t next_label = 0;
  Real sink = Real{0};

  void operator()() {
    advance(state, next_label, weights, cfg);
    next_label = (next_label + 7) % cfg.vocab_size;
    const auto g = prediction_forward(state, weights, cfg);
    const auto logits = joint_forward<Real>(frame, g, weights, cfg);
    sink += logits[cfg.blank_id()];
  }
};

template <typename Real>
StepBench<Real> make_step_bench(const DecoderConfig &cfg, std::uint64_t seed) {
  StepBench<Real> b;
  b.cfg = cfg;
  b.weights = init_weights(cfg, seed).template cast<Real>();
  SeededRng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  b.frame.resize(cfg.encoder_dim);
  for (auto &x : b.frame) x = static_cast<Real>(rng.gaussian());
  b.state = initial_state(b.weights, cfg);
  return b;
}

}  // namespace slimdec
