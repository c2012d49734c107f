#pragma once

// Prediction networks: the label-history half of the decoder producing g_u.

#include <cstddef>
#include <vector>

#include "slimdec/config.hpp"
#include "slimdec/math.hpp"
#include "slimdec/weights.hpp"

namespace slimdec {

// The last N non-blank labels, plus the recurrent state when the decoder is
// an LSTM. A fresh state holds N copies of the start pad.
template <typename Real>
class BasicPredictionState {
 public:
  BasicPredictionState() = default;
  BasicPredictionState(std::size_t history, std::size_t pad_id) : slots_(history, pad_id) {}

  std::size_t size() const noexcept { return slots_.size(); }

  // k = 0 is the most recent label.
  std::size_t recent(std::size_t k) const { return slots_[(head_ + slots_.size() - 1 - k) % slots_.size()]; }

  void push(std::size_t label) {
    slots_[head_] = label;
    head_ = (head_ + 1) % slots_.size();
  }

  // Most recent first.
  std::vector<std::size_t> context() const {
    std::vector<std::size_t> out(slots_.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = recent(k);
    return out;
  }

  // Per-layer LSTM state; empty for non-recurrent variants.
  std::vector<BasicVector<Real>> lstm_output;  // r, width lstm_proj
  std::vector<BasicVector<Real>> lstm_cell;    // c, width lstm_units

 private:
  std::vector<std::size_t> slots_;
  std::size_t head_ = 0;
};

using PredictionState = BasicPredictionState<double>;

template <typename Real>
void check_label(std::size_t id, const BasicMatrix<Real> &embedding) {
  if (id >= embedding.rows())
    throw DomainError("label id " + std::to_string(id) + " outside embedding table of " +
                      std::to_string(embedding.rows()) + " rows");
}

// N x d_e matrix of history embeddings, row 0 = most recent label.
template <typename Real>
BasicMatrix<Real> embed(const BasicPredictionState<Real> &state, const BasicModelWeights<Real> &w) {
  BasicMatrix<Real> out(state.size(), w.embedding.cols());
  for (std::size_t n = 0; n < state.size(); ++n) {
    const std::size_t id = state.recent(n);
    check_label(id, w.embedding);
    auto src = w.embedding.row(id);
    std::copy(src.begin(), src.end(), out.row(n).begin());
  }
  return out;
}

// (1/N) sum_n E_n * <E_n, P_n>. The dot products weight the average directly;
// they are not normalized.
template <typename Real>
BasicVector<Real> predict_single_head(const BasicMatrix<Real> &emb, const BasicMatrix<Real> &pos) {
  if (emb.rows() != pos.rows() || emb.cols() != pos.cols())
    throw ShapeError("predict_single_head: embeddings " + shape_string(emb.rows(), emb.cols()) +
                     " vs positions " + shape_string(pos.rows(), pos.cols()));
  BasicVector<Real> out(emb.cols(), Real{0});
  for (std::size_t n = 0; n < emb.rows(); ++n) {
    const Real weight = dot<Real>(emb.row(n), pos.row(n));
    axpy<Real>(weight, emb.row(n), out);
  }
  const Real scale = Real{1} / static_cast<Real>(emb.rows());
  for (Real &x : out) x *= scale;
  return out;
}

// Multi-head form: positions holds H blocks of N rows (row h*N + n) and the
// result is scaled by 1/(H*N). Head weights are summed before scaling the
// embedding, which is the same average over heads.
template <typename Real>
BasicVector<Real> predict_multi_head(const BasicMatrix<Real> &emb, const BasicMatrix<Real> &positions,
                                     std::size_t heads) {
  const std::size_t n_hist = emb.rows();
  if (heads == 0 || positions.rows() != heads * n_hist || positions.cols() != emb.cols())
    throw ShapeError("predict_multi_head: embeddings " + shape_string(emb.rows(), emb.cols()) +
                     " vs positions " + shape_string(positions.rows(), positions.cols()) + " for " +
                     std::to_string(heads) + " heads");
  BasicVector<Real> out(emb.cols(), Real{0});
  for (std::size_t n = 0; n < n_hist; ++n) {
    Real weight{0};
    for (std::size_t h = 0; h < heads; ++h) weight += dot<Real>(emb.row(n), positions.row(h * n_hist + n));
    axpy<Real>(weight, emb.row(n), out);
  }
  const Real scale = Real{1} / static_cast<Real>(heads * n_hist);
  for (Real &x : out) x *= scale;
  return out;
}

// One step of a projected LSTM layer: gates = x Wx + r Wr + b,
// c' = f*c + i*g, r' = (o * tanh(c')) Wproj.
template <typename Real>
void lstm_layer_step(const LstmLayerWeights<Real> &lw, std::span<const Real> x, BasicVector<Real> &r,
                     BasicVector<Real> &c) {
  const std::size_t units = c.size();
  BasicVector<Real> gates(lw.bias.flat().begin(), lw.bias.flat().end());
  vecmat_accumulate<Real>(x, lw.input_w, gates);
  vecmat_accumulate<Real>(r, lw.recurrent_w, gates);
  BasicVector<Real> m(units);
  for (std::size_t k = 0; k < units; ++k) {
    const Real i = sigmoid(gates[k]);
    const Real f = sigmoid(gates[units + k]);
    const Real g = std::tanh(gates[2 * units + k]);
    const Real o = sigmoid(gates[3 * units + k]);
    c[k] = f * c[k] + i * g;
    m[k] = o * std::tanh(c[k]);
  }
  std::fill(r.begin(), r.end(), Real{0});
  vecmat_accumulate<Real>(m, lw.proj_w, r);
}

template <typename Real>
void lstm_consume(BasicPredictionState<Real> &state, std::size_t label, const BasicModelWeights<Real> &w) {
  check_label(label, w.embedding);
  std::span<const Real> x = w.embedding.row(label);
  for (std::size_t l = 0; l < w.lstm.size(); ++l) {
    lstm_layer_step(w.lstm[l], x, state.lstm_output[l], state.lstm_cell[l]);
    x = state.lstm_output[l];
  }
}

// Fresh state. The LSTM starts from zeros and consumes the pad token once,
// so g_0 is defined the same way as every later output.
template <typename Real>
BasicPredictionState<Real> initial_state(const BasicModelWeights<Real> &w, const DecoderConfig &cfg) {
  BasicPredictionState<Real> state(cfg.history, cfg.pad_id());
  if (cfg.variant == Variant::Lstm) {
    state.lstm_output.assign(cfg.lstm_layers, BasicVector<Real>(cfg.lstm_proj, Real{0}));
    state.lstm_cell.assign(cfg.lstm_layers, BasicVector<Real>(cfg.lstm_units, Real{0}));
    lstm_consume(state, cfg.pad_id(), w);
  }
  return state;
}

// State whose history is `context` (most recent first). Finite-context
// variants only.
template <typename Real>
BasicPredictionState<Real> state_from_context(std::span<const std::size_t> context, const DecoderConfig &cfg) {
  if (!cfg.has_finite_context()) throw ConfigError("LSTM state cannot be built from a finite context");
  if (context.size() != cfg.history) throw ShapeError("context length differs from history size");
  BasicPredictionState<Real> state(cfg.history, cfg.pad_id());
  for (std::size_t k = context.size(); k-- > 0;) state.push(context[k]);
  return state;
}

// Feed a newly emitted non-blank label back into the state.
template <typename Real>
void advance(BasicPredictionState<Real> &state, std::size_t label, const BasicModelWeights<Real> &w,
             const DecoderConfig &cfg) {
  if (label >= cfg.vocab_size) throw DomainError("cannot feed blank or pad back into the prediction network");
  state.push(label);
  if (cfg.variant == Variant::Lstm) lstm_consume(state, label, w);
}

// g_u for the given state.
template <typename Real>
BasicVector<Real> prediction_forward(const BasicPredictionState<Real> &state, const BasicModelWeights<Real> &w,
                                     const DecoderConfig &cfg) {
  switch (cfg.variant) {
    case Variant::Reduced: {
      if (state.size() != cfg.history) throw ConfigError("state history length differs from config");
      const auto emb = embed(state, w);
      const auto avg = predict_multi_head(emb, w.position, cfg.heads);
      BasicVector<Real> z(w.proj_b.flat().begin(), w.proj_b.flat().end());
      vecmat_accumulate<Real>(avg, w.proj_w, z);
      const auto normed = layer_norm<Real>(z, w.ln_gamma.flat(), w.ln_beta.flat());
      return swish<Real>(normed);
    }
    case Variant::Stateless1Emb: {
      check_label(state.recent(0), w.embedding);
      auto row = w.embedding.row(state.recent(0));
      return {row.begin(), row.end()};
    }
    case Variant::Concat2Emb: {
      if (state.size() != 2) throw ConfigError("Concat2Emb needs a two-label history");
      BasicVector<Real> out;
      out.reserve(2 * w.embedding.cols());
      for (std::size_t k = 0; k < 2; ++k) {
        check_label(state.recent(k), w.embedding);
        auto row = w.embedding.row(state.recent(k));
        out.insert(out.end(), row.begin(), row.end());
      }
      return out;
    }
    case Variant::Lstm:
      if (state.lstm_output.size() != cfg.lstm_layers) throw StateError("LSTM state not initialized");
      return state.lstm_output.back();
  }
  throw ConfigError("unknown variant");
}

}  // namespace slimdec
