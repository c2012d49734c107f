#pragma once

// Full-utterance forward pass with cached activations over the whole
// T x (U+1) lattice, and the hand-derived backward pass to every trainable
// tensor. Double precision only.

#include <cstddef>
#include <span>
#include <vector>

#include "slimdec/config.hpp"
#include "slimdec/errors.hpp"
#include "slimdec/joint.hpp"
#include "slimdec/lattice.hpp"
#include "slimdec/math.hpp"
#include "slimdec/prediction.hpp"
#include "slimdec/weights.hpp"

namespace slimdec {

// Affine per-frame map features -> encoder frames. Stand-in for a real
// acoustic encoder.
inline Matrix toy_encode(const Matrix &features, const ModelWeights &w) {
  if (w.encoder_w.empty()) throw ConfigError("model has no toy encoder");
  if (features.rows() > 0 && features.cols() != w.encoder_w.rows())
    throw ShapeError("features have width " + std::to_string(features.cols()) + ", encoder expects " +
                     std::to_string(w.encoder_w.rows()));
  Matrix frames(features.rows(), w.encoder_w.cols());
  for (std::size_t t = 0; t < features.rows(); ++t) {
    auto dst = frames.row(t);
    std::copy(w.encoder_b.flat().begin(), w.encoder_b.flat().end(), dst.begin());
    vecmat_accumulate<double>(features.row(t), w.encoder_w, dst);
  }
  return frames;
}

// Encoder frames for a model input: features go through the toy encoder when
// the model has one, otherwise the input already is the frame matrix.
inline Matrix model_frames(const Matrix &input, const ModelWeights &w, const DecoderConfig &cfg) {
  if (cfg.feature_dim > 0) return toy_encode(input, w);
  if (input.rows() > 0 && input.cols() != cfg.encoder_dim)
    throw ShapeError("input frames have width " + std::to_string(input.cols()) + ", expected " +
                     std::to_string(cfg.encoder_dim));
  return input;
}

namespace detail {

struct ReducedStepCache {
  std::vector<std::size_t> context;  // most recent first
  Matrix emb;                        // N x d_e
  Vector head_weights;               // w_n = sum_h <E_n, P_{h,n}>
  Vector avg;                        // m
  Vector normalized;                 // x-hat
  double inv_std = 0.0;
  Vector pre_swish;                  // y = gamma * x-hat + beta
};

struct LstmStepCache {
  Vector x, r_prev, c_prev;
  Vector i, f, g, o;  // activated gates
  Vector c, tanh_c, m;
};

}  // namespace detail

struct UtteranceCache {
  bool valid = false;
  Matrix input;         // features when the model has an encoder
  Matrix frames;        // T x d_enc
  Matrix enc_proj;      // T x d_h
  Matrix pred;          // (U+1) x prediction_dim
  Matrix pred_proj;     // (U+1) x d_h
  LogitGrid hidden;     // T x (U+1) x d_h, tanh outputs
  std::vector<std::vector<std::size_t>> contexts;      // per u
  std::vector<detail::ReducedStepCache> reduced;       // per u
  std::vector<std::vector<detail::LstmStepCache>> lstm;  // [u][layer]
  std::vector<std::size_t> lstm_inputs;                // label consumed at step u (pad first)
};

namespace detail {

inline Vector reduced_forward_cached(const std::vector<std::size_t> &context, const ModelWeights &w,
                                     const DecoderConfig &cfg, ReducedStepCache &c) {
  const std::size_t n_hist = cfg.history, de = cfg.embed_dim;
  c.context = context;
  c.emb = Matrix(n_hist, de);
  for (std::size_t n = 0; n < n_hist; ++n) {
    check_label(context[n], w.embedding);
    auto src = w.embedding.row(context[n]);
    std::copy(src.begin(), src.end(), c.emb.row(n).begin());
  }
  c.head_weights.assign(n_hist, 0.0);
  c.avg.assign(de, 0.0);
  for (std::size_t n = 0; n < n_hist; ++n) {
    double weight = 0.0;
    for (std::size_t h = 0; h < cfg.heads; ++h) weight += dot<double>(c.emb.row(n), w.position.row(h * n_hist + n));
    c.head_weights[n] = weight;
    axpy<double>(weight, c.emb.row(n), c.avg);
  }
  const double scale = 1.0 / static_cast<double>(cfg.heads * n_hist);
  for (double &x : c.avg) x *= scale;

  Vector z(w.proj_b.flat().begin(), w.proj_b.flat().end());
  vecmat_accumulate<double>(c.avg, w.proj_w, z);
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(de);
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  var /= static_cast<double>(de);
  c.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  c.normalized.resize(de);
  c.pre_swish.resize(de);
  Vector g(de);
  for (std::size_t i = 0; i < de; ++i) {
    c.normalized[i] = (z[i] - mean) * c.inv_std;
    c.pre_swish[i] = c.normalized[i] * w.ln_gamma(0, i) + w.ln_beta(0, i);
    g[i] = c.pre_swish[i] * sigmoid(c.pre_swish[i]);
  }
  return g;
}

inline void reduced_backward(const ReducedStepCache &c, std::span<const double> dg, const ModelWeights &w,
                             const DecoderConfig &cfg, ModelWeights &grad) {
  const std::size_t n_hist = cfg.history, de = cfg.embed_dim;
  Vector dy(de), dxhat(de);
  for (std::size_t i = 0; i < de; ++i) {
    dy[i] = dg[i] * swish_derivative(c.pre_swish[i]);
    grad.ln_gamma(0, i) += dy[i] * c.normalized[i];
    grad.ln_beta(0, i) += dy[i];
    dxhat[i] = dy[i] * w.ln_gamma(0, i);
  }
  double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
  for (std::size_t i = 0; i < de; ++i) {
    mean_dxhat += dxhat[i];
    mean_dxhat_xhat += dxhat[i] * c.normalized[i];
  }
  mean_dxhat /= static_cast<double>(de);
  mean_dxhat_xhat /= static_cast<double>(de);
  Vector dz(de);
  for (std::size_t i = 0; i < de; ++i)
    dz[i] = c.inv_std * (dxhat[i] - mean_dxhat - c.normalized[i] * mean_dxhat_xhat);

  axpy<double>(1.0, dz, grad.proj_b.row(0));
  outer_accumulate<double>(c.avg, dz, grad.proj_w);
  Vector dm(de, 0.0);
  matvec_accumulate<double>(w.proj_w, dz, dm);

  const double scale = 1.0 / static_cast<double>(cfg.heads * n_hist);
  for (std::size_t n = 0; n < n_hist; ++n) {
    const double dm_dot_e = dot<double>(dm, c.emb.row(n));
    const std::size_t id = c.context[n];
    if (id != cfg.pad_id()) {
      auto de_row = grad.embedding.row(id);
      axpy<double>(scale * c.head_weights[n], dm, de_row);
      for (std::size_t h = 0; h < cfg.heads; ++h)
        axpy<double>(scale * dm_dot_e, w.position.row(h * n_hist + n), de_row);
    }
    if (cfg.position_trainable)
      for (std::size_t h = 0; h < cfg.heads; ++h)
        axpy<double>(scale * dm_dot_e, c.emb.row(n), grad.position.row(h * n_hist + n));
  }
}

inline void lstm_step_cached(const LstmLayerWeights<double> &lw, std::span<const double> x, Vector &r, Vector &c,
                             LstmStepCache &cache) {
  const std::size_t units = c.size();
  cache.x.assign(x.begin(), x.end());
  cache.r_prev = r;
  cache.c_prev = c;
  Vector gates(lw.bias.flat().begin(), lw.bias.flat().end());
  vecmat_accumulate<double>(x, lw.input_w, gates);
  vecmat_accumulate<double>(r, lw.recurrent_w, gates);
  cache.i.resize(units);
  cache.f.resize(units);
  cache.g.resize(units);
  cache.o.resize(units);
  cache.c.resize(units);
  cache.tanh_c.resize(units);
  cache.m.resize(units);
  for (std::size_t k = 0; k < units; ++k) {
    cache.i[k] = sigmoid(gates[k]);
    cache.f[k] = sigmoid(gates[units + k]);
    cache.g[k] = std::tanh(gates[2 * units + k]);
    cache.o[k] = sigmoid(gates[3 * units + k]);
    c[k] = cache.f[k] * c[k] + cache.i[k] * cache.g[k];
    cache.c[k] = c[k];
    cache.tanh_c[k] = std::tanh(c[k]);
    cache.m[k] = cache.o[k] * cache.tanh_c[k];
  }
  std::fill(r.begin(), r.end(), 0.0);
  vecmat_accumulate<double>(cache.m, lw.proj_w, r);
}

inline void scatter_embedding(std::size_t id, std::span<const double> d, const DecoderConfig &cfg,
                              ModelWeights &grad) {
  if (id == cfg.pad_id()) return;
  axpy<double>(1.0, d, grad.embedding.row(id));
}

}  // namespace detail

// Runs encoder, prediction network for u = 0..U, and the joint over the full
// lattice, recording everything the backward pass needs. Returns logits.
inline LogitGrid forward_utterance(const Matrix &input, std::span<const std::size_t> target, const ModelWeights &w,
                                   const DecoderConfig &cfg, UtteranceCache &cache) {
  cache = UtteranceCache{};
  const std::size_t U = target.size();
  for (std::size_t y : target)
    if (y >= cfg.vocab_size) throw DomainError("target label " + std::to_string(y) + " out of range");
  if (cfg.feature_dim > 0) cache.input = input;
  cache.frames = model_frames(input, w, cfg);
  const std::size_t T = cache.frames.rows();
  const std::size_t dh = cfg.joint_dim, pdim = cfg.prediction_dim();

  cache.enc_proj = Matrix(T, dh);
  for (std::size_t t = 0; t < T; ++t) vecmat_accumulate<double>(cache.frames.row(t), w.joint_enc_w, cache.enc_proj.row(t));

  cache.pred = Matrix(U + 1, pdim);
  PredictionState state(cfg.history, cfg.pad_id());
  if (cfg.variant == Variant::Lstm) {
    std::vector<Vector> r(cfg.lstm_layers, Vector(cfg.lstm_proj, 0.0));
    std::vector<Vector> c(cfg.lstm_layers, Vector(cfg.lstm_units, 0.0));
    cache.lstm.resize(U + 1);
    for (std::size_t u = 0; u <= U; ++u) {
      const std::size_t id = u == 0 ? cfg.pad_id() : target[u - 1];
      cache.lstm_inputs.push_back(id);
      cache.lstm[u].resize(cfg.lstm_layers);
      std::span<const double> x = w.embedding.row(id);
      for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
        detail::lstm_step_cached(w.lstm[l], x, r[l], c[l], cache.lstm[u][l]);
        x = r[l];
      }
      std::copy(r.back().begin(), r.back().end(), cache.pred.row(u).begin());
    }
  } else {
    if (cfg.variant == Variant::Reduced) cache.reduced.resize(U + 1);
    for (std::size_t u = 0; u <= U; ++u) {
      if (u > 0) state.push(target[u - 1]);
      cache.contexts.push_back(state.context());
      Vector g = cfg.variant == Variant::Reduced
                     ? detail::reduced_forward_cached(cache.contexts.back(), w, cfg, cache.reduced[u])
                     : prediction_forward(state, w, cfg);
      std::copy(g.begin(), g.end(), cache.pred.row(u).begin());
    }
  }

  cache.pred_proj = Matrix(U + 1, dh);
  for (std::size_t u = 0; u <= U; ++u) vecmat_accumulate<double>(cache.pred.row(u), w.joint_pred_w, cache.pred_proj.row(u));

  LogitGrid logits(T, U + 1, cfg.output_dim());
  cache.hidden = LogitGrid(T, U + 1, dh);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u) {
      const auto h = joint_hidden<double>(cache.enc_proj.row(t), cache.pred_proj.row(u), w);
      std::copy(h.begin(), h.end(), cache.hidden.at(t, u).begin());
      const auto z = output_logits<double>(h, w);
      std::copy(z.begin(), z.end(), logits.at(t, u).begin());
    }
  cache.valid = true;
  return logits;
}

// Accumulates d loss / d theta into grad (shaped like zero_weights(cfg)) given
// d loss / d logits. Frozen tensors and the pad row receive exactly zero.
inline void backward_utterance(const UtteranceCache &cache, const LogitGrid &dlogits, const ModelWeights &w,
                               const DecoderConfig &cfg, ModelWeights &grad) {
  if (!cache.valid) throw StateError("backward pass without a cached forward pass");
  const std::size_t T = cache.frames.rows();
  const std::size_t U1 = cache.pred.rows();
  const std::size_t dh = cfg.joint_dim, vocab = cfg.vocab_size;
  if (dlogits.frames != T || dlogits.positions != U1 || dlogits.classes != cfg.output_dim())
    throw ShapeError("logit gradient grid does not match cached forward pass");

  Matrix d_enc_proj(T, dh), d_pred_proj(U1, dh);
  Vector dh_vec(dh);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u < U1; ++u) {
      auto d = dlogits.at(t, u);
      auto h = cache.hidden.at(t, u);
      axpy<double>(1.0, d, grad.output_b.row(0));
      std::fill(dh_vec.begin(), dh_vec.end(), 0.0);
      for (std::size_t v = 0; v < vocab; ++v) {
        if (d[v] == 0.0) continue;
        axpy<double>(d[v], w.output_row(v), dh_vec);
        axpy<double>(d[v], h, cfg.tied ? grad.embedding.row(v) : grad.output_w.row(v));
      }
      axpy<double>(d[vocab], w.blank_w.row(0), dh_vec);
      axpy<double>(d[vocab], h, grad.blank_w.row(0));
      for (std::size_t i = 0; i < dh; ++i) {
        const double dz = dh_vec[i] * (1.0 - h[i] * h[i]);
        grad.joint_b(0, i) += dz;
        d_enc_proj(t, i) += dz;
        d_pred_proj(u, i) += dz;
      }
    }

  // Encoder side.
  for (std::size_t t = 0; t < T; ++t) {
    outer_accumulate<double>(cache.frames.row(t), d_enc_proj.row(t), grad.joint_enc_w);
    if (cfg.feature_dim > 0) {
      Vector df(cfg.encoder_dim, 0.0);
      matvec_accumulate<double>(w.joint_enc_w, d_enc_proj.row(t), df);
      outer_accumulate<double>(cache.input.row(t), df, grad.encoder_w);
      axpy<double>(1.0, df, grad.encoder_b.row(0));
    }
  }

  // Prediction side.
  Matrix dpred(U1, cfg.prediction_dim());
  for (std::size_t u = 0; u < U1; ++u) {
    outer_accumulate<double>(cache.pred.row(u), d_pred_proj.row(u), grad.joint_pred_w);
    matvec_accumulate<double>(w.joint_pred_w, d_pred_proj.row(u), dpred.row(u));
  }

  switch (cfg.variant) {
    case Variant::Reduced:
      for (std::size_t u = 0; u < U1; ++u) detail::reduced_backward(cache.reduced[u], dpred.row(u), w, cfg, grad);
      break;
    case Variant::Stateless1Emb:
      for (std::size_t u = 0; u < U1; ++u) detail::scatter_embedding(cache.contexts[u][0], dpred.row(u), cfg, grad);
      break;
    case Variant::Concat2Emb: {
      const std::size_t de = cfg.embed_dim;
      for (std::size_t u = 0; u < U1; ++u) {
        auto d = dpred.row(u);
        detail::scatter_embedding(cache.contexts[u][0], d.subspan(0, de), cfg, grad);
        detail::scatter_embedding(cache.contexts[u][1], d.subspan(de, de), cfg, grad);
      }
      break;
    }
    case Variant::Lstm: {
      const std::size_t layers = cfg.lstm_layers, units = cfg.lstm_units;
      std::vector<Vector> dr_rec(layers, Vector(cfg.lstm_proj, 0.0));
      std::vector<Vector> dc_rec(layers, Vector(units, 0.0));
      for (std::size_t u = U1; u-- > 0;) {
        Vector from_above(dpred.row(u).begin(), dpred.row(u).end());
        for (std::size_t l = layers; l-- > 0;) {
          const auto &c = cache.lstm[u][l];
          const auto &lw = w.lstm[l];
          auto &lg = grad.lstm[l];
          Vector dr = from_above;
          axpy<double>(1.0, dr_rec[l], dr);
          outer_accumulate<double>(c.m, dr, lg.proj_w);
          Vector dm(units, 0.0);
          matvec_accumulate<double>(lw.proj_w, dr, dm);
          Vector da(4 * units);
          for (std::size_t k = 0; k < units; ++k) {
            const double d_o = dm[k] * c.tanh_c[k];
            const double dc = dm[k] * c.o[k] * (1.0 - c.tanh_c[k] * c.tanh_c[k]) + dc_rec[l][k];
            const double d_i = dc * c.g[k];
            const double d_g = dc * c.i[k];
            const double d_f = dc * c.c_prev[k];
            dc_rec[l][k] = dc * c.f[k];
            da[k] = d_i * c.i[k] * (1.0 - c.i[k]);
            da[units + k] = d_f * c.f[k] * (1.0 - c.f[k]);
            da[2 * units + k] = d_g * (1.0 - c.g[k] * c.g[k]);
            da[3 * units + k] = d_o * c.o[k] * (1.0 - c.o[k]);
          }
          axpy<double>(1.0, da, lg.bias.row(0));
          outer_accumulate<double>(c.x, da, lg.input_w);
          outer_accumulate<double>(c.r_prev, da, lg.recurrent_w);
          std::fill(dr_rec[l].begin(), dr_rec[l].end(), 0.0);
          matvec_accumulate<double>(lw.recurrent_w, da, dr_rec[l]);
          Vector dx(c.x.size(), 0.0);
          matvec_accumulate<double>(lw.input_w, da, dx);
          if (l == 0)
            detail::scatter_embedding(cache.lstm_inputs[u], dx, cfg, grad);
          else
            from_above = std::move(dx);
        }
      }
      break;
    }
  }
  for (double &x : grad.embedding.row(cfg.pad_id())) x = 0.0;
}

// Loss for one utterance without keeping a cache.
inline double utterance_loss(const Matrix &input, std::span<const std::size_t> target, const ModelWeights &w,
                             const DecoderConfig &cfg) {
  UtteranceCache cache;
  const auto logits = forward_utterance(input, target, w, cfg, cache);
  return transducer_loss(logits, target).loss;
}

// Loss and its gradient for one utterance, accumulated into grad with the
// given weight.
inline double utterance_loss_and_grad(const Matrix &input, std::span<const std::size_t> target,
                                      const ModelWeights &w, const DecoderConfig &cfg, ModelWeights &grad,
                                      double weight = 1.0) {
  UtteranceCache cache;
  auto logits = forward_utterance(input, target, w, cfg, cache);
  auto result = transducer_loss(logits, target);
  if (weight != 1.0)
    for (double &x : result.grad.data) x *= weight;
  backward_utterance(cache, result.grad, w, cfg, grad);
  return result.loss;
}

}  // namespace slimdec
