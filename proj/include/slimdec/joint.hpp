#pragma once

#include <span>

#include "slimdec/config.hpp"
#include "slimdec/math.hpp"
#include "slimdec/weights.hpp"

namespace slimdec {

// f_t W_enc. Decoders cache this once per frame.
template <typename Real>
BasicVector<Real> project_encoder(std::span<const Real> frame, const BasicModelWeights<Real> &w) {
  return vecmat<Real>(frame, w.joint_enc_w);
}

// g_u W_pred. Cached per hypothesis.
template <typename Real>
BasicVector<Real> project_prediction(std::span<const Real> g, const BasicModelWeights<Real> &w) {
  return vecmat<Real>(g, w.joint_pred_w);
}

// tanh(enc_proj + pred_proj + b_j): the joint's last hidden layer.
template <typename Real>
BasicVector<Real> joint_hidden(std::span<const Real> enc_proj, std::span<const Real> pred_proj,
                               const BasicModelWeights<Real> &w) {
  if (enc_proj.size() != pred_proj.size() || enc_proj.size() != w.joint_b.cols())
    throw ShapeError("joint: projected widths differ");
  BasicVector<Real> h(enc_proj.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(enc_proj[i] + pred_proj[i] + w.joint_b(0, i));
  return h;
}

// Logits over V plus blank (blank last). Non-blank rows come from the
// embedding when tied.
template <typename Real>
BasicVector<Real> output_logits(std::span<const Real> h, const BasicModelWeights<Real> &w) {
  const std::size_t vocab = w.output_b.cols() - 1;
  BasicVector<Real> logits(vocab + 1);
  for (std::size_t v = 0; v < vocab; ++v) logits[v] = dot<Real>(w.output_row(v), h) + w.output_b(0, v);
  logits[vocab] = dot<Real>(w.blank_w.row(0), h) + w.output_b(0, vocab);
  return logits;
}

template <typename Real>
BasicVector<Real> joint_from_projections(std::span<const Real> enc_proj, std::span<const Real> pred_proj,
                                         const BasicModelWeights<Real> &w) {
  const auto h = joint_hidden(enc_proj, pred_proj, w);
  return output_logits<Real>(h, w);
}

template <typename Real>
BasicVector<Real> joint_forward(std::span<const Real> frame, std::span<const Real> g,
                                const BasicModelWeights<Real> &w, const DecoderConfig &cfg) {
  if (frame.size() != cfg.encoder_dim)
    throw ShapeError("joint: frame width " + std::to_string(frame.size()) + " != encoder_dim " +
                     std::to_string(cfg.encoder_dim));
  if (g.size() != cfg.prediction_dim())
    throw ShapeError("joint: prediction width " + std::to_string(g.size()) + " != " +
                     std::to_string(cfg.prediction_dim()));
  const auto a = project_encoder(frame, w);
  const auto b = project_prediction(g, w);
  return joint_from_projections<Real>(a, b, w);
}

}  // namespace slimdec
