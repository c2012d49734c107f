#pragma once

// Transducer loss over the T x (U+1) alignment lattice: blank advances t,
// label y_{u+1} advances u, and every path ends with a blank at (T-1, U).

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "slimdec/errors.hpp"
#include "slimdec/math.hpp"

namespace slimdec {

// Dense T x (U+1) x K tensor of per-node logits (or their gradients).
struct LogitGrid {
  std::size_t frames = 0;     // T
  std::size_t positions = 0;  // U + 1
  std::size_t classes = 0;    // |V| + 1, blank last
  std::vector<double> data;

  LogitGrid() = default;
  LogitGrid(std::size_t t, std::size_t u1, std::size_t k) : frames(t), positions(u1), classes(k), data(t * u1 * k, 0.0) {}

  std::span<double> at(std::size_t t, std::size_t u) { return {data.data() + (t * positions + u) * classes, classes}; }
  std::span<const double> at(std::size_t t, std::size_t u) const {
    return {data.data() + (t * positions + u) * classes, classes};
  }
};

struct TransducerLattice {
  std::size_t frames = 0;
  std::size_t target_length = 0;  // U
  Matrix log_alpha;               // T x (U+1)
  Matrix log_beta;                // T x (U+1)
  Matrix blank_logp;              // T x (U+1)
  Matrix label_logp;              // T x (U+1), log P(y_{u+1} | t, u); last column unused (-inf)
  double log_likelihood = 0.0;    // from alpha
  double log_likelihood_beta = 0.0;
};

struct TransducerLoss {
  double loss = 0.0;
  LogitGrid grad;  // d loss / d logits
  TransducerLattice lattice;
};

inline TransducerLattice build_lattice(const LogitGrid &logits, std::span<const std::size_t> target) {
  const std::size_t T = logits.frames;
  const std::size_t U = target.size();
  if (logits.positions != U + 1)
    throw ShapeError("logit grid has " + std::to_string(logits.positions) + " label positions for target of length " +
                     std::to_string(U));
  if (T == 0) throw DomainError("transducer loss needs at least one frame");
  if (logits.classes < 2) throw ShapeError("logit grid needs at least one label plus blank");
  const std::size_t blank = logits.classes - 1;
  for (std::size_t y : target)
    if (y >= blank) throw DomainError("target label " + std::to_string(y) + " is blank or out of range");

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  TransducerLattice lat;
  lat.frames = T;
  lat.target_length = U;
  lat.blank_logp = Matrix(T, U + 1);
  lat.label_logp = Matrix(T, U + 1, kNegInf);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u) {
      auto row = logits.at(t, u);
      if (!all_finite<double>(row)) throw DomainError("non-finite logits in transducer loss");
      const double lse = log_sum_exp<double>(row);
      lat.blank_logp(t, u) = row[blank] - lse;
      if (u < U) lat.label_logp(t, u) = row[target[u]] - lse;
    }

  lat.log_alpha = Matrix(T, U + 1, kNegInf);
  lat.log_alpha(0, 0) = 0.0;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = lat.log_alpha(t - 1, u) + lat.blank_logp(t - 1, u);
      if (u > 0) a = log_sum_exp(a, lat.log_alpha(t, u - 1) + lat.label_logp(t, u - 1));
      lat.log_alpha(t, u) = a;
    }
  lat.log_likelihood = lat.log_alpha(T - 1, U) + lat.blank_logp(T - 1, U);

  lat.log_beta = Matrix(T, U + 1, kNegInf);
  lat.log_beta(T - 1, U) = lat.blank_logp(T - 1, U);
  for (std::size_t t = T; t-- > 0;)
    for (std::size_t u = U + 1; u-- > 0;) {
      if (t == T - 1 && u == U) continue;
      double b = kNegInf;
      if (t + 1 < T) b = lat.log_beta(t + 1, u) + lat.blank_logp(t, u);
      if (u < U) b = log_sum_exp(b, lat.log_beta(t, u + 1) + lat.label_logp(t, u));
      lat.log_beta(t, u) = b;
    }
  lat.log_likelihood_beta = lat.log_beta(0, 0);
  return lat;
}

// Negative log-likelihood of target and its gradient with respect to every
// logit. Optionally rejects targets longer than T * max_symbols_per_frame,
// which no capped decoder could emit.
inline TransducerLoss transducer_loss(const LogitGrid &logits, std::span<const std::size_t> target,
                                      std::size_t max_symbols_per_frame = 0) {
  if (max_symbols_per_frame > 0 && target.size() > logits.frames * max_symbols_per_frame)
    throw DomainError("target of length " + std::to_string(target.size()) + " cannot be aligned to " +
                      std::to_string(logits.frames) + " frames at " + std::to_string(max_symbols_per_frame) +
                      " symbols per frame");
  TransducerLoss out;
  out.lattice = build_lattice(logits, target);
  const auto &lat = out.lattice;
  const std::size_t T = lat.frames, U = lat.target_length;
  const double ll = lat.log_likelihood;
  if (!std::isfinite(ll)) throw DomainError("target has zero probability under the logits");
  out.loss = -ll;
  out.grad = LogitGrid(T, U + 1, logits.classes);
  const std::size_t blank = logits.classes - 1;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u <= U; ++u) {
      // d loss / d log p for the two arcs leaving (t, u).
      const double next_blank = t + 1 < T ? lat.log_beta(t + 1, u) : (u == U ? 0.0 : -INFINITY);
      const double g_blank = -std::exp(lat.log_alpha(t, u) + lat.blank_logp(t, u) + next_blank - ll);
      const double g_label =
          u < U ? -std::exp(lat.log_alpha(t, u) + lat.label_logp(t, u) + lat.log_beta(t, u + 1) - ll) : 0.0;
      const double g_sum = g_blank + g_label;
      auto row = logits.at(t, u);
      auto grad = out.grad.at(t, u);
      const double lse = log_sum_exp<double>(row);
      for (std::size_t k = 0; k < row.size(); ++k) grad[k] = -std::exp(row[k] - lse) * g_sum;
      grad[blank] += g_blank;
      if (u < U) grad[target[u]] += g_label;
    }
  return out;
}

}  // namespace slimdec
