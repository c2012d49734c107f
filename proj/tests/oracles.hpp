#pragma once

// Test-only reference computations. Each one takes the slow, obvious route
// and shares no code path with the library function it checks.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "slimdec.hpp"

namespace slimdec::oracle {

inline Matrix naive_matmul(const Matrix &a, const Matrix &b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline Vector two_pass_layer_norm(const Vector &x, double eps) {
  long double mean = 0;
  for (double v : x) mean += v;
  mean /= x.size();
  long double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= x.size();
  Vector out;
  for (double v : x) out.push_back(static_cast<double>((v - mean) / std::sqrt(var + eps)));
  return out;
}

inline Vector direct_log_softmax(const Vector &x) {
  long double z = 0;
  for (double v : x) z += std::exp(static_cast<long double>(v));
  Vector out;
  for (double v : x) out.push_back(static_cast<double>(v - std::log(z)));
  return out;
}

inline Vector softmax_probs(std::span<const double> logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0;
  for (double v : logits) z += std::exp(v - m);
  Vector p;
  for (double v : logits) p.push_back(std::exp(v - m) / z);
  return p;
}

// Sum of path probabilities over every alignment of target, each path
// enumerated explicitly by recursion.
inline double alignment_sum(const LogitGrid &g, const LabelSequence &target) {
  const std::size_t T = g.frames, U = target.size(), blank = g.classes - 1;
  std::function<double(std::size_t, std::size_t, double)> walk = [&](std::size_t t, std::size_t u, double p) {
    const Vector probs = softmax_probs(g.at(t, u));
    double total = 0.0;
    if (t == T - 1 && u == U) return p * probs[blank];
    if (t + 1 < T) total += walk(t + 1, u, p * probs[blank]);
    if (u < U) total += walk(t, u + 1, p * probs[target[u]]);
    return total;
  };
  return walk(0, 0, 1.0);
}

// Every capped alignment of the model over frames, grouped by label
// sequence: probability mass per sequence.
inline std::map<LabelSequence, double> enumerate_decodes(const Matrix &frames, const ModelWeights &w,
                                                         const DecoderConfig &cfg) {
  std::map<LabelSequence, double> mass;
  std::function<void(std::size_t, std::size_t, const PredictionState &, LabelSequence &, double)> walk =
      [&](std::size_t t, std::size_t emitted, const PredictionState &state, LabelSequence &labels, double p) {
        if (t == frames.rows()) {
          mass[labels] += p;
          return;
        }
        const Vector g = prediction_forward(state, w, cfg);
        const Vector logits = joint_forward<double>(frames.row(t), g, w, cfg);
        const Vector probs = softmax_probs(logits);
        walk(t + 1, 0, state, labels, p * probs[cfg.blank_id()]);
        if (emitted < cfg.max_symbols_per_frame)
          for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
            PredictionState next = state;
            advance(next, v, w, cfg);
            labels.push_back(v);
            walk(t, emitted + 1, next, labels, p * probs[v]);
            labels.pop_back();
          }
      };
  LabelSequence labels;
  walk(0, 0, initial_state(w, cfg), labels, 1.0);
  return mass;
}

// Central finite difference of f with respect to one scalar.
inline double central_difference(const std::function<double()> &f, double &x, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

// |a - n| / max(|a|, |n|, floor); the floor keeps gradients that are zero
// up to rounding from producing meaningless ratios.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Full O(n*m) Levenshtein table.
inline std::size_t dp_edit_distance(const LabelSequence &a, const LabelSequence &b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
  return d[a.size()][b.size()];
}

}  // namespace slimdec::oracle
