#pragma once

#include <cmath>

#include "slimdec/config.hpp"
#include "slimdec/weights.hpp"

namespace slimdec {

inline void add_scaled(ModelWeights &dst, const ModelWeights &src, double scale) {
  auto d = ModelWeights::tensor_refs(dst);
  auto s = ModelWeights::tensor_refs(src);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto &a = d[i].second.get();
    const auto &b = s[i].second.get();
    if (a.size() != b.size()) throw ShapeError("gradient shapes differ for " + d[i].first);
    for (std::size_t k = 0; k < a.size(); ++k) a.data()[k] += scale * b.data()[k];
  }
}

inline double squared_norm(const ModelWeights &g) {
  double s = 0.0;
  for (auto &[name, ref] : ModelWeights::tensor_refs(g))
    for (double x : ref.get().flat()) s += x * x;
  return s;
}

// Plain SGD with heavy-ball momentum over the trainable tensors:
// v = momentum * v + grad; w -= lr * v. An optional global-norm clip is
// applied to grad first.
class SgdMomentum {
 public:
  SgdMomentum(const DecoderConfig &cfg, double learning_rate, double momentum, double clip_norm = 0.0)
      : cfg_(cfg), lr_(learning_rate), momentum_(momentum), clip_(clip_norm), velocity_(zero_weights(cfg)) {}

  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }

  void step(ModelWeights &w, const ModelWeights &grad) {
    double scale = 1.0;
    if (clip_ > 0.0) {
      const double norm = std::sqrt(squared_norm(grad));
      if (norm > clip_) scale = clip_ / norm;
    }
    for (const auto &spec : tensor_specs(cfg_)) {
      if (!spec.trainable) continue;
      auto &param = tensor_by_name(w, spec.name);
      auto &vel = tensor_by_name(velocity_, spec.name);
      const auto &g = tensor_by_name(grad, spec.name);
      for (std::size_t k = 0; k < param.size(); ++k) {
        vel.data()[k] = momentum_ * vel.data()[k] + scale * g.data()[k];
        param.data()[k] -= lr_ * vel.data()[k];
      }
    }
    for (double &x : w.embedding.row(cfg_.pad_id())) x = 0.0;
  }

 private:
  DecoderConfig cfg_;
  double lr_;
  double momentum_;
  double clip_;
  ModelWeights velocity_;
};

}  // namespace slimdec
