#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slimdec/errors.hpp"

namespace slimdec {

enum class Variant { Reduced, Stateless1Emb, Concat2Emb, Lstm };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Reduced: return "Reduced";
    case Variant::Stateless1Emb: return "Stateless1Emb";
    case Variant::Concat2Emb: return "Concat2Emb";
    case Variant::Lstm: return "LSTM";
  }
  return "?";
}

inline Variant variant_from_string(std::string_view s) {
  if (s == "Reduced") return Variant::Reduced;
  if (s == "Stateless1Emb") return Variant::Stateless1Emb;
  if (s == "Concat2Emb") return Variant::Concat2Emb;
  if (s == "LSTM" || s == "Lstm") return Variant::Lstm;
  throw ConfigError("unknown decoder variant '" + std::string(s) + "'");
}

// Hyperparameters that fully determine a decoder's shapes.
//
// Label ids 0..vocab_size-1 are real tokens. Index vocab_size plays two
// roles that never meet: it is the blank logit in the joint output, and it
// is the start-pad id in the embedding table (the pad row is fixed at zero).
struct DecoderConfig {
  Variant variant = Variant::Reduced;
  std::size_t vocab_size = 4;   // |V|, non-blank tokens
  std::size_t embed_dim = 8;    // d_e
  std::size_t joint_dim = 8;    // d_h
  std::size_t encoder_dim = 8;  // d_enc
  std::size_t history = 2;      // N
  std::size_t heads = 2;        // H
  bool tied = true;
  bool position_trainable = false;
  std::size_t lstm_layers = 1;
  std::size_t lstm_units = 8;
  std::size_t lstm_proj = 8;
  std::size_t max_symbols_per_frame = 10;
  // Input dimension of the affine toy encoder; 0 means the model consumes
  // encoder frames directly and carries no encoder weights.
  std::size_t feature_dim = 0;

  std::size_t blank_id() const noexcept { return vocab_size; }
  std::size_t pad_id() const noexcept { return vocab_size; }
  std::size_t embedding_rows() const noexcept { return vocab_size + 1; }
  std::size_t output_dim() const noexcept { return vocab_size + 1; }

  // Width of g_u, the prediction network output fed to the joint.
  std::size_t prediction_dim() const noexcept {
    switch (variant) {
      case Variant::Concat2Emb: return 2 * embed_dim;
      case Variant::Lstm: return lstm_proj;
      default: return embed_dim;
    }
  }

  // Limited-context variants see exactly `history` labels. The LSTM is
  // unbounded; its ring buffer is kept at length one.
  bool has_finite_context() const noexcept { return variant != Variant::Lstm; }

  void validate() const {
    auto fail = [](const std::string &m) { throw ConfigError(m); };
    if (vocab_size < 2) fail("vocab_size must be >= 2");
    if (embed_dim == 0 || joint_dim == 0 || encoder_dim == 0) fail("dimensions must be positive");
    if (history < 1) fail("history (N) must be >= 1");
    if (heads < 1) fail("heads (H) must be >= 1");
    if (max_symbols_per_frame < 1) fail("max_symbols_per_frame must be >= 1");
    if (tied && embed_dim != joint_dim)
      fail("tied decoder requires embed_dim == joint_dim (got " + std::to_string(embed_dim) +
           " vs " + std::to_string(joint_dim) + ")");
    if (variant == Variant::Stateless1Emb && history != 1) fail("Stateless1Emb requires history == 1");
    if (variant == Variant::Concat2Emb && history != 2) fail("Concat2Emb requires history == 2");
    if (variant == Variant::Lstm) {
      if (lstm_layers < 1 || lstm_units < 1 || lstm_proj < 1) fail("LSTM dimensions must be positive");
      if (history != 1) fail("LSTM decoder keeps history == 1");
    }
  }

  bool operator==(const DecoderConfig &) const = default;
};

// The five decoders of the size comparison, at full vocabulary scale.
// encoder_dim is not given for these models; 512 is assumed.
inline std::vector<std::pair<std::string, DecoderConfig>> reference_decoders(
    std::size_t encoder_dim = 512, std::size_t vocab_size = 4096) {
  DecoderConfig base;
  base.vocab_size = vocab_size;
  base.encoder_dim = encoder_dim;
  base.heads = 1;

  DecoderConfig lstm = base;
  lstm.variant = Variant::Lstm;
  lstm.embed_dim = 128;
  lstm.joint_dim = 640;
  lstm.history = 1;
  lstm.tied = false;
  lstm.lstm_layers = 2;
  lstm.lstm_units = 2048;
  lstm.lstm_proj = 640;

  DecoderConfig stateless = base;
  stateless.variant = Variant::Stateless1Emb;
  stateless.embed_dim = 640;
  stateless.joint_dim = 640;
  stateless.history = 1;
  stateless.tied = false;

  DecoderConfig concat = stateless;
  concat.variant = Variant::Concat2Emb;
  concat.history = 2;

  DecoderConfig large = base;
  large.variant = Variant::Reduced;
  large.embed_dim = 1280;
  large.joint_dim = 1280;
  large.history = 2;
  large.heads = 4;
  large.tied = true;

  DecoderConfig small = large;
  small.embed_dim = 320;
  small.joint_dim = 320;
  small.history = 5;

  return {{"LSTM", lstm},
          {"Stateless1Emb", stateless},
          {"Concat2Emb", concat},
          {"ReducedLarge", large},
          {"ReducedSmall", small}};
}

inline DecoderConfig reference_decoder(std::string_view name, std::size_t encoder_dim = 512) {
  for (auto &[n, cfg] : reference_decoders(encoder_dim))
    if (n == name) return cfg;
  throw ConfigError("unknown reference decoder '" + std::string(name) + "'");
}

}  // namespace slimdec
