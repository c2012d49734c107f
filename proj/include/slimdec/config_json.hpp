#pragma once

// Strict JSON <-> struct mapping for configs. Unknown keys and wrong types
// are rejected with the JSON path of the offending value.

#include <cstdint>
#include <set>
#include <string>

#include "json.hpp"
#include "slimdec/config.hpp"
#include "slimdec/errors.hpp"
#include "slimdec/toy_task.hpp"

namespace slimdec {

using Json = nlohmann::json;

// Reads fields out of one JSON object and remembers which keys were
// consumed, so finish() can reject the rest.
class StrictObject {
 public:
  StrictObject(const Json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
  }

  bool has(const std::string &key) const { return j_.contains(key); }
  std::string path_of(const std::string &key) const { return path_ + "/" + key; }

  const Json *find(const std::string &key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void read(const std::string &key, std::size_t &out) {
    if (const Json *v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0)
        throw SchemaError(path_of(key) + ": expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const std::string &key, std::uint64_t &out, int) {
    if (const Json *v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
        throw SchemaError(path_of(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void read(const std::string &key, double &out) {
    if (const Json *v = find(key)) {
      if (!v->is_number()) throw SchemaError(path_of(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void read(const std::string &key, bool &out) {
    if (const Json *v = find(key)) {
      if (!v->is_boolean()) throw SchemaError(path_of(key) + ": expected a boolean");
      out = v->get<bool>();
    }
  }
  void read(const std::string &key, std::string &out) {
    if (const Json *v = find(key)) {
      if (!v->is_string()) throw SchemaError(path_of(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw SchemaError(path_of(it.key()) + ": unknown key");
  }

 private:
  const Json &j_;
  std::string path_;
  std::set<std::string> used_;
};

inline Json to_json(const DecoderConfig &c) {
  return Json{{"variant", std::string(to_string(c.variant))},
              {"vocab_size", c.vocab_size},
              {"embed_dim", c.embed_dim},
              {"joint_dim", c.joint_dim},
              {"encoder_dim", c.encoder_dim},
              {"history", c.history},
              {"heads", c.heads},
              {"tied", c.tied},
              {"position_trainable", c.position_trainable},
              {"lstm_layers", c.lstm_layers},
              {"lstm_units", c.lstm_units},
              {"lstm_proj", c.lstm_proj},
              {"max_symbols_per_frame", c.max_symbols_per_frame},
              {"feature_dim", c.feature_dim}};
}

// Fields absent from j keep the values already in `base`. Also accepts a
// "preset" naming one of the reference decoders as the starting point.
inline DecoderConfig decoder_config_from_json(const Json &j, const std::string &path,
                                              DecoderConfig base = DecoderConfig{}) {
  StrictObject o(j, path);
  std::string preset;
  o.read("preset", preset);
  if (!preset.empty()) {
    try {
      if (o.has("encoder_dim")) {
        std::size_t enc = 0;
        o.read("encoder_dim", enc);
        base = reference_decoder(preset, enc);
      } else {
        base = reference_decoder(preset);
      }
    } catch (const ConfigError &e) {
      throw SchemaError(o.path_of("preset") + ": " + e.what());
    }
  }
  std::string variant(to_string(base.variant));
  o.read("variant", variant);
  try {
    base.variant = variant_from_string(variant);
  } catch (const ConfigError &e) {
    throw SchemaError(o.path_of("variant") + ": " + e.what());
  }
  o.read("vocab_size", base.vocab_size);
  o.read("embed_dim", base.embed_dim);
  o.read("joint_dim", base.joint_dim);
  o.read("encoder_dim", base.encoder_dim);
  o.read("history", base.history);
  o.read("heads", base.heads);
  o.read("tied", base.tied);
  o.read("position_trainable", base.position_trainable);
  o.read("lstm_layers", base.lstm_layers);
  o.read("lstm_units", base.lstm_units);
  o.read("lstm_proj", base.lstm_proj);
  o.read("max_symbols_per_frame", base.max_symbols_per_frame);
  o.read("feature_dim", base.feature_dim);
  o.finish();
  return base;
}

inline Json to_json(const ToyTaskSpec &t) {
  return Json{{"vocab_size", t.vocab_size},
              {"min_length", t.min_length},
              {"max_length", t.max_length},
              {"min_frames_per_label", t.min_frames_per_label},
              {"max_frames_per_label", t.max_frames_per_label},
              {"feature_dim", t.feature_dim},
              {"noise_std", t.noise_std},
              {"train_size", t.train_size},
              {"dev_size", t.dev_size},
              {"seed", t.seed}};
}

inline ToyTaskSpec task_spec_from_json(const Json &j, const std::string &path, ToyTaskSpec base = ToyTaskSpec{}) {
  StrictObject o(j, path);
  o.read("vocab_size", base.vocab_size);
  o.read("min_length", base.min_length);
  o.read("max_length", base.max_length);
  o.read("min_frames_per_label", base.min_frames_per_label);
  o.read("max_frames_per_label", base.max_frames_per_label);
  o.read("feature_dim", base.feature_dim);
  o.read("noise_std", base.noise_std);
  o.read("train_size", base.train_size);
  o.read("dev_size", base.dev_size);
  o.read("seed", base.seed, 0);
  o.finish();
  return base;
}

}  // namespace slimdec
