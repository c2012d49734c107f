#pragma once

// The CLI's run configuration: one JSON document with decoder, task, train,
// embr and bench sections, each optional and each strictly validated.

#include <string>
#include <vector>

#include "slimdec/archive.hpp"
#include "slimdec/config_json.hpp"
#include "slimdec/embr.hpp"
#include "slimdec/trainer.hpp"

namespace slimdec {

struct BenchSpec {
  std::size_t runs = 10000;
  std::size_t warmup = 1000;
  std::vector<std::string> decoders{"ReducedSmall", "LSTM"};  // reference decoder names; first is the candidate
  std::string dtype = "f32";
  std::size_t encoder_dim = 512;
  std::size_t vocab_size = 4096;
  std::string core_label = "host";
  std::uint64_t seed = 1;

  bool operator==(const BenchSpec &) const = default;
};

struct RunConfig {
  DecoderConfig decoder;
  ToyTaskSpec task;
  TrainHyperparams train;
  EmbrOptions embr;
  std::uint64_t embr_seed = 11;
  BenchSpec bench;
  std::string metrics_log;  // JSON-lines path for per-epoch metrics; empty: none

  // Decoder config with vocab and feature width taken from the task.
  DecoderConfig model_config() const { return config_for_task(decoder, task); }
};

inline Json to_json(const TrainHyperparams &h) {
  return Json{{"learning_rate", h.learning_rate}, {"momentum", h.momentum}, {"batch_size", h.batch_size},
              {"epochs", h.epochs},               {"seed", h.seed},         {"workers", h.workers},
              {"clip_norm", h.clip_norm}};
}

inline Json to_json(const BenchSpec &b) {
  return Json{{"runs", b.runs},     {"warmup", b.warmup},           {"decoders", b.decoders},
              {"dtype", b.dtype},   {"encoder_dim", b.encoder_dim}, {"vocab_size", b.vocab_size},
              {"core_label", b.core_label}, {"seed", b.seed}};
}

inline Json to_json(const RunConfig &rc) {
  Json embr{{"beam_width", rc.embr.beam_width},
            {"posterior_scale", rc.embr.posterior_scale},
            {"add_reference", rc.embr.add_reference},
            {"learning_rate", rc.embr.learning_rate},
            {"momentum", rc.embr.momentum},
            {"batch_size", rc.embr.batch_size},
            {"steps", rc.embr.steps},
            {"clip_norm", rc.embr.clip_norm},
            {"seed", rc.embr_seed}};
  Json train = to_json(rc.train);
  train["metrics_log"] = rc.metrics_log;
  return Json{{"decoder", to_json(rc.decoder)}, {"task", to_json(rc.task)}, {"train", train},
              {"embr", embr},                   {"bench", to_json(rc.bench)}};
}

inline RunConfig run_config_from_json(const Json &j) {
  RunConfig rc;
  StrictObject root(j, "");
  if (const Json *d = root.find("decoder")) rc.decoder = decoder_config_from_json(*d, "/decoder");
  if (const Json *t = root.find("task")) rc.task = task_spec_from_json(*t, "/task");
  if (const Json *t = root.find("train")) {
    StrictObject o(*t, "/train");
    o.read("learning_rate", rc.train.learning_rate);
    o.read("momentum", rc.train.momentum);
    o.read("batch_size", rc.train.batch_size);
    o.read("epochs", rc.train.epochs);
    o.read("seed", rc.train.seed, 0);
    o.read("workers", rc.train.workers);
    o.read("clip_norm", rc.train.clip_norm);
    o.read("metrics_log", rc.metrics_log);
    o.finish();
  }
  if (const Json *e = root.find("embr")) {
    StrictObject o(*e, "/embr");
    o.read("beam_width", rc.embr.beam_width);
    o.read("posterior_scale", rc.embr.posterior_scale);
    o.read("add_reference", rc.embr.add_reference);
    o.read("learning_rate", rc.embr.learning_rate);
    o.read("momentum", rc.embr.momentum);
    o.read("batch_size", rc.embr.batch_size);
    o.read("steps", rc.embr.steps);
    o.read("clip_norm", rc.embr.clip_norm);
    o.read("seed", rc.embr_seed, 0);
    o.finish();
  }
  if (const Json *b = root.find("bench")) {
    StrictObject o(*b, "/bench");
    o.read("runs", rc.bench.runs);
    o.read("warmup", rc.bench.warmup);
    if (const Json *names = o.find("decoders")) {
      if (!names->is_array() || names->empty()) throw SchemaError("/bench/decoders: expected a non-empty array");
      rc.bench.decoders.clear();
      for (std::size_t i = 0; i < names->size(); ++i) {
        const Json &n = (*names)[i];
        if (!n.is_string()) throw SchemaError("/bench/decoders/" + std::to_string(i) + ": expected a string");
        try {
          reference_decoder(n.get<std::string>());
        } catch (const ConfigError &err) {
          throw SchemaError("/bench/decoders/" + std::to_string(i) + ": " + err.what());
        }
        rc.bench.decoders.push_back(n.get<std::string>());
      }
    }
    o.read("dtype", rc.bench.dtype);
    if (rc.bench.dtype != "f32" && rc.bench.dtype != "f64") throw SchemaError("/bench/dtype: expected \"f32\" or \"f64\"");
    o.read("encoder_dim", rc.bench.encoder_dim);
    o.read("vocab_size", rc.bench.vocab_size);
    o.read("core_label", rc.bench.core_label);
    o.read("seed", rc.bench.seed, 0);
    o.finish();
  }
  root.finish();
  if (rc.train.batch_size == 0) throw SchemaError("/train/batch_size: must be >= 1");
  if (rc.embr.beam_width == 0) throw SchemaError("/embr/beam_width: must be >= 1");
  if (rc.bench.runs == 0) throw SchemaError("/bench/runs: must be >= 1");
  try {
    rc.task.validate();
    rc.model_config().validate();
  } catch (const ConfigError &e) {
    throw SchemaError(std::string("invalid configuration: ") + e.what());
  }
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path &path) {
  const auto bytes = detail::read_file(path);
  Json j;
  try {
    j = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::exception &e) {
    throw SchemaError(path.string() + ": not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

// CLI exit status for an error category.
inline int exit_code_for(const std::string &category) {
  if (category == "schema" || category == "config" || category == "shape" || category == "domain") return 2;
  if (category == "io") return 3;
  if (category == "capacity") return 4;
  if (category == "divergence") return 5;
  if (category == "unsupported_format" || category == "validation" || category == "corruption") return 6;
  return 1;
}

}  // namespace slimdec
