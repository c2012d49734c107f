// slimdec: parameter accounting, toy training, EMBR fine-tuning, decoding,
// lookup conversion and step-latency benchmarks.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "slimdec.hpp"
#include "slimdec/bench.hpp"
#include "slimdec/run_config.hpp"

using namespace slimdec;

namespace {

struct Options {
  std::string config_path;
  std::string model_path;
  std::string out_path;
  std::string input_path;
  std::string metrics_path;
  std::optional<std::uint64_t> seed;
  std::size_t beam = 0;
  std::size_t dev_count = 0;
  std::size_t budget = kDefaultLookupBudget;
  std::size_t runs = 0;
  bool json = false;
};

RunConfig run_config(const Options &o) { return o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path); }

std::string grouped(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string label_string(const LabelSequence &labels) {
  std::ostringstream out;
  for (std::size_t i = 0; i < labels.size(); ++i) out << (i ? " " : "") << labels[i];
  return out.str();
}

void print_json(const Json &j) { std::cout << j.dump(2) << "\n"; }

int cmd_params(const Options &o) {
  const RunConfig rc = run_config(o);
  Json report = Json::array();
  for (const auto &[name, cfg] : reference_decoders(rc.bench.encoder_dim, rc.bench.vocab_size)) {
    const auto pc = param_count(cfg);
    Json tensors = Json::array();
    for (const auto &e : pc.entries) tensors.push_back({{"name", e.name}, {"count", e.count}, {"trainable", e.trainable}});
    Json entry{{"decoder", name}, {"tied", cfg.tied}, {"tensors", tensors}, {"total", pc.total}};
    if (cfg.tied) entry["tying_savings"] = tying_savings(cfg);
    report.push_back(entry);
    if (o.json) continue;
    std::printf("%s (%s, d_e=%zu, d_h=%zu, N=%zu, H=%zu, |V|=%zu, d_enc=%zu)\n", name.c_str(),
                cfg.tied ? "tied" : "untied", cfg.embed_dim, cfg.joint_dim, cfg.history, cfg.heads, cfg.vocab_size,
                cfg.encoder_dim);
    for (const auto &e : pc.entries)
      std::printf("  %-22s %14s%s\n", e.name.c_str(), grouped(e.count).c_str(), e.trainable ? "" : "  (frozen)");
    std::printf("  %-22s %14s\n", "total", grouped(pc.total).c_str());
    if (cfg.tied)
      std::printf("  tied savings: d_h*|V| = %zu*%zu = %s\n", cfg.joint_dim, cfg.vocab_size,
                  grouped(tying_savings(cfg)).c_str());
    std::printf("\n");
  }
  if (o.json) print_json(report);
  return 0;
}

void write_metrics_line(std::ofstream &log, const EpochMetrics &m) {
  log << Json{{"epoch", m.epoch}, {"loss", m.loss}, {"dev_token_error_rate", m.dev_token_error_rate}, {"wall_s", m.wall_s}}
             .dump()
      << "\n";
}

int cmd_train(const Options &o) {
  RunConfig rc = run_config(o);
  if (o.seed) rc.train.seed = *o.seed;
  const auto cfg = rc.model_config();
  const auto data = make_toy_dataset(rc.task);
  const std::string log_path = o.metrics_path.empty() ? rc.metrics_log : o.metrics_path;
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open metrics log '" + log_path + "'");
  }
  const auto result = train(cfg, data, rc.train, [&](const EpochMetrics &m) {
    if (log.is_open()) write_metrics_line(log, m);
    if (!o.json)
      std::printf("epoch %3zu  loss %.4f  dev_ter %.4f  %.2fs\n", m.epoch, m.loss, m.dev_token_error_rate, m.wall_s);
  });
  save_model(result.weights, cfg, o.out_path, rc.train.seed);
  const double ter = result.epochs.empty() ? token_error_rate(data.dev, result.weights, cfg)
                                           : result.epochs.back().dev_token_error_rate;
  if (o.json)
    print_json({{"model", o.out_path}, {"steps", result.steps}, {"dev_token_error_rate", ter}});
  else
    std::printf("wrote %s after %zu steps, dev token error %.4f\n", o.out_path.c_str(), result.steps, ter);
  return 0;
}

int cmd_embr(const Options &o) {
  RunConfig rc = run_config(o);
  if (o.seed) rc.embr_seed = *o.seed;
  if (o.beam) rc.embr.beam_width = o.beam;
  auto archive = load_model(o.model_path);
  const auto &cfg = archive.config;
  if (cfg.vocab_size != rc.task.vocab_size || cfg.feature_dim != rc.task.feature_dim)
    throw SchemaError("/task: vocab_size/feature_dim differ from the model being fine-tuned");
  const auto data = make_toy_dataset(rc.task);
  const std::size_t steps =
      rc.embr.steps ? rc.embr.steps
                    : std::max<std::size_t>(1, steps_per_epoch(data.train.size(), rc.train.batch_size) * rc.train.epochs / 10);
  const double before = mean_risk(data.dev, archive.weights, cfg, rc.embr);
  const auto result = embr_finetune(archive.weights, cfg, data.train, rc.embr, steps, rc.embr_seed);
  const double after = mean_risk(data.dev, archive.weights, cfg, rc.embr);
  std::size_t skipped = 0;
  for (const auto &s : result.steps) skipped += s.skipped;
  save_model(archive, o.out_path);
  const double ter = token_error_rate(data.dev, archive.weights, cfg);
  if (o.json)
    print_json({{"model", o.out_path},
                {"steps", steps},
                {"dev_risk_before", before},
                {"dev_risk_after", after},
                {"skipped_utterances", skipped},
                {"dev_token_error_rate", ter}});
  else
    std::printf("EMBR %zu steps: dev risk %.6f -> %.6f, dev token error %.4f, wrote %s\n", steps, before, after, ter,
                o.out_path.c_str());
  return 0;
}

Matrix read_input_matrix(const std::string &path) {
  const auto bytes = detail::read_file(path);
  Json j;
  try {
    j = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::exception &e) {
    throw SchemaError(path + ": not valid JSON: " + e.what());
  }
  if (j.is_object()) {
    StrictObject o(j, "");
    const Json *frames = o.find("frames");
    o.finish();
    if (!frames) throw SchemaError("/frames: missing");
    j = *frames;
  }
  if (!j.is_array()) throw SchemaError("/frames: expected an array of rows");
  Matrix m;
  for (std::size_t t = 0; t < j.size(); ++t) {
    const Json &row = j[t];
    if (!row.is_array()) throw SchemaError("/frames/" + std::to_string(t) + ": expected an array of numbers");
    if (t == 0) m = Matrix(j.size(), row.size());
    if (row.size() != m.cols()) throw SchemaError("/frames/" + std::to_string(t) + ": row width differs");
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!row[k].is_number()) throw SchemaError("/frames/" + std::to_string(t) + "/" + std::to_string(k) + ": not a number");
      m(t, k) = row[k].get<double>();
    }
  }
  return m;
}

Json decode_one(const Matrix &input, const ModelArchive &a, std::size_t beam, bool print) {
  const auto frames = model_frames(input, a.weights, a.config);
  Json out;
  if (beam == 0) {
    const auto r = greedy_decode(frames, a.weights, a.config);
    out = {{"labels", r.labels}, {"log_prob", r.log_prob}};
    if (print) std::printf("labels: %s\nlog_prob: %.6f\n", label_string(r.labels).c_str(), r.log_prob);
  } else {
    Json nbest = Json::array();
    for (const auto &e : beam_decode(frames, a.weights, a.config, beam)) {
      nbest.push_back({{"labels", e.labels}, {"log_prob", e.log_prob}});
      if (print) std::printf("%.6f\t%s\n", e.log_prob, label_string(e.labels).c_str());
    }
    out = {{"nbest", nbest}};
  }
  return out;
}

int cmd_decode(const Options &o) {
  const auto archive = load_model(o.model_path);
  if (!o.input_path.empty()) {
    const auto out = decode_one(read_input_matrix(o.input_path), archive, o.beam, !o.json);
    if (o.json) print_json(out);
    return 0;
  }
  if (o.dev_count == 0) throw SchemaError("decode needs --input or --dev");
  const RunConfig rc = run_config(o);
  const auto data = make_toy_dataset(rc.task);
  Json all = Json::array();
  std::size_t errors = 0, words = 0;
  for (std::size_t i = 0; i < std::min(o.dev_count, data.dev.size()); ++i) {
    const auto &utt = data.dev[i];
    if (!o.json) std::printf("# dev %zu  reference: %s\n", i, label_string(utt.labels).c_str());
    Json r = decode_one(utt.features, archive, o.beam, !o.json);
    const LabelSequence hyp = o.beam ? r["nbest"][0]["labels"].get<LabelSequence>() : r["labels"].get<LabelSequence>();
    errors += edit_distance(hyp, utt.labels);
    words += utt.labels.size();
    r["reference"] = utt.labels;
    all.push_back(r);
  }
  const double ter = words ? static_cast<double>(errors) / static_cast<double>(words) : 0.0;
  if (o.json)
    print_json({{"utterances", all}, {"token_error_rate", ter}});
  else
    std::printf("token error rate: %.4f\n", ter);
  return 0;
}

int cmd_convert_lookup(const Options &o) {
  const auto archive = load_model(o.model_path);
  const auto table = convert_to_lookup(archive.weights, archive.config, o.budget);
  save_lookup(table, archive.config, o.out_path);
  if (o.json)
    print_json({{"lookup", o.out_path}, {"entries", table.entries()}, {"dim", table.table.cols()}});
  else
    std::printf("wrote %s: %zu contexts x %zu\n", o.out_path.c_str(), table.entries(), table.table.cols());
  return 0;
}

template <typename Real>
TimingStats time_decoder(const DecoderConfig &cfg, const BenchSpec &b) {
  auto bench = make_step_bench<Real>(cfg, b.seed);
  return step_timer(std::ref(bench), b.runs, b.warmup);
}

int cmd_bench(const Options &o) {
  RunConfig rc = run_config(o);
  if (o.runs) {
    rc.bench.runs = o.runs;
    rc.bench.warmup = o.runs / 10;
  }
  if (o.seed) rc.bench.seed = *o.seed;
  const auto &b = rc.bench;
  Json records = Json::array();
  std::vector<std::pair<std::string, TimingStats>> stats;
  if (!o.json) std::printf("%-14s %-8s %8s %12s %10s %14s\n", "decoder", "core", "runs", "mean_ms", "std_ms", "flops/step");
  for (const auto &name : b.decoders) {
    const auto cfg = reference_decoder(name, b.encoder_dim);
    auto sized = cfg;
    sized.vocab_size = b.vocab_size;
    const auto s = b.dtype == "f32" ? time_decoder<float>(sized, b) : time_decoder<double>(sized, b);
    stats.emplace_back(name, s);
    records.push_back({{"core_label", b.core_label},
                       {"decoder_name", name},
                       {"runs", s.runs},
                       {"mean_ms", s.mean_ms},
                       {"std_ms", s.std_ms}});
    if (!o.json)
      std::printf("%-14s %-8s %8zu %12.4f %10.4f %14.0f\n", name.c_str(), b.core_label.c_str(), s.runs, s.mean_ms,
                  s.std_ms, step_flops(sized));
  }
  Json report{{"records", records}, {"dtype", b.dtype}};
  if (stats.size() >= 2) {
    const auto &cand = stats.front();
    Json comparisons = Json::array();
    for (std::size_t i = 1; i < stats.size(); ++i) {
      auto base_cfg = reference_decoder(stats[i].first, b.encoder_dim), cand_cfg = reference_decoder(cand.first, b.encoder_dim);
      base_cfg.vocab_size = cand_cfg.vocab_size = b.vocab_size;
      const double speedup = stats[i].second.mean_ms / cand.second.mean_ms;
      const double flop_ratio = step_flops(base_cfg) / step_flops(cand_cfg);
      comparisons.push_back({{"candidate", cand.first}, {"baseline", stats[i].first}, {"speedup", speedup},
                             {"flop_ratio", flop_ratio}});
      if (!o.json)
        std::printf("%s vs %s: speedup %.2fx, FLOP ratio %.2fx\n", cand.first.c_str(), stats[i].first.c_str(), speedup,
                    flop_ratio);
    }
    report["comparisons"] = comparisons;
  }
  if (o.json) print_json(report);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Tied and reduced transducer decoders: accounting, training, decoding, benchmarks"};
  app.require_subcommand(1);
  Options o;

  auto *params = app.add_subcommand("params", "Per-tensor parameter counts of the reference decoders");
  params->add_option("--config", o.config_path, "Run config (JSON)");
  params->add_flag("--json", o.json, "Emit JSON");

  auto *train_cmd = app.add_subcommand("train", "Train a decoder on the synthetic toy task");
  train_cmd->add_option("--config", o.config_path, "Run config (JSON)");
  train_cmd->add_option("--out", o.out_path, "Model archive to write")->required();
  train_cmd->add_option("--metrics", o.metrics_path, "JSON-lines per-epoch metrics log");
  train_cmd->add_option("--seed", o.seed, "Override train.seed");
  train_cmd->add_flag("--json", o.json, "Emit JSON");

  auto *embr_cmd = app.add_subcommand("embr", "EMBR fine-tuning of a trained model");
  embr_cmd->add_option("--config", o.config_path, "Run config (JSON)");
  embr_cmd->add_option("--model", o.model_path, "Input model archive")->required();
  embr_cmd->add_option("--out", o.out_path, "Fine-tuned model archive to write")->required();
  embr_cmd->add_option("--seed", o.seed, "Override embr.seed");
  embr_cmd->add_option("--beam", o.beam, "Override embr.beam_width");
  embr_cmd->add_flag("--json", o.json, "Emit JSON");

  auto *decode_cmd = app.add_subcommand("decode", "Greedy or beam decoding");
  decode_cmd->add_option("--model", o.model_path, "Model archive")->required();
  auto *input = decode_cmd->add_option("--input", o.input_path, "JSON frames: [[...], ...] or {\"frames\": ...}");
  decode_cmd->add_option("--dev", o.dev_count, "Decode the first N dev utterances of the config's task")
      ->excludes(input);
  decode_cmd->add_option("--config", o.config_path, "Run config (JSON), used with --dev");
  decode_cmd->add_option("--beam", o.beam, "Beam width; 0 or absent decodes greedily");
  decode_cmd->add_flag("--json", o.json, "Emit JSON");

  auto *lookup_cmd = app.add_subcommand("convert-lookup", "Tabulate a finite-context prediction network");
  lookup_cmd->add_option("--model", o.model_path, "Model archive")->required();
  lookup_cmd->add_option("--out", o.out_path, "Lookup archive to write")->required();
  lookup_cmd->add_option("--budget", o.budget, "Maximum number of table entries");
  lookup_cmd->add_flag("--json", o.json, "Emit JSON");

  auto *bench_cmd = app.add_subcommand("bench", "Per-step latency of reference decoders");
  bench_cmd->add_option("--config", o.config_path, "Run config (JSON)");
  bench_cmd->add_option("--runs", o.runs, "Override bench.runs (warmup becomes runs/10)");
  bench_cmd->add_option("--seed", o.seed, "Override bench.seed");
  bench_cmd->add_flag("--json", o.json, "Emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::printf("error: category=usage message=%s\n", e.what());
    return 64;
  }

  try {
    if (*params) return cmd_params(o);
    if (*train_cmd) return cmd_train(o);
    if (*embr_cmd) return cmd_embr(o);
    if (*decode_cmd) return cmd_decode(o);
    if (*lookup_cmd) return cmd_convert_lookup(o);
    if (*bench_cmd) return cmd_bench(o);
  } catch (const Error &e) {
    std::printf("error: category=%s message=%s\n", e.category().c_str(), e.what());
    return exit_code_for(e.category());
  } catch (const std::exception &e) {
    std::printf("error: category=internal message=%s\n", e.what());
    return 1;
  }
  return 1;
}
