#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "slimdec/backprop.hpp"
#include "slimdec/edit_distance.hpp"
#include "slimdec/embr.hpp"
#include "slimdec/lattice.hpp"
#include "slimdec/toy_task.hpp"
#include "slimdec/trainer.hpp"

using namespace slimdec;

namespace {

LogitGrid random_grid(std::size_t t, std::size_t u1, std::size_t k, SeededRng &rng, double scale = 1.5) {
  LogitGrid g(t, u1, k);
  for (double &x : g.data) x = rng.gaussian(0.0, scale);
  return g;
}

LabelSequence random_labels(std::size_t n, std::size_t vocab, SeededRng &rng) {
  LabelSequence y(n);
  for (auto &v : y) v = rng.uniform_int(0, vocab - 1);
  return y;
}

DecoderConfig grad_cfg(Variant v, bool tied, bool positions_trainable = true) {
  DecoderConfig c;
  c.variant = v;
  c.vocab_size = 3;
  c.embed_dim = 4;
  c.joint_dim = 4;
  c.encoder_dim = 3;
  c.feature_dim = 3;
  c.history = v == Variant::Reduced ? 3 : (v == Variant::Concat2Emb ? 2 : 1);
  c.heads = 2;
  c.tied = tied;
  c.position_trainable = positions_trainable;
  c.lstm_layers = 2;
  c.lstm_units = 3;
  c.lstm_proj = 4;
  return c;
}

Matrix random_input(std::size_t t, std::size_t d, SeededRng &rng) {
  Matrix m(t, d);
  for (double &x : m.flat()) x = rng.gaussian();
  return m;
}

// Scales up a freshly initialised model so gradients are not all tiny.
ModelWeights lively_weights(const DecoderConfig &cfg, std::uint64_t seed) {
  auto w = init_weights(cfg, seed);
  SeededRng rng(seed + 1000);
  for (auto &[name, ref] : ModelWeights::tensor_refs(w))
    for (double &x : ref.get().flat())
      if (x == 0.0 || x == 1.0) x += rng.gaussian(0.0, 0.3);
  for (double &x : w.embedding.row(cfg.pad_id())) x = 0.0;
  return w;
}

// Compares the analytic gradient of f with central differences for every
// entry of every trainable tensor, except the frozen pad row.
void check_gradients(const DecoderConfig &cfg, ModelWeights &w, const ModelWeights &grad,
                     const std::function<double()> &f, double tol, const std::string &label) {
  double worst = 0.0;
  std::string worst_at;
  for (const auto &spec : tensor_specs(cfg)) {
    auto &param = tensor_by_name(w, spec.name);
    const auto &g = tensor_by_name(grad, spec.name);
    if (!spec.trainable) {
      for (double x : g.flat()) EXPECT_EQ(x, 0.0) << label << " frozen " << spec.name;
      continue;
    }
    for (std::size_t r = 0; r < param.rows(); ++r) {
      if (spec.name == "embedding" && r == cfg.pad_id()) continue;
      for (std::size_t c = 0; c < param.cols(); ++c) {
        const double fd = oracle::central_difference(f, param(r, c));
        const double err = oracle::relative_error(g(r, c), fd);
        if (err > worst) {
          worst = err;
          worst_at = spec.name + "[" + std::to_string(r) + "," + std::to_string(c) + "]";
        }
      }
    }
  }
  EXPECT_LT(worst, tol) << label << " worst at " << worst_at;
}

}  // namespace

TEST(TransducerLoss, SinglePathBlankOnly) {
  LogitGrid g(1, 1, 3);
  g.data = {0.2, -0.4, 1.1};
  const auto r = transducer_loss(g, LabelSequence{});
  EXPECT_NEAR(r.loss, -log_softmax<double>(Vector{0.2, -0.4, 1.1})[2], 1e-12);
}

TEST(TransducerLoss, SinglePathHandProduct) {
  LogitGrid g(1, 2, 3);
  const double q = std::log(0.25), h = std::log(0.5);
  g.data = {h, q, q, q, q, h};
  EXPECT_NEAR(transducer_loss(g, LabelSequence{0}).loss, 1.386294, 1e-6);
  EXPECT_NEAR(transducer_loss(g, LabelSequence{0}).loss, std::log(4.0), 1e-12);
}

TEST(TransducerLoss, MatchesBruteForceEnumeration) {
  SeededRng rng(31);
  int cases = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t T = 1 + rng.uniform_int(0, 3), U = rng.uniform_int(0, 3), V = 1 + rng.uniform_int(0, 2);
    const auto target = random_labels(U, V, rng);
    const auto grid = random_grid(T, U + 1, V + 1, rng);
    const double want = -std::log(oracle::alignment_sum(grid, target));
    EXPECT_NEAR(transducer_loss(grid, target).loss, want, 1e-8) << "T=" << T << " U=" << U;
    ++cases;
  }
  EXPECT_GE(cases, 100);
}

TEST(TransducerLoss, AlphaBetaAgreeAndStayInLogDomain) {
  SeededRng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng.uniform_int(0, 6), U = rng.uniform_int(0, 5), V = 2 + rng.uniform_int(0, 3);
    const auto target = random_labels(U, V, rng);
    const auto lat = build_lattice(random_grid(T, U + 1, V + 1, rng, 3.0), target);
    EXPECT_EQ(lat.log_alpha(0, 0), 0.0);
    EXPECT_NEAR(lat.log_likelihood, lat.log_likelihood_beta, 1e-9);
    for (double x : lat.log_alpha.flat()) EXPECT_LE(x, 0.0);
    for (double x : lat.log_beta.flat()) EXPECT_LE(x, 0.0);
    EXPECT_LE(lat.log_likelihood, 0.0);
  }
}

TEST(TransducerLoss, GradientRowsSumToZeroAndMatchFiniteDifferences) {
  SeededRng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 1 + rng.uniform_int(0, 3), U = rng.uniform_int(0, 3), V = 2;
    const auto target = random_labels(U, V, rng);
    auto grid = random_grid(T, U + 1, V + 1, rng);
    const auto r = transducer_loss(grid, target);
    EXPECT_GE(r.loss, 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t u = 0; u <= U; ++u) {
        double s = 0;
        for (double x : r.grad.at(t, u)) s += x;
        EXPECT_NEAR(s, 0.0, 1e-9);
      }
    for (std::size_t i = 0; i < grid.data.size(); ++i) {
      const double fd = oracle::central_difference([&] { return transducer_loss(grid, target).loss; }, grid.data[i]);
      EXPECT_LT(oracle::relative_error(r.grad.data[i], fd), 1e-5);
    }
  }
}

TEST(TransducerLoss, InfeasibleTargetsRejected) {
  EXPECT_THROW(transducer_loss(LogitGrid(2, 6, 3), LabelSequence{0, 1, 0, 1, 0}, 2), DomainError);
  EXPECT_THROW(transducer_loss(LogitGrid(0, 1, 3), LabelSequence{}), DomainError);
  EXPECT_NO_THROW(transducer_loss(LogitGrid(2, 5, 3), LabelSequence{0, 1, 0, 1}, 2));
}

TEST(Backprop, GradientsMatchFiniteDifferencesForEveryVariant) {
  struct Case {
    Variant v;
    bool tied;
  };
  const Case cases[] = {{Variant::Reduced, true},       {Variant::Reduced, false},   {Variant::Stateless1Emb, false},
                        {Variant::Concat2Emb, false},   {Variant::Lstm, false},      {Variant::Stateless1Emb, true},
                        {Variant::Concat2Emb, true}};
  SeededRng rng(40);
  for (const auto &c : cases) {
    const auto cfg = grad_cfg(c.v, c.tied);
    auto w = lively_weights(cfg, 3);
    const auto input = random_input(4, cfg.feature_dim, rng);
    const LabelSequence target{1, 0, 2};
    auto grad = zero_weights(cfg);
    utterance_loss_and_grad(input, target, w, cfg, grad);
    check_gradients(cfg, w, grad, [&] { return utterance_loss(input, target, w, cfg); }, 1e-4,
                    std::string(to_string(c.v)) + (cfg.tied ? " tied" : " untied"));
  }
}

TEST(Backprop, FrozenPositionsAndPadRowGetZeroGradient) {
  const auto cfg = grad_cfg(Variant::Reduced, true, false);
  const auto w = lively_weights(cfg, 5);
  SeededRng rng(41);
  auto grad = zero_weights(cfg);
  utterance_loss_and_grad(random_input(3, cfg.feature_dim, rng), LabelSequence{2, 1}, w, cfg, grad);
  for (double x : grad.position.flat()) EXPECT_EQ(x, 0.0);
  for (double x : grad.embedding.row(cfg.pad_id())) EXPECT_EQ(x, 0.0);
  EXPECT_GT(squared_norm(grad), 0.0);
}

TEST(Backprop, TiedEmbeddingGradientIsSumOfBothRoles) {
  const auto tied_cfg = grad_cfg(Variant::Reduced, true);
  auto untied_cfg = tied_cfg;
  untied_cfg.tied = false;
  const auto tied_w = lively_weights(tied_cfg, 6);
  auto untied_w = zero_weights(untied_cfg);
  for (auto &[name, ref] : ModelWeights::tensor_refs(untied_w))
    if (name != "output_w") ref.get() = tensor_by_name(tied_w, name);
  for (std::size_t v = 0; v < tied_cfg.vocab_size; ++v)
    std::copy(tied_w.embedding.row(v).begin(), tied_w.embedding.row(v).end(), untied_w.output_w.row(v).begin());
  SeededRng rng(42);
  const auto input = random_input(4, tied_cfg.feature_dim, rng);
  const LabelSequence target{0, 2};
  auto tg = zero_weights(tied_cfg), ug = zero_weights(untied_cfg);
  const double lt = utterance_loss_and_grad(input, target, tied_w, tied_cfg, tg);
  const double lu = utterance_loss_and_grad(input, target, untied_w, untied_cfg, ug);
  EXPECT_EQ(lt, lu);
  for (std::size_t v = 0; v < tied_cfg.vocab_size; ++v)
    for (std::size_t k = 0; k < tied_cfg.embed_dim; ++k)
      EXPECT_NEAR(tg.embedding(v, k), ug.embedding(v, k) + ug.output_w(v, k), 1e-12);
}

TEST(Backprop, StaleCacheIsStateError) {
  const auto cfg = grad_cfg(Variant::Reduced, true);
  const auto w = init_weights(cfg, 1);
  UtteranceCache cache;
  auto grad = zero_weights(cfg);
  EXPECT_THROW(backward_utterance(cache, LogitGrid(1, 1, 4), w, cfg, grad), StateError);
}

TEST(ToyEncoder, ZeroAndIdentityWeights) {
  auto cfg = grad_cfg(Variant::Reduced, true);
  auto w = zero_weights(cfg);
  SeededRng rng(50);
  const auto x = random_input(5, 3, rng);
  const auto zero = toy_encode(x, w);
  for (double v : zero.flat()) EXPECT_EQ(v, 0.0);
  w.encoder_w = Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_EQ(toy_encode(x, w), x);
  EXPECT_THROW(toy_encode(Matrix(2, 5), w), ShapeError);
}

TEST(EditDistance, Examples) {
  EXPECT_EQ(edit_distance(LabelSequence{0, 1, 2}, LabelSequence{0, 9, 2}), 1u);
  EXPECT_EQ(edit_distance(LabelSequence{}, LabelSequence{0, 1}), 2u);
  // Drop the leading a, then substitute c -> b.
  EXPECT_EQ(edit_distance(LabelSequence{0, 1, 0, 2}, LabelSequence{1, 0, 1}), 2u);
  EXPECT_EQ(oracle::dp_edit_distance({0, 1, 0, 2}, {1, 0, 1}), 2u);
}

TEST(EditDistance, MetricPropertiesAgainstTableOracle) {
  SeededRng rng(51);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_labels(rng.uniform_int(0, 6), 3, rng);
    const auto b = random_labels(rng.uniform_int(0, 6), 3, rng);
    const auto c = random_labels(rng.uniform_int(0, 6), 3, rng);
    const auto ab = edit_distance(a, b);
    EXPECT_EQ(ab, oracle::dp_edit_distance(a, b));
    EXPECT_EQ(ab, edit_distance(b, a));
    EXPECT_EQ(edit_distance(a, a), 0u);
    EXPECT_EQ(ab == 0, a == b);
    EXPECT_LE(edit_distance(a, c), ab + edit_distance(b, c));
  }
}

TEST(EmbrRisk, SingleHypothesis) {
  const auto r = embr_risk({{{{0, 1}, -3.0}}, {0, 2, 2}});
  EXPECT_DOUBLE_EQ(r.risk, 2.0);
  EXPECT_EQ(r.grad[0], 0.0);
}

TEST(EmbrRisk, TwoTermHandOracle) {
  const NBestList list{{{{0, 1}, -0.1}, {{2}, -2.0}}, {0, 1}};
  const auto r = embr_risk(list);
  const double p1 = 1.0 / (1.0 + std::exp(-1.9));
  EXPECT_NEAR(r.posteriors[0], p1, 1e-12);
  EXPECT_NEAR(r.posteriors[0], 0.869892, 1e-6);
  EXPECT_NEAR(r.risk, 2.0 * (1.0 - p1), 1e-10);
  EXPECT_NEAR(r.risk, 0.260216, 1e-6);
}

TEST(EmbrRisk, GradientMatchesFiniteDifferences) {
  SeededRng rng(52);
  for (int trial = 0; trial < 30; ++trial) {
    NBestList list;
    list.reference = random_labels(3, 3, rng);
    std::set<LabelSequence> seen;
    while (list.entries.size() < 4) {
      auto h = random_labels(rng.uniform_int(0, 4), 3, rng);
      if (seen.insert(h).second) list.entries.push_back({h, rng.gaussian(-3.0, 2.0)});
    }
    const double scale = trial % 2 ? 1.0 : 0.6;
    const auto r = embr_risk(list, scale);
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
      const double fd = oracle::central_difference([&] { return embr_risk(list, scale).risk; },
                                                   list.entries[i].log_prob, 1e-6);
      EXPECT_NEAR(r.grad[i], fd, 1e-6);
    }
  }
}

TEST(EmbrRisk, ShiftInvariant) {
  NBestList list{{{{0}, -1.0}, {{1}, -1.5}, {{0, 1}, -4.0}}, {0, 1}};
  const double base = embr_risk(list).risk;
  for (auto &e : list.entries) e.log_prob += 37.5;
  EXPECT_NEAR(embr_risk(list).risk, base, 1e-12);
}

TEST(EmbrRisk, EmptyOrDuplicateListsRejected) {
  EXPECT_THROW(embr_risk(NBestList{}), DomainError);
  EXPECT_THROW(embr_risk({{{{0}, -1.0}, {{0}, -2.0}}, {0}}), DomainError);
}

TEST(Embr, UtteranceGradientMatchesFiniteDifferencesOfRisk) {
  const auto cfg = grad_cfg(Variant::Reduced, true);
  auto w = lively_weights(cfg, 7);
  SeededRng rng(53);
  const auto input = random_input(4, cfg.feature_dim, rng);
  const LabelSequence ref{0, 2};
  const std::vector<LabelSequence> hyps{{0, 2}, {0}, {1, 2}, {0, 2, 2}};
  auto grad = zero_weights(cfg);
  embr_utterance_gradient(input, hyps, ref, w, cfg, grad);
  const auto risk = [&] { return embr_risk(score_hypotheses(input, hyps, ref, w, cfg)).risk; };
  check_gradients(cfg, w, grad, risk, 1e-3, "embr");
}

TEST(Embr, DominantCorrectHypothesisGivesNearZeroGradient) {
  const auto cfg = grad_cfg(Variant::Stateless1Emb, false);
  auto w = zero_weights(cfg);
  // Encoder passes the one-hot label through; the joint scores it sharply.
  w.encoder_w = Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  w.joint_enc_w = Matrix{{8, 0, 0, 0}, {0, 8, 0, 0}, {0, 0, 8, 0}};
  for (std::size_t v = 0; v < 3; ++v) {
    w.embedding(v, v) = 1.0;
    w.output_w(v, v) = 16.0;
  }
  w.joint_pred_w = Matrix{{-12, 0, 0, 12}, {0, -12, 0, 12}, {0, 0, -12, 12}, {0, 0, 0, 0}};
  w.blank_w = Matrix{{0, 0, 0, 10}};
  SeededRng rng(54);
  const auto input = render_features({0, 1}, {1, 1}, 3, 0.0, rng);
  auto grad = zero_weights(cfg);
  const auto r = embr_utterance_gradient(input, {{0, 1}, {0}, {1}}, {0, 1}, w, cfg, grad);
  EXPECT_GT(r.posteriors[0], 0.99);
  EXPECT_LT(r.risk, 1e-2);
  EXPECT_LT(std::sqrt(squared_norm(grad)), 0.1);
}

TEST(ToyTask, NoiselessFramesAreOneHot) {
  ToyTaskSpec spec;
  spec.noise_std = 0.0;
  spec.train_size = 20;
  spec.dev_size = 5;
  for (const auto &utt : make_toy_dataset(spec).train)
    for (std::size_t t = 0; t < utt.features.rows(); ++t) {
      double s = 0;
      for (double x : utt.features.row(t)) {
        EXPECT_TRUE(x == 0.0 || x == 1.0);
        s += x;
      }
      EXPECT_EQ(s, 1.0);
    }
}

TEST(ToyTask, HandTracedRendering) {
  SeededRng rng(1);
  const auto f = render_features({2, 0}, {2, 2}, 4, 0.0, rng);
  EXPECT_EQ(f, (Matrix{{0, 0, 1, 0}, {0, 0, 1, 0}, {1, 0, 0, 0}, {1, 0, 0, 0}}));
}

TEST(ToyTask, DeterministicAndDisjoint) {
  ToyTaskSpec spec;
  const auto a = make_toy_dataset(spec), b = make_toy_dataset(spec);
  ASSERT_EQ(a.train.size(), spec.train_size);
  ASSERT_EQ(a.dev.size(), spec.dev_size);
  std::set<LabelSequence> train_labels;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].labels, b.train[i].labels);
    EXPECT_EQ(a.train[i].features, b.train[i].features);
    train_labels.insert(a.train[i].labels);
    const auto &y = a.train[i].labels;
    for (std::size_t k = 1; k < y.size(); ++k) EXPECT_NE(y[k], y[k - 1]);
  }
  for (const auto &utt : a.dev) EXPECT_FALSE(train_labels.count(utt.labels));
  EXPECT_FALSE(make_toy_dataset(spec, 8).train[0].features == a.train[0].features);
}

TEST(ToyTask, InvalidSpecRejected) {
  ToyTaskSpec spec;
  spec.feature_dim = 2;
  EXPECT_THROW(spec.validate(), ConfigError);
}

namespace {

DecoderConfig toy_cfg() {
  DecoderConfig c;
  c.variant = Variant::Reduced;
  c.embed_dim = 8;
  c.joint_dim = 8;
  c.encoder_dim = 8;
  c.history = 2;
  c.heads = 2;
  return c;
}

ToyTaskSpec small_task() {
  ToyTaskSpec t;
  t.train_size = 16;
  t.dev_size = 4;
  return t;
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  TrainHyperparams hp;
  hp.learning_rate = 0.0;
  hp.epochs = 1;
  const auto task = small_task();
  const auto cfg = config_for_task(toy_cfg(), task);
  const auto r = train(cfg, task, hp);
  EXPECT_EQ(r.weights, init_weights(cfg, hp.seed));
  EXPECT_EQ(r.steps, steps_per_epoch(task.train_size, hp.batch_size));
}

TEST(Train, OverfitsSingleExample) {
  const auto task = small_task();
  const auto cfg = config_for_task(toy_cfg(), task);
  const auto ds = make_toy_dataset(task);
  auto w = init_weights(cfg, 3);
  SgdMomentum opt(cfg, 0.02, 0.0, 0.0);
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 12; ++step) {
    auto grad = zero_weights(cfg);
    const double loss = utterance_loss_and_grad(ds.train[0].features, ds.train[0].labels, w, cfg, grad);
    EXPECT_LT(loss, prev) << "step " << step;
    prev = loss;
    opt.step(w, grad);
  }
}

TEST(Train, DeterministicGivenSeedAndReportsEpochs) {
  TrainHyperparams hp;
  hp.epochs = 2;
  const auto task = small_task();
  const auto cfg = config_for_task(toy_cfg(), task);
  std::vector<EpochMetrics> seen;
  const auto a = train(cfg, task, hp, [&](const EpochMetrics &m) { seen.push_back(m); });
  const auto b = train(cfg, task, hp);
  EXPECT_EQ(a.weights, b.weights);
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[1].epoch, 2u);
  EXPECT_LT(seen[1].loss, seen[0].loss);
  EXPECT_GE(seen[1].dev_token_error_rate, 0.0);
}

TEST(Train, ParallelGradientEqualsSerial) {
  const auto task = small_task();
  const auto cfg = config_for_task(toy_cfg(), task);
  const auto ds = make_toy_dataset(task);
  const auto w = init_weights(cfg, 4);
  std::vector<const Utterance *> batch;
  for (const auto &u : ds.train) batch.push_back(&u);
  auto g1 = zero_weights(cfg), g3 = zero_weights(cfg);
  const double l1 = batch_gradient(batch, w, cfg, g1, 1);
  const double l3 = batch_gradient(batch, w, cfg, g3, 3);
  EXPECT_EQ(l1, l3);
  EXPECT_EQ(g1, g3);
}

TEST(Train, MissingEncoderRejected) {
  auto cfg = toy_cfg();
  cfg.feature_dim = 0;
  EXPECT_THROW(train(cfg, make_toy_dataset(small_task()), TrainHyperparams{}), ConfigError);
}
