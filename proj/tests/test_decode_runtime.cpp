#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "slimdec/decode.hpp"
#include "slimdec/lookup.hpp"
#include "slimdec/timing.hpp"

using namespace slimdec;

namespace {

DecoderConfig small_cfg(Variant v, std::size_t vocab = 2, std::size_t max_symbols = 2) {
  DecoderConfig c;
  c.variant = v;
  c.vocab_size = vocab;
  c.embed_dim = 3;
  c.joint_dim = 3;
  c.encoder_dim = 2;
  c.history = v == Variant::Concat2Emb ? 2 : (v == Variant::Reduced ? 2 : 1);
  c.heads = 2;
  c.tied = v == Variant::Reduced;
  c.lstm_units = 3;
  c.lstm_proj = 3;
  c.max_symbols_per_frame = max_symbols;
  return c;
}

Matrix random_frames(std::size_t t, std::size_t d, SeededRng &rng, double scale = 1.0) {
  Matrix m(t, d);
  for (double &x : m.flat()) x = rng.gaussian(0.0, scale);
  return m;
}

// Constant logits: every weight zero except the output bias.
ModelWeights constant_model(const DecoderConfig &cfg, const Vector &bias) {
  auto w = zero_weights<double>(cfg);
  std::copy(bias.begin(), bias.end(), w.output_b.row(0).begin());
  return w;
}

// Sharpen a random model so argmax decisions are far from ties.
ModelWeights sharp_model(const DecoderConfig &cfg, std::uint64_t seed, double gain) {
  auto w = init_weights(cfg, seed);
  for (double &x : w.joint_enc_w.flat()) x *= gain;
  for (double &x : w.blank_w.flat()) x *= gain;
  if (!cfg.tied)
    for (double &x : w.output_w.flat()) x *= gain;
  return w;
}

}  // namespace

TEST(Greedy, AllBlankModelEmitsNothing) {
  const auto cfg = small_cfg(Variant::Reduced);
  const auto w = constant_model(cfg, Vector{0, 0, 8});
  const Matrix frames(4, 2, 0.3);
  const auto r = greedy_decode(frames, w, cfg);
  EXPECT_TRUE(r.labels.empty());
  const double pb = log_softmax<double>(Vector{0, 0, 8})[2];
  EXPECT_NEAR(r.log_prob, 4 * pb, 1e-12);
}

TEST(Greedy, NoFramesNoOutput) {
  const auto cfg = small_cfg(Variant::Reduced);
  const auto w = init_weights(cfg, 1);
  const auto r = greedy_decode(Matrix(0, 2), w, cfg);
  EXPECT_TRUE(r.labels.empty());
  EXPECT_EQ(r.log_prob, 0.0);
}

TEST(Greedy, HandSimulatedRiggedLoop) {
  // Stateless decoder, d_h = 2. Frame 0 drives h towards dim 0 where label 0
  // wins; once label 0 is in the history the prediction term pushes h to
  // dim 1 where blank wins. Frame 1 drives dim 1 from the start.
  auto cfg = small_cfg(Variant::Stateless1Emb, 3, 10);
  cfg.embed_dim = 2;
  cfg.joint_dim = 2;
  auto w = zero_weights<double>(cfg);
  w.embedding(0, 0) = 1.0;
  w.joint_enc_w = Matrix{{5, 0}, {0, 5}};
  w.joint_pred_w = Matrix{{-10, 10}, {0, 0}};
  w.output_w(0, 0) = 5.0;
  w.blank_w = Matrix{{0, 5}};
  const Matrix frames{{1, 0}, {0, 1}};
  const auto r = greedy_decode(frames, w, cfg);
  EXPECT_EQ(r.labels, (LabelSequence{0}));
  EXPECT_EQ(r.step_ms.size(), 3u);
}

TEST(Greedy, SymbolCapForcesBlank) {
  auto cfg = small_cfg(Variant::Reduced, 2, 3);
  const auto w = constant_model(cfg, Vector{6, 0, 0});
  const auto r = greedy_decode(Matrix(2, 2, 0.0), w, cfg);
  EXPECT_EQ(r.labels, (LabelSequence{0, 0, 0, 0, 0, 0}));
  const auto lp = log_softmax<double>(Vector{6, 0, 0});
  EXPECT_NEAR(r.log_prob, 6 * lp[0] + 2 * lp[2], 1e-12);
}

TEST(Greedy, FrameWidthMismatchThrows) {
  const auto cfg = small_cfg(Variant::Reduced);
  EXPECT_THROW(greedy_decode(Matrix(2, 5), init_weights(cfg, 1), cfg), ShapeError);
}

TEST(Beam, ZeroWidthIsConfigError) {
  const auto cfg = small_cfg(Variant::Reduced);
  EXPECT_THROW(beam_decode(Matrix(1, 2), init_weights(cfg, 1), cfg, 0), ConfigError);
}

TEST(Beam, WidthOneAllBlank) {
  const auto cfg = small_cfg(Variant::Reduced);
  const auto w = constant_model(cfg, Vector{0, 0, 8});
  const auto nbest = beam_decode(Matrix(3, 2, 0.1), w, cfg, 1);
  ASSERT_EQ(nbest.size(), 1u);
  EXPECT_TRUE(nbest[0].labels.empty());
  EXPECT_NEAR(nbest[0].log_prob, 3 * log_softmax<double>(Vector{0, 0, 8})[2], 1e-12);
}

TEST(Beam, MergesAlignmentsOfSameLabels) {
  // Constant distribution (p_a, p_b, p_blank): label sequence [a] over two
  // frames has exactly two alignments, each with probability p_a p_blank^2.
  const auto cfg = small_cfg(Variant::Reduced, 2, 2);
  const Vector bias{0.5, -1.0, 1.0};
  const auto w = constant_model(cfg, bias);
  const auto lp = log_softmax<double>(bias);
  const auto nbest = beam_decode(Matrix(2, 2, 0.0), w, cfg, 64);
  const double want = log_sum_exp(lp[0] + 2 * lp[2], lp[0] + 2 * lp[2]);
  bool found = false;
  for (const auto &e : nbest)
    if (e.labels == LabelSequence{0}) {
      found = true;
      EXPECT_NEAR(e.log_prob, want, 1e-12);
    }
  EXPECT_TRUE(found);
}

TEST(Beam, SortedAndBlankFree) {
  SeededRng rng(3);
  for (auto v : {Variant::Reduced, Variant::Stateless1Emb, Variant::Concat2Emb, Variant::Lstm}) {
    const auto cfg = small_cfg(v, 3, 2);
    const auto w = init_weights(cfg, 11);
    const auto frames = random_frames(4, 2, rng);
    const auto nbest = beam_decode(frames, w, cfg, 5);
    ASSERT_FALSE(nbest.empty());
    EXPECT_LE(nbest.size(), 5u);
    for (std::size_t i = 0; i < nbest.size(); ++i) {
      if (i > 0) {
        EXPECT_GE(nbest[i - 1].log_prob, nbest[i].log_prob);
      }
      EXPECT_LE(nbest[i].log_prob, 0.0);
      EXPECT_LE(nbest[i].labels.size(), 4u * cfg.max_symbols_per_frame);
      for (auto id : nbest[i].labels) EXPECT_LT(id, cfg.vocab_size);
    }
  }
}

TEST(Beam, WidthOneMatchesGreedy) {
  SeededRng rng(21);
  for (auto v : {Variant::Reduced, Variant::Stateless1Emb, Variant::Concat2Emb, Variant::Lstm})
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto cfg = small_cfg(v, 3, 3);
      const auto w = sharp_model(cfg, seed, 3.0);
      const auto frames = random_frames(5, 2, rng, 2.0);
      const auto g = greedy_decode(frames, w, cfg);
      const auto b = beam_decode(frames, w, cfg, 1);
      ASSERT_EQ(b.size(), 1u);
      EXPECT_EQ(b[0].labels, g.labels);
      EXPECT_NEAR(b[0].log_prob, g.log_prob, 1e-9);
    }
}

TEST(Beam, TopHypothesisMatchesExhaustiveEnumeration) {
  SeededRng rng(5);
  for (auto v : {Variant::Reduced, Variant::Stateless1Emb, Variant::Concat2Emb, Variant::Lstm})
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto cfg = small_cfg(v, 2, 2);
      const auto w = sharp_model(cfg, 100 + seed, 2.0);
      const auto frames = random_frames(1 + seed % 3, 2, rng, 1.5);
      const auto mass = oracle::enumerate_decodes(frames, w, cfg);
      auto best = mass.begin();
      double total = 0.0;
      for (auto it = mass.begin(); it != mass.end(); ++it) {
        total += it->second;
        if (it->second > best->second) best = it;
      }
      EXPECT_LE(total, 1.0 + 1e-9);
      const auto nbest = beam_decode(frames, w, cfg, 64);
      EXPECT_EQ(nbest[0].labels, best->first) << to_string(v) << " seed " << seed;
      EXPECT_NEAR(std::exp(nbest[0].log_prob), best->second, 1e-9);
    }
}

// Pruning can make a wider beam lose a path a narrower one kept, so widths
// are only compared against a beam wide enough never to prune.
TEST(Beam, UnprunedWidthDominatesNarrowerWidths) {
  SeededRng rng(9);
  for (auto v : {Variant::Reduced, Variant::Lstm})
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto cfg = small_cfg(v, 2, 2);
      const auto w = init_weights(cfg, seed);
      const auto frames = random_frames(3, 2, rng);
      const double exact = beam_decode(frames, w, cfg, 4096)[0].log_prob;
      for (std::size_t b = 1; b <= 8; ++b) EXPECT_GE(exact, beam_decode(frames, w, cfg, b)[0].log_prob - 1e-12);
    }
}

TEST(Lookup, EntryCountForToyVocabulary) {
  auto cfg = small_cfg(Variant::Reduced, 5);
  EXPECT_EQ(lookup_entries(cfg), 36u);
  const auto table = convert_to_lookup(init_weights(cfg, 2), cfg);
  EXPECT_EQ(table.entries(), 36u);
}

TEST(Lookup, EveryEntryBitEqualsDirectComputation) {
  for (auto v : {Variant::Reduced, Variant::Stateless1Emb, Variant::Concat2Emb}) {
    const auto cfg = small_cfg(v, 3);
    const auto w = init_weights(cfg, 4);
    const auto table = convert_to_lookup(w, cfg);
    std::size_t checked = 0;
    std::vector<std::size_t> ctx(cfg.history);
    std::function<void(std::size_t)> visit = [&](std::size_t k) {
      if (k == cfg.history) {
        const auto direct = prediction_forward(state_from_context<double>(ctx, cfg), w, cfg);
        const auto stored = table.lookup(std::span<const std::size_t>(ctx));
        EXPECT_TRUE(std::equal(direct.begin(), direct.end(), stored.begin(), stored.end()));
        ++checked;
        return;
      }
      for (std::size_t id = 0; id < cfg.embedding_rows(); ++id) {
        ctx[k] = id;
        visit(k + 1);
      }
    };
    visit(0);
    EXPECT_EQ(checked, table.entries());
  }
}

TEST(Lookup, MatchesDecoderStateDuringDecoding) {
  const auto cfg = small_cfg(Variant::Reduced, 3);
  const auto w = init_weights(cfg, 8);
  const auto table = convert_to_lookup(w, cfg);
  auto state = initial_state(w, cfg);
  for (std::size_t label : {2, 0, 1, 1}) {
    advance(state, label, w, cfg);
    const auto direct = prediction_forward(state, w, cfg);
    const auto stored = table.lookup(state);
    EXPECT_TRUE(std::equal(direct.begin(), direct.end(), stored.begin(), stored.end()));
  }
}

TEST(Lookup, LargeVocabularyExceedsBudget) {
  auto cfg = small_cfg(Variant::Concat2Emb, 4096);
  EXPECT_THROW(convert_to_lookup(zero_weights<double>(cfg), cfg, 1'000'000), CapacityError);
}

TEST(Lookup, LstmHasNoFiniteContext) {
  const auto cfg = small_cfg(Variant::Lstm);
  EXPECT_THROW(convert_to_lookup(init_weights(cfg, 1), cfg), ConfigError);
}

TEST(Timer, NoOpIsNearZero) {
  const auto s = step_timer([] {}, 1000);
  EXPECT_EQ(s.runs, 1000u);
  EXPECT_EQ(s.warmup, 100u);
  EXPECT_LT(s.mean_ms, 0.05);
}

TEST(Timer, ReportsPopulationStd) {
  const auto s = summarize_times({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean_ms, 2.5);
  EXPECT_DOUBLE_EQ(s.std_ms, std::sqrt(1.25));
}

TEST(Timer, ZeroRunsRejected) { EXPECT_THROW(step_timer([] {}, 0, 0), DomainError); }
