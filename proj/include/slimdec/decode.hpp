#pragma once

// Greedy and time-synchronous beam decoding over encoder frames.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <map>
#include <vector>

#include "slimdec/config.hpp"
#include "slimdec/joint.hpp"
#include "slimdec/math.hpp"
#include "slimdec/prediction.hpp"
#include "slimdec/weights.hpp"

namespace slimdec {

// One row per time step (f_t).
template <typename Real>
using BasicEncoderFrames = BasicMatrix<Real>;
using EncoderFrames = BasicEncoderFrames<double>;

using LabelSequence = std::vector<std::size_t>;

struct GreedyResult {
  LabelSequence labels;
  double log_prob = 0.0;        // log-probability of the single greedy alignment
  std::vector<double> step_ms;  // wall time of every prediction+joint step
};

template <typename Real>
struct BasicHypothesis {
  LabelSequence labels;
  double log_prob = 0.0;
  BasicPredictionState<Real> state;
  BasicVector<Real> pred_proj;  // g_u W_pred for the current state
};

struct NBestEntry {
  LabelSequence labels;
  double log_prob = 0.0;
};

template <typename Real>
void check_frames(const BasicEncoderFrames<Real> &frames, const DecoderConfig &cfg) {
  if (frames.rows() > 0 && frames.cols() != cfg.encoder_dim)
    throw ShapeError("encoder frames have width " + std::to_string(frames.cols()) + ", expected " +
                     std::to_string(cfg.encoder_dim));
}

// At each frame: take the argmax symbol; a non-blank is emitted and fed back
// (staying on the frame), blank moves on. After max_symbols_per_frame
// emissions the frame is closed with a blank.
template <typename Real>
GreedyResult greedy_decode(const BasicEncoderFrames<Real> &frames, const BasicModelWeights<Real> &w,
                           const DecoderConfig &cfg) {
  using Clock = std::chrono::steady_clock;
  check_frames(frames, cfg);
  GreedyResult result;
  auto state = initial_state(w, cfg);
  auto pred_proj = project_prediction<Real>(prediction_forward(state, w, cfg), w);
  const std::size_t blank = cfg.blank_id();

  for (std::size_t t = 0; t < frames.rows(); ++t) {
    const auto enc_proj = project_encoder<Real>(frames.row(t), w);
    std::size_t emitted = 0;
    while (true) {
      const auto start = Clock::now();
      const auto logp = log_softmax<Real>(joint_from_projections<Real>(enc_proj, pred_proj, w));
      const std::size_t k = emitted < cfg.max_symbols_per_frame ? argmax<Real>(logp) : blank;
      result.log_prob += static_cast<double>(logp[k]);
      if (k != blank) {
        result.labels.push_back(k);
        advance(state, k, w, cfg);
        pred_proj = project_prediction<Real>(prediction_forward(state, w, cfg), w);
        ++emitted;
      }
      result.step_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
      if (k == blank) break;
    }
  }
  return result;
}

namespace detail {

struct Candidate {
  double score;
  bool finished;
  std::size_t index;  // into finished list, or frontier parent
  std::size_t token;  // continuing candidates only
  const LabelSequence *parent_labels;
};

inline LabelSequence candidate_labels(const Candidate &c) {
  LabelSequence l = *c.parent_labels;
  if (!c.finished) l.push_back(c.token);
  return l;
}

// Higher score first; ties broken by label order so results are deterministic.
inline bool candidate_before(const Candidate &a, const Candidate &b) {
  if (a.score != b.score) return a.score > b.score;
  return candidate_labels(a) < candidate_labels(b);
}

}  // namespace detail

// Time-synchronous beam search. Within a frame, each of up to
// max_symbols_per_frame expansion rounds extends the live hypotheses by one
// symbol: blank closes the frame (the hypothesis joins the finished set,
// merging by log-sum-exp with any finished hypothesis carrying the same
// labels) and a non-blank keeps it live. After every round the finished and
// live hypotheses compete for the B slots. Returns the n-best list sorted by
// descending log-probability.
template <typename Real>
std::vector<NBestEntry> beam_decode(const BasicEncoderFrames<Real> &frames, const BasicModelWeights<Real> &w,
                                    const DecoderConfig &cfg, std::size_t beam_width) {
  using Hyp = BasicHypothesis<Real>;
  if (beam_width == 0) throw ConfigError("beam width must be >= 1");
  check_frames(frames, cfg);
  const std::size_t blank = cfg.blank_id();
  const std::size_t vocab = cfg.vocab_size;

  std::vector<Hyp> beam(1);
  beam[0].state = initial_state(w, cfg);
  beam[0].pred_proj = project_prediction<Real>(prediction_forward(beam[0].state, w, cfg), w);

  for (std::size_t t = 0; t < frames.rows(); ++t) {
    const auto enc_proj = project_encoder<Real>(frames.row(t), w);
    std::vector<Hyp> finished;
    std::map<LabelSequence, std::size_t> finished_index;
    std::vector<Hyp> frontier = std::move(beam);

    for (std::size_t round = 0; round <= cfg.max_symbols_per_frame && !frontier.empty(); ++round) {
      const bool may_emit = round < cfg.max_symbols_per_frame;
      std::vector<detail::Candidate> live;
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        const Hyp &hyp = frontier[i];
        const auto logp = log_softmax<Real>(joint_from_projections<Real>(enc_proj, hyp.pred_proj, w));
        const double closed = hyp.log_prob + static_cast<double>(logp[blank]);
        auto it = finished_index.find(hyp.labels);
        if (it == finished_index.end()) {
          finished_index.emplace(hyp.labels, finished.size());
          Hyp f = hyp;
          f.log_prob = closed;
          finished.push_back(std::move(f));
        } else {
          finished[it->second].log_prob = log_sum_exp(finished[it->second].log_prob, closed);
        }
        if (may_emit)
          for (std::size_t v = 0; v < vocab; ++v)
            live.push_back({hyp.log_prob + static_cast<double>(logp[v]), false, i, v, &hyp.labels});
      }

      std::vector<detail::Candidate> pool = live;
      for (std::size_t j = 0; j < finished.size(); ++j)
        pool.push_back({finished[j].log_prob, true, j, 0, &finished[j].labels});
      const std::size_t keep = std::min(beam_width, pool.size());
      std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                        detail::candidate_before);
      pool.resize(keep);

      std::vector<Hyp> kept_finished;
      std::vector<Hyp> next_frontier;
      for (const auto &c : pool) {
        if (c.finished) {
          kept_finished.push_back(std::move(finished[c.index]));
        } else {
          const Hyp &parent = frontier[c.index];
          Hyp h;
          h.labels = parent.labels;
          h.labels.push_back(c.token);
          h.log_prob = c.score;
          h.state = parent.state;
          advance(h.state, c.token, w, cfg);
          h.pred_proj = project_prediction<Real>(prediction_forward(h.state, w, cfg), w);
          next_frontier.push_back(std::move(h));
        }
      }
      finished = std::move(kept_finished);
      finished_index.clear();
      for (std::size_t j = 0; j < finished.size(); ++j) finished_index.emplace(finished[j].labels, j);
      frontier = std::move(next_frontier);
    }
    beam = std::move(finished);
  }

  std::vector<NBestEntry> out;
  out.reserve(beam.size());
  for (auto &h : beam) out.push_back({std::move(h.labels), h.log_prob});
  std::stable_sort(out.begin(), out.end(), [](const NBestEntry &a, const NBestEntry &b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.labels < b.labels;
  });
  return out;
}

}  // namespace slimdec
