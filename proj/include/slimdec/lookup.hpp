#pragma once

// Precomputed prediction outputs for every length-N context of a
// limited-context decoder.

#include <cstddef>
#include <limits>
#include <vector>

#include "slimdec/config.hpp"
#include "slimdec/math.hpp"
#include "slimdec/prediction.hpp"
#include "slimdec/weights.hpp"

namespace slimdec {

inline constexpr std::size_t kDefaultLookupBudget = 1'000'000;

template <typename Real>
struct BasicLookupTable {
  std::size_t arity = 0;        // N
  std::size_t alphabet = 0;     // |V| + 1, pad included
  BasicMatrix<Real> table;      // alphabet^N rows of g_u

  std::size_t entries() const noexcept { return table.rows(); }

  // Base-|V_ext| index of a context given most recent first.
  std::size_t index_of(std::span<const std::size_t> context) const {
    if (context.size() != arity) throw ShapeError("lookup: context length differs from arity");
    std::size_t idx = 0;
    for (std::size_t id : context) {
      if (id >= alphabet) throw DomainError("lookup: label id " + std::to_string(id) + " out of range");
      idx = idx * alphabet + id;
    }
    return idx;
  }

  std::span<const Real> lookup(std::span<const std::size_t> context) const { return table.row(index_of(context)); }

  std::span<const Real> lookup(const BasicPredictionState<Real> &state) const {
    return lookup(std::span<const std::size_t>(state.context()));
  }
};

using LookupTable = BasicLookupTable<double>;

// Number of contexts; saturates at max() on overflow.
inline std::size_t lookup_entries(const DecoderConfig &cfg) {
  std::size_t n = 1;
  for (std::size_t k = 0; k < cfg.history; ++k) {
    if (n > std::numeric_limits<std::size_t>::max() / cfg.embedding_rows()) return std::numeric_limits<std::size_t>::max();
    n *= cfg.embedding_rows();
  }
  return n;
}

template <typename Real>
BasicLookupTable<Real> convert_to_lookup(const BasicModelWeights<Real> &w, const DecoderConfig &cfg,
                                         std::size_t budget = kDefaultLookupBudget) {
  cfg.validate();
  if (!cfg.has_finite_context()) throw ConfigError("LSTM decoder has no finite context to tabulate");
  const std::size_t entries = lookup_entries(cfg);
  if (entries > budget)
    throw CapacityError("lookup table needs " + std::to_string(entries) + " entries, budget is " +
                        std::to_string(budget));
  BasicLookupTable<Real> out;
  out.arity = cfg.history;
  out.alphabet = cfg.embedding_rows();
  out.table = BasicMatrix<Real>(entries, cfg.prediction_dim());
  std::vector<std::size_t> context(cfg.history, 0);
  for (std::size_t idx = 0; idx < entries; ++idx) {
    std::size_t rem = idx;
    for (std::size_t k = cfg.history; k-- > 0;) {
      context[k] = rem % out.alphabet;
      rem /= out.alphabet;
    }
    const auto state = state_from_context<Real>(context, cfg);
    const auto g = prediction_forward(state, w, cfg);
    std::copy(g.begin(), g.end(), out.table.row(idx).begin());
  }
  return out;
}

}  // namespace slimdec
