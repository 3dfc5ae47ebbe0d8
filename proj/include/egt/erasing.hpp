#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "egt/common.hpp"
#include "egt/expression.hpp"
#include "egt/model.hpp"
#include "egt/rng.hpp"
#include "egt/visual.hpp"

namespace egt {

// Online hard-sample generation: erase the most-attended word, the
// most-attended k x k window of the subject map, or an attended context
// object. Word and context choices are sampled from their attention
// distributions; the subject window is the deterministic attention argmax.

enum class EraseMode : std::uint8_t { Attention, Random, None };
enum class EraseSide : std::uint8_t { Both, Textual, Visual };
enum class EraseKind : std::uint8_t { Textual, Visual };

struct QueryWordErase {
  std::size_t t = 0;  // token index to replace with <unk>
};

struct SubjectRegionErase {
  std::size_t row = 0, col = 0;  // top-left of the masked window
  std::size_t k = 3;
};

struct ContextObjectErase {
  std::size_t module = kModuleLoc;  // loc or rel
  std::size_t slot = 0;
};

using ErasureAction = std::variant<QueryWordErase, SubjectRegionErase, ContextObjectErase>;

// Top-left of the k x k window with the largest summed attention over the
// 7x7 map; ties break to the lexicographically smallest (row, col).
inline std::pair<std::size_t, std::size_t> window_argmax(
    std::span<const double> attention, std::size_t k) {
  check_arg(attention.size() == kMapCells, "window_argmax: expected 49 weights");
  check_arg(k >= 1 && k <= kMapSide, "window_argmax: k must be in [1,7]");
  // Inclusive 2D prefix sums with a zero border.
  std::array<double, (kMapSide + 1) * (kMapSide + 1)> prefix{};
  constexpr std::size_t stride = kMapSide + 1;
  for (std::size_t r = 0; r < kMapSide; ++r) {
    for (std::size_t c = 0; c < kMapSide; ++c) {
      prefix[(r + 1) * stride + (c + 1)] = attention[r * kMapSide + c] +
                                           prefix[r * stride + (c + 1)] +
                                           prefix[(r + 1) * stride + c] -
                                           prefix[r * stride + c];
    }
  }
  std::pair<std::size_t, std::size_t> best{0, 0};
  double best_sum = -1.0;
  for (std::size_t r = 0; r + k <= kMapSide; ++r) {
    for (std::size_t c = 0; c + k <= kMapSide; ++c) {
      const double sum = prefix[(r + k) * stride + (c + k)] -
                         prefix[r * stride + (c + k)] -
                         prefix[(r + k) * stride + c] + prefix[r * stride + c];
      if (sum > best_sum) {
        best_sum = sum;
        best = {r, c};
      }
    }
  }
  return best;
}

// Replace token t with <unk>; length and all other tokens are untouched.
inline std::vector<std::uint32_t> erase_query(std::span<const std::uint32_t> tokens,
                                              std::size_t t) {
  check_arg(t < tokens.size(), "erase_query: index ", t, " out of range for T=",
            tokens.size());
  std::vector<std::uint32_t> out(tokens.begin(), tokens.end());
  out[t] = kUnkToken;
  return out;
}

// Zero all channels inside the k x k window rooted at (row, col).
inline void erase_subject_region(Tensor& map, std::size_t row, std::size_t col,
                                 std::size_t k) {
  check_arg(map.rank() == 2 && map.shape[0] == kMapCells,
            "erase_subject_region: expected [49,D] map");
  check_arg(row + k <= kMapSide && col + k <= kMapSide,
            "erase_subject_region: window exceeds the map");
  const std::size_t dim = map.shape[1];
  for (std::size_t r = row; r < row + k; ++r) {
    for (std::size_t c = col; c < col + k; ++c) {
      double* cell = map.data.data() + (r * kMapSide + c) * dim;
      for (std::size_t d = 0; d < dim; ++d) cell[d] = 0.0;
    }
  }
}

// Zero one context slot's feature vector; the slot stays so K is unchanged.
inline void erase_context_object(RegionBundle& bundle, std::size_t module,
                                 std::size_t slot) {
  if (module == kModuleLoc) {
    check_arg(slot < bundle.loc_contexts.size(),
              "erase_context_object: bad location slot ", slot);
    bundle.loc_contexts[slot].fill(0.0);
  } else if (module == kModuleRel) {
    check_arg(slot < bundle.rel_contexts.size(),
              "erase_context_object: bad relationship slot ", slot);
    std::fill(bundle.rel_contexts[slot].begin(), bundle.rel_contexts[slot].end(), 0.0);
  } else {
    fail_invalid("erase_context_object: module must be loc or rel");
  }
}

// Draws the erasure target. Textual erasing samples a word from the overall
// word significance; visual erasing first samples a module from the
// module-level weights, then either takes the deterministic window argmax
// (subject) or samples a context slot (location/relationship). Random mode
// replaces every distribution with a uniform one, changing nothing else.
inline ErasureAction sample_erase_action(const AttentionRecord& attn, Rng& rng,
                                         EraseKind kind, std::size_t k,
                                         EraseMode mode = EraseMode::Attention) {
  check_arg(mode != EraseMode::None, "sample_erase_action: mode none never samples");
  const bool uniform = mode == EraseMode::Random;

  if (kind == EraseKind::Textual) {
    const std::size_t T = attn.overall_word.size();
    check_arg(T >= 1, "sample_erase_action: empty word attention");
    const std::size_t t =
        uniform ? rng.index(T) : rng.multinomial(attn.overall_word);
    return QueryWordErase{t};
  }

  check_arg(attn.module_weights.size() == kNumModules,
            "sample_erase_action: bad module weights");
  std::size_t module = uniform ? rng.index(kNumModules)
                               : rng.multinomial(attn.module_weights);
  // A module with no context slots cannot be erased; the subject module is
  // always available.
  if (module == kModuleLoc && attn.ctx_loc.empty()) module = kModuleSubj;
  if (module == kModuleRel && attn.ctx_rel.empty()) module = kModuleSubj;

  if (module == kModuleSubj) {
    check_arg(attn.spatial.size() == kMapCells,
              "sample_erase_action: bad spatial attention");
    if (uniform) {
      const std::size_t side = kMapSide - k + 1;
      return SubjectRegionErase{rng.index(side), rng.index(side), k};
    }
    const auto [row, col] = window_argmax(attn.spatial, k);
    return SubjectRegionErase{row, col, k};
  }
  const auto& weights = module == kModuleLoc ? attn.ctx_loc : attn.ctx_rel;
  const std::size_t slot = uniform ? rng.index(weights.size())
                                   : rng.multinomial(weights);
  return ContextObjectErase{module, slot};
}

// An erased training sample: exactly one side replaced, the other original.
struct ErasedSample {
  ErasureAction action;
  std::optional<std::vector<std::uint32_t>> tokens;  // set for textual erasing
  std::optional<RegionBundle> bundle;                // set for visual erasing

  bool textual() const { return tokens.has_value(); }
};

inline ErasedSample apply_erase(const ErasureAction& action,
                                std::span<const std::uint32_t> tokens,
                                const RegionBundle& bundle) {
  ErasedSample out;
  out.action = action;
  if (const auto* word = std::get_if<QueryWordErase>(&action)) {
    out.tokens = erase_query(tokens, word->t);
    return out;
  }
  RegionBundle erased = bundle;
  if (const auto* region = std::get_if<SubjectRegionErase>(&action)) {
    erase_subject_region(erased.subject_map, region->row, region->col, region->k);
  } else {
    const auto& ctx = std::get<ContextObjectErase>(action);
    erase_context_object(erased, ctx.module, ctx.slot);
  }
  out.bundle = std::move(erased);
  return out;
}

}  // namespace egt
