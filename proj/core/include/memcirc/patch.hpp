#pragma once

// Edge-level interventions. An edge with bit 1 carries the base-side source
// output; an edge with bit 0 carries the donor value instead. Noising runs
// on the clean input with corrupt (or ablation) donors; denoising runs on
// the corrupt input with clean donors.

#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "memcirc/mem_dataset.hpp"
#include "memcirc/metrics.hpp"
#include "memcirc/model.hpp"

namespace memcirc {

enum class Ablation : std::uint8_t { paired, zero, mean_clean, mean_corrupt };
std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view name);

enum class Side : std::uint8_t { clean, corrupt };

struct EdgeMask {
  std::vector<std::uint8_t> bits;
  Direction direction = Direction::noising;
  Ablation ablation = Ablation::paired;

  static EdgeMask all(std::size_t n_edges, bool value, Direction direction,
                      Ablation ablation = Ablation::paired);
  std::size_t count_ones() const;
};

// Unpatched source outputs for both sides of a pair.
struct PairActivations {
  Tensor clean_embed;
  Tensor corrupt_embed;
  SourceActivations clean;
  SourceActivations corrupt;
};

PairActivations cache_pair(const Model& model, const ContrastivePair& pair);

// Mean source outputs over one side of a uniform-length dataset.
SourceActivations mean_activations(const Model& model, std::span<const ContrastivePair> pairs,
                                   Side side);

// Means grouped by sequence length, for datasets of mixed lengths.
using MeanCache = std::map<std::size_t, SourceActivations>;
MeanCache mean_cache(const Model& model, std::span<const ContrastivePair> pairs, Side side);

struct AblationValues {
  const MeanCache* mean_clean = nullptr;
  const MeanCache* mean_corrupt = nullptr;
};

// Final-position logits of the patched run.
std::vector<double> run_patched(const Model& model, const PairActivations& acts,
                                const EdgeMask& mask, const AblationValues& ablation = {});
std::vector<double> run_patched(const Model& model, const ContrastivePair& pair,
                                const EdgeMask& mask, const AblationValues& ablation = {});

// Change in loss from swapping exactly one edge to the donor side.
double direct_edge_effect(const Model& model, const PairActivations& acts, std::uint32_t edge,
                          Direction direction, LossKind loss, EvalTokens tokens);

}  // namespace memcirc
