#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "memcirc/mem_dataset.hpp"
#include "memcirc/metrics.hpp"
#include "memcirc/model.hpp"

namespace memcirc {

enum class Ranking : std::uint8_t { absolute, signed_desc };

struct AttributionConfig {
  LossKind loss = LossKind::logit_diff;
  int ig_steps = 5;
  Direction direction = Direction::noising;
  Ranking ranking = Ranking::absolute;
};

void to_json(nlohmann::json& j, const AttributionConfig& c);
void from_json(const nlohmann::json& j, AttributionConfig& c);

struct EdgeScores {
  AttributionConfig config;
  std::string dataset_digest;
  std::string model_digest;
  std::vector<double> scores;  // canonical edge order

  // Edge ids ordered by importance under config.ranking; ties by id.
  std::vector<std::uint32_t> ranked() const;

  void save(const std::filesystem::path& path) const;
  static EdgeScores load(const std::filesystem::path& path);
};

// Builds a scalar loss on `tape` from the final-position logits of `logits`.
using TapeLoss = std::function<Var(Tape& tape, Var logits, std::size_t last_row, EvalTokens tokens)>;

Var tape_loss(Tape& tape, Var logits, std::size_t last_row, EvalTokens tokens, LossKind kind);

// Edge scores (z'_u - z_u) . mean_k dL/dz_v evaluated at z' + k/m (z - z'),
// summed over positions and averaged over pairs. z is the base side of the
// direction (clean when noising), z' the donor side.
std::vector<double> eap_ig_scores(const Model& model, std::span<const ContrastivePair> pairs,
                                  std::span<const EvalTokens> tokens, const TapeLoss& loss,
                                  int ig_steps, Direction direction);

EdgeScores eap_ig(const Model& model, std::span<const ContrastivePair> pairs,
                  const AttributionConfig& config);

// Rank statistics for comparing score vectors. Ties get average ranks.
double spearman(std::span<const double> a, std::span<const double> b);
// |top-k of a ∩ top-k of b| by descending value, ties by index.
std::size_t top_k_overlap(std::span<const double> a, std::span<const double> b, std::size_t k);

}  // namespace memcirc
