#pragma once

// Circuits are evaluated by knocking their edges out: a circuit's edges take
// the donor value of the direction and every other edge keeps the base
// value. The full circuit therefore reproduces the donor-side run (noising:
// the corrupt run) and the empty circuit the unpatched base run, and
// faithfulness (m - b') / (b - b') is measured with b = full-circuit value,
// b' = empty-circuit value.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "memcirc/attribution.hpp"
#include "memcirc/errors.hpp"
#include "memcirc/patch.hpp"

namespace memcirc {

struct FaithfulnessReport {
  Metric metric = Metric::logit_diff;
  Direction direction = Direction::noising;
  Ablation ablation = Ablation::paired;
  double circuit_value = 0.0;  // m
  double b_full = 0.0;         // b: every edge knocked out
  double b_empty = 0.0;        // b': nothing knocked out
  double clean_value = 0.0;    // unpatched clean run
  double corrupt_value = 0.0;  // unpatched corrupt run
  std::optional<double> normalized;  // empty when b == b'
  bool degenerate = false;
  std::vector<double> per_sample;
};

void to_json(nlohmann::json& j, const FaithfulnessReport& r);

// (m - b') / (b - b'); nullopt when b == b'.
std::optional<double> normalized_faithfulness(double m, double b, double b_prime);

// Caches both sides of every pair so that many circuits can be scored.
class CircuitEvaluator {
 public:
  CircuitEvaluator(const Model& model, std::span<const ContrastivePair> pairs);

  const Model& model() const { return model_; }
  std::size_t size() const { return acts_.size(); }
  std::span<const EvalTokens> tokens() const { return tokens_; }
  std::span<const ContrastivePair> pairs() const { return pairs_; }

  // Final logits per pair for an explicit mask.
  std::vector<std::vector<double>> run(const EdgeMask& mask, const AblationValues& values = {}) const;
  std::vector<std::vector<double>> clean_logits() const;
  std::vector<std::vector<double>> corrupt_logits() const;

  EdgeMask knockout_mask(std::span<const std::uint32_t> edges, Direction direction,
                         Ablation ablation = Ablation::paired) const;

  FaithfulnessReport faithfulness(std::span<const std::uint32_t> edges, Metric metric,
                                  Direction direction, Ablation ablation = Ablation::paired,
                                  const AblationValues& values = {}) const;

 private:
  const Model& model_;
  std::vector<ContrastivePair> pairs_;
  std::vector<PairActivations> acts_;
  std::vector<EvalTokens> tokens_;
};

struct SearchProbe {
  std::size_t k = 0;
  double faithfulness = 0.0;
  std::string phase;  // probe | binary | refine
};

struct CircuitConfig {
  LossKind loss = LossKind::logit_diff;
  Direction direction = Direction::noising;
  Metric metric = Metric::logit_diff;
  Task task = Task::decision;
  double target = 0.85;
  std::size_t refine_window = 8;
  std::string model_digest;
};

void to_json(nlohmann::json& j, const CircuitConfig& c);
void from_json(const nlohmann::json& j, CircuitConfig& c);

struct Circuit {
  std::vector<std::uint32_t> edges;  // canonical order
  std::vector<double> scores;        // attribution score per listed edge
  CircuitConfig config;
  double faithfulness = 0.0;
  double edge_fraction = 0.0;
  std::vector<SearchProbe> transcript;

  void save(const std::filesystem::path& path) const;
  static Circuit load(const std::filesystem::path& path);
};

// Circuit from the top-k ranked edges.
Circuit top_k_circuit(const EdgeScores& scores, std::size_t k);

class CircuitSearchFailure : public SearchFailure {
 public:
  CircuitSearchFailure(const std::string& what, std::vector<SearchProbe> transcript);
  const std::vector<SearchProbe>& transcript() const { return transcript_; }

 private:
  std::vector<SearchProbe> transcript_;
};

Circuit find_minimal_circuit(const CircuitEvaluator& evaluator, const EdgeScores& scores,
                             const CircuitConfig& config);

std::vector<Circuit> random_circuits(std::size_t n_edges, std::size_t k, int trials,
                                     std::uint64_t seed);

std::string circuit_to_dot(const EdgeGraph& graph, const Circuit& circuit);

}  // namespace memcirc
