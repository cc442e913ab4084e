#pragma once

// Task/metric registry and the verification tables: baseline rows, circuit
// rows per direction, cross-task, cross-corpus and alternative-ablation
// layouts, rendered as CSV and markdown.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memcirc/circuit.hpp"

namespace memcirc {

enum class Improvement : std::uint8_t { up, down };

struct TaskSpec {
  Task task = Task::decision;
  Direction direction = Direction::noising;
  LossKind loss = LossKind::logit_diff;
  Metric metric = Metric::logit_diff;
  Improvement improvement = Improvement::up;
};

// Every (task, direction, loss, metric) combination with a defined meaning.
std::span<const TaskSpec> task_registry();
// ContractViolation when the combination is not a registry cell.
const TaskSpec& find_task_spec(Task task, Direction direction, LossKind loss, Metric metric);
// The spec used when only task and direction are given.
const TaskSpec& default_task_spec(Task task, Direction direction);
// Metrics reported for datasets of a task.
std::vector<Metric> report_metrics(Task task);

// ------------------------------------------------------------ tables

struct EvalRow {
  std::string label;
  std::vector<double> values;         // aligned to the table's metrics
  std::optional<double> faithfulness;  // on the section's target metric
  std::size_t edges = 0;
};

struct EvalSection {
  Direction direction = Direction::noising;
  Metric target_metric = Metric::logit_diff;
  double target_value = 0.0;  // corrupt value when noising, clean when denoising
  std::vector<EvalRow> rows;
};

struct EvalResult {
  std::string title;
  std::vector<Metric> metrics;
  EvalRow clean;    // every edge on the clean side
  EvalRow corrupt;  // every edge on the corrupt side
  std::vector<EvalSection> sections;
  std::size_t samples = 0;
};

// Faithfulness of a row value against the table's baselines for a section.
std::optional<double> section_faithfulness(const EvalResult& table, const EvalSection& section,
                                           double value);

struct NamedCircuit {
  std::string name;
  std::vector<std::uint32_t> edges;
};

// Baselines plus one row per circuit in each listed direction. Each section
// is judged on default_task_spec(dataset task, direction).metric.
EvalResult evaluate_circuits(const CircuitEvaluator& evaluator, Task dataset_task,
                             std::span<const NamedCircuit> circuits,
                             std::span<const Direction> directions, std::string title);

// Circuits found on one task applied to another task's dataset. A circuit
// whose model digest differs from the evaluator's model is rejected.
EvalResult run_cross_task(const CircuitEvaluator& evaluator, Task dataset_task,
                          std::span<const Circuit> circuits);

// "<task> <direction> (<k> edges)"
std::string circuit_label(const Circuit& circuit);

struct DomainEval {
  Domain domain = Domain::wiki;
  std::optional<std::string> skip_reason;
  EvalResult result;  // accuracy_mem / accuracy_pred, noising and denoising
};

struct CrossCorpusResult {
  std::vector<DomainEval> domains;
};

// datasets: per-domain branch pairs; an empty vector means "skip" with the
// reason taken from `skip_reasons`.
CrossCorpusResult run_cross_corpus(const Model& model, std::span<const NamedCircuit> circuits,
                                   const std::map<Domain, std::vector<ContrastivePair>>& datasets,
                                   const std::map<Domain, std::string>& skip_reasons);

struct AblationCell {
  Ablation ablation = Ablation::paired;
  double value = 0.0;
  std::optional<double> faithfulness;
};

struct AblationRow {
  Direction direction = Direction::noising;
  Metric metric = Metric::logit_diff;
  double clean_value = 0.0;
  double corrupt_value = 0.0;
  std::vector<AblationCell> cells;  // paired, zero, mean-clean, mean-corrupt
};

struct AblationResult {
  std::string title;
  std::vector<AblationRow> rows;
};

AblationResult run_ablation_suite(const CircuitEvaluator& evaluator, Task task,
                                  std::span<const std::uint32_t> circuit,
                                  std::span<const Ablation> methods);

// ------------------------------------------------------------ rendering

struct Report {
  std::string csv;
  std::string markdown;
};

Report render(const EvalResult& table);
Report render(const CrossCorpusResult& table);
Report render(const AblationResult& table);

struct CircuitSummaryRow {
  std::string name;
  TaskSpec spec;
  std::size_t edges = 0;
  double edge_fraction = 0.0;
  double faithfulness = 0.0;
};

Report render_circuit_summary(std::span<const CircuitSummaryRow> rows, std::size_t total_edges);

struct RandomBaseline {
  std::size_t k = 0;
  int trials = 0;
  std::uint64_t seed = 0;
  Metric metric = Metric::logit_diff;
  Direction direction = Direction::noising;
  std::vector<double> faithfulness;
  double mean_abs = 0.0;
  double discovered = 0.0;
};

RandomBaseline run_random_baseline(const CircuitEvaluator& evaluator, std::size_t k, int trials,
                                   std::uint64_t seed, Metric metric, Direction direction,
                                   double discovered_faithfulness);
Report render(const RandomBaseline& baseline);

// Fixed-precision formatting shared by every report.
std::string format_number(double v, int decimals = 4);

}  // namespace memcirc
