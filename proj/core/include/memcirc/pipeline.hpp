#pragma once

// File-based pipeline stages. Every stage reads its inputs from and writes
// its outputs to one working directory, so stages can run as separate
// processes; identical config and seed give byte-identical files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "memcirc/harness.hpp"
#include "memcirc/trainer.hpp"

namespace memcirc {

struct PipelineConfig {
  std::uint64_t seed = 1;
  Domain domain = Domain::wiki;
  int samples = 1000;
  // Samples of each other domain trained alongside, so that cross-corpus
  // evaluation has memorized foreign samples.
  int foreign_samples = 60;
  CorpusOptions corpus;
  ModelConfig model;  // vocab_size is filled from the standard vocabulary
  TrainConfig train;
  int target_memorized = 200;
  int max_epochs = 80;
  DivergenceOptions divergence;
  DecisionOptions decision;
  std::size_t max_pairs = 0;  // per dataset, 0 keeps all
  int ig_steps = 5;
  double circuit_target = 0.85;
  std::size_t refine_window = 8;
  int random_trials = 20;

  PipelineConfig();
  // Sets the run seed and every seed derived from it.
  void set_seed(std::uint64_t s);
  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Seed for a named sub-stream of the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

class Workspace {
 public:
  explicit Workspace(std::filesystem::path dir);
  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path corpus() const { return dir_ / "corpus.jsonl"; }
  std::filesystem::path model() const { return dir_ / "model.bin"; }
  std::filesystem::path train_report() const { return dir_ / "train_report.json"; }
  std::filesystem::path scores() const { return dir_ / "scores.jsonl"; }
  std::filesystem::path pm_contexts() const { return dir_ / "pm_contexts.jsonl"; }
  std::filesystem::path score_summary() const { return dir_ / "score_summary.json"; }
  std::filesystem::path dataset(Task task, std::optional<Domain> domain = {}) const;
  std::filesystem::path dataset_stats(Task task, std::optional<Domain> domain = {}) const;
  std::filesystem::path edge_scores(Task task, Direction direction) const;
  std::filesystem::path circuit(Task task, Direction direction) const;
  std::filesystem::path report(const std::string& stem) const;  // without extension

 private:
  std::filesystem::path dir_;
};

void write_report(const Workspace& ws, const std::string& stem, const Report& report);

TrainReport stage_train(const PipelineConfig& config, const Workspace& ws);

struct ScoreSummary {
  std::map<std::string, int> samples;
  std::map<std::string, int> memorized;
  std::map<std::string, int> pm_contexts;
};
void to_json(nlohmann::json& j, const ScoreSummary& s);

ScoreSummary stage_score(const PipelineConfig& config, const Workspace& ws);

// Builds the task dataset for `domain` (the run's domain by default).
BuildResult stage_build_dataset(const PipelineConfig& config, const Workspace& ws, Task task,
                                std::optional<Domain> domain = {});

EdgeScores stage_attribute(const PipelineConfig& config, const Workspace& ws, Task task,
                           LossKind loss, Direction direction, int ig_steps);

Circuit stage_find_circuit(const PipelineConfig& config, const Workspace& ws, Task task,
                           Direction direction, Metric metric, double target);

EvalResult stage_eval(const Workspace& ws, const std::filesystem::path& circuit_file, Task task,
                      Direction direction);

RandomBaseline stage_random_baseline(const PipelineConfig& config, const Workspace& ws,
                                     const std::filesystem::path& circuit_file);

EvalResult stage_cross_task(const Workspace& ws, std::span<const std::filesystem::path> circuit_files,
                            Task dataset_task);

CrossCorpusResult stage_cross_corpus(const PipelineConfig& config, const Workspace& ws,
                                     const std::filesystem::path& circuit_file);

AblationResult stage_ablate(const Workspace& ws, const std::filesystem::path& circuit_file,
                            std::span<const Ablation> methods);

std::string stage_export_dot(const Workspace& ws, const std::filesystem::path& circuit_file);

// Every stage in order, with the default losses and metrics per task.
void run_all(const PipelineConfig& config, const Workspace& ws);

}  // namespace memcirc
