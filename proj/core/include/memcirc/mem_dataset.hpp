#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "memcirc/corpus.hpp"
#include "memcirc/model.hpp"

namespace memcirc {

// Fraction of positions where X and Y agree.
double memorization_score(std::span<const int> generated, std::span<const int> reference);

// Sentence BLEU, n = 1..4, uniform weights, brevity penalty. A zero n-gram
// match count is smoothed to 1 / (candidates + 1); no unigram match at all
// returns 0.
double bleu(std::span<const int> candidate, std::span<const int> reference);

struct MemorizationRecord {
  std::string id;
  Domain domain = Domain::wiki;
  std::vector<int> context;       // first 50 tokens
  std::vector<int> continuation;  // ground truth, last 50 tokens
  std::vector<int> generation;    // greedy output after the context
  double score = 0.0;
};

void to_json(nlohmann::json& j, const MemorizationRecord& r);
void from_json(const nlohmann::json& j, MemorizationRecord& r);

std::vector<MemorizationRecord> score_samples(const Model& model, std::span<const Sample> samples);

struct PMContext {
  std::string sample_id;
  Domain domain = Domain::wiki;
  std::vector<int> context;     // trimmed context
  std::size_t divergence = 0;   // index of the last kept context token
  int t_mem = -1;               // corpus token at divergence + 1
  int t_pred = -1;              // model argmax after the trimmed context
  std::optional<int> successor;  // corpus token at divergence + 2
  double bleu = 0.0;
};

void to_json(nlohmann::json& j, const PMContext& p);
void from_json(const nlohmann::json& j, PMContext& p);

struct DivergenceOptions {
  double threshold = 0.3;
  std::size_t min_context = 8;  // shortest trimmed context considered
};

std::optional<PMContext> find_divergence(const MemorizationRecord& record, const Model& model,
                                         const DivergenceOptions& options = {});

enum class Task : std::uint8_t { decision, branch };
std::string_view task_name(Task t);
Task parse_task(std::string_view name);

struct ContrastivePair {
  Task task = Task::decision;
  std::vector<int> clean;
  std::vector<int> corrupt;
  int t_mem = -1;
  int t_pred = -1;
  std::optional<int> target;
  std::vector<std::string> src_ids;
};

void to_json(nlohmann::json& j, const ContrastivePair& p);
void from_json(const nlohmann::json& j, ContrastivePair& p);

struct BuildStats {
  std::size_t candidates = 0;
  std::size_t emitted = 0;
  std::map<std::string, std::size_t> rejections;
  std::map<std::string, double> extra;
};

void to_json(nlohmann::json& j, const BuildStats& s);

struct DecisionOptions {
  double pool_max_score = 0.2;
};

struct BuildResult {
  std::vector<ContrastivePair> pairs;
  BuildStats stats;
};

// Throws SearchFailure (message carries the rejection counts) when nothing
// survives.
BuildResult build_decision_dataset(std::span<const PMContext> pm,
                                   std::span<const MemorizationRecord> pool, const Model& model,
                                   const DecisionOptions& options = {});
BuildResult build_branch_dataset(std::span<const PMContext> pm);

void save_pairs_jsonl(const std::filesystem::path& path, std::span<const ContrastivePair> pairs);
std::vector<ContrastivePair> load_pairs_jsonl(const std::filesystem::path& path);

// Stable digest of a dataset's content.
std::string dataset_digest(std::span<const ContrastivePair> pairs);

}  // namespace memcirc
