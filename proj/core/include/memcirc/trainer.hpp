#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "memcirc/corpus.hpp"
#include "memcirc/errors.hpp"
#include "memcirc/model.hpp"

namespace memcirc {

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 3e-3;
  double rms_decay = 0.99;  // second-moment decay
  double momentum = 0.0;    // first-moment decay; 0 gives a momentum-free step
  double eps = 1e-8;
  double clip_norm = 1.0;   // global gradient-norm clip, 0 disables
  // Epochs between memorization sweeps. A sweep also runs whenever the
  // teacher-forced check done during the epoch's own batches (before each
  // update) already counts 3/10 of the target.
  int check_every = 1;
  std::uint64_t seed = 0;   // shuffling order
  std::string target_domain;  // count only this domain toward the target; empty = all
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct DomainBreakdown {
  int samples = 0;
  int memorized = 0;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  int batch_memorized = 0;  // target samples passing the in-batch check before their update
  int memorized = -1;       // target_count from a full sweep, -1 when none ran
};

struct TrainReport {
  int epochs = 0;
  double final_loss = 0.0;
  int memorized = 0;  // whole corpus
  int target_count = 0;  // memorized samples that count toward the target
  std::vector<std::string> memorized_ids;
  std::map<std::string, DomainBreakdown> per_domain;
  std::vector<EpochLog> history;
};

void to_json(nlohmann::json& j, const TrainReport& r);

// Raised when max_epochs passes without reaching the target.
class TrainingShortfall : public SearchFailure {
 public:
  explicit TrainingShortfall(TrainReport report);
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

// Teacher-forced check: true for every sample whose 50 continuation tokens
// are each the argmax given the true prefix (equivalent to a memorization
// score of exactly 1.0 under greedy decoding).
std::vector<bool> memorized_mask(const Model& model, std::span<const Sample> samples,
                                 int batch_size = 16);

using EpochCallback = std::function<void(int epoch, double loss, int counted)>;

TrainReport train_to_memorize(Model& model, std::span<const Sample> corpus, int target_memorized,
                              int max_epochs, const TrainConfig& config = {},
                              const EpochCallback& on_epoch = {});

}  // namespace memcirc
