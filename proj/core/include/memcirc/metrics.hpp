#pragma once

// Task losses and metrics evaluated at the final context position.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "memcirc/mem_dataset.hpp"
#include "memcirc/model.hpp"

namespace memcirc {

enum class Direction : std::uint8_t { noising, denoising };
std::string_view direction_name(Direction d);
Direction parse_direction(std::string_view name);

enum class LossKind : std::uint8_t { logit_mem, logit_diff, neg_logit_mem };
std::string_view loss_name(LossKind k);
LossKind parse_loss(std::string_view name);

enum class Metric : std::uint8_t {
  logit_mem,
  logit_diff,
  logit_pred,
  logprob_pred,
  accuracy_mem,
  accuracy_pred
};
std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);

// The token pair a sample is judged on. Decision pairs use (t_mem, t_pred).
// Branch pairs end one token later, so they use the corpus token after t_mem
// and the model's prediction on the corrupt side.
struct EvalTokens {
  int mem = -1;
  int pred = -1;
};

EvalTokens resolve_eval_tokens(const Model& model, const ContrastivePair& pair);
std::vector<EvalTokens> resolve_eval_tokens(const Model& model,
                                            std::span<const ContrastivePair> pairs);

double loss_value(std::span<const double> final_logits, EvalTokens tokens, LossKind kind);

// Per-sample contribution; metric_value averages these (accuracies as %).
double metric_sample(std::span<const double> final_logits, EvalTokens tokens, Metric metric);
double metric_value(std::span<const std::vector<double>> final_logits,
                    std::span<const EvalTokens> tokens, Metric metric);

// Last row of a [seq, vocab] logits tensor.
std::vector<double> last_row(const Tensor& logits);

}  // namespace memcirc
