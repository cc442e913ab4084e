#include "memcirc/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "memcirc/errors.hpp"

namespace memcirc {

std::string_view direction_name(Direction d) {
  return d == Direction::noising ? "noising" : "denoising";
}

Direction parse_direction(std::string_view name) {
  if (name == "noising") return Direction::noising;
  if (name == "denoising") return Direction::denoising;
  throw ContractViolation("unknown direction '" + std::string(name) + "'");
}

std::string_view loss_name(LossKind k) {
  switch (k) {
    case LossKind::logit_mem: return "logit_mem";
    case LossKind::logit_diff: return "logit_diff";
    case LossKind::neg_logit_mem: return "neg_logit_mem";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  for (LossKind k : {LossKind::logit_mem, LossKind::logit_diff, LossKind::neg_logit_mem}) {
    if (loss_name(k) == name) return k;
  }
  throw ContractViolation("unknown loss '" + std::string(name) + "'");
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::logit_mem: return "logit_mem";
    case Metric::logit_diff: return "logit_diff";
    case Metric::logit_pred: return "logit_pred";
    case Metric::logprob_pred: return "logprob_pred";
    case Metric::accuracy_mem: return "accuracy_mem";
    case Metric::accuracy_pred: return "accuracy_pred";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : {Metric::logit_mem, Metric::logit_diff, Metric::logit_pred,
                   Metric::logprob_pred, Metric::accuracy_mem, Metric::accuracy_pred}) {
    if (metric_name(m) == name) return m;
  }
  throw ContractViolation("unknown metric '" + std::string(name) + "'");
}

std::vector<double> last_row(const Tensor& logits) {
  require(logits.rank() == 2 && logits.rows() > 0, "logits must be [seq, vocab]");
  auto row = logits.row(logits.rows() - 1);
  return {row.begin(), row.end()};
}

EvalTokens resolve_eval_tokens(const Model& model, const ContrastivePair& pair) {
  if (pair.task == Task::decision) return {pair.t_mem, pair.t_pred};
  require(pair.target.has_value(), "branch pair without a target token");
  const std::vector<double> corrupt = last_row(forward_logits(model, pair.corrupt));
  return {*pair.target, argmax(corrupt)};
}

std::vector<EvalTokens> resolve_eval_tokens(const Model& model,
                                            std::span<const ContrastivePair> pairs) {
  std::vector<EvalTokens> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(resolve_eval_tokens(model, p));
  return out;
}

namespace {

void check_tokens(std::span<const double> logits, EvalTokens t) {
  const auto V = static_cast<int>(logits.size());
  require(t.mem >= 0 && t.mem < V && t.pred >= 0 && t.pred < V,
          "evaluation token id out of vocabulary range");
}

double log_softmax_at(std::span<const double> logits, int index) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return logits[static_cast<std::size_t>(index)] - mx - std::log(z);
}

}  // namespace

double loss_value(std::span<const double> final_logits, EvalTokens tokens, LossKind kind) {
  check_tokens(final_logits, tokens);
  const double mem = final_logits[static_cast<std::size_t>(tokens.mem)];
  switch (kind) {
    case LossKind::logit_mem: return mem;
    case LossKind::logit_diff: return mem - final_logits[static_cast<std::size_t>(tokens.pred)];
    case LossKind::neg_logit_mem: return -mem;
  }
  return 0.0;
}

double metric_sample(std::span<const double> final_logits, EvalTokens tokens, Metric metric) {
  check_tokens(final_logits, tokens);
  const auto mem = static_cast<std::size_t>(tokens.mem);
  const auto pred = static_cast<std::size_t>(tokens.pred);
  switch (metric) {
    case Metric::logit_mem: return final_logits[mem];
    case Metric::logit_diff: return final_logits[mem] - final_logits[pred];
    case Metric::logit_pred: return final_logits[pred];
    case Metric::logprob_pred: return log_softmax_at(final_logits, tokens.pred);
    case Metric::accuracy_mem: return argmax(final_logits) == tokens.mem ? 100.0 : 0.0;
    case Metric::accuracy_pred: return argmax(final_logits) == tokens.pred ? 100.0 : 0.0;
  }
  return 0.0;
}

double metric_value(std::span<const std::vector<double>> final_logits,
                    std::span<const EvalTokens> tokens, Metric metric) {
  require(final_logits.size() == tokens.size(), "metric_value: logits/tokens count mismatch");
  require(!tokens.empty(), "metric_value: no samples");
  double sum = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) sum += metric_sample(final_logits[i], tokens[i], metric);
  return sum / static_cast<double>(tokens.size());
}

}  // namespace memcirc
