#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "memcirc/errors.hpp"
#include "memcirc/metrics.hpp"

using namespace memcirc;

TEST(Metrics, LossKinds) {
  const std::vector<double> logits{0.5, 2.0, -1.0, 3.0};
  EXPECT_DOUBLE_EQ(loss_value(logits, {1, 3}, LossKind::logit_mem), 2.0);
  EXPECT_DOUBLE_EQ(loss_value(logits, {1, 3}, LossKind::logit_diff), -1.0);
  EXPECT_DOUBLE_EQ(loss_value(logits, {1, 3}, LossKind::neg_logit_mem), -2.0);
  EXPECT_DOUBLE_EQ(loss_value(logits, {2, 2}, LossKind::logit_diff), 0.0);
  const std::vector<double> uniform(7, 1.25);
  EXPECT_DOUBLE_EQ(loss_value(uniform, {0, 6}, LossKind::logit_diff), 0.0);
  EXPECT_THROW(loss_value(logits, {4, 0}, LossKind::logit_mem), ContractViolation);
  EXPECT_THROW(loss_value(logits, {0, -1}, LossKind::logit_diff), ContractViolation);
}

TEST(Metrics, Accuracy) {
  const std::vector<std::vector<double>> logits{{0.0, 5.0, 1.0}, {3.0, 0.0, 1.0}};
  const std::vector<EvalTokens> all_mem{{1, 0}, {0, 2}};
  EXPECT_DOUBLE_EQ(metric_value(logits, all_mem, Metric::accuracy_mem), 100.0);
  EXPECT_DOUBLE_EQ(metric_value(logits, all_mem, Metric::accuracy_pred), 0.0);
  const std::vector<EvalTokens> half{{1, 0}, {2, 0}};
  EXPECT_DOUBLE_EQ(metric_value(logits, half, Metric::accuracy_mem), 50.0);
  EXPECT_DOUBLE_EQ(metric_value(logits, half, Metric::accuracy_pred), 50.0);
}

TEST(Metrics, LogitMeans) {
  const std::vector<std::vector<double>> logits{{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}};
  const std::vector<EvalTokens> t{{0, 2}, {1, 2}};
  EXPECT_DOUBLE_EQ(metric_value(logits, t, Metric::logit_mem), 3.0);
  EXPECT_DOUBLE_EQ(metric_value(logits, t, Metric::logit_pred), 4.5);
  EXPECT_DOUBLE_EQ(metric_value(logits, t, Metric::logit_diff), -1.5);
}

TEST(Metrics, LogprobMatchesDirectRecomputation) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(37);
    for (double& v : logits) v = normal(rng) + (trial == 7 ? 800.0 : 0.0);
    int best = 0;
    for (int i = 1; i < 37; ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    long double z = 0.0L;
    for (double v : logits) z += std::exp(static_cast<long double>(v - logits[best]));
    const double expected = -static_cast<double>(std::log(z));
    const std::vector<std::vector<double>> one{logits};
    const std::vector<EvalTokens> t{{0, best}};
    const double got = metric_value(one, t, Metric::logprob_pred);
    EXPECT_NEAR(got, expected, 1e-12);
    EXPECT_GE(got, -std::log(37.0) - 1e-12);
  }
}

TEST(Metrics, NamesRoundTrip) {
  for (Metric m : {Metric::logit_mem, Metric::logit_diff, Metric::logit_pred, Metric::logprob_pred,
                   Metric::accuracy_mem, Metric::accuracy_pred}) {
    EXPECT_EQ(parse_metric(metric_name(m)), m);
  }
  for (LossKind k : {LossKind::logit_mem, LossKind::logit_diff, LossKind::neg_logit_mem}) {
    EXPECT_EQ(parse_loss(loss_name(k)), k);
  }
  EXPECT_EQ(parse_direction("denoising"), Direction::denoising);
  EXPECT_THROW(parse_metric("accuracy_gt"), ContractViolation);
}

TEST(LossValue, SpotValueOnShippedToyCheckpoint) {
  const std::string dir = std::string(MEMCIRC_TEST_DATA_DIR) + "/toy";
  const Model model = Model::load(dir + "/model.bin");
  const auto pairs = load_pairs_jsonl(dir + "/dataset_decision.jsonl");
  ASSERT_FALSE(pairs.empty());
  const ContrastivePair& p = pairs.front();
  const Tensor logits = forward_logits(model, p.clean);
  const std::size_t last = logits.rows() - 1;
  const double mem = logits.at(last, static_cast<std::size_t>(p.t_mem));
  const double pred = logits.at(last, static_cast<std::size_t>(p.t_pred));
  const EvalTokens tok = resolve_eval_tokens(model, p);
  EXPECT_EQ(tok.mem, p.t_mem);
  const auto row = last_row(logits);
  EXPECT_DOUBLE_EQ(loss_value(row, tok, LossKind::logit_mem), mem);
  EXPECT_DOUBLE_EQ(loss_value(row, tok, LossKind::logit_diff), mem - pred);
  EXPECT_DOUBLE_EQ(loss_value(row, tok, LossKind::neg_logit_mem), -mem);
  // The clean side is the divergence context, where the model leaves the
  // memorized path.
  EXPECT_EQ(argmax(row), p.t_pred);
}
