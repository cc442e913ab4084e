#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"
#include "memcirc/errors.hpp"
#include "memcirc/mem_dataset.hpp"
#include "toy_models.hpp"

using namespace memcirc;
using namespace memcirc::testing;

namespace {

ModelConfig long_config() {
  ModelConfig c = small_config(1, 2, 50);
  c.max_seq_len = 100;
  return c;
}

double hamming_similarity(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t distance = 0;
  for (std::size_t i = 0; i < a.size(); ++i) distance += a[i] != b[i] ? 1 : 0;
  return 1.0 - static_cast<double>(distance) / static_cast<double>(a.size());
}

}  // namespace

TEST(MemorizationScore, Examples) {
  std::vector<int> x(50);
  for (int i = 0; i < 50; ++i) x[i] = i;
  EXPECT_DOUBLE_EQ(memorization_score(x, x), 1.0);
  std::vector<int> y(50);
  for (int i = 0; i < 50; ++i) y[i] = 100 + i;
  EXPECT_DOUBLE_EQ(memorization_score(x, y), 0.0);
  EXPECT_DOUBLE_EQ(memorization_score(std::vector<int>{1, 2, 3, 4}, std::vector<int>{9, 2, 9, 4}),
                   0.5);
  EXPECT_THROW(memorization_score(std::vector<int>{1}, std::vector<int>{1, 2}), ContractViolation);
  EXPECT_THROW(memorization_score(std::vector<int>{}, std::vector<int>{}), ContractViolation);
}

TEST(MemorizationScore, EqualsOneMinusNormalizedHamming) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> tok(0, 5);
  std::uniform_int_distribution<int> len(1, 60);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = len(rng);
    std::vector<int> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = tok(rng);
      b[i] = tok(rng);
    }
    EXPECT_NEAR(memorization_score(a, b), hamming_similarity(a, b), 1e-15);
  }
}

TEST(Bleu, ShippedOracleCases) {
  std::ifstream in(std::string(MEMCIRC_TEST_DATA_DIR) + "/bleu_cases.json");
  ASSERT_TRUE(in.good());
  const auto cases = nlohmann::json::parse(in);
  ASSERT_EQ(cases.size(), 20u);
  for (const auto& c : cases) {
    const auto cand = c.at("candidate").get<std::vector<int>>();
    const auto ref = c.at("reference").get<std::vector<int>>();
    EXPECT_NEAR(bleu(cand, ref), c.at("bleu").get<double>(), 1e-9) << c.dump();
  }
}

TEST(Bleu, BoundaryCases) {
  const std::vector<int> a{1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_DOUBLE_EQ(bleu(a, a), 1.0);
  EXPECT_DOUBLE_EQ(bleu(a, std::vector<int>{9, 10, 11}), 0.0);
  EXPECT_THROW(bleu(std::vector<int>{}, a), ContractViolation);
  EXPECT_THROW(bleu(a, std::vector<int>{}), ContractViolation);
}

TEST(Bleu, MonotoneLadder) {
  std::vector<int> ref(50);
  for (int i = 0; i < 50; ++i) ref[i] = i % 17 + 3 * (i / 17);
  std::vector<int> cand = ref;
  double prev = bleu(cand, ref);
  EXPECT_DOUBLE_EQ(prev, 1.0);
  // Each rung replaces five more tokens with tokens absent from ref; after ten
  // rungs nothing matches.
  for (int rung = 0; rung < 10; ++rung) {
    for (int j = 0; j < 5; ++j) cand[static_cast<std::size_t>(rung + 10 * j)] = 1000 + rung * 5 + j;
    const double cur = bleu(cand, ref);
    EXPECT_LE(cur, prev + 1e-15) << "rung " << rung;
    prev = cur;
  }
  EXPECT_DOUBLE_EQ(prev, 0.0);
}

TEST(FindDivergence, UntrainedModelTrimsOneToken) {
  const Model model(long_config());
  MemorizationRecord r;
  r.id = "x";
  r.context = token_seq(50, 7, 3);
  r.continuation = token_seq(50, 11, 5);
  const auto logits = forward_logits(model, r.context);
  ASSERT_NE(argmax(logits.row(48)), r.context[49]);
  const auto pm = find_divergence(r, model);
  ASSERT_TRUE(pm.has_value());
  EXPECT_EQ(pm->context.size(), 49u);
  EXPECT_EQ(pm->divergence, 48u);
  EXPECT_EQ(pm->t_mem, r.context[49]);
  EXPECT_EQ(pm->t_pred, argmax(logits.row(48)));
  ASSERT_TRUE(pm->successor.has_value());
  EXPECT_EQ(*pm->successor, r.continuation[0]);
  EXPECT_LT(pm->bleu, 0.3);
}

TEST(FindDivergence, RigidMemorizerHasNoDivergence) {
  std::vector<int> next(8, 5);
  const Model model = lookup_model(next);
  MemorizationRecord r;
  r.context.assign(50, 5);
  r.continuation.assign(50, 5);
  r.score = 1.0;
  EXPECT_FALSE(find_divergence(r, model).has_value());
}

TEST(FindDivergence, PostconditionHoldsOnLookupModel) {
  // The corpus cycles 0..7; the model follows it except that 3 leads into
  // an absorbing token 12.
  std::vector<int> next{1, 2, 3, 12, 5, 6, 7, 0, 12, 12, 12, 12, 12, 12, 12, 12};
  const Model model = lookup_model(next);
  MemorizationRecord r;
  for (int i = 0; i < 50; ++i) r.context.push_back(i % 8);
  for (int i = 50; i < 100; ++i) r.continuation.push_back(i % 8);
  const auto pm = find_divergence(r, model);
  ASSERT_TRUE(pm.has_value());
  EXPECT_EQ(pm->context.size(), 44u);  // longest trim ending in 3
  EXPECT_EQ(pm->t_mem, 4);
  EXPECT_EQ(pm->t_pred, 12);
  EXPECT_DOUBLE_EQ(pm->bleu, 0.0);
  EXPECT_EQ(argmax(forward_logits(model, pm->context).row(pm->context.size() - 1)), pm->t_pred);
}

namespace {

// Lookup model over 16 tokens: next(a) = (a + 1) % 16 except next(4) = 9.
Model decision_model() {
  std::vector<int> next(16);
  for (int a = 0; a < 16; ++a) next[a] = (a + 1) % 16;
  next[4] = 9;
  return lookup_model(next);
}

MemorizationRecord pool_record(std::string id, std::vector<int> ctx, double score = 0.0) {
  MemorizationRecord r;
  r.id = std::move(id);
  r.context = std::move(ctx);
  r.score = score;
  return r;
}

}  // namespace

TEST(DecisionDataset, PicksNearestPoolSampleWithMatchingArgmax) {
  const Model model = decision_model();
  PMContext pm;
  pm.sample_id = "clean";
  pm.context = {0, 1, 2, 3, 4};  // predicts 9; the corpus continues with 6
  pm.t_mem = 6;
  pm.t_pred = 9;
  const std::vector<MemorizationRecord> pool{
      pool_record("far", {10, 11, 12, 13, 5, 7}),
      pool_record("wrong_argmax", {0, 1, 2, 3, 7, 7}),
      pool_record("near", {0, 1, 2, 12, 5, 7}),
      pool_record("high_score", {0, 1, 2, 3, 5, 7}, 0.9),
  };
  const auto result = build_decision_dataset(std::span<const PMContext>(&pm, 1), pool, model);
  ASSERT_EQ(result.pairs.size(), 1u);
  const ContrastivePair& p = result.pairs[0];
  EXPECT_EQ(p.src_ids, (std::vector<std::string>{"clean", "near"}));
  EXPECT_EQ(p.corrupt, (std::vector<int>{0, 1, 2, 12, 5}));
  EXPECT_EQ(argmax(forward_logits(model, p.corrupt).row(4)), p.t_mem);
  EXPECT_EQ(argmax(forward_logits(model, p.clean).row(4)), p.t_pred);
  EXPECT_NE(p.t_mem, p.t_pred);
  EXPECT_EQ(result.stats.extra.at("pool_filtered_by_score"), 1.0);
  EXPECT_EQ(result.stats.extra.at("pool_size"), 3.0);
}

TEST(DecisionDataset, NoArgmaxMatchFailsWithRejectionCounts) {
  const Model model = decision_model();
  std::vector<PMContext> pms;
  for (int i = 0; i < 3; ++i) {
    PMContext pm;
    pm.sample_id = "c" + std::to_string(i);
    pm.context = {i, 1, 2, 3, 4};
    pm.t_mem = 6;
    pm.t_pred = 9;
    pms.push_back(pm);
  }
  const std::vector<MemorizationRecord> pool{pool_record("a", {0, 1, 2, 3, 7, 7}),
                                             pool_record("b", {0, 1, 2, 3, 9, 7})};
  try {
    build_decision_dataset(pms, pool, model);
    FAIL() << "expected SearchFailure";
  } catch (const SearchFailure& e) {
    EXPECT_NE(std::string(e.what()).find("corrupt_argmax=3"), std::string::npos) << e.what();
  }
}

TEST(DecisionDataset, RejectsCleanArgmaxMismatchAndShortPools) {
  const Model model = decision_model();
  PMContext stale;
  stale.sample_id = "stale";
  stale.context = {0, 1, 2};  // predicts 3, not the recorded t_pred
  stale.t_mem = 3;
  stale.t_pred = 8;
  PMContext long_ctx;
  long_ctx.sample_id = "long";
  long_ctx.context = {0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
  long_ctx.t_mem = 6;
  long_ctx.t_pred = 9;
  const std::vector<PMContext> pms{stale, long_ctx};
  const std::vector<MemorizationRecord> pool{pool_record("short", {0, 1, 2, 3, 5, 7})};
  try {
    build_decision_dataset(pms, pool, model);
    FAIL() << "expected SearchFailure";
  } catch (const SearchFailure& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("clean_argmax=1"), std::string::npos) << what;
    EXPECT_NE(what.find("no_pool_prefix=1"), std::string::npos) << what;
  }
}

TEST(BranchDataset, DiffersOnlyAtTheFinalPosition) {
  std::vector<PMContext> pms;
  for (int i = 0; i < 4; ++i) {
    PMContext pm;
    pm.sample_id = "s" + std::to_string(i);
    pm.context = token_seq(10 + i, 3, i);
    pm.divergence = pm.context.size() - 1;
    pm.t_mem = 40 + i;
    pm.t_pred = 30 + i;
    if (i != 2) pm.successor = 20 + i;
    pms.push_back(pm);
  }
  const auto result = build_branch_dataset(pms);
  ASSERT_EQ(result.pairs.size(), 3u);
  EXPECT_EQ(result.stats.rejections.at("no_successor"), 1u);
  for (const ContrastivePair& p : result.pairs) {
    ASSERT_EQ(p.clean.size(), p.corrupt.size());
    for (std::size_t i = 0; i + 1 < p.clean.size(); ++i) EXPECT_EQ(p.clean[i], p.corrupt[i]);
    EXPECT_EQ(p.clean.back(), p.t_mem);
    EXPECT_EQ(p.corrupt.back(), p.t_pred);
    ASSERT_TRUE(p.target.has_value());
  }
  EXPECT_EQ(*result.pairs[2].target, 23);
  EXPECT_THROW(build_branch_dataset({}), ContractViolation);
}

TEST(BranchDataset, TargetIsTheCorpusTokenAfterDivergencePlusOne) {
  const Model model(long_config());
  MemorizationRecord r;
  r.id = "s";
  r.context = token_seq(50, 7, 3);
  r.continuation = token_seq(50, 11, 5);
  std::vector<int> full = r.context;
  full.insert(full.end(), r.continuation.begin(), r.continuation.end());
  const auto pm = find_divergence(r, model);
  ASSERT_TRUE(pm.has_value());
  const auto result = build_branch_dataset(std::span<const PMContext>(&*pm, 1));
  EXPECT_EQ(*result.pairs[0].target, full[pm->divergence + 2]);
  EXPECT_EQ(result.pairs[0].t_mem, full[pm->divergence + 1]);
}

TEST(PairsFile, RoundTripAndDigest) {
  std::vector<ContrastivePair> pairs{make_pair({1, 2, 3}, {1, 2, 4}, 5, 6),
                                     make_pair({7, 8}, {7, 9}, 1, 2, Task::branch)};
  const auto path = std::filesystem::temp_directory_path() / "memcirc_pairs_test.jsonl";
  save_pairs_jsonl(path, pairs);
  const auto loaded = load_pairs_jsonl(path);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[1].task, Task::branch);
  EXPECT_EQ(loaded[1].target, pairs[1].target);
  EXPECT_FALSE(loaded[0].target.has_value());
  EXPECT_EQ(dataset_digest(loaded), dataset_digest(pairs));
  pairs[0].t_mem = 9;
  EXPECT_NE(dataset_digest(loaded), dataset_digest(pairs));
  std::filesystem::remove(path);
}
