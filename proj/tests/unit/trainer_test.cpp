#include <gtest/gtest.h>

#include "memcirc/errors.hpp"
#include "memcirc/mem_dataset.hpp"
#include "memcirc/trainer.hpp"

using namespace memcirc;

namespace {

ModelConfig corpus_model(int layers = 2) {
  ModelConfig c;
  c.n_layers = layers;
  c.vocab_size = Vocabulary::standard().size();
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Trainer, ZeroTargetReturnsImmediately) {
  Model model(corpus_model());
  const std::string before = model.digest();
  const Corpus corpus = generate_corpus(Domain::wiki, 4, 1);
  const TrainReport r = train_to_memorize(model, corpus.samples, 0, 10);
  EXPECT_EQ(r.epochs, 0);
  EXPECT_EQ(model.digest(), before);
}

TEST(Trainer, TinyCorpusIsFullyMemorized) {
  Model model(corpus_model());
  const Corpus corpus = generate_corpus(Domain::wiki, 8, 2);
  const TrainReport r = train_to_memorize(model, corpus.samples, 8, 400);
  EXPECT_EQ(r.memorized, 8);
  EXPECT_EQ(r.memorized_ids.size(), 8u);
  EXPECT_LE(r.memorized, static_cast<int>(corpus.samples.size()));
  EXPECT_EQ(r.per_domain.at("wiki").memorized, 8);
  // The teacher-forced check agrees with greedy decoding and the memorization score.
  for (const Sample& s : corpus.samples) {
    const std::span<const int> ctx(s.tokens.data(), kContextLength);
    const std::span<const int> cont(s.tokens.data() + kContextLength, kSampleLength - kContextLength);
    const auto gen = generate_greedy(model, ctx, static_cast<int>(cont.size()));
    EXPECT_DOUBLE_EQ(memorization_score(gen, cont), 1.0) << s.id;
  }
  const auto records = score_samples(model, corpus.samples);
  for (const auto& rec : records) EXPECT_DOUBLE_EQ(rec.score, 1.0);
}

TEST(Trainer, DeterministicUnderSeed) {
  const Corpus corpus = generate_corpus(Domain::code, 6, 4);
  TrainConfig cfg;
  cfg.batch_size = 4;
  auto run = [&] {
    Model model(corpus_model(1));
    try {
      train_to_memorize(model, corpus.samples, 6, 3, cfg);
    } catch (const TrainingShortfall& e) {
      return std::make_pair(nlohmann::json(e.report()).dump(), model.digest());
    }
    return std::make_pair(std::string("reached"), model.digest());
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a, b);
}

TEST(Trainer, ShortfallCarriesTheBestCount) {
  Model model(corpus_model(1));
  const Corpus corpus = generate_corpus(Domain::wiki, 4, 5);
  try {
    train_to_memorize(model, corpus.samples, 4, 1);
    FAIL() << "expected TrainingShortfall";
  } catch (const TrainingShortfall& e) {
    EXPECT_EQ(e.report().epochs, 1);
    EXPECT_LT(e.report().memorized, 4);
    EXPECT_EQ(e.report().per_domain.at("wiki").samples, 4);
  }
}

TEST(Trainer, RejectsImpossibleTargets) {
  Model model(corpus_model(1));
  const Corpus corpus = generate_corpus(Domain::wiki, 3, 5);
  EXPECT_THROW(train_to_memorize(model, corpus.samples, 4, 10), ContractViolation);
  EXPECT_THROW(train_to_memorize(model, corpus.samples, -1, 10), ContractViolation);
}

TEST(Trainer, HistoryMarksEverySweep) {
  Model model(corpus_model());
  const Corpus corpus = generate_corpus(Domain::wiki, 8, 2);
  TrainConfig cfg;
  cfg.check_every = 7;
  const TrainReport r = train_to_memorize(model, corpus.samples, 8, 400, cfg);
  ASSERT_EQ(r.history.size(), static_cast<std::size_t>(r.epochs));
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    const EpochLog& e = r.history[i];
    EXPECT_EQ(e.epoch, static_cast<int>(i) + 1);
    EXPECT_GE(e.batch_memorized, 0);
    EXPECT_LE(e.batch_memorized, 8);
    const bool swept = e.epoch % cfg.check_every == 0 || 10 * e.batch_memorized >= 3 * 8;
    EXPECT_EQ(e.memorized >= 0, swept) << "epoch " << e.epoch;
  }
  EXPECT_EQ(r.history.back().memorized, 8);
}

TEST(Trainer, NonFiniteTrainingStepIsANumericFailure) {
  ModelConfig c = corpus_model(1);
  c.init_std = 1e308;
  Model model(c);
  const Corpus corpus = generate_corpus(Domain::wiki, 2, 5);
  EXPECT_THROW(train_to_memorize(model, corpus.samples, 1, 3), NumericFailure);
}
