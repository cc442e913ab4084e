#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "memcirc/harness.hpp"
#include "memcirc/pipeline.hpp"
#include "toy_models.hpp"

using namespace memcirc;
using namespace memcirc::testing;

namespace {

std::vector<std::uint32_t> all_edges(std::size_t n) {
  std::vector<std::uint32_t> e(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = static_cast<std::uint32_t>(i);
  return e;
}

std::vector<ContrastivePair> branch_pairs(int n, int len, int seed) {
  auto pairs = random_pairs(n, len, 50, seed);
  for (auto& p : pairs) {
    p.task = Task::branch;
    p.target = p.t_mem;
  }
  return pairs;
}

const std::array<Direction, 2> kBoth{Direction::noising, Direction::denoising};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Compares against tests/data/golden/<name>; MEMCIRC_UPDATE_GOLDEN=1 rewrites.
void expect_golden(const std::string& name, const std::string& actual) {
  const auto path = std::filesystem::path(MEMCIRC_TEST_DATA_DIR) / "golden" / name;
  if (std::getenv("MEMCIRC_UPDATE_GOLDEN") != nullptr) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << actual;
  }
  ASSERT_TRUE(std::filesystem::exists(path)) << path;
  EXPECT_EQ(read_file(path), actual) << "golden mismatch: " << name;
}

EvalRow row(std::string label, std::vector<double> v, std::size_t edges,
            std::optional<double> f = {}) {
  EvalRow r;
  r.label = std::move(label);
  r.values = std::move(v);
  r.edges = edges;
  r.faithfulness = f;
  return r;
}

EvalResult fixed_branch_table() {
  EvalResult t;
  t.title = "Circuits applied to the branch dataset";
  t.metrics = report_metrics(Task::branch);
  t.samples = 40;
  t.clean = row("All edges clean", {100.0, 0.0}, 310);
  t.corrupt = row("All edges corrupted", {12.5, 100.0}, 310);
  EvalSection n;
  n.direction = Direction::noising;
  n.target_metric = Metric::accuracy_mem;
  n.target_value = 12.5;
  n.rows.push_back(row("decision noising (9 edges)", {25.0, 72.5}, 9, 0.857142857142857));
  n.rows.push_back(row("branch noising (4 edges)", {12.5, 87.5}, 4, 1.0));
  EvalSection d;
  d.direction = Direction::denoising;
  d.target_metric = Metric::accuracy_pred;
  d.target_value = 0.0;
  d.rows.push_back(row("decision noising (9 edges)", {97.5, 5.0}, 9, 0.95));
  d.rows.push_back(row("branch, \"quoted\" label", {-0.0, 100.0}, 4, 0.0));
  t.sections = {n, d};
  return t;
}

}  // namespace

// ------------------------------------------------------------ registry

TEST(TaskRegistry, CellsAreUniqueAndDefaultsAreCells) {
  const auto reg = task_registry();
  EXPECT_EQ(reg.size(), 10u);
  for (std::size_t i = 0; i < reg.size(); ++i) {
    for (std::size_t j = i + 1; j < reg.size(); ++j) {
      EXPECT_FALSE(reg[i].task == reg[j].task && reg[i].direction == reg[j].direction &&
                   reg[i].loss == reg[j].loss && reg[i].metric == reg[j].metric);
    }
  }
  for (Task t : {Task::decision, Task::branch}) {
    for (Direction d : kBoth) {
      const TaskSpec& s = default_task_spec(t, d);
      EXPECT_EQ(&find_task_spec(t, d, s.loss, s.metric), &s);
    }
  }
  EXPECT_EQ(default_task_spec(Task::branch, Direction::noising).metric, Metric::accuracy_mem);
  EXPECT_EQ(default_task_spec(Task::branch, Direction::noising).improvement, Improvement::down);
  EXPECT_EQ(default_task_spec(Task::decision, Direction::noising).loss, LossKind::logit_diff);
}

TEST(TaskRegistry, RejectsCombinationsOutsideTheTable) {
  EXPECT_THROW(find_task_spec(Task::branch, Direction::noising, LossKind::logit_diff, Metric::logit_diff),
               ContractViolation);
  EXPECT_THROW(find_task_spec(Task::decision, Direction::noising, LossKind::neg_logit_mem,
                              Metric::logit_mem),
               ContractViolation);
  EXPECT_THROW(find_task_spec(Task::decision, Direction::denoising, LossKind::logit_diff,
                              Metric::accuracy_mem),
               ContractViolation);
  try {
    find_task_spec(Task::branch, Direction::denoising, LossKind::logit_mem, Metric::logit_pred);
    FAIL();
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("branch/denoising/logit_mem/logit_pred"), std::string::npos);
  }
}

// ------------------------------------------------------------ evaluation

TEST(EvaluateCircuits, FullAndEmptyCircuitsMatchBaselineRowsBothWays) {
  const Model model(small_config());
  const auto pairs = random_pairs(6, 12);
  const CircuitEvaluator ev(model, pairs);
  const auto all = all_edges(model.graph().num_edges());
  const std::vector<NamedCircuit> circuits{{"all", all}, {"none", {}}};
  const EvalResult t = evaluate_circuits(ev, Task::decision, circuits, kBoth, "t");

  ASSERT_EQ(t.sections.size(), 2u);
  const auto& noise = t.sections[0];
  const auto& denoise = t.sections[1];
  for (std::size_t i = 0; i < t.metrics.size(); ++i) {
    // Noising: every edge knocked out is the corrupt run, none is the clean run.
    EXPECT_NEAR(noise.rows[0].values[i], t.corrupt.values[i], 1e-10);
    EXPECT_NEAR(noise.rows[1].values[i], t.clean.values[i], 1e-10);
    EXPECT_NEAR(denoise.rows[0].values[i], t.clean.values[i], 1e-10);
    EXPECT_NEAR(denoise.rows[1].values[i], t.corrupt.values[i], 1e-10);
  }
  EXPECT_NEAR(*noise.rows[0].faithfulness, 1.0, 1e-9);
  EXPECT_NEAR(*noise.rows[1].faithfulness, 0.0, 1e-9);
  EXPECT_NEAR(*denoise.rows[0].faithfulness, 1.0, 1e-9);
  EXPECT_NEAR(*denoise.rows[1].faithfulness, 0.0, 1e-9);
  EXPECT_EQ(t.samples, 6u);
  EXPECT_EQ(t.clean.label, "All edges clean");
  EXPECT_EQ(t.corrupt.label, "All edges corrupted");
}

TEST(EvaluateCircuits, FaithfulnessCellsRecomputeFromRowAndBaselines) {
  const Model model(small_config());
  const auto pairs = random_pairs(8, 10, 50, 3);
  const CircuitEvaluator ev(model, pairs);
  std::vector<NamedCircuit> circuits;
  for (std::uint32_t k : {1u, 3u, 9u, 20u}) {
    std::vector<std::uint32_t> e;
    for (std::uint32_t i = 0; i < k; ++i) e.push_back((i * 7) % 46);
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    circuits.push_back({"k" + std::to_string(k), e});
  }
  const EvalResult t = evaluate_circuits(ev, Task::decision, circuits, kBoth, "t");
  for (const auto& s : t.sections) {
    std::size_t c = 0;
    while (t.metrics[c] != s.target_metric) ++c;
    const double clean = t.clean.values[c];
    const double corrupt = t.corrupt.values[c];
    EXPECT_EQ(s.target_value, s.direction == Direction::noising ? corrupt : clean);
    for (const auto& r : s.rows) {
      const double m = r.values[c];
      const double expected = s.direction == Direction::noising ? (m - clean) / (corrupt - clean)
                                                                : (m - corrupt) / (clean - corrupt);
      ASSERT_TRUE(r.faithfulness.has_value());
      EXPECT_EQ(*r.faithfulness, expected);
      // Same numbers as the circuit module's own faithfulness.
      const auto rep = ev.faithfulness(circuits[static_cast<std::size_t>(&r - s.rows.data())].edges,
                                       s.target_metric, s.direction);
      EXPECT_NEAR(*rep.normalized, expected, 1e-9);
    }
  }
}

TEST(EvaluateCircuits, RejectsOutOfRangeEdges) {
  const Model model(small_config());
  const auto pairs = random_pairs(2, 8);
  const CircuitEvaluator ev(model, pairs);
  const std::vector<NamedCircuit> bad{{"bad", {46}}};
  EXPECT_THROW(evaluate_circuits(ev, Task::decision, bad, kBoth, "t"), ContractViolation);
}

TEST(CrossTask, DecisionCircuitOnBranchDatasetEmitsTable) {
  const Model model(small_config());
  const auto decision = random_pairs(6, 12);
  const auto branch = branch_pairs(5, 12, 4);
  const CircuitEvaluator dev(model, decision);
  EdgeScores scores;
  scores.model_digest = model.digest();
  scores.scores.resize(model.graph().num_edges());
  for (std::size_t i = 0; i < scores.scores.size(); ++i) scores.scores[i] = static_cast<double>(i % 7);
  Circuit c = top_k_circuit(scores, 5);
  c.config.model_digest = model.digest();
  const CircuitEvaluator bev(model, branch);
  const std::array<Circuit, 1> cs{c};
  const EvalResult t = run_cross_task(bev, Task::branch, cs);
  EXPECT_EQ(t.metrics, report_metrics(Task::branch));
  ASSERT_EQ(t.sections.size(), 2u);
  EXPECT_EQ(t.sections[0].target_metric, Metric::accuracy_mem);
  EXPECT_EQ(t.sections[1].target_metric, Metric::accuracy_pred);
  EXPECT_EQ(t.sections[0].rows.at(0).label, "decision noising (5 edges)");
  // Branch pairs are judged on the corrupt argmax, so the corrupt run
  // predicts it every time.
  EXPECT_EQ(t.corrupt.values[1], 100.0);
}

TEST(CrossTask, ModelDigestMismatchIsAContractViolation) {
  const Model model(small_config());
  const auto pairs = random_pairs(2, 8);
  const CircuitEvaluator ev(model, pairs);
  Circuit c;
  c.edges = {1, 2};
  c.config.model_digest = "0000000000000000";
  const std::array<Circuit, 1> cs{c};
  EXPECT_THROW(run_cross_task(ev, Task::decision, cs), ContractViolation);
}

TEST(CrossCorpus, SelfTransferEqualsInDomainEvaluation) {
  const Model model(small_config());
  const auto pairs = branch_pairs(6, 10, 2);
  const std::vector<NamedCircuit> circuits{{"c", {0, 5, 17, 40}}};
  const CircuitEvaluator ev(model, pairs);
  const EvalResult in_domain = evaluate_circuits(ev, Task::branch, circuits, kBoth, "wiki");
  const CrossCorpusResult cc = run_cross_corpus(model, circuits, {{Domain::wiki, pairs}}, {});
  ASSERT_EQ(cc.domains.size(), 1u);
  const EvalResult& t = cc.domains[0].result;
  EXPECT_EQ(t.clean.values, in_domain.clean.values);
  EXPECT_EQ(t.corrupt.values, in_domain.corrupt.values);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(t.sections[s].rows[0].values, in_domain.sections[s].rows[0].values);
    EXPECT_EQ(t.sections[s].rows[0].faithfulness, in_domain.sections[s].rows[0].faithfulness);
  }
}

TEST(CrossCorpus, DomainsWithoutPairsAreSkippedWithReason) {
  const Model model(small_config());
  const std::vector<NamedCircuit> circuits{{"c", {0}}};
  const CrossCorpusResult cc = run_cross_corpus(
      model, circuits, {{Domain::code, branch_pairs(3, 9, 1)}, {Domain::email, {}}},
      {{Domain::web, "no memorized samples"}});
  ASSERT_EQ(cc.domains.size(), 3u);
  EXPECT_FALSE(cc.domains[0].skip_reason.has_value());
  EXPECT_EQ(cc.domains[1].domain, Domain::email);
  EXPECT_EQ(*cc.domains[1].skip_reason, "no branch pairs");
  EXPECT_EQ(*cc.domains[2].skip_reason, "no memorized samples");
  const Report r = render(cc);
  EXPECT_NE(r.markdown.find("Skipped web: no memorized samples"), std::string::npos);
  EXPECT_NE(r.csv.find("web,skipped"), std::string::npos);
}

TEST(CrossCorpus, RejectsDecisionPairs) {
  const Model model(small_config());
  const std::vector<NamedCircuit> circuits{{"c", {0}}};
  EXPECT_THROW(run_cross_corpus(model, circuits, {{Domain::code, random_pairs(2, 8)}}, {}),
               ContractViolation);
}

TEST(AblationSuite, PairedColumnEqualsStandardEvaluation) {
  const Model model(small_config());
  const auto pairs = random_pairs(6, 10, 50, 5);
  const CircuitEvaluator ev(model, pairs);
  const std::vector<std::uint32_t> circuit{2, 9, 30, 45};
  const std::array<Ablation, 4> methods{Ablation::paired, Ablation::zero, Ablation::mean_clean,
                                        Ablation::mean_corrupt};
  const AblationResult r = run_ablation_suite(ev, Task::decision, circuit, methods);
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) {
    ASSERT_EQ(row.cells.size(), 4u);
    const auto rep = ev.faithfulness(circuit, row.metric, row.direction);
    EXPECT_EQ(row.cells[0].value, rep.circuit_value);
    EXPECT_EQ(row.cells[0].faithfulness, rep.normalized);
    // Distinct caches for the two mean ablations.
    EXPECT_NE(row.cells[2].value, row.cells[3].value);
  }
  EXPECT_EQ(r.rows[0].metric, Metric::logit_diff);
  EXPECT_EQ(r.rows[1].metric, Metric::logit_pred);
}

TEST(RandomBaseline, DeterministicForSeed) {
  const Model model(small_config());
  const auto pairs = random_pairs(4, 8);
  const CircuitEvaluator ev(model, pairs);
  const auto a = run_random_baseline(ev, 3, 5, 42, Metric::logit_diff, Direction::noising, 0.9);
  const auto b = run_random_baseline(ev, 3, 5, 42, Metric::logit_diff, Direction::noising, 0.9);
  EXPECT_EQ(a.faithfulness, b.faithfulness);
  EXPECT_EQ(a.faithfulness.size(), 5u);
  EXPECT_EQ(render(a).csv, render(b).csv);
}

// ------------------------------------------------------------ rendering

TEST(Render, NumberFormatting) {
  EXPECT_EQ(format_number(1.0 / 3.0), "0.3333");
  EXPECT_EQ(format_number(-0.0), "0.0000");
  EXPECT_EQ(format_number(-0.00001, 2), "0.00");
  EXPECT_EQ(format_number(12.5, 2), "12.50");
  EXPECT_EQ(format_number(std::nan("")), "nan");
}

TEST(Render, EvalTableGolden) {
  const Report r = render(fixed_branch_table());
  expect_golden("eval_table.csv", r.csv);
  expect_golden("eval_table.md", r.markdown);
}

TEST(Render, CrossCorpusGolden) {
  CrossCorpusResult cc;
  for (Domain d : {Domain::code, Domain::email}) {
    DomainEval e;
    e.domain = d;
    e.result = fixed_branch_table();
    e.result.title = std::string(domain_name(d));
    cc.domains.push_back(e);
  }
  DomainEval web;
  web.domain = Domain::web;
  web.skip_reason = "no memorized samples";
  cc.domains.push_back(web);
  const Report r = render(cc);
  expect_golden("cross_corpus.csv", r.csv);
  expect_golden("cross_corpus.md", r.markdown);
}

TEST(Render, AblationGolden) {
  AblationResult a;
  a.title = "Ablation methods on the decision dataset";
  for (Direction d : kBoth) {
    AblationRow row;
    row.direction = d;
    row.metric = default_task_spec(Task::decision, d).metric;
    row.clean_value = 4.25;
    row.corrupt_value = -1.5;
    row.cells = {{Ablation::paired, 3.75, 0.913},
                 {Ablation::zero, -0.5, std::nullopt},
                 {Ablation::mean_clean, 1.0, 0.4},
                 {Ablation::mean_corrupt, 2.0, -0.125}};
    a.rows.push_back(row);
  }
  const Report r = render(a);
  expect_golden("ablation.csv", r.csv);
  expect_golden("ablation.md", r.markdown);
}

TEST(Render, CircuitSummaryAndRandomGolden) {
  const std::vector<CircuitSummaryRow> rows{
      {"decision noising (9 edges)", default_task_spec(Task::decision, Direction::noising), 9,
       9.0 / 310.0, 0.8712},
      {"branch noising (4 edges)", default_task_spec(Task::branch, Direction::noising), 4,
       4.0 / 310.0, 1.0}};
  const Report s = render_circuit_summary(rows, 310);
  expect_golden("circuits.csv", s.csv);
  expect_golden("circuits.md", s.markdown);

  RandomBaseline b;
  b.k = 4;
  b.trials = 3;
  b.seed = 7;
  b.metric = Metric::accuracy_mem;
  b.direction = Direction::noising;
  b.faithfulness = {0.0, 0.125, -0.0625};
  b.mean_abs = 0.0625;
  b.discovered = 1.0;
  const Report r = render(b);
  expect_golden("random.csv", r.csv);
  expect_golden("random.md", r.markdown);
}

TEST(Render, EveryEmittedTableHasBothBaselineRows) {
  const Model model(small_config());
  const auto pairs = random_pairs(3, 8);
  const CircuitEvaluator ev(model, pairs);
  const std::vector<NamedCircuit> circuits{{"c", {1}}};
  const Report r = render(evaluate_circuits(ev, Task::decision, circuits, kBoth, "t"));
  EXPECT_NE(r.csv.find("baseline,All edges clean,"), std::string::npos);
  EXPECT_NE(r.csv.find("baseline,All edges corrupted,"), std::string::npos);
  EXPECT_NE(r.markdown.find("| All edges clean |"), std::string::npos);
  EXPECT_NE(r.markdown.find("| All edges corrupted |"), std::string::npos);
}

// ------------------------------------------------------------ pipeline config

TEST(PipelineConfig, JsonRoundTripAndPartialOverrides) {
  PipelineConfig c;
  c.set_seed(9);
  c.samples = 123;
  c.model.d_model = 32;
  c.model.d_head = 4;
  const nlohmann::json j = c;
  const PipelineConfig back = j.get<PipelineConfig>();
  EXPECT_EQ(nlohmann::json(back), j);

  const auto partial = nlohmann::json::parse(R"({"seed": 5, "model": {"d_model": 64, "d_head": 8}})")
                           .get<PipelineConfig>();
  EXPECT_EQ(partial.model.d_model, 64);
  EXPECT_EQ(partial.model.n_heads, PipelineConfig{}.model.n_heads);
  EXPECT_EQ(partial.model.seed, derive_seed(5, "model"));
  EXPECT_EQ(partial.train.seed, derive_seed(5, "train"));
  EXPECT_EQ(partial.train.target_domain, "wiki");
  EXPECT_NE(derive_seed(5, "model"), derive_seed(5, "train"));
  EXPECT_NE(derive_seed(5, "model"), derive_seed(6, "model"));
}

TEST(PipelineConfig, ValidationRejectsBadValues) {
  PipelineConfig c;
  c.ig_steps = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
  PipelineConfig v;
  v.model.vocab_size = 10;
  EXPECT_THROW(v.validate(), ContractViolation);
  EXPECT_THROW(nlohmann::json::parse(R"({"domain": "usenet"})").get<PipelineConfig>(),
               ContractViolation);
}
