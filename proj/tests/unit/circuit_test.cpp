#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "memcirc/circuit.hpp"
#include "memcirc/errors.hpp"
#include "toy_models.hpp"

using namespace memcirc;
using namespace memcirc::testing;

namespace {

std::vector<std::uint32_t> all_edges(std::size_t n) {
  std::vector<std::uint32_t> e(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = static_cast<std::uint32_t>(i);
  return e;
}

// Heads and MLPs write nothing, so embed -> logits carries the whole effect.
Model single_path_model() {
  Model m(small_config(1, 1));
  for (LayerWeights& l : m.mutable_weights().layers) {
    l.w_o.fill(0.0);
    l.w_out.fill(0.0);
    l.b_out.fill(0.0);
  }
  return m;
}

}  // namespace

TEST(Faithfulness, Arithmetic) {
  EXPECT_DOUBLE_EQ(*normalized_faithfulness(9.5, 10.0, 0.0), 0.95);
  EXPECT_FALSE(normalized_faithfulness(1.0, 3.0, 3.0).has_value());
}

TEST(Faithfulness, InvariantUnderAffineMetricTransforms) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double m = u(rng), b = u(rng), bp = u(rng);
    double scale = u(rng);
    if (std::fabs(scale) < 0.1) scale = 0.5;
    const double shift = u(rng);
    const auto f = normalized_faithfulness(m, b, bp);
    const auto g = normalized_faithfulness(scale * m + shift, scale * b + shift, scale * bp + shift);
    ASSERT_TRUE(f && g);
    EXPECT_NEAR(*f, *g, 1e-9 * (1.0 + std::fabs(*f)));
  }
}

TEST(Faithfulness, FullAndEmptyCircuits) {
  const Model model(small_config(2, 2));
  const auto pairs = random_pairs(6, 9);
  const CircuitEvaluator ev(model, pairs);
  const auto full = all_edges(model.graph().num_edges());
  for (Direction d : {Direction::noising, Direction::denoising}) {
    for (Metric m : {Metric::logit_diff, Metric::logit_mem, Metric::logprob_pred}) {
      const auto r_full = ev.faithfulness(full, m, d);
      ASSERT_FALSE(r_full.degenerate);
      EXPECT_NEAR(*r_full.normalized, 1.0, 1e-6);
      const auto r_empty = ev.faithfulness({}, m, d);
      EXPECT_NEAR(*r_empty.normalized, 0.0, 1e-6);
      EXPECT_EQ(r_full.per_sample.size(), pairs.size());
    }
  }
  const auto r = ev.faithfulness(full, Metric::logit_diff, Direction::noising);
  EXPECT_EQ(r.b_full, r.corrupt_value);
  EXPECT_EQ(r.b_empty, r.clean_value);
}

TEST(Faithfulness, DegenerateBaselinesAreFlagged) {
  const Model model(small_config(2, 2));
  auto pairs = random_pairs(3, 8);
  for (auto& p : pairs) p.corrupt = p.clean;
  const CircuitEvaluator ev(model, pairs);
  const std::vector<std::uint32_t> two{0, 1};
  const auto r = ev.faithfulness(two, Metric::logit_diff, Direction::noising);
  EXPECT_TRUE(r.degenerate);
  EXPECT_FALSE(r.normalized.has_value());
  EdgeScores s;
  s.scores.assign(model.graph().num_edges(), 1.0);
  EXPECT_THROW(find_minimal_circuit(ev, s, {}), SearchFailure);
}

TEST(CircuitSearch, SinglePathModelNeedsOneEdge) {
  const Model model = single_path_model();
  const auto pairs = random_pairs(4, 8);
  const EdgeScores scores = eap_ig(model, pairs, {});
  const CircuitEvaluator ev(model, pairs);
  CircuitConfig cfg;
  const Circuit c = find_minimal_circuit(ev, scores, cfg);
  ASSERT_EQ(c.edges.size(), 1u);
  const EdgeGraph& g = model.graph();
  EXPECT_EQ(c.edges[0], g.find_edge(g.embed_source(), g.logits_dest()));
  EXPECT_NEAR(c.faithfulness, 1.0, 1e-9);
  EXPECT_EQ(c.transcript.size(), 1u);
}

TEST(CircuitSearch, ZeroTargetStopsAtOne) {
  const Model model(small_config(2, 2));
  const auto pairs = random_pairs(3, 8);
  const CircuitEvaluator ev(model, pairs);
  const EdgeScores scores = eap_ig(model, pairs, {});
  CircuitConfig cfg;
  cfg.target = 0.0;
  const Circuit c = find_minimal_circuit(ev, scores, cfg);
  EXPECT_EQ(c.edges.size(), 1u);
  EXPECT_EQ(c.transcript.size(), 1u);
}

TEST(CircuitSearch, ResultIsLocallyMinimal) {
  const Model model(small_config(2, 2));
  const auto pairs = random_pairs(6, 10, 50, 3);
  const CircuitEvaluator ev(model, pairs);
  for (Direction d : {Direction::noising, Direction::denoising}) {
    AttributionConfig acfg;
    acfg.direction = d;
    const EdgeScores scores = eap_ig(model, pairs, acfg);
    CircuitConfig cfg;
    cfg.direction = d;
    cfg.target = 0.85;
    const Circuit c = find_minimal_circuit(ev, scores, cfg);
    const std::size_t k = c.edges.size();
    EXPECT_GE(c.faithfulness, cfg.target);
    EXPECT_GE(*ev.faithfulness(c.edges, cfg.metric, d).normalized, cfg.target);
    const SearchProbe* below = nullptr;
    for (const auto& p : c.transcript) {
      if (p.k < k && (!below || p.k > below->k)) below = &p;
      if (p.k == k) EXPECT_GE(p.faithfulness, cfg.target);
    }
    if (k > 1) {
      ASSERT_NE(below, nullptr);
      EXPECT_LT(below->faithfulness, cfg.target);
    }
    EXPECT_TRUE(std::is_sorted(c.edges.begin(), c.edges.end()));
    EXPECT_DOUBLE_EQ(c.edge_fraction, static_cast<double>(k) / 46.0);
  }
}

TEST(CircuitSearch, UnreachableTargetFailsWithTranscript) {
  const Model model(small_config(2, 2));
  const auto pairs = random_pairs(3, 8);
  const CircuitEvaluator ev(model, pairs);
  const EdgeScores scores = eap_ig(model, pairs, {});
  CircuitConfig cfg;
  cfg.target = 2.0;
  try {
    find_minimal_circuit(ev, scores, cfg);
    FAIL() << "expected CircuitSearchFailure";
  } catch (const CircuitSearchFailure& e) {
    ASSERT_EQ(e.transcript().size(), 2u);
    EXPECT_EQ(e.transcript()[1].k, model.graph().num_edges());
    EXPECT_NEAR(e.transcript()[1].faithfulness, 1.0, 1e-9);
  }
}

TEST(RandomCircuits, DeterministicUniformSubsets) {
  const auto a = random_circuits(46, 5, 2, 9);
  const auto b = random_circuits(46, 5, 2, 9);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].edges, b[i].edges);
    EXPECT_EQ(a[i].edges.size(), 5u);
    EXPECT_TRUE(std::is_sorted(a[i].edges.begin(), a[i].edges.end()));
    EXPECT_EQ(std::set<std::uint32_t>(a[i].edges.begin(), a[i].edges.end()).size(), 5u);
  }
  EXPECT_NE(a[0].edges, a[1].edges);
  EXPECT_NE(random_circuits(46, 5, 1, 10)[0].edges, a[0].edges);
  EXPECT_THROW(random_circuits(4, 5, 1, 0), ContractViolation);

  // Every edge shows up at roughly the uniform rate.
  std::vector<int> hits(20, 0);
  for (const auto& c : random_circuits(20, 4, 2000, 1)) {
    for (auto e : c.edges) ++hits[e];
  }
  for (int h : hits) EXPECT_NEAR(h, 400, 80);
}

TEST(RandomCircuits, FullSizeIsTheFullCircuit) {
  const Model model(small_config(2, 2));
  const auto pairs = random_pairs(3, 8);
  const CircuitEvaluator ev(model, pairs);
  const auto c = random_circuits(46, 46, 1, 3)[0];
  EXPECT_EQ(c.edges, all_edges(46));
  EXPECT_NEAR(*ev.faithfulness(c.edges, Metric::logit_diff, Direction::noising).normalized, 1.0, 1e-9);
}

TEST(CircuitFile, RoundTripGivesIdenticalEvaluation) {
  const Model model(small_config(2, 2));
  const auto pairs = random_pairs(4, 8);
  const CircuitEvaluator ev(model, pairs);
  const EdgeScores scores = eap_ig(model, pairs, {});
  CircuitConfig cfg;
  const Circuit c = find_minimal_circuit(ev, scores, cfg);
  const auto path = std::filesystem::temp_directory_path() / "memcirc_circuit_test.json";
  c.save(path);
  const Circuit d = Circuit::load(path);
  EXPECT_EQ(d.edges, c.edges);
  EXPECT_EQ(d.scores, c.scores);
  EXPECT_EQ(d.faithfulness, c.faithfulness);
  EXPECT_EQ(d.transcript.size(), c.transcript.size());
  EXPECT_EQ(d.config.model_digest, model.digest());
  const auto r1 = ev.faithfulness(c.edges, cfg.metric, cfg.direction);
  const auto r2 = ev.faithfulness(d.edges, d.config.metric, d.config.direction);
  EXPECT_EQ(r1.circuit_value, r2.circuit_value);
  EXPECT_EQ(r1.per_sample, r2.per_sample);
  std::filesystem::remove(path);
}

TEST(CircuitDot, ListsNodesAndScoredEdges) {
  const Model model(small_config(1, 1));
  Circuit c;
  const EdgeGraph& g = model.graph();
  c.edges = {static_cast<std::uint32_t>(g.find_edge(g.embed_source(), g.head_dest(0, 0, DestKind::q))),
             static_cast<std::uint32_t>(g.find_edge(g.head_source(0, 0), g.logits_dest()))};
  std::sort(c.edges.begin(), c.edges.end());
  c.scores = {0.5, -1.25};
  const std::string dot = circuit_to_dot(g, c);
  EXPECT_NE(dot.find("digraph"), std::string::npos);
  EXPECT_NE(dot.find("\"embed\" -> \"a0.h0\" [label=\"q 0.5\"]"), std::string::npos) << dot;
  EXPECT_NE(dot.find("\"a0.h0\" -> \"logits\" [label=\"-1.25\"]"), std::string::npos) << dot;
}
