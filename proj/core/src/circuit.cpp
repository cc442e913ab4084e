#include "memcirc/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "memcirc/errors.hpp"
#include "memcirc/random.hpp"

namespace memcirc {

void to_json(nlohmann::json& j, const FaithfulnessReport& r) {
  j = nlohmann::json{{"metric", metric_name(r.metric)},
                     {"direction", direction_name(r.direction)},
                     {"ablation", ablation_name(r.ablation)},
                     {"circuit_value", r.circuit_value},
                     {"b_full", r.b_full},
                     {"b_empty", r.b_empty},
                     {"clean_value", r.clean_value},
                     {"corrupt_value", r.corrupt_value},
                     {"degenerate", r.degenerate}};
  j["normalized"] = r.normalized ? nlohmann::json(*r.normalized) : nlohmann::json(nullptr);
}

std::optional<double> normalized_faithfulness(double m, double b, double b_prime) {
  const double denom = b - b_prime;
  if (denom == 0.0 || !std::isfinite(denom)) return std::nullopt;
  return (m - b_prime) / denom;
}

CircuitEvaluator::CircuitEvaluator(const Model& model, std::span<const ContrastivePair> pairs)
    : model_(model), pairs_(pairs.begin(), pairs.end()) {
  require(!pairs_.empty(), "circuit evaluation needs at least one pair");
  acts_.reserve(pairs_.size());
  for (const auto& p : pairs_) acts_.push_back(cache_pair(model_, p));
  tokens_ = resolve_eval_tokens(model_, pairs_);
}

std::vector<std::vector<double>> CircuitEvaluator::run(const EdgeMask& mask,
                                                       const AblationValues& values) const {
  std::vector<std::vector<double>> out;
  out.reserve(acts_.size());
  for (const auto& a : acts_) out.push_back(run_patched(model_, a, mask, values));
  return out;
}

std::vector<std::vector<double>> CircuitEvaluator::clean_logits() const {
  return run(EdgeMask::all(model_.graph().num_edges(), true, Direction::noising));
}

std::vector<std::vector<double>> CircuitEvaluator::corrupt_logits() const {
  return run(EdgeMask::all(model_.graph().num_edges(), true, Direction::denoising));
}

EdgeMask CircuitEvaluator::knockout_mask(std::span<const std::uint32_t> edges,
                                         Direction direction, Ablation ablation) const {
  const std::size_t E = model_.graph().num_edges();
  EdgeMask mask = EdgeMask::all(E, true, direction, ablation);
  for (std::uint32_t e : edges) {
    require(e < E, "circuit edge index out of range");
    mask.bits[e] = 0;
  }
  return mask;
}

FaithfulnessReport CircuitEvaluator::faithfulness(std::span<const std::uint32_t> edges,
                                                  Metric metric, Direction direction,
                                                  Ablation ablation,
                                                  const AblationValues& values) const {
  FaithfulnessReport r;
  r.metric = metric;
  r.direction = direction;
  r.ablation = ablation;

  const auto clean = clean_logits();
  const auto corrupt = corrupt_logits();
  r.clean_value = metric_value(clean, tokens_, metric);
  r.corrupt_value = metric_value(corrupt, tokens_, metric);
  const bool noising = direction == Direction::noising;
  r.b_empty = noising ? r.clean_value : r.corrupt_value;
  r.b_full = noising ? r.corrupt_value : r.clean_value;

  const auto logits = run(knockout_mask(edges, direction, ablation), values);
  r.per_sample.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.per_sample.push_back(metric_sample(logits[i], tokens_[i], metric));
  }
  r.circuit_value = metric_value(logits, tokens_, metric);
  r.normalized = normalized_faithfulness(r.circuit_value, r.b_full, r.b_empty);
  r.degenerate = !r.normalized.has_value();
  return r;
}

void to_json(nlohmann::json& j, const CircuitConfig& c) {
  j = nlohmann::json{{"loss", loss_name(c.loss)},
                     {"direction", direction_name(c.direction)},
                     {"metric", metric_name(c.metric)},
                     {"task", task_name(c.task)},
                     {"target", c.target},
                     {"refine_window", c.refine_window},
                     {"model_digest", c.model_digest}};
}

void from_json(const nlohmann::json& j, CircuitConfig& c) {
  CircuitConfig d;
  c.loss = parse_loss(j.value("loss", std::string(loss_name(d.loss))));
  c.direction = parse_direction(j.value("direction", std::string(direction_name(d.direction))));
  c.metric = parse_metric(j.value("metric", std::string(metric_name(d.metric))));
  c.task = parse_task(j.value("task", std::string(task_name(d.task))));
  c.target = j.value("target", d.target);
  c.refine_window = j.value("refine_window", d.refine_window);
  c.model_digest = j.value("model_digest", std::string());
}

void Circuit::save(const std::filesystem::path& path) const {
  nlohmann::json transcript_json = nlohmann::json::array();
  for (const auto& p : transcript) {
    transcript_json.push_back({{"k", p.k}, {"faithfulness", p.faithfulness}, {"phase", p.phase}});
  }
  nlohmann::json j{{"edges", edges},
                   {"scores", scores},
                   {"config", config},
                   {"faithfulness", faithfulness},
                   {"edge_fraction", edge_fraction},
                   {"transcript", transcript_json}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Circuit Circuit::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  Circuit c;
  c.edges = j.at("edges").get<std::vector<std::uint32_t>>();
  c.scores = j.value("scores", std::vector<double>{});
  c.config = j.at("config").get<CircuitConfig>();
  c.faithfulness = j.at("faithfulness").get<double>();
  c.edge_fraction = j.at("edge_fraction").get<double>();
  for (const auto& p : j.value("transcript", nlohmann::json::array())) {
    c.transcript.push_back({p.at("k").get<std::size_t>(), p.at("faithfulness").get<double>(),
                            p.at("phase").get<std::string>()});
  }
  return c;
}

Circuit top_k_circuit(const EdgeScores& scores, std::size_t k) {
  const auto order = scores.ranked();
  require(k <= order.size(), "top-k larger than the edge set");
  Circuit c;
  c.edges.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(c.edges.begin(), c.edges.end());
  for (std::uint32_t e : c.edges) c.scores.push_back(scores.scores[e]);
  c.config.loss = scores.config.loss;
  c.config.direction = scores.config.direction;
  c.config.model_digest = scores.model_digest;
  c.edge_fraction = order.empty() ? 0.0 : static_cast<double>(k) / static_cast<double>(order.size());
  return c;
}

CircuitSearchFailure::CircuitSearchFailure(const std::string& what,
                                           std::vector<SearchProbe> transcript)
    : SearchFailure(what), transcript_(std::move(transcript)) {}

Circuit find_minimal_circuit(const CircuitEvaluator& evaluator, const EdgeScores& scores,
                             const CircuitConfig& config) {
  const std::size_t E = evaluator.model().graph().num_edges();
  require(scores.scores.size() == E, "edge scores do not match the model's edge graph");
  require(std::isfinite(config.target), "faithfulness target must be finite");
  const auto order = scores.ranked();
  std::vector<SearchProbe> transcript;

  auto probe = [&](std::size_t k, const char* phase) {
    std::vector<std::uint32_t> edges(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    const auto r = evaluator.faithfulness(edges, config.metric, config.direction);
    if (r.degenerate) {
      throw CircuitSearchFailure(
          "faithfulness is undefined: the clean and corrupt baselines coincide (" +
              std::to_string(r.b_full) + ")",
          transcript);
    }
    transcript.push_back({k, *r.normalized, phase});
    return *r.normalized;
  };

  auto finish = [&](std::size_t k, double f) {
    Circuit c = top_k_circuit(scores, k);
    c.config = config;
    if (c.config.model_digest.empty()) c.config.model_digest = scores.model_digest;
    c.faithfulness = f;
    c.transcript = transcript;
    return c;
  };

  // A target of zero (or below) places no requirement on the circuit.
  const double f1 = probe(1, "probe");
  if (f1 >= config.target || config.target <= 0.0) return finish(1, f1);
  const double f_all = probe(E, "probe");
  if (f_all < config.target) {
    std::ostringstream msg;
    msg << "no circuit reaches faithfulness " << config.target << ": the full edge set gives "
        << f_all;
    throw CircuitSearchFailure(msg.str(), transcript);
  }

  std::size_t lo = 1;  // fails
  std::size_t hi = E;  // passes
  double f_hi = f_all;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const double f = probe(mid, "binary");
    if (f >= config.target) {
      hi = mid;
      f_hi = f;
    } else {
      lo = mid;
    }
  }

  // Faithfulness need not be monotone in k; look a little below the boundary.
  const std::size_t start = hi > config.refine_window ? hi - config.refine_window : 1;
  for (std::size_t k = std::max<std::size_t>(start, 1); k < hi; ++k) {
    if (k == lo) continue;  // already known to fail
    const double f = probe(k, "refine");
    if (f >= config.target) {
      hi = k;
      f_hi = f;
      break;
    }
  }
  return finish(hi, f_hi);
}

std::vector<Circuit> random_circuits(std::size_t n_edges, std::size_t k, int trials,
                                     std::uint64_t seed) {
  require(k <= n_edges, "random circuit larger than the edge set");
  require(trials >= 0, "trials must be non-negative");
  Rng rng(seed);
  std::vector<std::uint32_t> ids(n_edges);
  std::vector<Circuit> out;
  out.reserve(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < n_edges; ++i) ids[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, n_edges - i));
      std::swap(ids[i], ids[j]);
    }
    Circuit c;
    c.edges.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(c.edges.begin(), c.edges.end());
    c.edge_fraction = n_edges ? static_cast<double>(k) / static_cast<double>(n_edges) : 0.0;
    out.push_back(std::move(c));
  }
  return out;
}

std::string circuit_to_dot(const EdgeGraph& graph, const Circuit& circuit) {
  std::ostringstream out;
  out << "digraph circuit {\n  rankdir=BT;\n  node [shape=box, fontname=\"monospace\"];\n";
  std::vector<std::string> nodes;
  auto add_node = [&](const std::string& n) {
    if (std::find(nodes.begin(), nodes.end(), n) == nodes.end()) nodes.push_back(n);
  };
  for (std::uint32_t e : circuit.edges) {
    require(e < graph.num_edges(), "circuit edge index out of range");
    const Edge& edge = graph.edges()[e];
    add_node(graph.sources()[edge.source].label());
    add_node(graph.dests()[edge.dest].node_label());
  }
  for (const auto& n : nodes) out << "  \"" << n << "\";\n";
  for (std::size_t i = 0; i < circuit.edges.size(); ++i) {
    const Edge& edge = graph.edges()[circuit.edges[i]];
    const DestNode& d = graph.dests()[edge.dest];
    std::string label;
    if (d.kind == DestKind::q) label = "q";
    if (d.kind == DestKind::k) label = "k";
    if (d.kind == DestKind::v) label = "v";
    if (i < circuit.scores.size()) {
      std::ostringstream s;
      s.precision(3);
      s << circuit.scores[i];
      label += (label.empty() ? "" : " ") + s.str();
    }
    out << "  \"" << graph.sources()[edge.source].label() << "\" -> \"" << d.node_label() << "\"";
    if (!label.empty()) out << " [label=\"" << label << "\"]";
    out << ";\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace memcirc
