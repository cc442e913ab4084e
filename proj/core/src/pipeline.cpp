#include "memcirc/pipeline.hpp"

#include <array>
#include <fstream>
#include <map>

#include "memcirc/digest.hpp"

namespace memcirc {

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> items) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path.string());
  for (const auto& item : items) out << nlohmann::json(item).dump() << '\n';
}

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw ContractViolation(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

CircuitEvaluator evaluator_for(const Model& model, const std::vector<ContrastivePair>& pairs) {
  return CircuitEvaluator(model, pairs);
}

}  // namespace

// ------------------------------------------------------------ config

PipelineConfig::PipelineConfig() {
  model.n_layers = 2;
  model.n_heads = 8;
  model.d_model = 128;
  model.d_head = 16;
  model.d_mlp = 512;
  model.vocab_size = Vocabulary::standard().size();
  train.learning_rate = 3e-3;
  train.momentum = 0.9;
  train.check_every = 10;
  train.target_domain = std::string(domain_name(domain));
  set_seed(seed);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  Fnv1a h;
  h.update(tag);
  const std::uint64_t s = seed;
  h.update_values(std::span<const std::uint64_t>(&s, 1));
  return h.value();
}

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  model.seed = derive_seed(s, "model");
  train.seed = derive_seed(s, "train");
}

void PipelineConfig::validate() const {
  require(samples >= 1, "samples must be >= 1");
  require(foreign_samples >= 0, "foreign_samples must be >= 0");
  require(target_memorized >= 0, "target_memorized must be >= 0");
  require(max_epochs >= 0, "max_epochs must be >= 0");
  require(ig_steps >= 1, "ig_steps must be >= 1");
  require(random_trials >= 1, "random_trials must be >= 1");
  require(model.vocab_size == Vocabulary::standard().size(),
          "model.vocab_size must match the corpus vocabulary (" +
              std::to_string(Vocabulary::standard().size()) + ")");
  model.validate();
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{
      {"seed", c.seed},
      {"domain", domain_name(c.domain)},
      {"samples", c.samples},
      {"foreign_samples", c.foreign_samples},
      {"corpus",
       {{"sibling_fraction", c.corpus.sibling_fraction},
        {"min_branch", c.corpus.min_branch},
        {"max_branch", c.corpus.max_branch}}},
      {"model", c.model},
      {"train", c.train},
      {"target_memorized", c.target_memorized},
      {"max_epochs", c.max_epochs},
      {"divergence",
       {{"threshold", c.divergence.threshold}, {"min_context", c.divergence.min_context}}},
      {"decision", {{"pool_max_score", c.decision.pool_max_score}}},
      {"max_pairs", c.max_pairs},
      {"ig_steps", c.ig_steps},
      {"circuit_target", c.circuit_target},
      {"refine_window", c.refine_window},
      {"random_trials", c.random_trials},
  };
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  const PipelineConfig d;
  c = d;
  c.set_seed(j.value("seed", d.seed));
  c.domain = parse_domain(j.value("domain", std::string(domain_name(d.domain))));
  c.samples = j.value("samples", d.samples);
  c.foreign_samples = j.value("foreign_samples", d.foreign_samples);
  if (j.contains("corpus")) {
    const auto& k = j.at("corpus");
    c.corpus.sibling_fraction = k.value("sibling_fraction", d.corpus.sibling_fraction);
    c.corpus.min_branch = k.value("min_branch", d.corpus.min_branch);
    c.corpus.max_branch = k.value("max_branch", d.corpus.max_branch);
  }
  if (j.contains("model")) {
    // Partial model blocks override the defaults field by field.
    nlohmann::json m = d.model;
    m.update(j.at("model"));
    c.model = m.get<ModelConfig>();
    if (!j.at("model").contains("seed")) c.model.seed = derive_seed(c.seed, "model");
  }
  if (j.contains("train")) {
    nlohmann::json t = d.train;
    t["target_domain"] = std::string(domain_name(c.domain));
    t.update(j.at("train"));
    c.train = t.get<TrainConfig>();
    if (!j.at("train").contains("seed")) c.train.seed = derive_seed(c.seed, "train");
  } else {
    c.train.target_domain = std::string(domain_name(c.domain));
  }
  c.target_memorized = j.value("target_memorized", d.target_memorized);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  if (j.contains("divergence")) {
    const auto& k = j.at("divergence");
    c.divergence.threshold = k.value("threshold", d.divergence.threshold);
    c.divergence.min_context = k.value("min_context", d.divergence.min_context);
  }
  if (j.contains("decision")) {
    c.decision.pool_max_score = j.at("decision").value("pool_max_score", d.decision.pool_max_score);
  }
  c.max_pairs = j.value("max_pairs", d.max_pairs);
  c.ig_steps = j.value("ig_steps", d.ig_steps);
  c.circuit_target = j.value("circuit_target", d.circuit_target);
  c.refine_window = j.value("refine_window", d.refine_window);
  c.random_trials = j.value("random_trials", d.random_trials);
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  PipelineConfig c;
  try {
    c = read_json(path).get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation("bad config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------ workspace

Workspace::Workspace(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_ / "reports");
}

std::filesystem::path Workspace::dataset(Task task, std::optional<Domain> domain) const {
  std::string name = "dataset_" + std::string(task_name(task));
  if (domain) name += "_" + std::string(domain_name(*domain));
  return dir_ / (name + ".jsonl");
}

std::filesystem::path Workspace::dataset_stats(Task task, std::optional<Domain> domain) const {
  std::string name = "dataset_" + std::string(task_name(task));
  if (domain) name += "_" + std::string(domain_name(*domain));
  return dir_ / (name + "_stats.json");
}

std::filesystem::path Workspace::edge_scores(Task task, Direction direction) const {
  return dir_ / ("edges_" + std::string(task_name(task)) + "_" +
                 std::string(direction_name(direction)) + ".json");
}

std::filesystem::path Workspace::circuit(Task task, Direction direction) const {
  return dir_ / ("circuit_" + std::string(task_name(task)) + "_" +
                 std::string(direction_name(direction)) + ".json");
}

std::filesystem::path Workspace::report(const std::string& stem) const {
  return dir_ / "reports" / stem;
}

void write_report(const Workspace& ws, const std::string& stem, const Report& report) {
  const auto base = ws.report(stem);
  write_text(base.string() + ".csv", report.csv);
  write_text(base.string() + ".md", report.markdown);
}

// ------------------------------------------------------------ stages

TrainReport stage_train(const PipelineConfig& config, const Workspace& ws) {
  config.validate();
  std::vector<Sample> corpus =
      generate_corpus(config.domain, config.samples, config.seed, config.corpus).samples;
  for (Domain d : all_domains()) {
    if (d == config.domain || config.foreign_samples == 0) continue;
    auto extra = generate_corpus(d, config.foreign_samples,
                                 derive_seed(config.seed, domain_name(d)), config.corpus);
    for (auto& s : extra.samples) corpus.push_back(std::move(s));
  }
  save_samples_jsonl(ws.corpus(), corpus);

  Model model(config.model);
  TrainReport report;
  try {
    report = train_to_memorize(model, corpus, config.target_memorized, config.max_epochs,
                               config.train);
  } catch (const TrainingShortfall& e) {
    write_json(ws.train_report(), e.report());
    model.save(ws.model());
    throw;
  }
  write_json(ws.train_report(), report);
  model.save(ws.model());
  return report;
}

void to_json(nlohmann::json& j, const ScoreSummary& s) {
  j = nlohmann::json{{"samples", s.samples}, {"memorized", s.memorized}, {"pm_contexts", s.pm_contexts}};
}

ScoreSummary stage_score(const PipelineConfig& config, const Workspace& ws) {
  const Model model = Model::load(ws.model());
  const auto corpus = load_samples_jsonl(ws.corpus());
  const auto records = score_samples(model, corpus);
  write_jsonl<MemorizationRecord>(ws.scores(), records);

  ScoreSummary summary;
  std::vector<PMContext> pms;
  for (const auto& r : records) {
    const std::string d(domain_name(r.domain));
    ++summary.samples[d];
    summary.memorized.try_emplace(d, 0);
    summary.pm_contexts.try_emplace(d, 0);
    if (r.score < 1.0) continue;
    ++summary.memorized[d];
    if (auto pm = find_divergence(r, model, config.divergence)) {
      ++summary.pm_contexts[d];
      pms.push_back(std::move(*pm));
    }
  }
  write_jsonl<PMContext>(ws.pm_contexts(), pms);
  write_json(ws.score_summary(), summary);
  return summary;
}

BuildResult stage_build_dataset(const PipelineConfig& config, const Workspace& ws, Task task,
                                std::optional<Domain> domain) {
  const Domain d = domain.value_or(config.domain);
  const Model model = Model::load(ws.model());
  std::vector<PMContext> pms;
  for (auto& p : read_jsonl<PMContext>(ws.pm_contexts())) {
    if (p.domain == d) pms.push_back(std::move(p));
  }
  if (pms.empty()) {
    throw SearchFailure("no potentially memorized contexts for domain " +
                        std::string(domain_name(d)) + " in " + ws.pm_contexts().string());
  }
  BuildResult result;
  if (task == Task::decision) {
    std::vector<MemorizationRecord> pool;
    for (auto& r : read_jsonl<MemorizationRecord>(ws.scores())) {
      if (r.domain == d) pool.push_back(std::move(r));
    }
    result = build_decision_dataset(pms, pool, model, config.decision);
  } else {
    result = build_branch_dataset(pms);
  }
  if (config.max_pairs > 0 && result.pairs.size() > config.max_pairs) {
    result.stats.extra["truncated_from"] = static_cast<double>(result.pairs.size());
    result.pairs.resize(config.max_pairs);
  }
  const std::optional<Domain> tag = domain && *domain != config.domain ? domain : std::nullopt;
  save_pairs_jsonl(ws.dataset(task, tag), result.pairs);
  nlohmann::json stats = result.stats;
  stats["digest"] = dataset_digest(result.pairs);
  stats["pairs"] = result.pairs.size();
  write_json(ws.dataset_stats(task, tag), stats);
  return result;
}

EdgeScores stage_attribute(const PipelineConfig& config, const Workspace& ws, Task task,
                           LossKind loss, Direction direction, int ig_steps) {
  (void)config;
  const Model model = Model::load(ws.model());
  const auto pairs = load_pairs_jsonl(ws.dataset(task));
  require(!pairs.empty(), "dataset " + ws.dataset(task).string() + " is empty");
  AttributionConfig ac;
  ac.loss = loss;
  ac.ig_steps = ig_steps;
  ac.direction = direction;
  EdgeScores scores = eap_ig(model, pairs, ac);
  scores.save(ws.edge_scores(task, direction));
  return scores;
}

Circuit stage_find_circuit(const PipelineConfig& config, const Workspace& ws, Task task,
                           Direction direction, Metric metric, double target) {
  const Model model = Model::load(ws.model());
  const auto pairs = load_pairs_jsonl(ws.dataset(task));
  const EdgeScores scores = EdgeScores::load(ws.edge_scores(task, direction));
  require(scores.model_digest == model.digest(),
          "edge scores were computed on a different model (" + scores.model_digest + ")");
  require(scores.dataset_digest == dataset_digest(pairs),
          "edge scores were computed on a different dataset (" + scores.dataset_digest + ")");
  require(scores.config.direction == direction, "edge scores were computed for the other direction");
  const TaskSpec& spec = find_task_spec(task, direction, scores.config.loss, metric);
  const auto ev = evaluator_for(model, pairs);
  CircuitConfig cc;
  cc.loss = spec.loss;
  cc.direction = direction;
  cc.metric = spec.metric;
  cc.task = task;
  cc.target = target;
  cc.refine_window = config.refine_window;
  cc.model_digest = model.digest();
  Circuit c = find_minimal_circuit(ev, scores, cc);
  c.save(ws.circuit(task, direction));
  return c;
}

EvalResult stage_eval(const Workspace& ws, const std::filesystem::path& circuit_file, Task task,
                      Direction direction) {
  const Model model = Model::load(ws.model());
  const Circuit c = Circuit::load(circuit_file);
  const auto pairs = load_pairs_jsonl(ws.dataset(task));
  const auto ev = evaluator_for(model, pairs);
  const std::array<Circuit, 1> one{c};
  EvalResult r = run_cross_task(ev, task, one);
  // Keep only the requested direction.
  std::erase_if(r.sections, [&](const EvalSection& s) { return s.direction != direction; });
  r.title = "Evaluation on the " + std::string(task_name(task)) + " dataset, " +
            std::string(direction_name(direction));
  return r;
}

RandomBaseline stage_random_baseline(const PipelineConfig& config, const Workspace& ws,
                                     const std::filesystem::path& circuit_file) {
  const Model model = Model::load(ws.model());
  const Circuit c = Circuit::load(circuit_file);
  const auto pairs = load_pairs_jsonl(ws.dataset(c.config.task));
  const auto ev = evaluator_for(model, pairs);
  return run_random_baseline(ev, c.edges.size(), config.random_trials,
                             derive_seed(config.seed, "random-circuits"), c.config.metric,
                             c.config.direction, c.faithfulness);
}

EvalResult stage_cross_task(const Workspace& ws, std::span<const std::filesystem::path> circuit_files,
                            Task dataset_task) {
  const Model model = Model::load(ws.model());
  std::vector<Circuit> circuits;
  for (const auto& f : circuit_files) circuits.push_back(Circuit::load(f));
  const auto pairs = load_pairs_jsonl(ws.dataset(dataset_task));
  const auto ev = evaluator_for(model, pairs);
  return run_cross_task(ev, dataset_task, circuits);
}

CrossCorpusResult stage_cross_corpus(const PipelineConfig& config, const Workspace& ws,
                                     const std::filesystem::path& circuit_file) {
  const Model model = Model::load(ws.model());
  const Circuit c = Circuit::load(circuit_file);
  require(c.config.model_digest.empty() || c.config.model_digest == model.digest(),
          "circuit was found on model " + c.config.model_digest);
  const auto summary = read_json(ws.score_summary());
  std::map<Domain, std::vector<ContrastivePair>> datasets;
  std::map<Domain, std::string> skips;
  for (Domain d : all_domains()) {
    if (d == config.domain) continue;
    const std::string name(domain_name(d));
    const int memorized = summary.at("memorized").value(name, 0);
    const int pms = summary.at("pm_contexts").value(name, 0);
    if (memorized == 0) {
      skips[d] = "no memorized samples";
      continue;
    }
    if (pms == 0) {
      skips[d] = "no potentially memorized contexts among " + std::to_string(memorized) +
                 " memorized samples";
      continue;
    }
    BuildResult built;
    try {
      built = stage_build_dataset(config, ws, Task::branch, d);
    } catch (const SearchFailure& e) {
      skips[d] = std::string("no branch pairs: ") + e.what();
      continue;
    }
    datasets[d] = std::move(built.pairs);
  }
  const std::array<NamedCircuit, 1> named{NamedCircuit{circuit_label(c), c.edges}};
  return run_cross_corpus(model, named, datasets, skips);
}

AblationResult stage_ablate(const Workspace& ws, const std::filesystem::path& circuit_file,
                            std::span<const Ablation> methods) {
  const Model model = Model::load(ws.model());
  const Circuit c = Circuit::load(circuit_file);
  const auto pairs = load_pairs_jsonl(ws.dataset(c.config.task));
  const auto ev = evaluator_for(model, pairs);
  return run_ablation_suite(ev, c.config.task, c.edges, methods);
}

std::string stage_export_dot(const Workspace& ws, const std::filesystem::path& circuit_file) {
  const Model model = Model::load(ws.model());
  const Circuit c = Circuit::load(circuit_file);
  return circuit_to_dot(model.graph(), c);
}

void run_all(const PipelineConfig& config, const Workspace& ws) {
  stage_train(config, ws);
  stage_score(config, ws);
  for (Task task : {Task::decision, Task::branch}) stage_build_dataset(config, ws, task);

  std::vector<CircuitSummaryRow> summary;
  std::vector<std::filesystem::path> found;
  nlohmann::json failures = nlohmann::json::array();
  for (Task task : {Task::decision, Task::branch}) {
    for (Direction dir : {Direction::noising, Direction::denoising}) {
      const TaskSpec& spec = default_task_spec(task, dir);
      stage_attribute(config, ws, task, spec.loss, dir, config.ig_steps);
      Circuit c;
      try {
        c = stage_find_circuit(config, ws, task, dir, spec.metric, config.circuit_target);
      } catch (const CircuitSearchFailure& e) {
        // Denoising circuits only feed the cross-task tables; record and go on.
        if (dir == Direction::noising) throw;
        nlohmann::json j{{"task", task_name(task)}, {"direction", direction_name(dir)},
                         {"error", e.what()}, {"probes", nlohmann::json::array()}};
        for (const auto& p : e.transcript()) {
          j["probes"].push_back({{"k", p.k}, {"faithfulness", p.faithfulness}, {"phase", p.phase}});
        }
        failures.push_back(std::move(j));
        continue;
      }
      summary.push_back({circuit_label(c), spec, c.edges.size(), c.edge_fraction, c.faithfulness});
      found.push_back(ws.circuit(task, dir));
    }
  }
  write_json(ws.report("search_failures").string() + ".json", failures);
  const Model model = Model::load(ws.model());
  write_report(ws, "circuits", render_circuit_summary(summary, model.graph().num_edges()));

  const std::array<Ablation, 4> methods{Ablation::paired, Ablation::zero, Ablation::mean_clean,
                                        Ablation::mean_corrupt};
  for (Task task : {Task::decision, Task::branch}) {
    const auto circuit_file = ws.circuit(task, Direction::noising);
    const std::string t(task_name(task));
    write_report(ws, "eval_" + t + "_noising",
                 render(stage_eval(ws, circuit_file, task, Direction::noising)));
    write_report(ws, "random_" + t, render(stage_random_baseline(config, ws, circuit_file)));
    write_report(ws, "cross_task_on_" + t, render(stage_cross_task(ws, found, task)));
    write_report(ws, "ablation_" + t, render(stage_ablate(ws, circuit_file, methods)));
    std::ofstream(ws.report("circuit_" + t + "_noising").string() + ".dot")
        << stage_export_dot(ws, circuit_file);
  }
  write_report(ws, "cross_corpus",
               render(stage_cross_corpus(config, ws, ws.circuit(Task::branch, Direction::noising))));
}

}  // namespace memcirc
