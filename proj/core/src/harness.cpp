#include "memcirc/harness.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace memcirc {

namespace {

constexpr std::array<TaskSpec, 10> kRegistry{{
    {Task::decision, Direction::noising, LossKind::logit_diff, Metric::logit_diff, Improvement::up},
    {Task::decision, Direction::noising, LossKind::logit_diff, Metric::logit_mem, Improvement::up},
    {Task::decision, Direction::noising, LossKind::logit_mem, Metric::logit_mem, Improvement::up},
    {Task::decision, Direction::noising, LossKind::logit_mem, Metric::logit_diff, Improvement::up},
    {Task::decision, Direction::denoising, LossKind::logit_diff, Metric::logit_pred, Improvement::up},
    {Task::decision, Direction::denoising, LossKind::logit_diff, Metric::logprob_pred, Improvement::up},
    {Task::decision, Direction::denoising, LossKind::logit_mem, Metric::logit_pred, Improvement::up},
    {Task::decision, Direction::denoising, LossKind::logit_mem, Metric::logprob_pred, Improvement::up},
    {Task::branch, Direction::noising, LossKind::neg_logit_mem, Metric::accuracy_mem, Improvement::down},
    {Task::branch, Direction::denoising, LossKind::neg_logit_mem, Metric::accuracy_pred, Improvement::down},
}};

// Reported-only metrics of the branch task that have a direction but are not
// search targets.
constexpr std::array<TaskSpec, 2> kBranchExtra{{
    {Task::branch, Direction::noising, LossKind::neg_logit_mem, Metric::logit_mem, Improvement::down},
    {Task::branch, Direction::denoising, LossKind::neg_logit_mem, Metric::logit_mem, Improvement::up},
}};

std::string spec_text(Task task, Direction direction, LossKind loss, Metric metric) {
  std::string s;
  s += task_name(task);
  s += "/";
  s += direction_name(direction);
  s += "/";
  s += loss_name(loss);
  s += "/";
  s += metric_name(metric);
  return s;
}

double metric_of(const CircuitEvaluator& ev, const std::vector<std::vector<double>>& logits,
                 Metric metric) {
  return metric_value(logits, ev.tokens(), metric);
}

EvalRow row_from(const CircuitEvaluator& ev, const std::vector<std::vector<double>>& logits,
                 std::span<const Metric> metrics, std::string label, std::size_t edges) {
  EvalRow row;
  row.label = std::move(label);
  row.edges = edges;
  for (Metric m : metrics) row.values.push_back(metric_of(ev, logits, m));
  return row;
}

std::size_t metric_column(const EvalResult& table, Metric metric) {
  for (std::size_t i = 0; i < table.metrics.size(); ++i) {
    if (table.metrics[i] == metric) return i;
  }
  throw ContractViolation("metric " + std::string(metric_name(metric)) + " is not a table column");
}

std::string fmt_opt(const std::optional<double>& v, int decimals) {
  return v ? format_number(*v, decimals) : std::string("n/a");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string arrow(Improvement imp) { return imp == Improvement::up ? "up" : "down"; }

const TaskSpec* lookup_improvement(Task task, Direction direction, Metric metric) {
  for (const auto& s : kRegistry) {
    if (s.task == task && s.direction == direction && s.metric == metric) return &s;
  }
  for (const auto& s : kBranchExtra) {
    if (s.task == task && s.direction == direction && s.metric == metric) return &s;
  }
  return nullptr;
}

}  // namespace

std::span<const TaskSpec> task_registry() { return kRegistry; }

const TaskSpec& find_task_spec(Task task, Direction direction, LossKind loss, Metric metric) {
  for (const auto& s : kRegistry) {
    if (s.task == task && s.direction == direction && s.loss == loss && s.metric == metric) return s;
  }
  throw ContractViolation("no task spec for " + spec_text(task, direction, loss, metric));
}

const TaskSpec& default_task_spec(Task task, Direction direction) {
  if (task == Task::decision) {
    return direction == Direction::noising ? kRegistry[0] : kRegistry[4];
  }
  return direction == Direction::noising ? kRegistry[8] : kRegistry[9];
}

std::vector<Metric> report_metrics(Task task) {
  if (task == Task::decision) {
    return {Metric::logit_diff, Metric::logit_mem, Metric::logit_pred, Metric::logprob_pred};
  }
  return {Metric::accuracy_mem, Metric::accuracy_pred};
}

std::string format_number(double v, int decimals) {
  if (std::isnan(v)) return "nan";
  if (v == 0.0) v = 0.0;  // no "-0.0000"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.starts_with('-') && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string circuit_label(const Circuit& circuit) {
  std::string s;
  s += task_name(circuit.config.task);
  s += " ";
  s += direction_name(circuit.config.direction);
  s += " (" + std::to_string(circuit.edges.size()) + " edges)";
  return s;
}

// ------------------------------------------------------------ evaluation

std::optional<double> section_faithfulness(const EvalResult& table, const EvalSection& section,
                                           double value) {
  const std::size_t c = metric_column(table, section.target_metric);
  const double clean = table.clean.values[c];
  const double corrupt = table.corrupt.values[c];
  // Knock-out semantics: the full circuit reproduces the donor-side run.
  if (section.direction == Direction::noising) return normalized_faithfulness(value, corrupt, clean);
  return normalized_faithfulness(value, clean, corrupt);
}

EvalResult evaluate_circuits(const CircuitEvaluator& evaluator, Task dataset_task,
                             std::span<const NamedCircuit> circuits,
                             std::span<const Direction> directions, std::string title) {
  require(evaluator.size() > 0, "evaluation needs a non-empty dataset");
  const std::size_t n_edges = evaluator.model().graph().num_edges();
  EvalResult out;
  out.title = std::move(title);
  out.metrics = report_metrics(dataset_task);
  out.samples = evaluator.size();
  out.clean = row_from(evaluator, evaluator.clean_logits(), out.metrics, "All edges clean", n_edges);
  out.corrupt =
      row_from(evaluator, evaluator.corrupt_logits(), out.metrics, "All edges corrupted", n_edges);

  for (Direction dir : directions) {
    EvalSection section;
    section.direction = dir;
    section.target_metric = default_task_spec(dataset_task, dir).metric;
    const std::size_t c = metric_column(out, section.target_metric);
    section.target_value = dir == Direction::noising ? out.corrupt.values[c] : out.clean.values[c];
    for (const auto& circuit : circuits) {
      for (auto e : circuit.edges) {
        require(e < n_edges, "circuit " + circuit.name + " has edge " + std::to_string(e) +
                                 " outside the model's " + std::to_string(n_edges) + " edges");
      }
      const auto logits = evaluator.run(evaluator.knockout_mask(circuit.edges, dir));
      EvalRow row = row_from(evaluator, logits, out.metrics, circuit.name, circuit.edges.size());
      row.faithfulness = section_faithfulness(out, section, row.values[c]);
      section.rows.push_back(std::move(row));
    }
    out.sections.push_back(std::move(section));
  }
  return out;
}

EvalResult run_cross_task(const CircuitEvaluator& evaluator, Task dataset_task,
                          std::span<const Circuit> circuits) {
  const std::string digest = evaluator.model().digest();
  std::vector<NamedCircuit> named;
  for (const auto& c : circuits) {
    if (!c.config.model_digest.empty() && c.config.model_digest != digest) {
      throw ContractViolation("circuit " + circuit_label(c) + " was found on model " +
                              c.config.model_digest + ", evaluating on " + digest);
    }
    named.push_back({circuit_label(c), c.edges});
  }
  const std::array<Direction, 2> dirs{Direction::noising, Direction::denoising};
  std::string title = "Circuits applied to the ";
  title += task_name(dataset_task);
  title += " dataset";
  return evaluate_circuits(evaluator, dataset_task, named, dirs, std::move(title));
}

CrossCorpusResult run_cross_corpus(const Model& model, std::span<const NamedCircuit> circuits,
                                   const std::map<Domain, std::vector<ContrastivePair>>& datasets,
                                   const std::map<Domain, std::string>& skip_reasons) {
  CrossCorpusResult out;
  const std::array<Direction, 2> dirs{Direction::noising, Direction::denoising};
  std::map<Domain, bool> seen;
  for (const auto& [domain, pairs] : datasets) seen[domain] = true;
  for (const auto& [domain, reason] : skip_reasons) seen[domain] = true;
  for (const auto& [domain, unused] : seen) {
    DomainEval d;
    d.domain = domain;
    auto it = datasets.find(domain);
    if (it == datasets.end() || it->second.empty()) {
      auto r = skip_reasons.find(domain);
      d.skip_reason = r != skip_reasons.end() ? r->second : std::string("no branch pairs");
      out.domains.push_back(std::move(d));
      continue;
    }
    for (const auto& p : it->second) {
      require(p.task == Task::branch, "cross-corpus datasets must be branch pairs");
    }
    CircuitEvaluator ev(model, it->second);
    d.result = evaluate_circuits(ev, Task::branch, circuits, dirs, std::string(domain_name(domain)));
    out.domains.push_back(std::move(d));
  }
  return out;
}

AblationResult run_ablation_suite(const CircuitEvaluator& evaluator, Task task,
                                  std::span<const std::uint32_t> circuit,
                                  std::span<const Ablation> methods) {
  require(evaluator.size() > 0, "ablation suite needs a non-empty dataset");
  MeanCache mean_clean;
  MeanCache mean_corrupt;
  for (Ablation a : methods) {
    if (a == Ablation::mean_clean && mean_clean.empty()) {
      mean_clean = mean_cache(evaluator.model(), evaluator.pairs(), Side::clean);
    }
    if (a == Ablation::mean_corrupt && mean_corrupt.empty()) {
      mean_corrupt = mean_cache(evaluator.model(), evaluator.pairs(), Side::corrupt);
    }
  }
  const AblationValues values{&mean_clean, &mean_corrupt};

  AblationResult out;
  out.title = std::string("Ablation methods on the ") + std::string(task_name(task)) + " dataset";
  for (Direction dir : {Direction::noising, Direction::denoising}) {
    AblationRow row;
    row.direction = dir;
    row.metric = default_task_spec(task, dir).metric;
    for (Ablation a : methods) {
      const auto rep = evaluator.faithfulness(circuit, row.metric, dir, a, values);
      row.clean_value = rep.clean_value;
      row.corrupt_value = rep.corrupt_value;
      row.cells.push_back({a, rep.circuit_value, rep.normalized});
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

RandomBaseline run_random_baseline(const CircuitEvaluator& evaluator, std::size_t k, int trials,
                                   std::uint64_t seed, Metric metric, Direction direction,
                                   double discovered_faithfulness) {
  RandomBaseline out;
  out.k = k;
  out.trials = trials;
  out.seed = seed;
  out.metric = metric;
  out.direction = direction;
  out.discovered = discovered_faithfulness;
  const auto circuits = random_circuits(evaluator.model().graph().num_edges(), k, trials, seed);
  double sum = 0.0;
  for (const auto& c : circuits) {
    const auto rep = evaluator.faithfulness(c.edges, metric, direction);
    const double f = rep.normalized.value_or(0.0);
    out.faithfulness.push_back(f);
    sum += std::abs(f);
  }
  out.mean_abs = circuits.empty() ? 0.0 : sum / static_cast<double>(circuits.size());
  return out;
}

// ------------------------------------------------------------ rendering

Report render(const EvalResult& t) {
  Report r;
  std::ostringstream csv;
  csv << "section,label,edges";
  for (Metric m : t.metrics) csv << ',' << metric_name(m);
  csv << ",target_metric,faithfulness\n";
  auto csv_row = [&](const std::string& section, const EvalRow& row, const std::string& target) {
    csv << section << ',' << csv_field(row.label) << ',' << row.edges;
    for (double v : row.values) csv << ',' << format_number(v, 6);
    csv << ',' << target << ',' << (row.faithfulness ? format_number(*row.faithfulness, 6) : "")
        << '\n';
  };
  csv_row("baseline", t.clean, "");
  csv_row("baseline", t.corrupt, "");
  for (const auto& s : t.sections) {
    for (const auto& row : s.rows) {
      csv_row(std::string(direction_name(s.direction)), row, std::string(metric_name(s.target_metric)));
    }
  }
  r.csv = csv.str();

  std::ostringstream md;
  md << "## " << t.title << "\n\n";
  md << t.samples << " samples.\n\n";
  md << "| Circuit | Edges |";
  for (Metric m : t.metrics) md << ' ' << metric_name(m) << " |";
  md << " Faithfulness |\n|---|---:|";
  for (std::size_t i = 0; i < t.metrics.size(); ++i) md << "---:|";
  md << "---:|\n";
  auto md_row = [&](const EvalRow& row, const EvalSection* s) {
    md << "| " << row.label << " | " << row.edges << " |";
    for (std::size_t i = 0; i < row.values.size(); ++i) {
      const bool target = s != nullptr && t.metrics[i] == s->target_metric;
      const std::string v = format_number(row.values[i], 2);
      md << ' ' << (target ? "**" + v + "**" : v) << " |";
    }
    md << ' ' << (row.faithfulness ? format_number(*row.faithfulness, 2) : "") << " |\n";
  };
  md_row(t.clean, nullptr);
  md_row(t.corrupt, nullptr);
  for (const auto& s : t.sections) {
    md << "| *" << direction_name(s.direction) << "*: target " << metric_name(s.target_metric)
       << " = " << format_number(s.target_value, 2) << " | |";
    for (std::size_t i = 0; i < t.metrics.size(); ++i) md << " |";
    md << " |\n";
    for (const auto& row : s.rows) md_row(row, &s);
  }
  r.markdown = md.str();
  return r;
}

Report render(const CrossCorpusResult& t) {
  Report r;
  std::ostringstream csv;
  csv << "domain,status,section,label,edges,accuracy_mem,accuracy_pred,target_metric,faithfulness\n";
  for (const auto& d : t.domains) {
    const std::string dn(domain_name(d.domain));
    if (d.skip_reason) {
      csv << dn << ",skipped,,," << csv_field(*d.skip_reason) << ",,,,\n";
      continue;
    }
    const auto& e = d.result;
    auto row = [&](const std::string& section, const EvalRow& rw, const std::string& target) {
      csv << dn << ",ok," << section << ',' << csv_field(rw.label) << ',' << rw.edges;
      for (double v : rw.values) csv << ',' << format_number(v, 6);
      csv << ',' << target << ',' << (rw.faithfulness ? format_number(*rw.faithfulness, 6) : "")
          << '\n';
    };
    row("baseline", e.clean, "");
    row("baseline", e.corrupt, "");
    for (const auto& s : e.sections) {
      for (const auto& rw : s.rows) {
        row(std::string(direction_name(s.direction)), rw, std::string(metric_name(s.target_metric)));
      }
    }
  }
  r.csv = csv.str();

  std::ostringstream md;
  md << "## Cross-corpus\n\n";
  std::vector<const DomainEval*> shown;
  for (const auto& d : t.domains) {
    if (!d.skip_reason) shown.push_back(&d);
  }
  if (!shown.empty()) {
    md << "| Circuit |";
    for (const auto* d : shown) {
      md << ' ' << domain_name(d->domain) << " acc_mem | " << domain_name(d->domain) << " acc_pred |";
    }
    md << "\n|---|";
    for (std::size_t i = 0; i < shown.size(); ++i) md << "---:|---:|";
    md << '\n';
    const EvalResult& first = shown.front()->result;
    auto line = [&](const std::string& label, auto&& pick) {
      md << "| " << label << " |";
      for (const auto* d : shown) {
        const EvalRow& rw = pick(d->result);
        md << ' ' << format_number(rw.values[0], 2) << " | " << format_number(rw.values[1], 2) << " |";
      }
      md << '\n';
    };
    line(first.clean.label, [](const EvalResult& e) -> const EvalRow& { return e.clean; });
    line(first.corrupt.label, [](const EvalResult& e) -> const EvalRow& { return e.corrupt; });
    for (std::size_t s = 0; s < first.sections.size(); ++s) {
      md << "| *" << direction_name(first.sections[s].direction) << "* |";
      for (std::size_t i = 0; i < shown.size(); ++i) md << " | |";
      md << '\n';
      for (std::size_t k = 0; k < first.sections[s].rows.size(); ++k) {
        line(first.sections[s].rows[k].label,
             [&](const EvalResult& e) -> const EvalRow& { return e.sections[s].rows[k]; });
      }
    }
    md << "\nSamples:";
    for (const auto* d : shown) md << ' ' << domain_name(d->domain) << '=' << d->result.samples;
    md << '\n';
  }
  for (const auto& d : t.domains) {
    if (d.skip_reason) md << "\nSkipped " << domain_name(d.domain) << ": " << *d.skip_reason << '\n';
  }
  r.markdown = md.str();
  return r;
}

Report render(const AblationResult& t) {
  Report r;
  std::ostringstream csv;
  csv << "direction,metric,improvement,ablation,value,faithfulness,clean_value,corrupt_value\n";
  for (const auto& row : t.rows) {
    for (const auto& c : row.cells) {
      csv << direction_name(row.direction) << ',' << metric_name(row.metric) << ',';
      const TaskSpec* spec = nullptr;
      for (Task task : {Task::decision, Task::branch}) {
        if (!spec) spec = lookup_improvement(task, row.direction, row.metric);
      }
      csv << (spec ? arrow(spec->improvement) : "") << ',' << ablation_name(c.ablation) << ','
          << format_number(c.value, 6) << ','
          << (c.faithfulness ? format_number(*c.faithfulness, 6) : "") << ','
          << format_number(row.clean_value, 6) << ',' << format_number(row.corrupt_value, 6) << '\n';
    }
  }
  r.csv = csv.str();

  std::ostringstream md;
  md << "## " << t.title << "\n\n";
  if (!t.rows.empty()) {
    md << "| Direction | Metric |";
    for (const auto& c : t.rows.front().cells) md << ' ' << ablation_name(c.ablation) << " |";
    md << "\n|---|---|";
    for (std::size_t i = 0; i < t.rows.front().cells.size(); ++i) md << "---:|";
    md << '\n';
    for (const auto& row : t.rows) {
      md << "| " << direction_name(row.direction) << " | " << metric_name(row.metric) << " |";
      for (const auto& c : row.cells) {
        md << ' ' << format_number(c.value, 2) << " (F " << fmt_opt(c.faithfulness, 2) << ") |";
      }
      md << '\n';
    }
    md << "\nClean / corrupt reference per row:";
    for (const auto& row : t.rows) {
      md << ' ' << direction_name(row.direction) << ' ' << format_number(row.clean_value, 2) << " / "
         << format_number(row.corrupt_value, 2) << ';';
    }
    md << "\nF is measured against the same ablation applied to every edge.\n";
  }
  r.markdown = md.str();
  return r;
}

Report render_circuit_summary(std::span<const CircuitSummaryRow> rows, std::size_t total_edges) {
  Report r;
  std::ostringstream csv;
  csv << "name,task,direction,loss,metric,improvement,edges,edge_fraction,faithfulness\n";
  std::ostringstream md;
  md << "## Circuits\n\n" << total_edges << " edges in the model.\n\n";
  md << "| Circuit | Loss | Metric | Edges | % of edges | Faithfulness |\n";
  md << "|---|---|---|---:|---:|---:|\n";
  for (const auto& row : rows) {
    csv << csv_field(row.name) << ',' << task_name(row.spec.task) << ','
        << direction_name(row.spec.direction) << ',' << loss_name(row.spec.loss) << ','
        << metric_name(row.spec.metric) << ',' << arrow(row.spec.improvement) << ',' << row.edges
        << ',' << format_number(row.edge_fraction, 6) << ',' << format_number(row.faithfulness, 6)
        << '\n';
    md << "| " << row.name << " | " << loss_name(row.spec.loss) << " | " << metric_name(row.spec.metric)
       << (row.spec.improvement == Improvement::up ? " (up)" : " (down)") << " | " << row.edges
       << " | " << format_number(100.0 * row.edge_fraction, 1) << " | "
       << format_number(row.faithfulness, 2) << " |\n";
  }
  r.csv = csv.str();
  r.markdown = md.str();
  return r;
}

Report render(const RandomBaseline& b) {
  Report r;
  std::ostringstream csv;
  csv << "trial,k,faithfulness\n";
  for (std::size_t i = 0; i < b.faithfulness.size(); ++i) {
    csv << i << ',' << b.k << ',' << format_number(b.faithfulness[i], 6) << '\n';
  }
  r.csv = csv.str();
  std::ostringstream md;
  md << "## Random circuits\n\n";
  md << b.trials << " random circuits of " << b.k << " edges (seed " << b.seed << "), "
     << direction_name(b.direction) << ", " << metric_name(b.metric) << ".\n\n";
  md << "| | Faithfulness |\n|---|---:|\n";
  md << "| Discovered circuit | " << format_number(b.discovered, 2) << " |\n";
  md << "| Random, mean abs | " << format_number(b.mean_abs, 2) << " |\n";
  r.markdown = md.str();
  return r;
}

}  // namespace memcirc
