// memcirc: command-line front end over the file-based pipeline stages.

#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memcirc/allocator.hpp"
#include "memcirc/pipeline.hpp"

using namespace memcirc;

namespace {

enum ExitCode : int { kOk = 0, kContract = 2, kNumeric = 3, kSearch = 4 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "memcirc_out";

  PipelineConfig load() const {
    PipelineConfig c = config.empty() ? PipelineConfig{} : load_pipeline_config(config);
    if (seed) {
      // --seed overrides the file; derived seeds follow.
      c.set_seed(*seed);
    }
    c.validate();
    return c;
  }
};

std::filesystem::path circuit_path(const Workspace& ws, const std::string& file, const std::string& task,
                                   const std::string& direction) {
  if (!file.empty()) return file;
  return ws.circuit(parse_task(task), parse_direction(direction));
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  memcirc::retain_freed_memory();
  CLI::App app{"Memorization circuit discovery on toy transformers"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "run seed, overrides the config");
  app.add_option("--out", g.out, "working directory for all stage files");

  auto* train = app.add_subcommand("train", "generate corpora and train until the memorization target");
  auto* score = app.add_subcommand("score", "score every sample and search divergence points");

  std::string task = "decision";
  std::string direction = "noising";
  std::string domain;
  auto* build = app.add_subcommand("build-dataset", "build contrastive pairs");
  build->add_option("--task", task)->check(CLI::IsMember({"decision", "branch"}));
  build->add_option("--domain", domain, "corpus domain (default: the run's domain)");

  std::string loss;
  int ig_steps = -1;
  auto* attribute = app.add_subcommand("attribute", "EAP-IG edge scores");
  attribute->add_option("--task", task)->check(CLI::IsMember({"decision", "branch"}));
  attribute->add_option("--loss", loss)->check(CLI::IsMember({"logit_mem", "logit_diff", "neg_logit_mem"}));
  attribute->add_option("--ig-steps", ig_steps)->check(CLI::PositiveNumber);
  attribute->add_option("--direction", direction)->check(CLI::IsMember({"noising", "denoising"}));

  std::optional<double> target;
  std::string metric;
  auto* find = app.add_subcommand("find-circuit", "smallest top-k circuit reaching the target");
  find->add_option("--task", task)->check(CLI::IsMember({"decision", "branch"}));
  find->add_option("--direction", direction)->check(CLI::IsMember({"noising", "denoising"}));
  find->add_option("--metric", metric);
  find->add_option("--target", target);

  std::string circuit_file;
  auto* eval = app.add_subcommand("eval", "evaluate a circuit against the baselines");
  eval->add_option("--circuit", circuit_file)->check(CLI::ExistingFile);
  eval->add_option("--task", task)->check(CLI::IsMember({"decision", "branch"}));
  eval->add_option("--direction", direction)->check(CLI::IsMember({"noising", "denoising"}));

  auto* random = app.add_subcommand("random-baseline", "random circuits of the discovered size");
  random->add_option("--circuit", circuit_file)->check(CLI::ExistingFile);
  random->add_option("--task", task)->check(CLI::IsMember({"decision", "branch"}));

  std::vector<std::string> circuit_files;
  auto* cross_task = app.add_subcommand("cross-task", "apply circuits to a task's dataset");
  cross_task->add_option("--circuit", circuit_files)->check(CLI::ExistingFile);
  cross_task->add_option("--task", task, "dataset task")->check(CLI::IsMember({"decision", "branch"}));

  auto* cross_corpus = app.add_subcommand("cross-corpus", "branch circuit on the other domains");
  cross_corpus->add_option("--circuit", circuit_file)->check(CLI::ExistingFile);

  std::vector<std::string> methods;
  auto* ablate = app.add_subcommand("ablate", "alternative ablations of a circuit");
  ablate->add_option("--circuit", circuit_file)->check(CLI::ExistingFile);
  ablate->add_option("--task", task)->check(CLI::IsMember({"decision", "branch"}));
  ablate->add_option("--method", methods, "repeatable; default: all")
      ->check(CLI::IsMember({"zero", "mean-clean", "mean-corrupt"}));

  std::string dot_out;
  auto* dot = app.add_subcommand("export-dot", "Graphviz rendering of a circuit");
  dot->add_option("--circuit", circuit_file)->check(CLI::ExistingFile);
  dot->add_option("--task", task)->check(CLI::IsMember({"decision", "branch"}));
  dot->add_option("--direction", direction)->check(CLI::IsMember({"noising", "denoising"}));
  dot->add_option("-o,--output", dot_out, "file (default: stdout)");

  auto* all = app.add_subcommand("run-all", "every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kContract;
  }

  try {
    const PipelineConfig config = g.load();
    const Workspace ws(g.out);

    if (*train) {
      print_json(stage_train(config, ws));
    } else if (*score) {
      print_json(stage_score(config, ws));
    } else if (*build) {
      std::optional<Domain> d;
      if (!domain.empty()) d = parse_domain(domain);
      const auto r = stage_build_dataset(config, ws, parse_task(task), d);
      print_json(r.stats);
    } else if (*attribute) {
      const Task t = parse_task(task);
      const Direction dir = parse_direction(direction);
      const LossKind k = loss.empty() ? default_task_spec(t, dir).loss : parse_loss(loss);
      const auto s = stage_attribute(config, ws, t, k, dir, ig_steps > 0 ? ig_steps : config.ig_steps);
      std::cout << "wrote " << ws.edge_scores(t, dir).string() << " (" << s.scores.size() << " edges)\n";
    } else if (*find) {
      const Task t = parse_task(task);
      const Direction dir = parse_direction(direction);
      const Metric m = metric.empty() ? default_task_spec(t, dir).metric : parse_metric(metric);
      const Circuit c = stage_find_circuit(config, ws, t, dir, m, target.value_or(config.circuit_target));
      std::cout << "wrote " << ws.circuit(t, dir).string() << ": " << c.edges.size() << " edges, "
                << format_number(100.0 * c.edge_fraction, 2) << "% of edges, faithfulness "
                << format_number(c.faithfulness, 4) << '\n';
    } else if (*eval) {
      const Task t = parse_task(task);
      const Direction dir = parse_direction(direction);
      const auto file = circuit_path(ws, circuit_file, task, direction);
      const Report r = render(stage_eval(ws, file, t, dir));
      write_report(ws, "eval_" + task + "_" + direction, r);
      std::cout << r.markdown;
    } else if (*random) {
      const auto file = circuit_path(ws, circuit_file, task, "noising");
      const Report r = render(stage_random_baseline(config, ws, file));
      write_report(ws, "random_" + task, r);
      std::cout << r.markdown;
    } else if (*cross_task) {
      std::vector<std::filesystem::path> files(circuit_files.begin(), circuit_files.end());
      if (files.empty()) {
        for (Task t : {Task::decision, Task::branch}) files.push_back(ws.circuit(t, Direction::noising));
      }
      const Report r = render(stage_cross_task(ws, files, parse_task(task)));
      write_report(ws, "cross_task_on_" + task, r);
      std::cout << r.markdown;
    } else if (*cross_corpus) {
      const auto file = circuit_path(ws, circuit_file, "branch", "noising");
      const Report r = render(stage_cross_corpus(config, ws, file));
      write_report(ws, "cross_corpus", r);
      std::cout << r.markdown;
    } else if (*ablate) {
      std::vector<Ablation> list{Ablation::paired};
      if (methods.empty()) methods = {"zero", "mean-clean", "mean-corrupt"};
      for (const auto& m : methods) list.push_back(parse_ablation(m));
      const auto file = circuit_path(ws, circuit_file, task, "noising");
      const Report r = render(stage_ablate(ws, file, list));
      write_report(ws, "ablation_" + task, r);
      std::cout << r.markdown;
    } else if (*dot) {
      const std::string text = stage_export_dot(ws, circuit_path(ws, circuit_file, task, direction));
      if (dot_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream(dot_out) << text;
      }
    } else if (*all) {
      run_all(config, ws);
      std::cout << "pipeline complete: " << ws.dir().string() << '\n';
    }
    return kOk;
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return kContract;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const SearchFailure& e) {
    std::cerr << "search failure: " << e.what() << '\n';
    return kSearch;
  } catch (const std::exception& e) {
    // I/O and JSON errors surface as bad input.
    std::cerr << "error: " << e.what() << '\n';
    return kContract;
  }
}
