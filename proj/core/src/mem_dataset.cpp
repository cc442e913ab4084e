#include "memcirc/mem_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "memcirc/digest.hpp"
#include "memcirc/errors.hpp"
#include "memcirc/trainer.hpp"

namespace memcirc {

double memorization_score(std::span<const int> generated, std::span<const int> reference) {
  require(generated.size() == reference.size(), "memorization_score: length mismatch");
  require(!reference.empty(), "memorization_score: empty sequences");
  std::size_t same = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) same += generated[i] == reference[i];
  return static_cast<double>(same) / static_cast<double>(reference.size());
}

double bleu(std::span<const int> candidate, std::span<const int> reference) {
  require(!candidate.empty() && !reference.empty(), "bleu: empty input");
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<int>, long> ref_counts;
    for (std::size_t i = 0; i + n <= reference.size(); ++i) {
      ++ref_counts[std::vector<int>(reference.begin() + i, reference.begin() + i + n)];
    }
    std::map<std::vector<int>, long> cand_counts;
    long total = 0;
    for (std::size_t i = 0; i + n <= candidate.size(); ++i) {
      ++cand_counts[std::vector<int>(candidate.begin() + i, candidate.begin() + i + n)];
      ++total;
    }
    long matched = 0;
    for (const auto& [gram, count] : cand_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    if (n == 1 && matched == 0) return 0.0;
    const double p = matched > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                                 : 1.0 / static_cast<double>(total + 1);
    log_sum += std::log(p);
  }
  const auto c = static_cast<double>(candidate.size());
  const auto r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

// ------------------------------------------------------------ records

void to_json(nlohmann::json& j, const MemorizationRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"domain", domain_name(r.domain)},
                     {"context", r.context},
                     {"continuation", r.continuation},
                     {"generation", r.generation},
                     {"score", r.score}};
}

void from_json(const nlohmann::json& j, MemorizationRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.domain = parse_domain(j.at("domain").get<std::string>());
  r.context = j.at("context").get<std::vector<int>>();
  r.continuation = j.at("continuation").get<std::vector<int>>();
  r.generation = j.at("generation").get<std::vector<int>>();
  r.score = j.at("score").get<double>();
}

std::vector<MemorizationRecord> score_samples(const Model& model, std::span<const Sample> samples) {
  // A teacher-forced pass settles every fully memorized sample; the rest are
  // decoded greedily.
  const std::vector<bool> exact = memorized_mask(model, samples);
  std::vector<MemorizationRecord> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    require(s.tokens.size() == kSampleLength, "sample " + s.id + " is not 100 tokens");
    MemorizationRecord r;
    r.id = s.id;
    r.domain = s.domain;
    r.context.assign(s.tokens.begin(), s.tokens.begin() + kContextLength);
    r.continuation.assign(s.tokens.begin() + kContextLength, s.tokens.end());
    if (exact[i]) {
      r.generation = r.continuation;
    } else {
      r.generation = generate_greedy(model, r.context,
                                     static_cast<int>(kSampleLength - kContextLength));
    }
    r.score = memorization_score(r.generation, r.continuation);
    out.push_back(std::move(r));
  }
  return out;
}

void to_json(nlohmann::json& j, const PMContext& p) {
  j = nlohmann::json{{"sample_id", p.sample_id}, {"domain", domain_name(p.domain)},
                     {"context", p.context},     {"divergence", p.divergence},
                     {"t_mem", p.t_mem},         {"t_pred", p.t_pred},
                     {"bleu", p.bleu}};
  j["successor"] = p.successor ? nlohmann::json(*p.successor) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, PMContext& p) {
  p.sample_id = j.at("sample_id").get<std::string>();
  p.domain = parse_domain(j.at("domain").get<std::string>());
  p.context = j.at("context").get<std::vector<int>>();
  p.divergence = j.at("divergence").get<std::size_t>();
  p.t_mem = j.at("t_mem").get<int>();
  p.t_pred = j.at("t_pred").get<int>();
  p.bleu = j.at("bleu").get<double>();
  if (j.contains("successor") && !j["successor"].is_null()) p.successor = j["successor"].get<int>();
}

std::optional<PMContext> find_divergence(const MemorizationRecord& record, const Model& model,
                                         const DivergenceOptions& options) {
  require(!record.context.empty(), "find_divergence: empty context");
  require(options.min_context >= 1, "min_context must be >= 1");
  std::vector<int> full = record.context;
  full.insert(full.end(), record.continuation.begin(), record.continuation.end());
  const std::size_t k = record.context.size();
  // Row i of one causal pass predicts token i + 1, i.e. the next token after
  // the context trimmed to length i + 1.
  const Tensor logits = forward_logits(model, record.context);
  for (std::size_t c = k - 1; c >= options.min_context; --c) {
    const int t_mem = full[c];
    const int t_pred = argmax(logits.row(c - 1));
    if (t_pred == t_mem) continue;
    const std::span<const int> ctx(full.data(), c);
    const std::span<const int> reference(full.data() + c, full.size() - c);
    const auto gen = generate_greedy(model, ctx, static_cast<int>(reference.size()));
    const double score = bleu(gen, reference);
    if (score >= options.threshold) continue;
    PMContext pm;
    pm.sample_id = record.id;
    pm.domain = record.domain;
    pm.context.assign(ctx.begin(), ctx.end());
    pm.divergence = c - 1;
    pm.t_mem = t_mem;
    pm.t_pred = t_pred;
    if (c + 1 < full.size()) pm.successor = full[c + 1];
    pm.bleu = score;
    return pm;
  }
  return std::nullopt;
}

// ------------------------------------------------------------ pairs

std::string_view task_name(Task t) { return t == Task::decision ? "decision" : "branch"; }

Task parse_task(std::string_view name) {
  if (name == "decision") return Task::decision;
  if (name == "branch") return Task::branch;
  throw ContractViolation("unknown task '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const ContrastivePair& p) {
  j = nlohmann::json{{"task", task_name(p.task)}, {"clean", p.clean},   {"corrupt", p.corrupt},
                     {"t_mem", p.t_mem},          {"t_pred", p.t_pred}};
  j["target"] = p.target ? nlohmann::json(*p.target) : nlohmann::json(nullptr);
  j["src_ids"] = p.src_ids;
}

void from_json(const nlohmann::json& j, ContrastivePair& p) {
  p.task = parse_task(j.at("task").get<std::string>());
  p.clean = j.at("clean").get<std::vector<int>>();
  p.corrupt = j.at("corrupt").get<std::vector<int>>();
  p.t_mem = j.at("t_mem").get<int>();
  p.t_pred = j.at("t_pred").get<int>();
  p.target.reset();
  if (j.contains("target") && !j["target"].is_null()) p.target = j["target"].get<int>();
  p.src_ids = j.value("src_ids", std::vector<std::string>{});
  require(p.clean.size() == p.corrupt.size(), "pair clean/corrupt lengths differ");
}

void to_json(nlohmann::json& j, const BuildStats& s) {
  j = nlohmann::json{{"candidates", s.candidates},
                     {"emitted", s.emitted},
                     {"rejections", s.rejections}};
  if (!s.extra.empty()) j["extra"] = s.extra;
}

namespace {

std::string rejection_summary(const BuildStats& s) {
  std::ostringstream out;
  out << "no pairs survived (" << s.candidates << " candidates;";
  for (const auto& [name, count] : s.rejections) out << ' ' << name << '=' << count;
  out << ')';
  return out.str();
}

// Final residual-stream state (the logits destination input) per position.
Tensor final_residual(const Model& model, std::span<const int> tokens) {
  Tape tape;
  FactoredTrace trace =
      forward_factored(tape, model, embed_tokens(model, tokens), {nullptr, true});
  return tape.value(trace.dest_inputs[model.graph().logits_dest()]);
}

std::vector<double> mean_rows(const Tensor& x, std::size_t count) {
  std::vector<double> out(x.cols(), 0.0);
  for (std::size_t r = 0; r < count; ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
  }
  for (double& v : out) v /= static_cast<double>(count);
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

struct PoolEntry {
  const MemorizationRecord* record;
  std::vector<int> next_argmax;   // argmax after prefix length i + 1
  Tensor prefix_sums;             // row i: sum of residual rows 0..i
};

}  // namespace

BuildResult build_decision_dataset(std::span<const PMContext> pm,
                                   std::span<const MemorizationRecord> pool, const Model& model,
                                   const DecisionOptions& options) {
  BuildResult result;
  BuildStats& stats = result.stats;
  stats.candidates = pm.size();
  for (const char* key : {"clean_argmax", "no_pool_prefix", "corrupt_argmax"}) {
    stats.rejections[key] = 0;
  }

  std::vector<PoolEntry> entries;
  std::size_t pool_filtered = 0;
  for (const MemorizationRecord& r : pool) {
    if (r.score >= options.pool_max_score) {
      ++pool_filtered;
      continue;
    }
    PoolEntry e;
    e.record = &r;
    const Tensor logits = forward_logits(model, r.context);
    for (std::size_t i = 0; i < logits.rows(); ++i) e.next_argmax.push_back(argmax(logits.row(i)));
    const Tensor resid = final_residual(model, r.context);
    e.prefix_sums = resid;
    for (std::size_t i = 1; i < resid.rows(); ++i) {
      auto prev = e.prefix_sums.row(i - 1);
      auto cur = e.prefix_sums.row(i);
      for (std::size_t c = 0; c < cur.size(); ++c) cur[c] += prev[c];
    }
    entries.push_back(std::move(e));
  }
  stats.extra["pool_size"] = static_cast<double>(entries.size());
  stats.extra["pool_filtered_by_score"] = static_cast<double>(pool_filtered);

  for (const PMContext& p : pm) {
    const std::size_t c = p.context.size();
    const Tensor clean_logits = forward_logits(model, p.context);
    const int clean_pred = argmax(clean_logits.row(c - 1));
    if (clean_pred != p.t_pred || p.t_pred == p.t_mem) {
      ++stats.rejections["clean_argmax"];
      continue;
    }
    const std::vector<double> clean_embedding = mean_rows(final_residual(model, p.context), c);
    const PoolEntry* best = nullptr;
    double best_sim = -2.0;
    bool any_prefix = false;
    for (const PoolEntry& e : entries) {
      if (e.record->id == p.sample_id || e.record->context.size() < c) continue;
      if (std::equal(p.context.begin(), p.context.end(), e.record->context.begin())) continue;
      any_prefix = true;
      if (e.next_argmax[c - 1] != p.t_mem) continue;
      std::vector<double> emb(e.prefix_sums.row(c - 1).begin(), e.prefix_sums.row(c - 1).end());
      for (double& v : emb) v /= static_cast<double>(c);
      const double sim = cosine(clean_embedding, emb);
      if (sim > best_sim) {
        best_sim = sim;
        best = &e;
      }
    }
    if (!any_prefix) {
      ++stats.rejections["no_pool_prefix"];
      continue;
    }
    if (!best) {
      ++stats.rejections["corrupt_argmax"];
      continue;
    }
    ContrastivePair pair;
    pair.task = Task::decision;
    pair.clean = p.context;
    pair.corrupt.assign(best->record->context.begin(), best->record->context.begin() + c);
    pair.t_mem = p.t_mem;
    pair.t_pred = p.t_pred;
    pair.src_ids = {p.sample_id, best->record->id};
    result.pairs.push_back(std::move(pair));
  }
  stats.emitted = result.pairs.size();
  if (result.pairs.empty()) throw SearchFailure("decision dataset: " + rejection_summary(stats));
  return result;
}

BuildResult build_branch_dataset(std::span<const PMContext> pm) {
  require(!pm.empty(), "build_branch_dataset: no PM contexts");
  BuildResult result;
  result.stats.candidates = pm.size();
  result.stats.rejections["no_successor"] = 0;
  for (const PMContext& p : pm) {
    if (!p.successor) {
      ++result.stats.rejections["no_successor"];
      continue;
    }
    ContrastivePair pair;
    pair.task = Task::branch;
    pair.clean = p.context;
    pair.clean.push_back(p.t_mem);
    pair.corrupt = p.context;
    pair.corrupt.push_back(p.t_pred);
    pair.t_mem = p.t_mem;
    pair.t_pred = p.t_pred;
    pair.target = *p.successor;
    pair.src_ids = {p.sample_id};
    result.pairs.push_back(std::move(pair));
  }
  result.stats.emitted = result.pairs.size();
  if (result.pairs.empty()) throw SearchFailure("branch dataset: " + rejection_summary(result.stats));
  return result;
}

void save_pairs_jsonl(const std::filesystem::path& path, std::span<const ContrastivePair> pairs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const ContrastivePair& p : pairs) out << nlohmann::json(p).dump() << '\n';
}

std::vector<ContrastivePair> load_pairs_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<ContrastivePair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line).get<ContrastivePair>());
  }
  return out;
}

std::string dataset_digest(std::span<const ContrastivePair> pairs) {
  Fnv1a h;
  for (const ContrastivePair& p : pairs) h.update(nlohmann::json(p).dump());
  return h.hex();
}

}  // namespace memcirc
