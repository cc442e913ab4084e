#include "memcirc/patch.hpp"

#include <sstream>

#include "memcirc/errors.hpp"

namespace memcirc {

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::paired: return "patching";
    case Ablation::zero: return "zero";
    case Ablation::mean_clean: return "mean-clean";
    case Ablation::mean_corrupt: return "mean-corrupt";
  }
  return "?";
}

Ablation parse_ablation(std::string_view name) {
  for (Ablation a : {Ablation::paired, Ablation::zero, Ablation::mean_clean, Ablation::mean_corrupt}) {
    if (ablation_name(a) == name) return a;
  }
  if (name == "paired") return Ablation::paired;
  throw ContractViolation("unknown ablation '" + std::string(name) + "'");
}

EdgeMask EdgeMask::all(std::size_t n_edges, bool value, Direction direction, Ablation ablation) {
  EdgeMask m;
  m.bits.assign(n_edges, value ? 1 : 0);
  m.direction = direction;
  m.ablation = ablation;
  return m;
}

std::size_t EdgeMask::count_ones() const {
  std::size_t n = 0;
  for (auto b : bits) n += b != 0;
  return n;
}

PairActivations cache_pair(const Model& model, const ContrastivePair& pair) {
  require(pair.clean.size() == pair.corrupt.size(), "pair clean/corrupt lengths differ");
  PairActivations a;
  a.clean_embed = embed_tokens(model, pair.clean);
  a.corrupt_embed = embed_tokens(model, pair.corrupt);
  a.clean = capture_sources(model, pair.clean);
  a.corrupt = capture_sources(model, pair.corrupt);
  return a;
}

SourceActivations mean_activations(const Model& model, std::span<const ContrastivePair> pairs,
                                   Side side) {
  require(!pairs.empty(), "mean_activations: empty dataset");
  const std::size_t len = pairs.front().clean.size();
  SourceActivations sum;
  for (const auto& p : pairs) {
    const auto& tokens = side == Side::clean ? p.clean : p.corrupt;
    require(tokens.size() == len, "mean_activations: mixed sequence lengths");
    SourceActivations acts = capture_sources(model, tokens);
    if (sum.empty()) {
      sum = std::move(acts);
    } else {
      for (std::size_t s = 0; s < sum.size(); ++s) sum[s] += acts[s];
    }
  }
  for (Tensor& t : sum) t *= 1.0 / static_cast<double>(pairs.size());
  return sum;
}

MeanCache mean_cache(const Model& model, std::span<const ContrastivePair> pairs, Side side) {
  std::map<std::size_t, std::vector<ContrastivePair>> groups;
  for (const auto& p : pairs) groups[p.clean.size()].push_back(p);
  MeanCache out;
  for (const auto& [len, group] : groups) out[len] = mean_activations(model, group, side);
  return out;
}

namespace {

const SourceActivations& lookup_mean(const MeanCache* cache, std::size_t len, const char* which) {
  require(cache != nullptr, std::string("run_patched: missing ") + which + " mean cache");
  auto it = cache->find(len);
  require(it != cache->end(), std::string("run_patched: ") + which +
                                  " mean cache has no entry for length " + std::to_string(len));
  return it->second;
}

std::string describe_patched(const Model& model, const EdgeMask& mask) {
  std::ostringstream out;
  std::size_t shown = 0;
  std::size_t total = 0;
  for (std::size_t e = 0; e < mask.bits.size(); ++e) {
    if (mask.bits[e]) continue;
    ++total;
    if (shown < 5) {
      out << (shown ? ", " : "") << model.graph().edge_label(static_cast<std::uint32_t>(e));
      ++shown;
    }
  }
  return std::to_string(total) + " patched edges [" + out.str() + (total > shown ? ", ..." : "") +
         "]";
}

}  // namespace

std::vector<double> run_patched(const Model& model, const PairActivations& acts,
                                const EdgeMask& mask, const AblationValues& ablation) {
  require(mask.bits.size() == model.graph().num_edges(), "edge mask size does not match graph");
  require(!acts.clean.empty() && !acts.corrupt.empty(), "run_patched: missing activation cache");
  const bool noising = mask.direction == Direction::noising;
  const Tensor& base_embed = noising ? acts.clean_embed : acts.corrupt_embed;
  const std::size_t len = base_embed.rows();

  SourceActivations zeros;
  const SourceActivations* donor = nullptr;
  switch (mask.ablation) {
    case Ablation::paired: donor = noising ? &acts.corrupt : &acts.clean; break;
    case Ablation::zero:
      for (const Tensor& t : acts.clean) zeros.push_back(Tensor::zeros_like(t));
      donor = &zeros;
      break;
    case Ablation::mean_clean: donor = &lookup_mean(ablation.mean_clean, len, "clean"); break;
    case Ablation::mean_corrupt: donor = &lookup_mean(ablation.mean_corrupt, len, "corrupt"); break;
  }

  PatchPlan plan{mask.bits, donor};
  try {
    Tape tape;
    FactoredTrace trace = forward_factored(tape, model, base_embed, {&plan, false});
    return last_row(tape.value(trace.logits));
  } catch (const NumericFailure& e) {
    throw NumericFailure(std::string(e.what()) + " while running with " +
                         describe_patched(model, mask));
  }
}

std::vector<double> run_patched(const Model& model, const ContrastivePair& pair,
                                const EdgeMask& mask, const AblationValues& ablation) {
  return run_patched(model, cache_pair(model, pair), mask, ablation);
}

double direct_edge_effect(const Model& model, const PairActivations& acts, std::uint32_t edge,
                          Direction direction, LossKind loss, EvalTokens tokens) {
  const std::size_t E = model.graph().num_edges();
  require(edge < E, "edge index out of range");
  EdgeMask base = EdgeMask::all(E, true, direction);
  EdgeMask single = base;
  single.bits[edge] = 0;
  return loss_value(run_patched(model, acts, single), tokens, loss) -
         loss_value(run_patched(model, acts, base), tokens, loss);
}

}  // namespace memcirc
