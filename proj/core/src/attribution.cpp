#include "memcirc/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "memcirc/errors.hpp"
#include "memcirc/patch.hpp"

namespace memcirc {

void to_json(nlohmann::json& j, const AttributionConfig& c) {
  j = nlohmann::json{{"loss", loss_name(c.loss)},
                     {"ig_steps", c.ig_steps},
                     {"direction", direction_name(c.direction)},
                     {"ranking", c.ranking == Ranking::absolute ? "absolute" : "signed"}};
}

void from_json(const nlohmann::json& j, AttributionConfig& c) {
  AttributionConfig d;
  c.loss = parse_loss(j.value("loss", std::string(loss_name(d.loss))));
  c.ig_steps = j.value("ig_steps", d.ig_steps);
  c.direction = parse_direction(j.value("direction", std::string(direction_name(d.direction))));
  const std::string ranking = j.value("ranking", std::string("absolute"));
  require(ranking == "absolute" || ranking == "signed", "unknown ranking '" + ranking + "'");
  c.ranking = ranking == "absolute" ? Ranking::absolute : Ranking::signed_desc;
}

std::vector<std::uint32_t> EdgeScores::ranked() const {
  std::vector<std::uint32_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0u);
  auto key = [&](std::uint32_t e) {
    return config.ranking == Ranking::absolute ? std::fabs(scores[e]) : scores[e];
  };
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return key(a) > key(b); });
  return ids;
}

void EdgeScores::save(const std::filesystem::path& path) const {
  nlohmann::json cfg = config;
  cfg["model_digest"] = model_digest;
  nlohmann::json j{{"config", cfg}, {"dataset_digest", dataset_digest}, {"scores", scores}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

EdgeScores EdgeScores::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  EdgeScores s;
  s.config = j.at("config").get<AttributionConfig>();
  s.model_digest = j.at("config").value("model_digest", std::string());
  s.dataset_digest = j.at("dataset_digest").get<std::string>();
  s.scores = j.at("scores").get<std::vector<double>>();
  return s;
}

Var tape_loss(Tape& tape, Var logits, std::size_t last_row, EvalTokens tokens, LossKind kind) {
  const std::size_t V = tape.value(logits).cols();
  require(tokens.mem >= 0 && static_cast<std::size_t>(tokens.mem) < V && tokens.pred >= 0 &&
              static_cast<std::size_t>(tokens.pred) < V,
          "evaluation token id out of vocabulary range");
  Var mem = tape.pick(logits, last_row, static_cast<std::size_t>(tokens.mem));
  switch (kind) {
    case LossKind::logit_mem: return mem;
    case LossKind::logit_diff:
      return tape.sub(mem, tape.pick(logits, last_row, static_cast<std::size_t>(tokens.pred)));
    case LossKind::neg_logit_mem: return tape.scale(mem, -1.0);
  }
  return mem;
}

std::vector<double> eap_ig_scores(const Model& model, std::span<const ContrastivePair> pairs,
                                  std::span<const EvalTokens> tokens, const TapeLoss& loss,
                                  int ig_steps, Direction direction) {
  require(!pairs.empty(), "eap_ig: empty dataset");
  require(tokens.size() == pairs.size(), "eap_ig: one EvalTokens per pair required");
  require(ig_steps >= 1, "eap_ig: ig_steps must be >= 1");
  const EdgeGraph& g = model.graph();
  std::vector<double> total(g.num_edges(), 0.0);
  const bool noising = direction == Direction::noising;

  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const PairActivations acts = cache_pair(model, pairs[p]);
    const Tensor& z_embed = noising ? acts.clean_embed : acts.corrupt_embed;
    const Tensor& zp_embed = noising ? acts.corrupt_embed : acts.clean_embed;
    const SourceActivations& z = noising ? acts.clean : acts.corrupt;
    const SourceActivations& zp = noising ? acts.corrupt : acts.clean;
    const std::size_t T = z_embed.rows();

    std::vector<Tensor> grad_sum(g.dests().size());
    for (int k = 1; k <= ig_steps; ++k) {
      const double alpha = static_cast<double>(k) / static_cast<double>(ig_steps);
      Tensor point = zp_embed + (z_embed - zp_embed) * alpha;
      try {
        Tape tape;
        FactoredTrace trace = forward_factored(tape, model, point, {nullptr, true});
        Var l = loss(tape, trace.logits, T - 1, tokens[p]);
        tape.backward(l);
        for (std::size_t d = 0; d < grad_sum.size(); ++d) {
          Tensor gd = tape.grad(trace.dest_inputs[d]);
          if (grad_sum[d].empty()) {
            grad_sum[d] = std::move(gd);
          } else {
            grad_sum[d] += gd;
          }
        }
      } catch (const NumericFailure& e) {
        throw NumericFailure(std::string(e.what()) + " at integrated-gradient step " +
                             std::to_string(k) + " of pair " + std::to_string(p));
      }
    }
    const double inv_m = 1.0 / static_cast<double>(ig_steps);
    for (std::uint32_t e = 0; e < g.num_edges(); ++e) {
      const Edge& edge = g.edges()[e];
      const Tensor& a = zp[edge.source];
      const Tensor& b = z[edge.source];
      const Tensor& gv = grad_sum[edge.dest];
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * gv[i];
      total[e] += s * inv_m;
    }
  }
  for (double& s : total) {
    s /= static_cast<double>(pairs.size());
    if (!std::isfinite(s)) throw NumericFailure("eap_ig produced a non-finite edge score");
  }
  return total;
}

EdgeScores eap_ig(const Model& model, std::span<const ContrastivePair> pairs,
                  const AttributionConfig& config) {
  require(!pairs.empty(), "eap_ig: empty dataset");
  const auto tokens = resolve_eval_tokens(model, pairs);
  const LossKind kind = config.loss;
  EdgeScores out;
  out.config = config;
  out.dataset_digest = dataset_digest(pairs);
  out.model_digest = model.digest();
  out.scores = eap_ig_scores(
      model, pairs, tokens,
      [kind](Tape& tape, Var logits, std::size_t row, EvalTokens t) {
        return tape_loss(tape, logits, row, t, kind);
      },
      config.ig_steps, config.direction);
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = r;
    i = j + 1;
  }
  return rank;
}

std::vector<std::size_t> top_indices(std::span<const double> v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  idx.resize(std::min(k, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "spearman needs equal-length inputs");
  require(a.size() >= 2, "spearman needs at least two values");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::size_t top_k_overlap(std::span<const double> a, std::span<const double> b, std::size_t k) {
  require(a.size() == b.size(), "top_k_overlap needs equal-length inputs");
  const auto ta = top_indices(a, k);
  const auto tb = top_indices(b, k);
  std::vector<std::size_t> both;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(both));
  return both.size();
}

}  // namespace memcirc
