#include "memcirc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memcirc/random.hpp"

namespace memcirc {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},   {"learning_rate", c.learning_rate},
                     {"rms_decay", c.rms_decay},     {"momentum", c.momentum},
                     {"eps", c.eps},
                     {"clip_norm", c.clip_norm},     {"check_every", c.check_every},
                     {"seed", c.seed},               {"target_domain", c.target_domain}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.rms_decay = j.value("rms_decay", d.rms_decay);
  c.momentum = j.value("momentum", d.momentum);
  c.eps = j.value("eps", d.eps);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.check_every = j.value("check_every", d.check_every);
  c.seed = j.value("seed", d.seed);
  c.target_domain = j.value("target_domain", d.target_domain);
}

void to_json(nlohmann::json& j, const TrainReport& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const EpochLog& e : r.history) {
    history.push_back({{"epoch", e.epoch},
                       {"loss", e.loss},
                       {"batch_memorized", e.batch_memorized},
                       {"memorized", e.memorized}});
  }
  nlohmann::json domains = nlohmann::json::object();
  for (const auto& [name, b] : r.per_domain) {
    domains[name] = {{"samples", b.samples}, {"memorized", b.memorized}};
  }
  j = nlohmann::json{{"epochs", r.epochs},
                     {"final_loss", r.final_loss},
                     {"memorized", r.memorized},
                     {"target_count", r.target_count},
                     {"per_domain", domains},
                     {"history", history},
                     {"memorized_ids", r.memorized_ids}};
}

TrainingShortfall::TrainingShortfall(TrainReport report)
    : SearchFailure("memorization target not reached; best count " +
                    std::to_string(report.target_count)),
      report_(std::move(report)) {}

std::vector<bool> memorized_mask(const Model& model, std::span<const Sample> samples,
                                 int batch_size) {
  require(batch_size >= 1, "batch_size must be >= 1");
  std::vector<bool> out(samples.size(), false);
  const std::size_t V = static_cast<std::size_t>(model.config().vocab_size);
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::vector<int>> batch;
    for (std::size_t i = start; i < end; ++i) {
      // The last token is never an input for prediction.
      batch.emplace_back(samples[i].tokens.begin(), samples[i].tokens.end() - 1);
    }
    Tape tape;
    const Tensor& logits = tape.value(forward_batch(tape, model, batch).logits);
    const std::size_t T = kSampleLength - 1;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      bool ok = true;
      for (std::size_t pos = kContextLength - 1; pos < T && ok; ++pos) {
        const std::span<const double> row{logits.ptr() + (b * T + pos) * V, V};
        ok = argmax(row) == samples[start + b].tokens[pos + 1];
      }
      out[start + b] = ok;
    }
  }
  return out;
}

namespace {

TrainReport summarize(const Model& model, std::span<const Sample> corpus,
                      const std::string& target_domain) {
  TrainReport r;
  const auto mask = memorized_mask(model, corpus);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& b = r.per_domain[std::string(domain_name(corpus[i].domain))];
    ++b.samples;
    if (!mask[i]) continue;
    ++b.memorized;
    ++r.memorized;
    r.memorized_ids.push_back(corpus[i].id);
    if (target_domain.empty() || domain_name(corpus[i].domain) == target_domain) ++r.target_count;
  }
  return r;
}

}  // namespace

TrainReport train_to_memorize(Model& model, std::span<const Sample> corpus, int target_memorized,
                              int max_epochs, const TrainConfig& config,
                              const EpochCallback& on_epoch) {
  require(target_memorized >= 0, "target_memorized must be >= 0");
  require(static_cast<std::size_t>(target_memorized) <= corpus.size(),
          "target_memorized exceeds corpus size");
  require(max_epochs >= 0, "max_epochs must be >= 0");
  require(config.batch_size >= 1 && config.check_every >= 1, "invalid training config");
  require(config.learning_rate > 0.0 && config.rms_decay > 0.0 && config.rms_decay < 1.0 &&
              config.momentum >= 0.0 && config.momentum < 1.0,
          "invalid optimizer hyperparameters");
  for (const Sample& s : corpus) {
    require(s.tokens.size() == kSampleLength, "sample " + s.id + " is not 100 tokens");
  }
  if (!config.target_domain.empty()) parse_domain(config.target_domain);

  if (target_memorized == 0) {
    TrainReport r = summarize(model, corpus, config.target_domain);
    r.epochs = 0;
    return r;
  }

  std::vector<Tensor*> params;
  model.mutable_weights().for_each([&](const std::string&, Tensor& t) { params.push_back(&t); });
  std::vector<Tensor> second_moment;
  std::vector<Tensor> first_moment;
  for (Tensor* p : params) {
    second_moment.push_back(Tensor::zeros_like(*p));
    if (config.momentum > 0.0) first_moment.push_back(Tensor::zeros_like(*p));
  }

  const std::size_t V = static_cast<std::size_t>(model.config().vocab_size);
  auto counts_toward = [&](const Sample& sample) {
    return config.target_domain.empty() || domain_name(sample.domain) == config.target_domain;
  };

  Rng rng(config.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  double last_epoch_loss = 0.0;
  TrainReport best;
  best.target_count = -1;
  std::vector<EpochLog> history;

  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    shuffle(rng, std::span<std::size_t>(order));
    int estimate = 0;
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<std::vector<int>> batch;
      std::vector<int> targets;
      for (std::size_t i = start; i < end; ++i) {
        const auto& toks = corpus[order[i]].tokens;
        batch.emplace_back(toks.begin(), toks.end() - 1);
        targets.insert(targets.end(), toks.begin() + 1, toks.end());
      }
      Tape tape(false);
      BatchForward f = forward_batch(tape, model, batch);
      {
        // Pre-update teacher-forced check on this batch; only gates sweeps.
        const Tensor& logits = tape.value(f.logits);
        const std::size_t T = kSampleLength - 1;
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const Sample& sample = corpus[order[start + b]];
          if (!counts_toward(sample)) continue;
          bool ok = true;
          for (std::size_t pos = kContextLength - 1; pos < T && ok; ++pos) {
            const std::span<const double> row{logits.ptr() + (b * T + pos) * V, V};
            ok = argmax(row) == sample.tokens[pos + 1];
          }
          if (ok) ++estimate;
        }
      }
      Var loss = tape.cross_entropy(f.logits, targets);
      tape.backward(loss);
      loss_sum += tape.value(loss).item();
      ++batches;

      std::vector<const Tensor*> grads;
      double norm2 = 0.0;
      for (Var v : f.params) {
        grads.push_back(tape.grad_if(v));
        if (grads.back()) {
          for (double g : grads.back()->data()) norm2 += g * g;
        }
      }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(tape.value(loss).item()) || !std::isfinite(norm)) {
        throw NumericFailure("non-finite loss or gradient at training step " +
                             std::to_string(step + 1));
      }
      const double clip =
          (config.clip_norm > 0.0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;
      ++step;
      const double correction = 1.0 - std::pow(config.rms_decay, static_cast<double>(step));
      const double m_correction = 1.0 - std::pow(config.momentum, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (!grads[k]) continue;
        auto p = params[k]->data();
        auto v = second_moment[k].data();
        const auto& g = grads[k]->data();
        if (config.momentum > 0.0) {
          auto m = first_moment[k].data();
          for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] * clip;
            v[i] = config.rms_decay * v[i] + (1.0 - config.rms_decay) * gi * gi;
            m[i] = config.momentum * m[i] + (1.0 - config.momentum) * gi;
            p[i] -= config.learning_rate * (m[i] / m_correction) /
                    (std::sqrt(v[i] / correction) + config.eps);
          }
          continue;
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double gi = g[i] * clip;
          v[i] = config.rms_decay * v[i] + (1.0 - config.rms_decay) * gi * gi;
          p[i] -= config.learning_rate * gi / (std::sqrt(v[i] / correction) + config.eps);
        }
      }
    }
    last_epoch_loss = loss_sum / std::max(1, batches);

    // The in-batch count runs at roughly half the post-epoch count.
    const bool near_target = 10 * estimate >= 3 * target_memorized;
    history.push_back({epoch, last_epoch_loss, estimate, -1});
    if (near_target || epoch % config.check_every == 0 || epoch == max_epochs) {
      TrainReport r = summarize(model, corpus, config.target_domain);
      r.epochs = epoch;
      r.final_loss = last_epoch_loss;
      history.back().memorized = r.target_count;
      r.history = history;
      if (on_epoch) on_epoch(epoch, last_epoch_loss, r.target_count);
      if (r.target_count > best.target_count) best = r;
      if (r.target_count >= target_memorized) return r;
    } else if (on_epoch) {
      on_epoch(epoch, last_epoch_loss, -1);
    }
  }
  if (max_epochs == 0) best = summarize(model, corpus, config.target_domain);
  best.history = history;
  throw TrainingShortfall(best);
}

}  // namespace memcirc
