#pragma once

// Pre-norm decoder-only transformer with learned absolute positions.
//
// Two execution paths share the same weights:
//   * forward_batch: fused heads, several sequences per tape; used for
//     training and teacher-forced scoring.
//   * forward_factored: one explicit input per edge-graph destination, so a
//     destination's input can be recomposed from arbitrary source outputs
//     (patching) or tapped for gradients (attribution).
// GreedyDecoder is an inference-only incremental path for generation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "memcirc/edge_graph.hpp"
#include "memcirc/tape.hpp"

namespace memcirc {

enum class Activation : std::uint8_t { gelu, identity };

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 8;
  int d_model = 64;
  int d_head = 8;
  int d_mlp = 256;
  int vocab_size = 0;
  int max_seq_len = 100;
  std::uint64_t seed = 0;
  double init_std = 0.02;
  // Test-only switches used to build models that are linear in their
  // activations.
  bool layernorm = true;
  Activation activation = Activation::gelu;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct LayerWeights {
  Tensor ln1_g, ln1_b;
  Tensor w_q, b_q, w_k, b_k, w_v, b_v;  // [d_model, H*d_head], [H*d_head]
  Tensor w_o;                           // [H*d_head, d_model]
  Tensor ln2_g, ln2_b;
  Tensor w_in, b_in;    // [d_model, d_mlp], [d_mlp]
  Tensor w_out, b_out;  // [d_mlp, d_model], [d_model]
};

struct ModelWeights {
  Tensor tok_embed;  // [vocab, d_model]
  Tensor pos_embed;  // [max_seq_len, d_model]
  std::vector<LayerWeights> layers;
  Tensor lnf_g, lnf_b;
  Tensor w_u;  // [d_model, vocab]

  // Visits every tensor with a stable name, in checkpoint order.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

class Model {
 public:
  explicit Model(ModelConfig config);  // random init from config.seed
  Model(ModelConfig config, ModelWeights weights);

  const ModelConfig& config() const { return config_; }
  const ModelWeights& weights() const { return weights_; }
  ModelWeights& mutable_weights() { return weights_; }
  const EdgeGraph& graph() const { return graph_; }

  // FNV-1a over config and weight bytes; identifies a checkpoint.
  std::string digest() const;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  ModelWeights weights_;
  EdgeGraph graph_;
};

// ---------------------------------------------------------------- fused path

struct BatchForward {
  Var logits;                 // [batch*seq, vocab]
  std::vector<Var> params;    // same order as ModelWeights::for_each
};

// All sequences must share one length <= max_seq_len.
BatchForward forward_batch(Tape& tape, const Model& model,
                           std::span<const std::vector<int>> batch);

// Logits [len, vocab] for one sequence.
Tensor forward_logits(const Model& model, std::span<const int> tokens);

// ----------------------------------------------------------- factored path

// Source outputs per source node, each [seq, d_model].
using SourceActivations = std::vector<Tensor>;

// Recomposition rule for destination inputs: incoming edge e carries the
// running (current) source output when keep[e] != 0, else donor[source(e)].
struct PatchPlan {
  std::span<const std::uint8_t> keep;
  const SourceActivations* donor = nullptr;
};

struct FactoredOptions {
  const PatchPlan* patch = nullptr;
  bool tap_destinations = false;  // give each destination input its own Var
};

struct FactoredTrace {
  Var logits;                    // [seq, vocab]
  std::vector<Var> sources;      // per source node
  std::vector<Var> dest_inputs;  // per destination node (pre-norm input)
};

// Token + position embedding for `tokens`: the embed source output, [seq, d].
Tensor embed_tokens(const Model& model, std::span<const int> tokens);

// Runs the model from a given embed-source output (which need not come from
// real tokens; attribution interpolates it).
FactoredTrace forward_factored(Tape& tape, const Model& model, const Tensor& embed_output,
                               const FactoredOptions& options = {});

// Unpatched source outputs for `tokens`.
SourceActivations capture_sources(const Model& model, std::span<const int> tokens);

// --------------------------------------------------------------- decoding

// Lowest id wins ties.
int argmax(std::span<const double> values);

class GreedyDecoder {
 public:
  explicit GreedyDecoder(const Model& model);
  // Appends one token; returns logits at that position.
  std::span<const double> feed(int token);
  std::size_t length() const { return length_; }

 private:
  const Model& model_;
  std::size_t length_ = 0;
  std::vector<AlignedVector> keys_;    // per layer, [len * H*d_head]
  std::vector<AlignedVector> values_;
  AlignedVector logits_;
};

// Deterministic argmax decoding of n_tokens after `context`.
std::vector<int> generate_greedy(const Model& model, std::span<const int> context, int n_tokens);

}  // namespace memcirc
