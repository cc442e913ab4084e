#pragma once

// Factorized view of a decoder-only transformer over its residual stream.
//
// Sources write into the residual stream (token+position embedding, every
// attention head, every MLP); destinations read from it (each head's Q, K
// and V input, each MLP input, the unembedding). An edge exists when the
// source writes strictly before the destination reads. Ordering is
// source-major in residual order, destinations in residual order within a
// source; edge indices are the canonical ids used by masks, scores and
// circuit files.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace memcirc {

enum class SourceKind : std::uint8_t { embed, head, mlp };
enum class DestKind : std::uint8_t { q, k, v, mlp, logits };

struct SourceNode {
  SourceKind kind;
  int layer = -1;
  int head = -1;
  std::string label() const;  // embed | a{l}.h{h} | m{l}
};

struct DestNode {
  DestKind kind;
  int layer = -1;
  int head = -1;
  std::string label() const;  // a{l}.h{h}.q | m{l} | logits
  std::string node_label() const;  // the node the input belongs to, without channel
};

struct Edge {
  std::uint32_t source;
  std::uint32_t dest;
};

class EdgeGraph {
 public:
  static EdgeGraph enumerate(int n_layers, int n_heads);

  // |E| = D + sum_l [H(2 + (L-1-l)(3H+1)) + ((L-1-l)(3H+1) + 1)], D = 3LH + L + 1.
  static std::size_t closed_form_edge_count(int n_layers, int n_heads);

  int n_layers() const { return n_layers_; }
  int n_heads() const { return n_heads_; }

  std::span<const SourceNode> sources() const { return sources_; }
  std::span<const DestNode> dests() const { return dests_; }
  std::span<const Edge> edges() const { return edges_; }
  std::size_t num_edges() const { return edges_.size(); }

  // Canonical edge ids entering `dest`, in ascending order.
  std::span<const std::uint32_t> incoming(std::uint32_t dest) const { return incoming_[dest]; }

  std::uint32_t embed_source() const { return 0; }
  std::uint32_t head_source(int layer, int head) const;
  std::uint32_t mlp_source(int layer) const;
  std::uint32_t head_dest(int layer, int head, DestKind channel) const;
  std::uint32_t mlp_dest(int layer) const;
  std::uint32_t logits_dest() const;

  std::string edge_label(std::uint32_t edge) const;
  // -1 when no such edge exists.
  long find_edge(std::uint32_t source, std::uint32_t dest) const;

 private:
  int n_layers_ = 0;
  int n_heads_ = 0;
  std::vector<SourceNode> sources_;
  std::vector<DestNode> dests_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::uint32_t>> incoming_;
};

}  // namespace memcirc
