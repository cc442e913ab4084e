#include "memcirc/edge_graph.hpp"

#include "memcirc/errors.hpp"

namespace memcirc {

namespace {

// Position in the residual write/read schedule. A source with write slot w
// is visible to a destination with read slot r iff w < r.
int write_slot(const SourceNode& s) {
  switch (s.kind) {
    case SourceKind::embed: return 0;
    case SourceKind::head: return 2 * s.layer + 1;
    case SourceKind::mlp: return 2 * s.layer + 2;
  }
  return 0;
}

int read_slot(const DestNode& d, int n_layers) {
  switch (d.kind) {
    case DestKind::q:
    case DestKind::k:
    case DestKind::v: return 2 * d.layer + 1;
    case DestKind::mlp: return 2 * d.layer + 2;
    case DestKind::logits: return 2 * n_layers + 1;
  }
  return 0;
}

}  // namespace

std::string SourceNode::label() const {
  switch (kind) {
    case SourceKind::embed: return "embed";
    case SourceKind::head: return "a" + std::to_string(layer) + ".h" + std::to_string(head);
    case SourceKind::mlp: return "m" + std::to_string(layer);
  }
  return "?";
}

std::string DestNode::node_label() const {
  switch (kind) {
    case DestKind::q:
    case DestKind::k:
    case DestKind::v: return "a" + std::to_string(layer) + ".h" + std::to_string(head);
    case DestKind::mlp: return "m" + std::to_string(layer);
    case DestKind::logits: return "logits";
  }
  return "?";
}

std::string DestNode::label() const {
  switch (kind) {
    case DestKind::q: return node_label() + ".q";
    case DestKind::k: return node_label() + ".k";
    case DestKind::v: return node_label() + ".v";
    default: return node_label();
  }
}

EdgeGraph EdgeGraph::enumerate(int n_layers, int n_heads) {
  require(n_layers >= 0 && n_heads >= 1, "edge graph needs n_layers >= 0 and n_heads >= 1");
  EdgeGraph g;
  g.n_layers_ = n_layers;
  g.n_heads_ = n_heads;
  g.sources_.push_back({SourceKind::embed});
  for (int l = 0; l < n_layers; ++l) {
    for (int h = 0; h < n_heads; ++h) g.sources_.push_back({SourceKind::head, l, h});
    g.sources_.push_back({SourceKind::mlp, l});
  }
  for (int l = 0; l < n_layers; ++l) {
    for (int h = 0; h < n_heads; ++h) {
      g.dests_.push_back({DestKind::q, l, h});
      g.dests_.push_back({DestKind::k, l, h});
      g.dests_.push_back({DestKind::v, l, h});
    }
    g.dests_.push_back({DestKind::mlp, l});
  }
  g.dests_.push_back({DestKind::logits});

  g.incoming_.resize(g.dests_.size());
  for (std::uint32_t s = 0; s < g.sources_.size(); ++s) {
    for (std::uint32_t d = 0; d < g.dests_.size(); ++d) {
      if (write_slot(g.sources_[s]) < read_slot(g.dests_[d], n_layers)) {
        g.incoming_[d].push_back(static_cast<std::uint32_t>(g.edges_.size()));
        g.edges_.push_back({s, d});
      }
    }
  }
  return g;
}

std::size_t EdgeGraph::closed_form_edge_count(int n_layers, int n_heads) {
  const long L = n_layers;
  const long H = n_heads;
  long total = 3 * L * H + L + 1;
  for (long l = 0; l < L; ++l) {
    const long later = (L - 1 - l) * (3 * H + 1);
    total += H * (2 + later) + (later + 1);
  }
  return static_cast<std::size_t>(total);
}

std::uint32_t EdgeGraph::head_source(int layer, int head) const {
  return static_cast<std::uint32_t>(1 + layer * (n_heads_ + 1) + head);
}

std::uint32_t EdgeGraph::mlp_source(int layer) const {
  return static_cast<std::uint32_t>(1 + layer * (n_heads_ + 1) + n_heads_);
}

std::uint32_t EdgeGraph::head_dest(int layer, int head, DestKind channel) const {
  const int c = channel == DestKind::q ? 0 : channel == DestKind::k ? 1 : 2;
  return static_cast<std::uint32_t>(layer * (3 * n_heads_ + 1) + 3 * head + c);
}

std::uint32_t EdgeGraph::mlp_dest(int layer) const {
  return static_cast<std::uint32_t>(layer * (3 * n_heads_ + 1) + 3 * n_heads_);
}

std::uint32_t EdgeGraph::logits_dest() const {
  return static_cast<std::uint32_t>(n_layers_ * (3 * n_heads_ + 1));
}

std::string EdgeGraph::edge_label(std::uint32_t edge) const {
  const Edge& e = edges_.at(edge);
  return sources_[e.source].label() + "->" + dests_[e.dest].label();
}

long EdgeGraph::find_edge(std::uint32_t source, std::uint32_t dest) const {
  if (dest >= incoming_.size()) return -1;
  for (std::uint32_t e : incoming_[dest]) {
    if (edges_[e].source == source) return e;
  }
  return -1;
}

}  // namespace memcirc
