#include <Eigen/Core>
#include <cmath>
#include <unordered_map>

#include "memcirc/errors.hpp"
#include "memcirc/model.hpp"

namespace memcirc {

namespace {

void check_tokens(const ModelConfig& c, std::span<const int> tokens) {
  require(!tokens.empty(), "token sequence is empty");
  require(tokens.size() <= static_cast<std::size_t>(c.max_seq_len),
          "sequence longer than max_seq_len");
  for (int t : tokens) require(t >= 0 && t < c.vocab_size, "token id out of range");
}

Tensor col_slice(const Tensor& w, std::size_t start, std::size_t count) {
  Tensor out(Shape{w.rows(), count});
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = w.at(r, start + c);
  }
  return out;
}

Tensor vec_slice(const Tensor& b, std::size_t start, std::size_t count) {
  Tensor out(Shape{count});
  for (std::size_t i = 0; i < count; ++i) out[i] = b[start + i];
  return out;
}

Var maybe_ln(Tape& tape, const ModelConfig& c, Var x, Var g, Var b) {
  return c.layernorm ? tape.layernorm(x, g, b) : x;
}

Var maybe_act(Tape& tape, const ModelConfig& c, Var x) {
  return c.activation == Activation::gelu ? tape.gelu(x) : x;
}

}  // namespace

BatchForward forward_batch(Tape& tape, const Model& model,
                           std::span<const std::vector<int>> batch) {
  const ModelConfig& c = model.config();
  require(!batch.empty(), "empty batch");
  const std::size_t T = batch.front().size();
  std::vector<int> ids;
  std::vector<int> positions;
  for (const auto& seq : batch) {
    require(seq.size() == T, "batch sequences must share one length");
    check_tokens(c, seq);
    ids.insert(ids.end(), seq.begin(), seq.end());
    for (std::size_t i = 0; i < T; ++i) positions.push_back(static_cast<int>(i));
  }

  BatchForward out;
  model.weights().for_each(
      [&](const std::string&, const Tensor& t) { out.params.push_back(tape.parameter(t)); });
  std::size_t next = 0;
  auto take = [&]() { return out.params[next++]; };

  Var tok = take();
  Var pos = take();
  Var x = tape.add(tape.embed(tok, ids), tape.embed(pos, positions));
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.d_head));
  for (int l = 0; l < c.n_layers; ++l) {
    Var ln1_g = take(), ln1_b = take();
    Var w_q = take(), b_q = take(), w_k = take(), b_k = take(), w_v = take(), b_v = take();
    Var w_o = take();
    Var ln2_g = take(), ln2_b = take();
    Var w_in = take(), b_in = take(), w_out = take(), b_out = take();

    Var h = maybe_ln(tape, c, x, ln1_g, ln1_b);
    Var q = tape.add_row(tape.matmul(h, w_q), b_q);
    Var k = tape.add_row(tape.matmul(h, w_k), b_k);
    Var v = tape.add_row(tape.matmul(h, w_v), b_v);
    Var z = tape.causal_attention(q, k, v, batch.size(), static_cast<std::size_t>(c.n_heads),
                                  scale);
    x = tape.add(x, tape.matmul(z, w_o));

    Var m = maybe_ln(tape, c, x, ln2_g, ln2_b);
    m = maybe_act(tape, c, tape.add_row(tape.matmul(m, w_in), b_in));
    x = tape.add(x, tape.add_row(tape.matmul(m, w_out), b_out));
  }
  Var lnf_g = take(), lnf_b = take();
  Var w_u = take();
  out.logits = tape.matmul(maybe_ln(tape, c, x, lnf_g, lnf_b), w_u);
  return out;
}

Tensor forward_logits(const Model& model, std::span<const int> tokens) {
  Tape tape;
  std::vector<std::vector<int>> batch{std::vector<int>(tokens.begin(), tokens.end())};
  BatchForward f = forward_batch(tape, model, batch);
  return tape.value(f.logits);
}

Tensor embed_tokens(const Model& model, std::span<const int> tokens) {
  const ModelConfig& c = model.config();
  check_tokens(c, tokens);
  const auto d = static_cast<std::size_t>(c.d_model);
  const ModelWeights& w = model.weights();
  Tensor out(Shape{tokens.size(), d});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto tok = w.tok_embed.row(static_cast<std::size_t>(tokens[i]));
    auto pos = w.pos_embed.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] = tok[j] + pos[j];
  }
  return out;
}

FactoredTrace forward_factored(Tape& tape, const Model& model, const Tensor& embed_output,
                               const FactoredOptions& options) {
  const ModelConfig& c = model.config();
  const EdgeGraph& g = model.graph();
  const ModelWeights& w = model.weights();
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto dh = static_cast<std::size_t>(c.d_head);
  require(embed_output.rank() == 2 && embed_output.cols() == d && embed_output.rows() > 0 &&
              embed_output.rows() <= static_cast<std::size_t>(c.max_seq_len),
          "embed output must be [seq, d_model]");
  const PatchPlan* patch = options.patch;
  if (patch) {
    require(patch->keep.size() == g.num_edges(), "patch mask size does not match edge count");
    require(patch->donor && patch->donor->size() == g.sources().size(),
            "patch donor must hold every source output");
    for (const Tensor& t : *patch->donor) {
      require(t.shape() == embed_output.shape(), "donor activation shape mismatch");
    }
  }

  FactoredTrace trace;
  trace.sources.resize(g.sources().size());
  trace.dest_inputs.resize(g.dests().size());
  trace.sources[g.embed_source()] = tape.constant(embed_output);
  Var resid = trace.sources[g.embed_source()];

  auto dest_input = [&](std::uint32_t dest) {
    Var v;
    if (patch) {
      std::vector<Var> terms;
      Tensor donor_sum;
      for (std::uint32_t e : g.incoming(dest)) {
        const std::uint32_t s = g.edges()[e].source;
        if (patch->keep[e]) {
          terms.push_back(trace.sources[s]);
        } else if (donor_sum.empty()) {
          donor_sum = (*patch->donor)[s];
        } else {
          donor_sum += (*patch->donor)[s];
        }
      }
      if (!donor_sum.empty()) terms.push_back(tape.constant(std::move(donor_sum)));
      v = terms.size() == 1 ? terms.front() : tape.add_n(terms);
    } else {
      v = resid;
    }
    if (options.tap_destinations) v = tape.identity(v);
    trace.dest_inputs[dest] = v;
    return v;
  };

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < c.n_layers; ++l) {
    const LayerWeights& lw = w.layers[static_cast<std::size_t>(l)];
    Var ln1_g = tape.parameter(lw.ln1_g), ln1_b = tape.parameter(lw.ln1_b);
    // Destinations reading the same Var share one normalisation.
    std::unordered_map<std::uint32_t, Var> normed;
    auto norm1 = [&](Var x) {
      auto it = normed.find(x.id);
      if (it != normed.end()) return it->second;
      Var n = maybe_ln(tape, c, x, ln1_g, ln1_b);
      normed.emplace(x.id, n);
      return n;
    };
    Var w_o = tape.parameter(lw.w_o);
    std::vector<Var> written{resid};
    for (int h = 0; h < c.n_heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * dh;
      auto project = [&](DestKind ch, const Tensor& wt, const Tensor& bt) {
        Var x = norm1(dest_input(g.head_dest(l, h, ch)));
        return tape.add_row(tape.matmul(x, tape.constant(col_slice(wt, off, dh))),
                            tape.constant(vec_slice(bt, off, dh)));
      };
      Var q = project(DestKind::q, lw.w_q, lw.b_q);
      Var k = project(DestKind::k, lw.w_k, lw.b_k);
      Var v = project(DestKind::v, lw.w_v, lw.b_v);
      Var z = tape.causal_attention(q, k, v, 1, 1, scale);
      Var out = tape.matmul(z, tape.slice_rows(w_o, off, dh));
      trace.sources[g.head_source(l, h)] = out;
      written.push_back(out);
    }
    if (!patch) resid = tape.add_n(written);

    Var m = maybe_ln(tape, c, dest_input(g.mlp_dest(l)), tape.parameter(lw.ln2_g),
                     tape.parameter(lw.ln2_b));
    m = maybe_act(tape, c,
                  tape.add_row(tape.matmul(m, tape.parameter(lw.w_in)), tape.parameter(lw.b_in)));
    Var mlp_out =
        tape.add_row(tape.matmul(m, tape.parameter(lw.w_out)), tape.parameter(lw.b_out));
    trace.sources[g.mlp_source(l)] = mlp_out;
    if (!patch) resid = tape.add(resid, mlp_out);
  }
  Var x = maybe_ln(tape, c, dest_input(g.logits_dest()), tape.parameter(w.lnf_g),
                   tape.parameter(w.lnf_b));
  trace.logits = tape.matmul(x, tape.parameter(w.w_u));
  return trace;
}

SourceActivations capture_sources(const Model& model, std::span<const int> tokens) {
  Tape tape;
  FactoredTrace trace = forward_factored(tape, model, embed_tokens(model, tokens));
  SourceActivations out;
  out.reserve(trace.sources.size());
  for (Var v : trace.sources) out.push_back(tape.value(v));
  return out;
}

int argmax(std::span<const double> values) {
  require(!values.empty(), "argmax of empty span");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

// ------------------------------------------------------------ decoding

namespace {

using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;
using CRowMat =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

CRowMat mat(const Tensor& t) {
  return CRowMat(t.ptr(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}
CVecMap vec(const Tensor& t) { return CVecMap(t.ptr(), static_cast<Eigen::Index>(t.size())); }

// Same arithmetic order as the tape's layernorm.
Eigen::VectorXd layer_norm(const ModelConfig& c, const Eigen::VectorXd& x, const Tensor& g,
                           const Tensor& b) {
  if (!c.layernorm) return x;
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean) * rstd * g[static_cast<std::size_t>(i)] + b[static_cast<std::size_t>(i)];
  }
  return out;
}

double gelu(double x) {
  constexpr double kC = 0.7978845608028654;
  const double u = kC * (x + 0.044715 * x * x * x);
  return 0.5 * x * (2.0 - 2.0 / (std::exp(2.0 * u) + 1.0));
}

}  // namespace

GreedyDecoder::GreedyDecoder(const Model& model)
    : model_(model),
      keys_(static_cast<std::size_t>(model.config().n_layers)),
      values_(static_cast<std::size_t>(model.config().n_layers)) {}

std::span<const double> GreedyDecoder::feed(int token) {
  const ModelConfig& c = model_.config();
  const ModelWeights& w = model_.weights();
  require(length_ < static_cast<std::size_t>(c.max_seq_len), "decoder exceeded max_seq_len");
  require(token >= 0 && token < c.vocab_size, "token id out of range");
  const auto d = static_cast<Eigen::Index>(c.d_model);
  const auto dh = static_cast<Eigen::Index>(c.d_head);
  const auto hd = static_cast<Eigen::Index>(c.n_heads) * dh;
  const std::size_t pos = length_;
  const auto len = static_cast<Eigen::Index>(pos + 1);

  Eigen::VectorXd x = CVecMap(w.tok_embed.row(static_cast<std::size_t>(token)).data(), d) +
                      CVecMap(w.pos_embed.row(pos).data(), d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < keys_.size(); ++l) {
    const LayerWeights& lw = w.layers[l];
    const Eigen::VectorXd h = layer_norm(c, x, lw.ln1_g, lw.ln1_b);
    const Eigen::VectorXd q = mat(lw.w_q).transpose() * h + vec(lw.b_q);
    const Eigen::VectorXd k = mat(lw.w_k).transpose() * h + vec(lw.b_k);
    const Eigen::VectorXd v = mat(lw.w_v).transpose() * h + vec(lw.b_v);
    keys_[l].insert(keys_[l].end(), k.data(), k.data() + hd);
    values_[l].insert(values_[l].end(), v.data(), v.data() + hd);
    CRowMat K(keys_[l].data(), len, hd);
    CRowMat Vm(values_[l].data(), len, hd);
    Eigen::VectorXd z(hd);
    for (Eigen::Index head = 0; head < c.n_heads; ++head) {
      const Eigen::Index off = head * dh;
      Eigen::VectorXd s = K.middleCols(off, dh) * q.segment(off, dh) * scale;
      const double mx = s.maxCoeff();
      double total = 0.0;
      for (Eigen::Index j = 0; j < len; ++j) {
        s[j] = std::exp(s[j] - mx);
        total += s[j];
      }
      s /= total;
      z.segment(off, dh) = Vm.middleCols(off, dh).transpose() * s;
    }
    x += mat(lw.w_o).transpose() * z;

    Eigen::VectorXd m = layer_norm(c, x, lw.ln2_g, lw.ln2_b);
    Eigen::VectorXd a = mat(lw.w_in).transpose() * m + vec(lw.b_in);
    if (c.activation == Activation::gelu) {
      for (double& e : a) e = gelu(e);
    }
    x += mat(lw.w_out).transpose() * a + vec(lw.b_out);
  }
  const Eigen::VectorXd f = layer_norm(c, x, w.lnf_g, w.lnf_b);
  logits_.resize(static_cast<std::size_t>(c.vocab_size));
  VecMap(logits_.data(), static_cast<Eigen::Index>(logits_.size())) = mat(w.w_u).transpose() * f;
  for (double e : logits_) {
    if (!std::isfinite(e)) throw NumericFailure("non-finite logit during greedy decoding");
  }
  ++length_;
  return logits_;
}

std::vector<int> generate_greedy(const Model& model, std::span<const int> context, int n_tokens) {
  require(!context.empty(), "generation needs a non-empty context");
  require(n_tokens >= 0, "n_tokens must be >= 0");
  require(context.size() + static_cast<std::size_t>(n_tokens) <=
              static_cast<std::size_t>(model.config().max_seq_len) + 1,
          "generation would exceed max_seq_len");
  GreedyDecoder dec(model);
  std::span<const double> logits;
  for (int t : context) logits = dec.feed(t);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n_tokens));
  for (int i = 0; i < n_tokens; ++i) {
    const int next = argmax(logits);
    out.push_back(next);
    if (i + 1 < n_tokens) logits = dec.feed(next);
  }
  return out;
}

}  // namespace memcirc
