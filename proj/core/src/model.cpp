#include "memcirc/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "memcirc/digest.hpp"
#include "memcirc/errors.hpp"
#include "memcirc/random.hpp"

namespace memcirc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void ModelConfig::validate() const {
  require(n_layers >= 0, "n_layers must be >= 0");
  require(n_heads > 0 && d_model > 0 && d_head > 0 && d_mlp > 0,
          "model dimensions must be positive");
  require(d_model == n_heads * d_head, "d_model must equal n_heads * d_head");
  require(vocab_size > 0, "vocab_size must be positive");
  require(max_seq_len >= 51, "max_seq_len must be >= 51 (50-token context + 1)");
  require(init_std > 0.0, "init_std must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers},   {"n_heads", c.n_heads},
                     {"d_model", c.d_model},     {"d_head", c.d_head},
                     {"d_mlp", c.d_mlp},         {"vocab_size", c.vocab_size},
                     {"max_seq_len", c.max_seq_len}, {"seed", c.seed},
                     {"init_std", c.init_std},   {"layernorm", c.layernorm},
                     {"activation", c.activation == Activation::gelu ? "gelu" : "identity"}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_model = j.value("d_model", d.d_model);
  c.d_head = j.value("d_head", d.d_head);
  c.d_mlp = j.value("d_mlp", d.d_mlp);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  c.seed = j.value("seed", d.seed);
  c.init_std = j.value("init_std", d.init_std);
  c.layernorm = j.value("layernorm", d.layernorm);
  const std::string act = j.value("activation", std::string("gelu"));
  require(act == "gelu" || act == "identity", "unknown activation '" + act + "'");
  c.activation = act == "gelu" ? Activation::gelu : Activation::identity;
}

void ModelWeights::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("tok_embed", tok_embed);
  fn("pos_embed", pos_embed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    LayerWeights& w = layers[l];
    fn(p + "ln1.g", w.ln1_g);
    fn(p + "ln1.b", w.ln1_b);
    fn(p + "attn.w_q", w.w_q);
    fn(p + "attn.b_q", w.b_q);
    fn(p + "attn.w_k", w.w_k);
    fn(p + "attn.b_k", w.b_k);
    fn(p + "attn.w_v", w.w_v);
    fn(p + "attn.b_v", w.b_v);
    fn(p + "attn.w_o", w.w_o);
    fn(p + "ln2.g", w.ln2_g);
    fn(p + "ln2.b", w.ln2_b);
    fn(p + "mlp.w_in", w.w_in);
    fn(p + "mlp.b_in", w.b_in);
    fn(p + "mlp.w_out", w.w_out);
    fn(p + "mlp.b_out", w.b_out);
  }
  fn("lnf.g", lnf_g);
  fn("lnf.b", lnf_b);
  fn("w_u", w_u);
}

void ModelWeights::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelWeights*>(this)->for_each(
      [&](const std::string& name, Tensor& t) { fn(name, t); });
}

namespace {

ModelWeights init_weights(const ModelConfig& c) {
  Rng rng(c.seed);
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto hd = static_cast<std::size_t>(c.n_heads * c.d_head);
  const auto m = static_cast<std::size_t>(c.d_mlp);
  const auto V = static_cast<std::size_t>(c.vocab_size);
  // Residual writers are scaled down with depth, as in GPT-2.
  const double resid_std = c.init_std / std::sqrt(2.0 * std::max(1, c.n_layers));
  auto randn = [&](Shape shape, double stddev) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = normal(rng, 0.0, stddev);
    return t;
  };
  ModelWeights w;
  w.tok_embed = randn({V, d}, c.init_std);
  w.pos_embed = randn({static_cast<std::size_t>(c.max_seq_len), d}, c.init_std);
  for (int l = 0; l < c.n_layers; ++l) {
    LayerWeights lw;
    lw.ln1_g = Tensor({d}, 1.0);
    lw.ln1_b = Tensor({d});
    lw.w_q = randn({d, hd}, c.init_std);
    lw.b_q = Tensor({hd});
    lw.w_k = randn({d, hd}, c.init_std);
    lw.b_k = Tensor({hd});
    lw.w_v = randn({d, hd}, c.init_std);
    lw.b_v = Tensor({hd});
    lw.w_o = randn({hd, d}, resid_std);
    lw.ln2_g = Tensor({d}, 1.0);
    lw.ln2_b = Tensor({d});
    lw.w_in = randn({d, m}, c.init_std);
    lw.b_in = Tensor({m});
    lw.w_out = randn({m, d}, resid_std);
    lw.b_out = Tensor({d});
    w.layers.push_back(std::move(lw));
  }
  w.lnf_g = Tensor({d}, 1.0);
  w.lnf_b = Tensor({d});
  w.w_u = randn({d, V}, c.init_std);
  return w;
}

void check_weight_shapes(const ModelConfig& c, const ModelWeights& w) {
  require(static_cast<int>(w.layers.size()) == c.n_layers, "layer count does not match config");
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto V = static_cast<std::size_t>(c.vocab_size);
  require(w.tok_embed.shape() == Shape{V, d}, "tok_embed shape mismatch");
  require(w.pos_embed.shape() == Shape{static_cast<std::size_t>(c.max_seq_len), d},
          "pos_embed shape mismatch");
  require(w.w_u.shape() == Shape{d, V}, "w_u shape mismatch");
}

}  // namespace

Model::Model(ModelConfig config)
    : config_(config),
      weights_((config.validate(), init_weights(config))),
      graph_(EdgeGraph::enumerate(config.n_layers, config.n_heads)) {}

Model::Model(ModelConfig config, ModelWeights weights)
    : config_(config),
      weights_(std::move(weights)),
      graph_(EdgeGraph::enumerate(config.n_layers, config.n_heads)) {
  config_.validate();
  check_weight_shapes(config_, weights_);
}

std::string Model::digest() const {
  Fnv1a h;
  h.update(nlohmann::json(config_).dump());
  weights_.for_each([&](const std::string& name, const Tensor& t) {
    h.update(name);
    h.update_values(t.data());
  });
  return h.hex();
}

// Layout: u64 little-endian header length, JSON header, fp64 payload.
void Model::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["format"] = "memcirc-checkpoint-v1";
  header["config"] = config_;
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  weights_.for_each([&](const std::string& name, const Tensor& t) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset},
                       {"count", t.size()}});
    offset += t.size() * sizeof(double);
  });
  header["tensors"] = tensors;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  weights_.for_each([&](const std::string&, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.ptr()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
  if (!out) throw std::runtime_error("short write on checkpoint " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  require(in && len > 0 && len < (1ULL << 30), "corrupt checkpoint header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  require(header.value("format", "") == "memcirc-checkpoint-v1", "unknown checkpoint format");
  ModelConfig config = header.at("config").get<ModelConfig>();
  config.validate();
  ModelWeights weights = init_weights(config);
  const auto payload_start = in.tellg();
  std::size_t index = 0;
  const auto& entries = header.at("tensors");
  weights.for_each([&](const std::string& name, Tensor& t) {
    require(index < entries.size(), "checkpoint is missing tensor " + name);
    const auto& e = entries[index++];
    require(e.at("name").get<std::string>() == name, "checkpoint tensor order mismatch at " + name);
    require(e.at("shape").get<Shape>() == t.shape(), "checkpoint shape mismatch for " + name);
    in.seekg(payload_start + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    require(static_cast<bool>(in), "truncated checkpoint payload for " + name);
  });
  return Model(config, std::move(weights));
}

}  // namespace memcirc
