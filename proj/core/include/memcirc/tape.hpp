#pragma once

// Reverse-mode differentiation over a linear tape of tensor operations.
//
// Every operation appends one node; node ids are therefore a topological
// order and backward() simply walks the tape in reverse. A Tape is
// single-writer: build it, call backward() once, read gradients, discard.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "memcirc/tensor.hpp"

namespace memcirc {

struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
  friend bool operator==(Var a, Var b) { return a.id == b.id; }
};

enum class Op : std::uint8_t {
  leaf,
  matmul,
  add,
  sub,
  add_n,
  add_row,
  scale,
  mul,
  sum,
  dot,
  layernorm,
  softmax,
  gelu,
  identity,
  embed,
  cross_entropy,
  causal_attention,
  slice_rows,
  pick,
};

std::string_view op_name(Op op);

inline constexpr double kLayerNormEps = 1e-5;

class Tape {
 public:
  Tape() = default;
  // check_finite=false skips the per-op NumericFailure checks; the caller
  // then owns detecting non-finite results (e.g. on the loss and gradients).
  explicit Tape(bool check_finite) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Owned leaf.
  Var constant(Tensor value);
  // Non-owning leaf; `value` must outlive the tape.
  Var parameter(const Tensor& value);

  Var matmul(Var a, Var b);                   // [m,k] x [k,n]
  Var add(Var a, Var b);                      // same shape
  Var sub(Var a, Var b);                      // same shape
  Var add_n(std::span<const Var> terms);      // same shape, summed left to right
  Var add_row(Var x, Var bias);               // [m,n] + [n]
  Var scale(Var x, double s);
  Var mul(Var a, Var b);                      // elementwise
  Var sum(Var x);                             // -> scalar
  Var dot(Var a, Var b);                      // -> scalar
  Var layernorm(Var x, double eps = kLayerNormEps);            // per row, no affine
  Var layernorm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
  Var softmax(Var x);                         // per row
  Var gelu(Var x);                            // tanh approximation
  Var identity(Var x);                        // gradient tap
  Var embed(Var table, std::span<const int> ids);              // rows of table
  Var cross_entropy(Var logits, std::span<const int> targets);  // mean over rows
  // q, k, v: [batch*seq, heads*d_head]; causal softmax(q k^T * scale) v per
  // (sample, head) block.
  Var causal_attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads,
                       double scale);
  Var slice_rows(Var x, std::size_t start, std::size_t count);
  Var pick(Var x, std::size_t row, std::size_t col);  // -> scalar

  const Tensor& value(Var v) const;
  Op op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d loss / d loss = 1 and propagates to every node in reverse order.
  void backward(Var loss);

  // Gradient after backward(); zeros for nodes the loss does not depend on.
  Tensor grad(Var v) const;
  // nullptr when no gradient reached the node.
  const Tensor* grad_if(Var v) const;

 private:
  struct Node {
    Op op = Op::leaf;
    Tensor value;
    const Tensor* external = nullptr;
    std::vector<std::uint32_t> inputs;
    std::vector<int> ints;
    std::vector<double> reals;
    Tensor saved;
    Tensor saved2;
  };

  Var push(Node node);
  bool check_finite_ = true;
  const Tensor& val(std::uint32_t id) const;
  Tensor& grad_slot(std::uint32_t id);
  void backward_node(std::uint32_t id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace memcirc
