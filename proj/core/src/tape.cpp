#include "memcirc/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "memcirc/errors.hpp"

namespace memcirc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Strided = Eigen::OuterStride<>;
using MapBlock = Eigen::Map<RowMat, 0, Strided>;
using CMapBlock = Eigen::Map<const RowMat, 0, Strided>;

MapMat as_mat(Tensor& t) {
  return MapMat(t.ptr(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}
CMapMat as_mat(const Tensor& t) {
  return CMapMat(t.ptr(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}

void check_finite(const Tensor& t, Op op, const char* phase) {
  if (!t.all_finite()) {
    throw NumericFailure(std::string("non-finite value in ") + phase + " of '" +
                         std::string(op_name(op)) + "'");
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using CArrMap = Eigen::Map<const Eigen::ArrayXd>;

// tanh(u) = 1 - 2 / (exp(2u) + 1); Eigen's exp is vectorised, its tanh is not.
Eigen::ArrayXd gelu_tanh_arg(const CArrMap& x) {
  const Eigen::ArrayXd u = kGeluC * (x + kGeluA * x.cube());
  return 1.0 - 2.0 / ((2.0 * u).exp() + 1.0);
}

// out[0..n) = softmax(in[0..n) * scale); returns log of the normaliser
// relative to the max, i.e. log(sum exp(in*scale - max)).
double softmax_row(const double* in, double* out, Eigen::Index n, double scale) {
  CArrMap x(in, n);
  ArrMap y(out, n);
  const double mx = (x * scale).maxCoeff();
  y = (x * scale - mx).exp();
  const double z = y.sum();
  y /= z;
  return std::log(z);
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::add_n: return "add_n";
    case Op::add_row: return "add_row";
    case Op::scale: return "scale";
    case Op::mul: return "mul";
    case Op::sum: return "sum";
    case Op::dot: return "dot";
    case Op::layernorm: return "layernorm";
    case Op::softmax: return "softmax";
    case Op::gelu: return "gelu";
    case Op::identity: return "identity";
    case Op::embed: return "embed";
    case Op::cross_entropy: return "cross_entropy";
    case Op::causal_attention: return "causal_attention";
    case Op::slice_rows: return "slice_rows";
    case Op::pick: return "pick";
  }
  return "?";
}

Var Tape::push(Node node) {
  if (check_finite_ && node.op != Op::leaf) check_finite(node.value, node.op, "forward");
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

const Tensor& Tape::value(Var v) const {
  require(v.id < nodes_.size(), "unknown tape value");
  return val(v.id);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Tensor& value) {
  Node n;
  n.external = &value;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
          "matmul shape mismatch: " + shape_string(A.shape()) + " x " +
              shape_string(B.shape()));
  Node n;
  n.op = Op::matmul;
  n.value = Tensor(Shape{A.rows(), B.cols()});
  as_mat(n.value).noalias() = as_mat(A) * as_mat(B);
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "add shape mismatch: " + shape_string(A.shape()) + " vs " +
                               shape_string(B.shape()));
  Node n;
  n.op = Op::add;
  n.value = A + B;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "sub shape mismatch: " + shape_string(A.shape()) + " vs " +
                               shape_string(B.shape()));
  Node n;
  n.op = Op::sub;
  n.value = A - B;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::add_n(std::span<const Var> terms) {
  require(!terms.empty(), "add_n of no terms");
  Node n;
  n.op = Op::add_n;
  n.value = value(terms[0]);
  n.inputs.push_back(terms[0].id);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    const Tensor& t = value(terms[i]);
    require(t.same_shape(n.value), "add_n shape mismatch");
    n.value += t;
    n.inputs.push_back(terms[i].id);
  }
  return push(std::move(n));
}

Var Tape::add_row(Var x, Var bias) {
  const Tensor& X = value(x);
  const Tensor& b = value(bias);
  require(X.rank() == 2 && b.size() == X.cols(),
          "add_row shape mismatch: " + shape_string(X.shape()) + " + " +
              shape_string(b.shape()));
  Node n;
  n.op = Op::add_row;
  n.value = X;
  as_mat(n.value).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(
      b.ptr(), static_cast<Eigen::Index>(b.size()));
  n.inputs = {x.id, bias.id};
  return push(std::move(n));
}

Var Tape::scale(Var x, double s) {
  Node n;
  n.op = Op::scale;
  n.value = value(x) * s;
  n.inputs = {x.id};
  n.reals = {s};
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "mul shape mismatch");
  Node n;
  n.op = Op::mul;
  n.value = A;
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] *= B[i];
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  const Tensor& X = value(x);
  double s = 0.0;
  for (double v : X.data()) s += v;
  Node n;
  n.op = Op::sum;
  n.value = Tensor::scalar(s);
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "dot shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i] * B[i];
  Node n;
  n.op = Op::dot;
  n.value = Tensor::scalar(s);
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::layernorm(Var x, double eps) {
  const Tensor& X = value(x);
  const std::size_t rows = X.rows();
  const std::size_t cols = X.cols();
  Node n;
  n.op = Op::layernorm;
  n.value = Tensor(Shape{rows, cols});
  n.saved2 = Tensor(Shape{rows});  // 1 / sqrt(var + eps)
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = X.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    const double rstd = 1.0 / std::sqrt(var + eps);
    n.saved2[r] = rstd;
    auto out = n.value.row(r);
    for (std::size_t c = 0; c < cols; ++c) out[c] = (in[c] - mean) * rstd;
  }
  n.inputs = {x.id};
  n.reals = {eps};
  return push(std::move(n));
}

Var Tape::layernorm(Var x, Var gain, Var bias, double eps) {
  const std::size_t cols = value(x).cols();
  require(value(gain).size() == cols && value(bias).size() == cols,
          "layernorm affine shape mismatch");
  Var norm = layernorm(x, eps);
  // push() may have reallocated the node list; fetch references afterwards.
  const Tensor& g = value(gain);
  const Tensor& b = value(bias);
  Node& nn = nodes_[norm.id];
  // Fold the affine transform into the same node; keep x-hat in `saved`.
  nn.saved = nn.value;
  for (std::size_t r = 0; r < nn.value.rows(); ++r) {
    auto out = nn.value.row(r);
    for (std::size_t c = 0; c < cols; ++c) out[c] = out[c] * g[c] + b[c];
  }
  nn.inputs = {x.id, gain.id, bias.id};
  if (check_finite_) check_finite(nn.value, Op::layernorm, "forward");
  return norm;
}

Var Tape::softmax(Var x) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::softmax;
  n.value = Tensor(X.shape());
  const std::size_t cols = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r) {
    softmax_row(X.row(r).data(), n.value.row(r).data(), static_cast<Eigen::Index>(cols), 1.0);
  }
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::gelu(Var x) {
  const Tensor& X = value(x);
  Node n;
  n.op = Op::gelu;
  n.value = Tensor(X.shape());
  const CArrMap xa(X.ptr(), static_cast<Eigen::Index>(X.size()));
  ArrMap(n.value.ptr(), xa.size()) = 0.5 * xa * (1.0 + gelu_tanh_arg(xa));
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::identity(Var x) {
  Node n;
  n.op = Op::identity;
  n.value = value(x);
  n.inputs = {x.id};
  return push(std::move(n));
}

Var Tape::embed(Var table, std::span<const int> ids) {
  const Tensor& W = value(table);
  require(W.rank() == 2, "embed table must be rank 2");
  const std::size_t d = W.cols();
  Node n;
  n.op = Op::embed;
  n.value = Tensor(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < W.rows(),
            "embedding id " + std::to_string(ids[i]) + " out of range " +
                std::to_string(W.rows()));
    auto src = W.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), n.value.row(i).begin());
  }
  n.inputs = {table.id};
  n.ints.assign(ids.begin(), ids.end());
  return push(std::move(n));
}

Var Tape::cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& X = value(logits);
  require(X.rank() == 2 && X.rows() == targets.size(),
          "cross_entropy expects one target per logit row");
  const std::size_t cols = X.cols();
  Node n;
  n.op = Op::cross_entropy;
  n.saved = Tensor(X.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < X.rows(); ++r) {
    require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < cols,
            "cross_entropy target out of range");
    auto in = X.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    const double log_z =
        softmax_row(in.data(), n.saved.row(r).data(), static_cast<Eigen::Index>(cols), 1.0);
    loss -= in[static_cast<std::size_t>(targets[r])] - mx - log_z;
  }
  n.value = Tensor::scalar(loss / static_cast<double>(X.rows()));
  n.inputs = {logits.id};
  n.ints.assign(targets.begin(), targets.end());
  return push(std::move(n));
}

Var Tape::causal_attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads,
                           double scale) {
  const Tensor& Q = value(q);
  const Tensor& K = value(k);
  const Tensor& V = value(v);
  require(Q.rank() == 2 && Q.same_shape(K) && Q.same_shape(V),
          "attention q/k/v shape mismatch");
  require(batch > 0 && Q.rows() % batch == 0, "attention batch does not divide rows");
  require(heads > 0 && Q.cols() % heads == 0, "attention heads do not divide width");
  const auto T = static_cast<Eigen::Index>(Q.rows() / batch);
  const auto W = static_cast<Eigen::Index>(Q.cols());
  const auto dh = static_cast<Eigen::Index>(Q.cols() / heads);

  Node n;
  n.op = Op::causal_attention;
  n.value = Tensor(Q.shape());
  n.saved = Tensor(Shape{batch * heads, static_cast<std::size_t>(T * T)});
  RowMat scores(T, T);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * static_cast<std::size_t>(T * W) + h * static_cast<std::size_t>(dh);
      CMapBlock qb(Q.ptr() + off, T, dh, Strided(W));
      CMapBlock kb(K.ptr() + off, T, dh, Strided(W));
      CMapBlock vb(V.ptr() + off, T, dh, Strided(W));
      MapBlock ob(n.value.ptr() + off, T, dh, Strided(W));
      MapMat P(n.saved.ptr() + (b * heads + h) * static_cast<std::size_t>(T * T), T, T);
      scores.noalias() = qb * kb.transpose();
      for (Eigen::Index i = 0; i < T; ++i) {
        softmax_row(&scores(i, 0), &P(i, 0), i + 1, scale);
        P.row(i).tail(T - 1 - i).setZero();
      }
      ob.noalias() = P * vb;
    }
  }
  n.inputs = {q.id, k.id, v.id};
  n.ints = {static_cast<int>(batch), static_cast<int>(heads)};
  n.reals = {scale};
  return push(std::move(n));
}

Var Tape::slice_rows(Var x, std::size_t start, std::size_t count) {
  Node n;
  n.op = Op::slice_rows;
  n.value = value(x).rows_slice(start, count);
  n.inputs = {x.id};
  n.ints = {static_cast<int>(start), static_cast<int>(count)};
  return push(std::move(n));
}

Var Tape::pick(Var x, std::size_t row, std::size_t col) {
  const Tensor& X = value(x);
  require(row < X.rows() && col < X.cols(), "pick index out of range");
  Node n;
  n.op = Op::pick;
  n.value = Tensor::scalar(X.at(row, col));
  n.inputs = {x.id};
  n.ints = {static_cast<int>(row), static_cast<int>(col)};
  return push(std::move(n));
}

Tensor& Tape::grad_slot(std::uint32_t id) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(val(id).shape());
  return g;
}

void Tape::backward(Var loss) {
  require(loss.id < nodes_.size(), "unknown loss value");
  require(val(loss.id).size() == 1, "backward needs a scalar loss, got shape " +
                                        shape_string(val(loss.id).shape()));
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id] = Tensor(val(loss.id).shape(), 1.0);
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    if (grads_[id].empty() || nodes_[id].op == Op::leaf) continue;
    backward_node(id);
  }
}

const Tensor* Tape::grad_if(Var v) const {
  if (v.id >= grads_.size() || grads_[v.id].empty()) return nullptr;
  return &grads_[v.id];
}

Tensor Tape::grad(Var v) const {
  if (const Tensor* g = grad_if(v)) return *g;
  return Tensor(value(v).shape());
}

void Tape::backward_node(std::uint32_t id) {
  const Node& n = nodes_[id];
  const Tensor& g = grads_[id];
  if (check_finite_) check_finite(g, n.op, "backward");
  switch (n.op) {
    case Op::leaf:
      break;
    case Op::matmul: {
      const Tensor& A = val(n.inputs[0]);
      const Tensor& B = val(n.inputs[1]);
      as_mat(grad_slot(n.inputs[0])).noalias() += as_mat(g) * as_mat(B).transpose();
      as_mat(grad_slot(n.inputs[1])).noalias() += as_mat(A).transpose() * as_mat(g);
      break;
    }
    case Op::add:
      grad_slot(n.inputs[0]) += g;
      grad_slot(n.inputs[1]) += g;
      break;
    case Op::sub:
      grad_slot(n.inputs[0]) += g;
      grad_slot(n.inputs[1]) -= g;
      break;
    case Op::add_n:
      for (std::uint32_t in : n.inputs) grad_slot(in) += g;
      break;
    case Op::add_row: {
      grad_slot(n.inputs[0]) += g;
      Tensor& gb = grad_slot(n.inputs[1]);
      Eigen::Map<Eigen::RowVectorXd>(gb.ptr(), static_cast<Eigen::Index>(gb.size())) +=
          as_mat(g).colwise().sum();
      break;
    }
    case Op::scale: {
      Tensor& gx = grad_slot(n.inputs[0]);
      const double s = n.reals[0];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
      break;
    }
    case Op::mul: {
      const Tensor& A = val(n.inputs[0]);
      const Tensor& B = val(n.inputs[1]);
      Tensor& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
      Tensor& gb = grad_slot(n.inputs[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
      break;
    }
    case Op::sum: {
      Tensor& gx = grad_slot(n.inputs[0]);
      const double s = g[0];
      for (double& v : gx.data()) v += s;
      break;
    }
    case Op::dot: {
      const Tensor& A = val(n.inputs[0]);
      const Tensor& B = val(n.inputs[1]);
      const double s = g[0];
      Tensor& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < A.size(); ++i) ga[i] += s * B[i];
      Tensor& gb = grad_slot(n.inputs[1]);
      for (std::size_t i = 0; i < B.size(); ++i) gb[i] += s * A[i];
      break;
    }
    case Op::layernorm: {
      const bool affine = n.inputs.size() == 3;
      const Tensor& xhat = affine ? n.saved : n.value;
      const Tensor& rstd = n.saved2;
      const std::size_t rows = xhat.rows();
      const std::size_t cols = xhat.cols();
      const double N = static_cast<double>(cols);
      Tensor& gx = grad_slot(n.inputs[0]);
      std::vector<double> dxhat(cols);
      const Tensor* gain = affine ? &val(n.inputs[1]) : nullptr;
      Tensor* ggain = affine ? &grad_slot(n.inputs[1]) : nullptr;
      Tensor* gbias = affine ? &grad_slot(n.inputs[2]) : nullptr;
      for (std::size_t r = 0; r < rows; ++r) {
        auto gy = g.row(r);
        auto xh = xhat.row(r);
        double s1 = 0.0;
        double s2 = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          dxhat[c] = affine ? gy[c] * (*gain)[c] : gy[c];
          if (affine) {
            (*ggain)[c] += gy[c] * xh[c];
            (*gbias)[c] += gy[c];
          }
          s1 += dxhat[c];
          s2 += dxhat[c] * xh[c];
        }
        auto out = gx.row(r);
        for (std::size_t c = 0; c < cols; ++c) {
          out[c] += rstd[r] / N * (N * dxhat[c] - s1 - xh[c] * s2);
        }
      }
      break;
    }
    case Op::softmax: {
      const Tensor& Y = n.value;
      Tensor& gx = grad_slot(n.inputs[0]);
      for (std::size_t r = 0; r < Y.rows(); ++r) {
        auto y = Y.row(r);
        auto gy = g.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < y.size(); ++c) s += gy[c] * y[c];
        auto out = gx.row(r);
        for (std::size_t c = 0; c < y.size(); ++c) out[c] += y[c] * (gy[c] - s);
      }
      break;
    }
    case Op::gelu: {
      const Tensor& X = val(n.inputs[0]);
      Tensor& gx = grad_slot(n.inputs[0]);
      const CArrMap x(X.ptr(), static_cast<Eigen::Index>(X.size()));
      const Eigen::ArrayXd t = gelu_tanh_arg(x);
      const Eigen::ArrayXd dt = (1.0 - t.square()) * kGeluC * (1.0 + 3.0 * kGeluA * x.square());
      ArrMap(gx.ptr(), x.size()) +=
          CArrMap(g.ptr(), x.size()) * (0.5 * (1.0 + t) + 0.5 * x * dt);
      break;
    }
    case Op::identity:
      grad_slot(n.inputs[0]) += g;
      break;
    case Op::embed: {
      Tensor& gw = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < n.ints.size(); ++i) {
        auto dst = gw.row(static_cast<std::size_t>(n.ints[i]));
        auto src = g.row(i);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
      break;
    }
    case Op::cross_entropy: {
      const Tensor& P = n.saved;
      Tensor& gx = grad_slot(n.inputs[0]);
      const double s = g[0] / static_cast<double>(P.rows());
      for (std::size_t r = 0; r < P.rows(); ++r) {
        auto p = P.row(r);
        auto out = gx.row(r);
        for (std::size_t c = 0; c < p.size(); ++c) out[c] += s * p[c];
        out[static_cast<std::size_t>(n.ints[r])] -= s;
      }
      break;
    }
    case Op::causal_attention: {
      const Tensor& Q = val(n.inputs[0]);
      const Tensor& K = val(n.inputs[1]);
      const Tensor& V = val(n.inputs[2]);
      Tensor& gq = grad_slot(n.inputs[0]);
      Tensor& gk = grad_slot(n.inputs[1]);
      Tensor& gv = grad_slot(n.inputs[2]);
      const auto batch = static_cast<std::size_t>(n.ints[0]);
      const auto heads = static_cast<std::size_t>(n.ints[1]);
      const double scale = n.reals[0];
      const auto T = static_cast<Eigen::Index>(Q.rows() / batch);
      const auto W = static_cast<Eigen::Index>(Q.cols());
      const auto dh = static_cast<Eigen::Index>(Q.cols() / heads);
      RowMat dP(T, T);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off =
              b * static_cast<std::size_t>(T * W) + h * static_cast<std::size_t>(dh);
          CMapBlock qb(Q.ptr() + off, T, dh, Strided(W));
          CMapBlock kb(K.ptr() + off, T, dh, Strided(W));
          CMapBlock vb(V.ptr() + off, T, dh, Strided(W));
          CMapBlock gob(g.ptr() + off, T, dh, Strided(W));
          MapBlock gqb(gq.ptr() + off, T, dh, Strided(W));
          MapBlock gkb(gk.ptr() + off, T, dh, Strided(W));
          MapBlock gvb(gv.ptr() + off, T, dh, Strided(W));
          CMapMat P(n.saved.ptr() + (b * heads + h) * static_cast<std::size_t>(T * T), T, T);
          dP.noalias() = gob * vb.transpose();
          gvb.noalias() += P.transpose() * gob;
          for (Eigen::Index i = 0; i < T; ++i) {
            double s = 0.0;
            for (Eigen::Index j = 0; j <= i; ++j) s += P(i, j) * dP(i, j);
            for (Eigen::Index j = 0; j <= i; ++j) dP(i, j) = P(i, j) * (dP(i, j) - s) * scale;
            for (Eigen::Index j = i + 1; j < T; ++j) dP(i, j) = 0.0;
          }
          gqb.noalias() += dP * kb;
          gkb.noalias() += dP.transpose() * qb;
        }
      }
      break;
    }
    case Op::slice_rows: {
      Tensor& gx = grad_slot(n.inputs[0]);
      const auto start = static_cast<std::size_t>(n.ints[0]);
      const std::size_t cols = g.cols();
      for (std::size_t i = 0; i < g.size(); ++i) gx[start * cols + i] += g[i];
      break;
    }
    case Op::pick: {
      Tensor& gx = grad_slot(n.inputs[0]);
      gx.at(static_cast<std::size_t>(n.ints[0]), static_cast<std::size_t>(n.ints[1])) += g[0];
      break;
    }
  }
}

}  // namespace memcirc
