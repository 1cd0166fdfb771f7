#include "softflow/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

namespace softflow {

namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixRM>;
using MapC = Eigen::Map<const MatrixRM>;

MapC as_map(const Tensor& t) { return MapC(t.values().data(), t.rows(), t.cols()); }
MapM as_map(Tensor& t) { return MapM(t.values().data(), t.rows(), t.cols()); }

}  // namespace

ValueId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<ValueId>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node(ValueId id) const {
  if (id < 0 || id >= static_cast<ValueId>(nodes_.size()))
    throw std::invalid_argument("Tape: invalid value id");
  return nodes_[static_cast<size_t>(id)];
}

const Tensor& Tape::value(ValueId id) const { return node(id).value; }

void Tape::require_matrix(ValueId id, const char* op) const {
  if (!node(id).value.is_matrix())
    throw std::invalid_argument(std::string("Tape: ") + op + " requires a rank-2 tensor");
}

ValueId Tape::leaf(Tensor value, std::string param_name) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  n.param = std::move(param_name);
  return push(std::move(n));
}

ValueId Tape::matmul(ValueId a, ValueId b, bool trans_a, bool trans_b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  const int ar = trans_a ? ta.cols() : ta.rows();
  const int ac = trans_a ? ta.rows() : ta.cols();
  const int br = trans_b ? tb.cols() : tb.rows();
  const int bc = trans_b ? tb.rows() : tb.cols();
  if (ac != br)
    throw std::invalid_argument("Tape: matmul inner dimension mismatch " + ta.shape_str() +
                                " x " + tb.shape_str());
  Tensor out = Tensor::zeros({ar, bc});
  auto o = as_map(out);
  auto ma = as_map(ta);
  auto mb = as_map(tb);
  if (!trans_a && !trans_b) o.noalias() = ma * mb;
  else if (trans_a && !trans_b) o.noalias() = ma.transpose() * mb;
  else if (!trans_a && trans_b) o.noalias() = ma * mb.transpose();
  else o.noalias() = ma.transpose() * mb.transpose();

  Node n;
  n.op = Op::matmul;
  n.a = a;
  n.b = b;
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
  require_matrix(a, "add");
  require_matrix(b, "add");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  Tensor out = ta;
  auto o = as_map(out);
  if (tb.same_shape(ta)) {
    o += as_map(tb);
  } else if (tb.rows() == 1 && tb.cols() == 1) {
    o.array() += tb.values()[0];
  } else if (tb.rows() == 1 && tb.cols() == ta.cols()) {
    o.rowwise() += as_map(tb).row(0);
  } else {
    throw std::invalid_argument("Tape: add shapes incompatible " + ta.shape_str() + " + " +
                                tb.shape_str());
  }
  Node n;
  n.op = Op::add;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::sub(ValueId a, ValueId b) {
  require_matrix(a, "sub");
  require_matrix(b, "sub");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (!tb.same_shape(ta) && !(tb.rows() == 1 && tb.cols() == 1))
    throw std::invalid_argument("Tape: sub shapes incompatible " + ta.shape_str() + " - " +
                                tb.shape_str());
  Tensor out = ta;
  auto o = as_map(out);
  if (tb.same_shape(ta)) o -= as_map(tb);
  else o.array() -= tb.values()[0];
  Node n;
  n.op = Op::sub;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::tanh(ValueId a) {
  Tensor out = node(a).value;
  for (double& v : out.values()) v = std::tanh(v);
  Node n;
  n.op = Op::tanh;
  n.a = a;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::relu(ValueId a) {
  Tensor out = node(a).value;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  Node n;
  n.op = Op::relu;
  n.a = a;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::log_softmax_rows(ValueId a) {
  require_matrix(a, "log_softmax");
  const Tensor& ta = node(a).value;
  Tensor out = ta;
  const int r = ta.rows(), c = ta.cols();
  for (int i = 0; i < r; ++i) {
    double mx = out.at(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, out.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(out.at(i, j) - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < c; ++j) out.at(i, j) -= lse;
  }
  Node n;
  n.op = Op::log_softmax;
  n.a = a;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::gather_cols(ValueId a, std::vector<int> col) {
  require_matrix(a, "gather");
  const Tensor& ta = node(a).value;
  if (static_cast<int>(col.size()) != ta.rows())
    throw std::invalid_argument("Tape: gather needs one column index per row");
  Tensor out = Tensor::zeros({ta.rows(), 1});
  for (int i = 0; i < ta.rows(); ++i) {
    if (col[i] < 0 || col[i] >= ta.cols())
      throw std::invalid_argument("Tape: gather column out of range");
    out.at(i, 0) = ta.at(i, col[i]);
  }
  Node n;
  n.op = Op::gather;
  n.a = a;
  n.columns = std::move(col);
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::reduce_sum(ValueId a) {
  double s = 0.0;
  for (double v : node(a).value.values()) s += v;
  Node n;
  n.op = Op::reduce_sum;
  n.a = a;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

ValueId Tape::square(ValueId a) {
  Tensor out = node(a).value;
  for (double& v : out.values()) v *= v;
  Node n;
  n.op = Op::square;
  n.a = a;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::mul_const(ValueId a, double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("Tape: mul_const with non-finite constant");
  Tensor out = node(a).value;
  for (double& v : out.values()) v *= c;
  Node n;
  n.op = Op::mul_const;
  n.a = a;
  n.scalar = c;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::add_const(ValueId a, double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("Tape: add_const with non-finite constant");
  Tensor out = node(a).value;
  for (double& v : out.values()) v += c;
  Node n;
  n.op = Op::add_const;
  n.a = a;
  n.scalar = c;
  n.value = std::move(out);
  return push(std::move(n));
}

GradientMap Tape::backward(ValueId output, const Tensor& seed) const {
  const Node& out_node = node(output);
  if (!seed.same_shape(out_node.value))
    throw std::invalid_argument("Tape: seed gradient shape " + seed.shape_str() +
                                " does not match output shape " + out_node.value.shape_str());

  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> has_grad(nodes_.size(), false);

  auto accumulate = [&](ValueId id, const Tensor& g) {
    if (!has_grad[static_cast<size_t>(id)]) {
      grads[static_cast<size_t>(id)] = g;
      has_grad[static_cast<size_t>(id)] = true;
    } else {
      auto acc = as_map(grads[static_cast<size_t>(id)]);
      acc += as_map(g);
    }
  };

  accumulate(output, seed);

  for (ValueId id = output; id >= 0; --id) {
    if (!has_grad[static_cast<size_t>(id)]) continue;
    const Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor& g = grads[static_cast<size_t>(id)];
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        const Tensor& ta = node(n.a).value;
        const Tensor& tb = node(n.b).value;
        auto mg = as_map(g);
        auto ma = as_map(ta);
        auto mb = as_map(tb);
        // C = A' B' with A' = op(A), B' = op(B):
        //   dA' = dC B'^T, dB' = A'^T dC, then undo the transposes.
        Tensor da = Tensor::zeros(ta.shape());
        Tensor db = Tensor::zeros(tb.shape());
        auto mda = as_map(da);
        auto mdb = as_map(db);
        if (!n.trans_a) {
          if (!n.trans_b) mda.noalias() = mg * mb.transpose();
          else mda.noalias() = mg * mb;
        } else {
          if (!n.trans_b) mda.noalias() = mb * mg.transpose();
          else mda.noalias() = mb.transpose() * mg.transpose();
        }
        if (!n.trans_b) {
          if (!n.trans_a) mdb.noalias() = ma.transpose() * mg;
          else mdb.noalias() = ma * mg;
        } else {
          if (!n.trans_a) mdb.noalias() = mg.transpose() * ma;
          else mdb.noalias() = mg.transpose() * ma.transpose();
        }
        accumulate(n.a, da);
        accumulate(n.b, db);
        break;
      }
      case Op::add: {
        accumulate(n.a, g);
        const Tensor& tb = node(n.b).value;
        if (tb.same_shape(n.value)) {
          accumulate(n.b, g);
        } else if (tb.rows() == 1 && tb.cols() == 1) {
          double s = 0.0;
          for (double v : g.values()) s += v;
          accumulate(n.b, Tensor::scalar(s));
        } else {
          Tensor db = Tensor::zeros({1, tb.cols()});
          as_map(db).row(0) = as_map(g).colwise().sum();
          accumulate(n.b, db);
        }
        break;
      }
      case Op::sub: {
        accumulate(n.a, g);
        const Tensor& tb = node(n.b).value;
        if (tb.same_shape(n.value)) {
          Tensor db = g;
          for (double& v : db.values()) v = -v;
          accumulate(n.b, db);
        } else {
          double s = 0.0;
          for (double v : g.values()) s += v;
          accumulate(n.b, Tensor::scalar(-s));
        }
        break;
      }
      case Op::tanh: {
        Tensor da = g;
        const auto& y = n.value.values();
        auto& d = da.values();
        for (size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - y[i] * y[i];
        accumulate(n.a, da);
        break;
      }
      case Op::relu: {
        Tensor da = g;
        const auto& y = n.value.values();
        auto& d = da.values();
        for (size_t i = 0; i < d.size(); ++i) {
          if (y[i] <= 0.0) d[i] = 0.0;
        }
        accumulate(n.a, da);
        break;
      }
      case Op::log_softmax: {
        // dx = dy - softmax(x) * rowsum(dy); softmax recovered as exp(y).
        Tensor da = g;
        const int r = n.value.rows(), c = n.value.cols();
        for (int i = 0; i < r; ++i) {
          double row_sum = 0.0;
          for (int j = 0; j < c; ++j) row_sum += g.at(i, j);
          for (int j = 0; j < c; ++j) da.at(i, j) -= std::exp(n.value.at(i, j)) * row_sum;
        }
        accumulate(n.a, da);
        break;
      }
      case Op::gather: {
        const Tensor& ta = node(n.a).value;
        Tensor da = Tensor::zeros(ta.shape());
        for (int i = 0; i < ta.rows(); ++i) da.at(i, n.columns[i]) += g.at(i, 0);
        accumulate(n.a, da);
        break;
      }
      case Op::reduce_sum: {
        const Tensor& ta = node(n.a).value;
        Tensor da = ta;
        const double s = g.values()[0];
        for (double& v : da.values()) v = s;
        accumulate(n.a, da);
        break;
      }
      case Op::square: {
        Tensor da = g;
        const auto& x = node(n.a).value.values();
        auto& d = da.values();
        for (size_t i = 0; i < d.size(); ++i) d[i] *= 2.0 * x[i];
        accumulate(n.a, da);
        break;
      }
      case Op::mul_const: {
        Tensor da = g;
        for (double& v : da.values()) v *= n.scalar;
        accumulate(n.a, da);
        break;
      }
      case Op::add_const:
        accumulate(n.a, g);
        break;
    }
  }

  GradientMap result;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op != Op::leaf || n.param.empty()) continue;
    if (result.count(n.param))
      throw std::runtime_error("Tape: duplicate parameter leaf '" + n.param + "'");
    if (has_grad[i]) result.emplace(n.param, grads[i]);
    else result.emplace(n.param, Tensor::zeros(n.value.shape()));
  }
  return result;
}

}  // namespace softflow
