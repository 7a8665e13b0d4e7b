#include "vcaug/nn/autograd.hpp"

#include <cmath>

#include "vcaug/error.hpp"

namespace vcaug::nn {

Var Tape::Constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.own = std::move(value);
  n.value = &n.own;
  return Var(&n, this);
}

Var Tape::Param(Parameter& p) {
  Node& n = nodes_.emplace_back();
  n.value = &p.value;
  n.param = &p;
  n.requires_grad = record_;
  if (record_ && p.grad.rows() != p.value.rows()) p.ZeroGrad();
  return Var(&n, this);
}

Var Tape::Emit(Matrix value, std::initializer_list<Var> inputs,
               std::function<void(Node&)> bw) {
  return Emit(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(bw));
}

Var Tape::Emit(Matrix value, std::span<const Var> inputs,
               std::function<void(Node&)> bw) {
  Node& n = nodes_.emplace_back();
  n.own = std::move(value);
  n.value = &n.own;
  if (record_) {
    for (const Var& v : inputs) {
      if (v.requires_grad()) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(bw);
  }
  return Var(&n, this);
}

void Tape::Backward(Var loss) {
  if (!record_) throw ContractError("Backward on a non-recording tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("Backward expects a scalar loss");
  }
  Node* root = loss.node();
  if (!root->requires_grad) return;
  root->grad = Matrix::Ones(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (n.backward && n.grad.size() != 0) n.backward(n);
  }
}

namespace {

void RequireSameShape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch " +
                        std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

}  // namespace

Var MatMul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ContractError("MatMul: inner dimension mismatch");
  Node* na = a.node();
  Node* nb = b.node();
  Matrix out = a.value() * b.value();
  return a.tape()->Emit(std::move(out), {a, b}, [na, nb](Node& self) {
    if (na->requires_grad) Accumulate(na, self.grad * nb->value->transpose());
    if (nb->requires_grad) Accumulate(nb, na->value->transpose() * self.grad);
  });
}

Var Affine(Var x, Var w, Var b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw ContractError("Affine: shape mismatch (input " + std::to_string(x.cols()) +
                        " cols, weight " + std::to_string(w.rows()) + "x" +
                        std::to_string(w.cols()) + ")");
  }
  Node* nx = x.node();
  Node* nw = w.node();
  Node* nb = b.node();
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return x.tape()->Emit(std::move(out), {x, w, b}, [nx, nw, nb](Node& self) {
    if (nx->requires_grad) Accumulate(nx, self.grad * nw->value->transpose());
    if (nw->requires_grad) Accumulate(nw, nx->value->transpose() * self.grad);
    if (nb->requires_grad) Accumulate(nb, self.grad.colwise().sum());
  });
}

Var Add(Var a, Var b) {
  RequireSameShape(a, b, "Add");
  Node* na = a.node();
  Node* nb = b.node();
  return a.tape()->Emit(a.value() + b.value(), {a, b}, [na, nb](Node& self) {
    Accumulate(na, self.grad);
    Accumulate(nb, self.grad);
  });
}

Var AddRow(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ContractError("AddRow: row shape mismatch");
  }
  Node* na = a.node();
  Node* nr = row.node();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape()->Emit(std::move(out), {a, row}, [na, nr](Node& self) {
    Accumulate(na, self.grad);
    if (nr->requires_grad) Accumulate(nr, self.grad.colwise().sum());
  });
}

Var Sub(Var a, Var b) {
  RequireSameShape(a, b, "Sub");
  Node* na = a.node();
  Node* nb = b.node();
  return a.tape()->Emit(a.value() - b.value(), {a, b}, [na, nb](Node& self) {
    Accumulate(na, self.grad);
    if (nb->requires_grad) Accumulate(nb, -self.grad);
  });
}

Var Mul(Var a, Var b) {
  RequireSameShape(a, b, "Mul");
  Node* na = a.node();
  Node* nb = b.node();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->Emit(std::move(out), {a, b}, [na, nb](Node& self) {
    if (na->requires_grad) Accumulate(na, self.grad.cwiseProduct(*nb->value));
    if (nb->requires_grad) Accumulate(nb, self.grad.cwiseProduct(*na->value));
  });
}

Var Scale(Var a, double s) {
  Node* na = a.node();
  return a.tape()->Emit(a.value() * s, {a},
                        [na, s](Node& self) { Accumulate(na, self.grad * s); });
}

Var AddScalar(Var a, double s) {
  Node* na = a.node();
  Matrix out = a.value().array() + s;
  return a.tape()->Emit(std::move(out), {a},
                        [na](Node& self) { Accumulate(na, self.grad); });
}

Var Tanh(Var a) {
  Node* na = a.node();
  Matrix out = a.value().array().tanh();
  return a.tape()->Emit(std::move(out), {a}, [na](Node& self) {
    Accumulate(na, (self.grad.array() * (1.0 - self.value->array().square())).matrix());
  });
}

Var Sigmoid(Var a) {
  Node* na = a.node();
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.tape()->Emit(std::move(out), {a}, [na](Node& self) {
    const auto& y = self.value->array();
    Accumulate(na, (self.grad.array() * y * (1.0 - y)).matrix());
  });
}

Var Relu(Var a) {
  Node* na = a.node();
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->Emit(std::move(out), {a}, [na](Node& self) {
    Accumulate(na, (self.grad.array() * (na->value->array() > 0.0).cast<double>()).matrix());
  });
}

Var Exp(Var a) {
  Node* na = a.node();
  Matrix out = a.value().array().exp();
  return a.tape()->Emit(std::move(out), {a}, [na](Node& self) {
    Accumulate(na, self.grad.cwiseProduct(*self.value));
  });
}

Var Clamp(Var a, double lo, double hi) {
  Node* na = a.node();
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape()->Emit(std::move(out), {a}, [na, lo, hi](Node& self) {
    const auto& x = na->value->array();
    Accumulate(na, (self.grad.array() * ((x >= lo) && (x <= hi)).cast<double>()).matrix());
  });
}

Var Transpose(Var a) {
  Node* na = a.node();
  Matrix out = a.value().transpose();
  return a.tape()->Emit(std::move(out), {a}, [na](Node& self) {
    Accumulate(na, self.grad.transpose());
  });
}

Var Reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ContractError("Reshape: element count mismatch");
  Node* na = a.node();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape()->Emit(std::move(out), {a}, [na](Node& self) {
    Accumulate(na, Eigen::Map<const Matrix>(self.grad.data(), na->value->rows(), na->value->cols()));
  });
}

Var SoftmaxRows(Var a) {
  Node* na = a.node();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return a.tape()->Emit(std::move(out), {a}, [na](Node& self) {
    const Matrix& y = *self.value;
    Matrix gy = self.grad.cwiseProduct(y);
    Eigen::VectorXd s = gy.rowwise().sum();
    Matrix g = gy - (y.array().colwise() * s.array()).matrix();
    Accumulate(na, g);
  });
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("ConcatCols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ContractError("ConcatCols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Node*> nodes;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += p.cols();
  }
  return parts[0].tape()->Emit(
      std::move(out), parts, [nodes = std::move(nodes), offsets = std::move(offsets)](Node& self) {
        for (size_t i = 0; i < nodes.size(); ++i) {
          if (nodes[i]->requires_grad) {
            Accumulate(nodes[i], self.grad.middleCols(offsets[i], nodes[i]->value->cols()));
          }
        }
      });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("ConcatRows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ContractError("ConcatRows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Node*> nodes;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += p.rows();
  }
  return parts[0].tape()->Emit(
      std::move(out), parts, [nodes = std::move(nodes), offsets = std::move(offsets)](Node& self) {
        for (size_t i = 0; i < nodes.size(); ++i) {
          if (nodes[i]->requires_grad) {
            Accumulate(nodes[i], self.grad.middleRows(offsets[i], nodes[i]->value->rows()));
          }
        }
      });
}

Var SliceRows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ContractError("SliceRows: out of range");
  }
  Node* na = a.node();
  Matrix out = a.value().middleRows(start, count);
  return a.tape()->Emit(std::move(out), {a}, [na, start, count](Node& self) {
    Matrix g = Matrix::Zero(na->value->rows(), na->value->cols());
    g.middleRows(start, count) = self.grad;
    Accumulate(na, g);
  });
}

Var SliceCols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ContractError("SliceCols: out of range");
  }
  Node* na = a.node();
  Matrix out = a.value().middleCols(start, count);
  return a.tape()->Emit(std::move(out), {a}, [na, start, count](Node& self) {
    Matrix g = Matrix::Zero(na->value->rows(), na->value->cols());
    g.middleCols(start, count) = self.grad;
    Accumulate(na, g);
  });
}

Var BroadcastRows(Var row, Eigen::Index rows) {
  if (row.rows() != 1) throw ContractError("BroadcastRows: expected a single row");
  Node* nr = row.node();
  Matrix out = row.value().replicate(rows, 1);
  return row.tape()->Emit(std::move(out), {row}, [nr](Node& self) {
    Accumulate(nr, self.grad.colwise().sum());
  });
}

Var RepeatRows(Var a, int factor, Eigen::Index rows) {
  if (factor < 1) throw ContractError("RepeatRows: factor must be >= 1");
  if ((rows + factor - 1) / factor > a.rows()) {
    throw ContractError("RepeatRows: not enough source rows");
  }
  Node* na = a.node();
  Matrix out(rows, a.cols());
  for (Eigen::Index t = 0; t < rows; ++t) out.row(t) = a.value().row(t / factor);
  return a.tape()->Emit(std::move(out), {a}, [na, factor](Node& self) {
    Matrix g = Matrix::Zero(na->value->rows(), na->value->cols());
    for (Eigen::Index t = 0; t < self.grad.rows(); ++t) g.row(t / factor) += self.grad.row(t);
    Accumulate(na, g);
  });
}

Var AvgPoolRows(Var a, int factor) {
  if (factor < 1) throw ContractError("AvgPoolRows: factor must be >= 1");
  const Eigen::Index t = a.rows();
  const Eigen::Index out_rows = (t + factor - 1) / factor;
  Node* na = a.node();
  Matrix out(out_rows, a.cols());
  for (Eigen::Index k = 0; k < out_rows; ++k) {
    const Eigen::Index b = k * factor;
    const Eigen::Index n = std::min<Eigen::Index>(factor, t - b);
    out.row(k) = a.value().middleRows(b, n).colwise().mean();
  }
  return a.tape()->Emit(std::move(out), {a}, [na, factor](Node& self) {
    const Eigen::Index t = na->value->rows();
    Matrix g(t, na->value->cols());
    for (Eigen::Index r = 0; r < t; ++r) {
      const Eigen::Index k = r / factor;
      const Eigen::Index n = std::min<Eigen::Index>(factor, t - k * factor);
      g.row(r) = self.grad.row(k) / static_cast<double>(n);
    }
    Accumulate(na, g);
  });
}

Var MeanRows(Var a) {
  if (a.rows() == 0) throw ContractError("MeanRows: empty input");
  Node* na = a.node();
  Matrix out = a.value().colwise().mean();
  return a.tape()->Emit(std::move(out), {a}, [na](Node& self) {
    const double inv = 1.0 / static_cast<double>(na->value->rows());
    Accumulate(na, self.grad.replicate(na->value->rows(), 1) * inv);
  });
}

Var SumAll(Var a) {
  Node* na = a.node();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->Emit(std::move(out), {a}, [na](Node& self) {
    Accumulate(na, Matrix::Constant(na->value->rows(), na->value->cols(), self.grad(0, 0)));
  });
}

Var MeanAll(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractError("MeanAll: empty input");
  return Scale(SumAll(a), 1.0 / n);
}

Var GatherRows(Var table, std::span<const int> indices) {
  Node* nt = table.node();
  Matrix out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= table.rows()) {
      throw ContractError("GatherRows: index out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return table.tape()->Emit(std::move(out), {table}, [nt, idx = std::move(idx)](Node& self) {
    Matrix g = Matrix::Zero(nt->value->rows(), nt->value->cols());
    for (size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    Accumulate(nt, g);
  });
}

Var Unfold(Var a, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ContractError("Unfold: kernel must be odd");
  const Eigen::Index t = a.rows();
  const Eigen::Index c = a.cols();
  const int half = kernel / 2;
  Node* na = a.node();
  Matrix out = Matrix::Zero(t, c * kernel);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - half;
    // out[r, k*c:(k+1)*c] = a[r + shift]
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(t, t - shift);
    if (hi > lo) out.block(lo, k * c, hi - lo, c) = a.value().middleRows(lo + shift, hi - lo);
  }
  return a.tape()->Emit(std::move(out), {a}, [na, kernel, half](Node& self) {
    const Eigen::Index t = na->value->rows();
    const Eigen::Index c = na->value->cols();
    Matrix g = Matrix::Zero(t, c);
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index shift = k - half;
      const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
      const Eigen::Index hi = std::min<Eigen::Index>(t, t - shift);
      if (hi > lo) g.middleRows(lo + shift, hi - lo) += self.grad.block(lo, k * c, hi - lo, c);
    }
    Accumulate(na, g);
  });
}

Var L1Loss(Var pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ContractError("L1Loss: shape mismatch");
  }
  const double n = static_cast<double>(target.size());
  if (n == 0) throw ContractError("L1Loss: empty input");
  Node* np = pred.node();
  Matrix diff = pred.value() - target;
  Matrix out(1, 1);
  out(0, 0) = diff.cwiseAbs().sum() / n;
  return pred.tape()->Emit(std::move(out), {pred},
                           [np, diff = std::move(diff), n](Node& self) {
                             Matrix g = diff.unaryExpr([](double d) {
                               return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                             });
                             Accumulate(np, g * (self.grad(0, 0) / n));
                           });
}

Var BceWithLogits(Var logits, const Matrix& labels) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) {
    throw ContractError("BceWithLogits: shape mismatch");
  }
  const double n = static_cast<double>(labels.size());
  if (n == 0) throw ContractError("BceWithLogits: empty input");
  Node* nl = logits.node();
  const Matrix& x = logits.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x.data()[i];
    const double yi = labels.data()[i];
    total += std::max(xi, 0.0) - xi * yi + std::log1p(std::exp(-std::abs(xi)));
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return logits.tape()->Emit(std::move(out), {logits}, [nl, labels, n](Node& self) {
    Matrix sig = (1.0 / (1.0 + (-nl->value->array()).exp())).matrix();
    Accumulate(nl, (sig - labels) * (self.grad(0, 0) / n));
  });
}

Var CrossEntropy(Var logits, std::span<const int> labels) {
  if (static_cast<size_t>(logits.rows()) != labels.size() || labels.empty()) {
    throw ContractError("CrossEntropy: label count mismatch");
  }
  Node* nl = logits.node();
  const Matrix& x = logits.value();
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int y = labels[static_cast<size_t>(r)];
    if (y < 0 || y >= x.cols()) throw ContractError("CrossEntropy: label out of range");
    const double m = x.row(r).maxCoeff();
    probs.row(r) = (x.row(r).array() - m).exp();
    const double z = probs.row(r).sum();
    probs.row(r) /= z;
    total -= x(r, y) - m - std::log(z);
  }
  const double n = static_cast<double>(x.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape()->Emit(std::move(out), {logits},
                             [nl, probs = std::move(probs), ys = std::move(ys), n](Node& self) {
                               Matrix g = probs;
                               for (size_t r = 0; r < ys.size(); ++r) g(static_cast<Eigen::Index>(r), ys[r]) -= 1.0;
                               Accumulate(nl, g * (self.grad(0, 0) / n));
                             });
}

Var KlStandardNormal(Var mu, Var log_var) {
  RequireSameShape(mu, log_var, "KlStandardNormal");
  Node* nm = mu.node();
  Node* nv = log_var.node();
  const auto& m = mu.value().array();
  const auto& lv = log_var.value().array();
  Matrix out(1, 1);
  out(0, 0) = 0.5 * (m.square() + lv.exp() - 1.0 - lv).sum();
  return mu.tape()->Emit(std::move(out), {mu, log_var}, [nm, nv](Node& self) {
    const double g = self.grad(0, 0);
    if (nm->requires_grad) Accumulate(nm, *nm->value * g);
    if (nv->requires_grad) {
      Accumulate(nv, ((nv->value->array().exp() - 1.0) * (0.5 * g)).matrix());
    }
  });
}

}  // namespace vcaug::nn
