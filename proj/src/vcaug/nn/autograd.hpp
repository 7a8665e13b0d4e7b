#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace vcaug::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// A trainable tensor. Gradients accumulate into `grad` across Backward()
// calls until the optimizer clears them.
struct Parameter {
  Matrix value;
  Matrix grad;

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

struct Node {
  Matrix own;                    // value storage for computed nodes
  const Matrix* value = nullptr; // points at `own` or at a Parameter
  Matrix grad;                   // empty until something flows back
  Parameter* param = nullptr;
  bool requires_grad = false;
  std::function<void(Node&)> backward;
};

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;
  Var(Node* node, Tape* tape) : node_(node), tape_(tape) {}

  const Matrix& value() const { return *node_->value; }
  Eigen::Index rows() const { return node_->value->rows(); }
  Eigen::Index cols() const { return node_->value->cols(); }
  double item() const { return (*node_->value)(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }

  Node* node() const { return node_; }
  Tape* tape() const { return tape_; }

 private:
  Node* node_ = nullptr;
  Tape* tape_ = nullptr;
};

// Records a forward computation for reverse-mode differentiation. With
// recording off (inference) no backward closures are kept.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var Constant(Matrix value);
  Var Param(Parameter& p);

  // Internal: registers a computed node. `bw` runs only when at least one
  // input requires a gradient and recording is on.
  Var Emit(Matrix value, std::initializer_list<Var> inputs,
           std::function<void(Node&)> bw);
  Var Emit(Matrix value, std::span<const Var> inputs,
           std::function<void(Node&)> bw);

  // Seeds d(loss)/d(loss) = 1 and propagates to every parameter.
  void Backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
  bool record_;
};

// Adds `g` into the gradient slot of `n` (parameter or intermediate).
template <typename Expr>
void Accumulate(Node* n, const Expr& g) {
  if (!n->requires_grad) return;
  if (n->param != nullptr) {
    n->param->grad += g;
  } else if (n->grad.size() == 0) {
    n->grad = g;
  } else {
    n->grad += g;
  }
}

// ---- elementwise and linear algebra ----
Var MatMul(Var a, Var b);
// x * W + b (b broadcast over rows).
Var Affine(Var x, Var w, Var b);
Var Add(Var a, Var b);
Var AddRow(Var a, Var row);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double s);
Var AddScalar(Var a, double s);
Var Tanh(Var a);
Var Sigmoid(Var a);
Var Relu(Var a);
Var Exp(Var a);
// Identity inside [lo, hi], clipped (zero gradient) outside.
Var Clamp(Var a, double lo, double hi);
Var Transpose(Var a);
// Row-major reshape (same element order).
Var Reshape(Var a, Eigen::Index rows, Eigen::Index cols);
Var SoftmaxRows(Var a);

// ---- shape ----
Var ConcatCols(std::span<const Var> parts);
Var ConcatRows(std::span<const Var> parts);
Var SliceRows(Var a, Eigen::Index start, Eigen::Index count);
Var SliceCols(Var a, Eigen::Index start, Eigen::Index count);
// 1 x C row repeated `rows` times.
Var BroadcastRows(Var row, Eigen::Index rows);
// Row t of the output is row floor(t / factor) of `a`; output has `rows` rows.
Var RepeatRows(Var a, int factor, Eigen::Index rows);
// Mean over consecutive blocks of `factor` rows; ceil(T / factor) outputs,
// the last block averaging however many rows remain.
Var AvgPoolRows(Var a, int factor);
Var MeanRows(Var a);
Var SumAll(Var a);
Var MeanAll(Var a);
// Rows of `table` selected by `indices`.
Var GatherRows(Var table, std::span<const int> indices);
// Zero-padded "same" window unfolding for 1-D convolution over rows.
// Output row t = [a[t - K/2], ..., a[t + K/2]] flattened; K must be odd.
Var Unfold(Var a, int kernel);

// ---- losses ----
// mean |pred - target|
Var L1Loss(Var pred, const Matrix& target);
// mean binary cross-entropy of sigmoid(logits) against labels in {0,1}.
Var BceWithLogits(Var logits, const Matrix& labels);
// -mean log softmax(logits)[label] over rows.
Var CrossEntropy(Var logits, std::span<const int> labels);
// KL(N(mu, diag(exp(log_var))) || N(0, I)), summed over the row.
Var KlStandardNormal(Var mu, Var log_var);

}  // namespace vcaug::nn
