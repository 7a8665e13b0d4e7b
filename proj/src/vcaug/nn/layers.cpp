#include "vcaug/nn/layers.hpp"

#include <cmath>

#include "vcaug/error.hpp"
#include "vcaug/nn/serialize.hpp"
#include "vcaug/util/rng.hpp"

namespace vcaug::nn {

Parameter& ParameterStore::Create(const std::string& name, Eigen::Index rows,
                                  Eigen::Index cols) {
  if (by_name_.count(name)) throw ContractError("duplicate parameter name: " + name);
  Parameter& p = params_.emplace_back();
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  names_.push_back(name);
  by_name_[name] = &p;
  return p;
}

Parameter& ParameterStore::Get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw LookupError("unknown parameter: " + name);
  return *it->second;
}

size_t ParameterStore::ScalarCount() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p.value.size());
  return n;
}

void ParameterStore::ZeroGrad() {
  for (auto& p : params_) p.ZeroGrad();
}

double ParameterStore::GradNorm() const {
  double s = 0.0;
  for (const auto& p : params_) s += p.grad.squaredNorm();
  return std::sqrt(s);
}

void ParameterStore::ScaleGrad(double s) {
  for (auto& p : params_) p.grad *= s;
}

std::vector<Parameter*> ParameterStore::All() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

void ParameterStore::Write(BinaryWriter& w) const {
  w.U32(static_cast<uint32_t>(params_.size()));
  for (size_t i = 0; i < params_.size(); ++i) {
    w.Str(names_[i]);
    w.Mat(params_[i].value);
  }
}

void ParameterStore::Read(BinaryReader& r) {
  const uint32_t n = r.U32();
  if (n != params_.size()) {
    throw ValidationError("checkpoint has " + std::to_string(n) + " parameters, model expects " +
                          std::to_string(params_.size()));
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    const std::string name = r.Str();
    if (name != names_[i]) {
      throw ValidationError("checkpoint parameter '" + name + "' where '" + names_[i] +
                            "' was expected");
    }
    Matrix m = r.Mat();
    if (m.rows() != params_[i].value.rows() || m.cols() != params_[i].value.cols()) {
      throw ValidationError("checkpoint parameter '" + name + "' has wrong shape");
    }
    params_[i].value = std::move(m);
    params_[i].ZeroGrad();
  }
}

void InitGlorot(Parameter& p, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    p.value.data()[i] = rng.Uniform(-limit, limit);
  }
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng)
    : in_(in), out_(out) {
  w_ = &store.Create(name + ".w", in, out);
  b_ = &store.Create(name + ".b", 1, out);
  InitGlorot(*w_, rng);
}

Var Linear::operator()(Tape& tape, Var x) const {
  return Affine(x, tape.Param(*w_), tape.Param(*b_));
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, int in, int out, int kernel,
               Rng& rng)
    : proj_(store, name, in * kernel, out, rng), kernel_(kernel) {
  if (kernel % 2 == 0) throw ContractError("Conv1d kernel must be odd");
}

Var Conv1d::operator()(Tape& tape, Var x) const {
  if (kernel_ == 1) return proj_(tape, x);
  return proj_(tape, Unfold(x, kernel_));
}

Embedding::Embedding(ParameterStore& store, const std::string& name, int vocab, int dim,
                     Rng& rng)
    : dim_(dim) {
  table_ = &store.Create(name, vocab, dim);
  for (Eigen::Index i = 0; i < table_->value.size(); ++i) {
    table_->value.data()[i] = 0.3 * rng.Normal();
  }
}

Var Embedding::operator()(Tape& tape, std::span<const int> ids) const {
  return GatherRows(tape.Param(*table_), ids);
}

GruCell::GruCell(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng)
    : input_(store, name + ".ih", in, 3 * hidden, rng),
      recurrent_(store, name + ".hh", hidden, 3 * hidden, rng),
      hidden_(hidden) {}

Var GruCell::InitialState(Tape& tape) const { return tape.Constant(Matrix::Zero(1, hidden_)); }

Var GruCell::operator()(Tape& tape, Var x, Var h) const {
  const Eigen::Index hs = hidden_;
  Var gi = input_(tape, x);
  Var gh = recurrent_(tape, h);
  Var r = Sigmoid(Add(SliceCols(gi, 0, hs), SliceCols(gh, 0, hs)));
  Var z = Sigmoid(Add(SliceCols(gi, hs, hs), SliceCols(gh, hs, hs)));
  Var n = Tanh(Add(SliceCols(gi, 2 * hs, hs), Mul(r, SliceCols(gh, 2 * hs, hs))));
  // h' = n + z * (h - n)
  return Add(n, Mul(z, Sub(h, n)));
}

}  // namespace vcaug::nn
