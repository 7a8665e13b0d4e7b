#include "vcaug/nn/optim.hpp"

#include <cmath>

#include "vcaug/error.hpp"
#include "vcaug/nn/serialize.hpp"

namespace vcaug::nn {

Adam::Adam(ParameterStore& store, AdamOptions options) : store_(store), options_(options) {
  for (Parameter* p : store_.All()) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::Step(double lr_scale) {
  if (options_.clip_norm > 0) {
    const double norm = store_.GradNorm();
    if (norm > options_.clip_norm) store_.ScaleGrad(options_.clip_norm / norm);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const double lr = options_.learning_rate * lr_scale;
  auto params = store_.All();
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * p.grad;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() / bc1) /
                       ((v_[i].array() / bc2).sqrt() + options_.epsilon);
    p.grad.setZero();
  }
}

void Adam::Write(BinaryWriter& w) const {
  w.U64(static_cast<uint64_t>(t_));
  w.F64(options_.learning_rate);
  w.U32(static_cast<uint32_t>(m_.size()));
  for (size_t i = 0; i < m_.size(); ++i) {
    w.Mat(m_[i]);
    w.Mat(v_[i]);
  }
}

void Adam::Read(BinaryReader& r) {
  t_ = static_cast<int64_t>(r.U64());
  options_.learning_rate = r.F64();
  const uint32_t n = r.U32();
  if (n != m_.size()) throw ValidationError("optimizer state does not match model");
  for (size_t i = 0; i < n; ++i) {
    m_[i] = r.Mat();
    v_[i] = r.Mat();
  }
}

}  // namespace vcaug::nn
