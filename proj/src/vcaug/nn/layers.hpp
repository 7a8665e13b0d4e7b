#pragma once

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "vcaug/nn/autograd.hpp"

namespace vcaug {
class Rng;
class BinaryWriter;
class BinaryReader;
}  // namespace vcaug

namespace vcaug::nn {

// Owns every Parameter of a model, in registration order. Addresses are
// stable for the lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& Create(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Parameter& Get(const std::string& name);

  const std::vector<std::string>& names() const { return names_; }
  size_t size() const { return names_.size(); }
  size_t ScalarCount() const;

  void ZeroGrad();
  // Global L2 norm of all gradients.
  double GradNorm() const;
  void ScaleGrad(double s);

  void Write(BinaryWriter& w) const;
  // Overwrites values; the stored layout must match name for name.
  void Read(BinaryReader& r);

  std::vector<Parameter*> All();

 private:
  std::deque<Parameter> params_;
  std::vector<std::string> names_;
  std::map<std::string, Parameter*> by_name_;
};

// Glorot-uniform weights, zero bias.
void InitGlorot(Parameter& p, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  int in_ = 0;
  int out_ = 0;
};

// 1-D convolution over time (rows), "same" zero padding, odd kernel.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, int in, int out, int kernel,
         Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  int out() const { return proj_.out(); }

 private:
  Linear proj_;
  int kernel_ = 1;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParameterStore& store, const std::string& name, int vocab, int dim, Rng& rng);

  Var operator()(Tape& tape, std::span<const int> ids) const;
  int dim() const { return dim_; }

 private:
  Parameter* table_ = nullptr;
  int dim_ = 0;
};

// Gated recurrent unit; operates on a single row (1 x in) per step.
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng);

  Var operator()(Tape& tape, Var x, Var h) const;
  Var InitialState(Tape& tape) const;
  int hidden() const { return hidden_; }

 private:
  Linear input_;
  Linear recurrent_;
  int hidden_ = 0;
};

}  // namespace vcaug::nn
