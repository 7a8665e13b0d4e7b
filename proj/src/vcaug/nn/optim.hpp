#pragma once

#include <cstdint>
#include <vector>

#include "vcaug/nn/layers.hpp"

namespace vcaug::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Gradients are rescaled to this global norm when larger; <= 0 disables.
  double clip_norm = 1.0;
};

// Adam with bias correction. Moment estimates are part of the checkpoint so
// that training can be continued exactly.
class Adam {
 public:
  Adam(ParameterStore& store, AdamOptions options);

  // Applies one update from the gradients currently in the store, then
  // clears them. `lr_scale` multiplies the configured learning rate.
  void Step(double lr_scale = 1.0);

  int64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

  void Write(BinaryWriter& w) const;
  void Read(BinaryReader& r);

 private:
  ParameterStore& store_;
  AdamOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  int64_t t_ = 0;
};

}  // namespace vcaug::nn
