#pragma once

#include "uavsim/nn/tensor.hpp"

namespace uavsim::nn {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction over a fixed parameter set.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamConfig config = {});

  // One update from the matching gradient list. Shapes must agree with the
  // bound parameters.
  void step(const std::vector<Tensor*>& grads);

  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  double learning_rate() const { return config_.learning_rate; }
  std::size_t step_count() const { return step_count_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> moment1_;
  std::vector<Tensor> moment2_;
  AdamConfig config_;
  std::size_t step_count_ = 0;
};

}  // namespace uavsim::nn
