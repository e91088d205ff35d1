#include "uavsim/nn/adam.hpp"

#include <cmath>

namespace uavsim::nn {

Adam::Adam(std::vector<Tensor*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  moment1_.reserve(params_.size());
  moment2_.reserve(params_.size());
  for (const Tensor* p : params_) {
    moment1_.push_back(Tensor::zeros(p->shape));
    moment2_.push_back(Tensor::zeros(p->shape));
  }
}

void Adam::step(const std::vector<Tensor*>& grads) {
  if (grads.size() != params_.size())
    throw DimensionError("adam_step: gradient list size mismatch");
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& param = *params_[p];
    const Tensor& grad = *grads[p];
    if (!param.same_shape(grad))
      throw DimensionError("adam_step: gradient shape mismatch");
    Tensor& m1 = moment1_[p];
    Tensor& m2 = moment2_[p];
    for (std::size_t i = 0; i < param.data.size(); ++i) {
      const double g = grad.data[i];
      m1.data[i] = config_.beta1 * m1.data[i] + (1.0 - config_.beta1) * g;
      m2.data[i] = config_.beta2 * m2.data[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = m1.data[i] / bc1;
      const double vhat = m2.data[i] / bc2;
      param.data[i] -=
          config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace uavsim::nn
