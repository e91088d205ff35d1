#pragma once

#include "uavsim/nn/layers.hpp"

namespace uavsim::nn {

// Stride-1 same-padding 2-D convolution over [batch, ch, H, W], square
// kernel, optional fused ReLU. Enough for the desk-scale classifier;
// nothing more.
class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels,
              std::size_t kernel, bool relu);

  Tensor forward(const Tensor& x, bool train, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Tensor*> params() override { return {&weights, &bias}; }
  std::vector<Tensor*> grads() override { return {&grad_weights, &grad_bias}; }
  std::string kind() const override { return "conv2d"; }

  void init_glorot(Rng& rng);

  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t kernel() const { return weights.dim(2); }

  Tensor weights;  // [out_ch, in_ch, k, k]
  Tensor bias;     // [out_ch]
  bool relu;
  Tensor grad_weights;
  Tensor grad_bias;

 private:
  Tensor input_;
  Tensor output_;
  bool has_cache_ = false;
};

// Serial reference used by the gradient/bench suites; bitwise-identical
// result to Conv2dLayer's OpenMP forward.
Tensor conv2d_forward_serial(const Tensor& x, const Tensor& weights,
                             const Tensor& bias, bool relu);

// 2x2 max-pool, stride 2. Odd trailing row/column is dropped.
class MaxPool2dLayer : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "maxpool2"; }

 private:
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;  // flat input index per output element
};

}  // namespace uavsim::nn
