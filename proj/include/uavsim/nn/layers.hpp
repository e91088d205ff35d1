#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uavsim/nn/tensor.hpp"
#include "uavsim/rng.hpp"

namespace uavsim::nn {

enum class Activation { Identity, ReLU, Tanh, Softmax };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Overflow-safe logistic sigmoid.
double sigmoid(double x);

// Row-wise softmax with max-subtraction. x: [batch, k].
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

// Base class for layers with cached-activation manual backprop.
// forward caches whatever backward needs; backward accumulates parameter
// gradients (call zero_grad between minibatches) and returns the gradient
// with respect to its input.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train, Rng* rng) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::vector<Tensor*> grads() { return {}; }
  virtual std::string kind() const = 0;

  void zero_grad() {
    for (Tensor* g : grads())
      for (double& v : g->data) v = 0.0;
  }
  Tensor eval(const Tensor& x) { return forward(x, /*train=*/false, nullptr); }
};

class DenseLayer : public Layer {
 public:
  DenseLayer(std::size_t in, std::size_t out, Activation act);

  Tensor forward(const Tensor& x, bool train, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Tensor*> params() override { return {&weights, &bias}; }
  std::vector<Tensor*> grads() override { return {&grad_weights, &grad_bias}; }
  std::string kind() const override { return "dense"; }

  void init_glorot(Rng& rng);

  std::size_t in_size() const { return weights.dim(0); }
  std::size_t out_size() const { return weights.dim(1); }

  Tensor weights;  // [in, out]
  Tensor bias;     // [out]
  Activation activation;
  Tensor grad_weights;
  Tensor grad_bias;

 private:
  Tensor input_;   // cached [batch, in]
  Tensor output_;  // cached post-activation [batch, out]
  bool has_cache_ = false;
};

// Inverted dropout: surviving activations scaled by 1/(1-rate) in train
// mode, exact identity in eval mode. Backward reuses the forward mask.
class DropoutLayer : public Layer {
 public:
  explicit DropoutLayer(double rate);

  Tensor forward(const Tensor& x, bool train, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "dropout"; }

  double rate() const { return rate_; }
  void set_rate(double rate);

 private:
  double rate_;
  std::vector<double> mask_;  // per-element scale from the last train forward
  bool masked_ = false;
};

// [batch, d1, ..., dk] -> [batch, d1*...*dk]
class FlattenLayer : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train, Rng* rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "flatten"; }

 private:
  std::vector<std::size_t> in_shape_;
};

}  // namespace uavsim::nn
