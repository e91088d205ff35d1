#include "uavsim/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "uavsim/nn/kernels.hpp"

namespace uavsim::nn {

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "softmax") return Activation::Softmax;
  throw ConfigError("unknown activation: " + name);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Softmax: return "softmax";
  }
  throw ConfigError("bad activation enum");
}

double sigmoid(double x) {
  // Piecewise so exp never overflows.
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor softmax(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("softmax expects [batch, k]");
  const std::size_t batch = x.dim(0), k = x.dim(1);
  Tensor y = Tensor::zeros({batch, k});
  for (std::size_t i = 0; i < batch; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(x.at(i, j) - mx);
      y.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < k; ++j) y.at(i, j) /= sum;
  }
  return y;
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("log_softmax expects [batch, k]");
  const std::size_t batch = x.dim(0), k = x.dim(1);
  Tensor y = Tensor::zeros({batch, k});
  for (std::size_t i = 0; i < batch; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(x.at(i, j) - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < k; ++j) y.at(i, j) = x.at(i, j) - lse;
  }
  return y;
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act)
    : weights(Tensor::zeros({in, out})),
      bias(Tensor::zeros({out})),
      activation(act),
      grad_weights(Tensor::zeros({in, out})),
      grad_bias(Tensor::zeros({out})) {}

void DenseLayer::init_glorot(Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(in_size() + out_size()));
  for (double& w : weights.data) w = rng.uniform(-limit, limit);
  for (double& b : bias.data) b = 0.0;
}

Tensor DenseLayer::forward(const Tensor& x, bool /*train*/, Rng* /*rng*/) {
  if (x.rank() != 2 || x.dim(1) != in_size())
    throw DimensionError("dense_forward: input does not match [batch, " +
                         std::to_string(in_size()) + "]");
  const std::size_t batch = x.dim(0), out = out_size();
  Tensor y = Tensor::zeros({batch, out});
  matmul(x.data.data(), weights.data.data(), y.data.data(), batch, in_size(),
         out);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < out; ++j) y.at(i, j) += bias.at(j);

  switch (activation) {
    case Activation::Identity:
      break;
    case Activation::ReLU:
      for (double& v : y.data) v = std::max(0.0, v);
      break;
    case Activation::Tanh:
      for (double& v : y.data) v = std::tanh(v);
      break;
    case Activation::Softmax:
      y = softmax(y);
      break;
  }
  input_ = x;
  output_ = y;
  has_cache_ = true;
  return y;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) throw StateError("dense backward before forward");
  if (!grad_out.same_shape(output_))
    throw DimensionError("dense backward: gradient shape mismatch");
  const std::size_t batch = input_.dim(0), in = in_size(), out = out_size();

  // Gradient through the activation, into the pre-activation z.
  Tensor gz = grad_out;
  switch (activation) {
    case Activation::Identity:
      break;
    case Activation::ReLU:
      for (std::size_t i = 0; i < gz.data.size(); ++i)
        if (output_.data[i] <= 0.0) gz.data[i] = 0.0;
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < gz.data.size(); ++i)
        gz.data[i] *= 1.0 - output_.data[i] * output_.data[i];
      break;
    case Activation::Softmax:
      for (std::size_t i = 0; i < batch; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < out; ++j)
          dot += grad_out.at(i, j) * output_.at(i, j);
        for (std::size_t j = 0; j < out; ++j)
          gz.at(i, j) = output_.at(i, j) * (grad_out.at(i, j) - dot);
      }
      break;
  }

  matmul_tn_acc(input_.data.data(), gz.data.data(), grad_weights.data.data(),
                in, batch, out);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < out; ++j) grad_bias.at(j) += gz.at(i, j);

  Tensor gx = Tensor::zeros({batch, in});
  matmul_nt(gz.data.data(), weights.data.data(), gx.data.data(), batch, out,
            in);
  return gx;
}

DropoutLayer::DropoutLayer(double rate) : rate_(rate) { set_rate(rate); }

void DropoutLayer::set_rate(double rate) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must be in [0, 1)");
  rate_ = rate;
}

Tensor DropoutLayer::forward(const Tensor& x, bool train, Rng* rng) {
  if (!train || rate_ == 0.0) {
    masked_ = false;
    return x;
  }
  if (rng == nullptr) throw StateError("train-mode dropout requires an rng");
  const double keep_scale = 1.0 / (1.0 - rate_);
  mask_.resize(x.data.size());
  Tensor y = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    mask_[i] = rng->bernoulli(rate_) ? 0.0 : keep_scale;
    y.data[i] *= mask_[i];
  }
  masked_ = true;
  return y;
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
  if (!masked_) return grad_out;
  if (grad_out.data.size() != mask_.size())
    throw DimensionError("dropout backward: gradient shape mismatch");
  Tensor gx = grad_out;
  for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] *= mask_[i];
  return gx;
}

Tensor FlattenLayer::forward(const Tensor& x, bool /*train*/, Rng* /*rng*/) {
  if (x.rank() < 2) throw DimensionError("flatten expects rank >= 2");
  in_shape_ = x.shape;
  return x.reshaped({x.dim(0), x.numel() / x.dim(0)});
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
  if (in_shape_.empty()) throw StateError("flatten backward before forward");
  return grad_out.reshaped(in_shape_);
}

}  // namespace uavsim::nn
