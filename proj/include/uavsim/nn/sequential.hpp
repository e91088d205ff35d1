#pragma once

#include <memory>

#include "uavsim/nn/layers.hpp"

namespace uavsim::nn {

// Plain layer stack. forward caches per layer; backward walks the stack in
// reverse and accumulates parameter gradients.
class Sequential : public Layer {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x, bool train, Rng* rng) override {
    Tensor y = x;
    for (auto& layer : layers_) y = layer->forward(y, train, rng);
    return y;
  }

  // Forward through layers [from, to) only; used for split inference.
  Tensor forward_range(const Tensor& x, std::size_t from, std::size_t to,
                       bool train, Rng* rng) {
    if (from > to || to > layers_.size())
      throw DimensionError("forward_range: bad layer range");
    Tensor y = x;
    for (std::size_t i = from; i < to; ++i)
      y = layers_[i]->forward(y, train, rng);
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g);
    return g;
  }

  std::vector<Tensor*> params() override {
    std::vector<Tensor*> out;
    for (auto& layer : layers_)
      for (Tensor* p : layer->params()) out.push_back(p);
    return out;
  }
  std::vector<Tensor*> grads() override {
    std::vector<Tensor*> out;
    for (auto& layer : layers_)
      for (Tensor* g : layer->grads()) out.push_back(g);
    return out;
  }
  std::string kind() const override { return "sequential"; }

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace uavsim::nn
