#pragma once

#include "uavsim/nn/layers.hpp"

namespace uavsim::nn {

// Single LSTM layer consuming a whole sequence [batch, T, in] and emitting
// the final hidden state [batch, hidden]. Standard recurrence: sigmoid
// input/forget/output gates, tanh candidate and output squashing. Backward
// runs truncated-at-nothing BPTT over the cached per-step gate activations.
class LstmLayer : public Layer {
 public:
  LstmLayer(std::size_t input_size, std::size_t hidden_size);

  Tensor forward(const Tensor& sequence, bool train, Rng* rng) override;
  Tensor backward(const Tensor& grad_hidden) override;
  std::vector<Tensor*> params() override;
  std::vector<Tensor*> grads() override;
  std::string kind() const override { return "lstm"; }

  // Glorot-uniform gate weights, forget-gate bias 1.0, other biases 0.
  void init_glorot(Rng& rng);

  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_size_; }

  // Gate weights [in+hidden, hidden] and biases [hidden].
  Tensor w_input, w_forget, w_output, w_cell;
  Tensor b_input, b_forget, b_output, b_cell;
  Tensor gw_input, gw_forget, gw_output, gw_cell;
  Tensor gb_input, gb_forget, gb_output, gb_cell;

 private:
  struct StepCache {
    Tensor concat;  // [batch, in+hidden]
    Tensor gate_i, gate_f, gate_o, gate_g;  // [batch, hidden]
    Tensor cell, cell_tanh;                 // [batch, hidden]
  };

  std::size_t input_size_;
  std::size_t hidden_size_;
  std::vector<StepCache> steps_;
  std::size_t batch_ = 0;
  bool has_cache_ = false;
};

}  // namespace uavsim::nn
