#include "uavsim/nn/lstm.hpp"

#include <cmath>

#include "uavsim/nn/kernels.hpp"

namespace uavsim::nn {

LstmLayer::LstmLayer(std::size_t input_size, std::size_t hidden_size)
    : w_input(Tensor::zeros({input_size + hidden_size, hidden_size})),
      w_forget(Tensor::zeros({input_size + hidden_size, hidden_size})),
      w_output(Tensor::zeros({input_size + hidden_size, hidden_size})),
      w_cell(Tensor::zeros({input_size + hidden_size, hidden_size})),
      b_input(Tensor::zeros({hidden_size})),
      b_forget(Tensor::zeros({hidden_size})),
      b_output(Tensor::zeros({hidden_size})),
      b_cell(Tensor::zeros({hidden_size})),
      gw_input(Tensor::zeros({input_size + hidden_size, hidden_size})),
      gw_forget(Tensor::zeros({input_size + hidden_size, hidden_size})),
      gw_output(Tensor::zeros({input_size + hidden_size, hidden_size})),
      gw_cell(Tensor::zeros({input_size + hidden_size, hidden_size})),
      gb_input(Tensor::zeros({hidden_size})),
      gb_forget(Tensor::zeros({hidden_size})),
      gb_output(Tensor::zeros({hidden_size})),
      gb_cell(Tensor::zeros({hidden_size})),
      input_size_(input_size),
      hidden_size_(hidden_size) {}

std::vector<Tensor*> LstmLayer::params() {
  return {&w_input, &w_forget, &w_output, &w_cell,
          &b_input, &b_forget, &b_output, &b_cell};
}

std::vector<Tensor*> LstmLayer::grads() {
  return {&gw_input, &gw_forget, &gw_output, &gw_cell,
          &gb_input, &gb_forget, &gb_output, &gb_cell};
}

void LstmLayer::init_glorot(Rng& rng) {
  const double limit = std::sqrt(
      6.0 / static_cast<double>(input_size_ + 2 * hidden_size_));
  for (Tensor* w : {&w_input, &w_forget, &w_output, &w_cell})
    for (double& v : w->data) v = rng.uniform(-limit, limit);
  for (double& v : b_forget.data) v = 1.0;
}

namespace {
// gate = act(concat * W + b), act elementwise.
Tensor gate_forward(const Tensor& concat, const Tensor& w, const Tensor& b,
                    bool use_tanh) {
  const std::size_t batch = concat.dim(0), hidden = w.dim(1);
  Tensor z = Tensor::zeros({batch, hidden});
  matmul(concat.data.data(), w.data.data(), z.data.data(), batch, w.dim(0),
         hidden);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < hidden; ++j) {
      const double pre = z.at(i, j) + b.at(j);
      z.at(i, j) = use_tanh ? std::tanh(pre) : sigmoid(pre);
    }
  return z;
}
}  // namespace

Tensor LstmLayer::forward(const Tensor& sequence, bool /*train*/,
                          Rng* /*rng*/) {
  if (sequence.rank() != 3 || sequence.dim(2) != input_size_)
    throw DimensionError("lstm_forward: expected [batch, T, " +
                         std::to_string(input_size_) + "]");
  const std::size_t batch = sequence.dim(0), T = sequence.dim(1);
  if (T < 1) throw DimensionError("lstm_forward: empty sequence");

  steps_.clear();
  steps_.reserve(T);
  batch_ = batch;

  Tensor h = Tensor::zeros({batch, hidden_size_});
  Tensor c = Tensor::zeros({batch, hidden_size_});
  for (std::size_t t = 0; t < T; ++t) {
    StepCache cache;
    cache.concat = Tensor::zeros({batch, input_size_ + hidden_size_});
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < input_size_; ++j)
        cache.concat.at(i, j) = sequence.at(i, t, j);
      for (std::size_t j = 0; j < hidden_size_; ++j)
        cache.concat.at(i, input_size_ + j) = h.at(i, j);
    }
    cache.gate_i = gate_forward(cache.concat, w_input, b_input, false);
    cache.gate_f = gate_forward(cache.concat, w_forget, b_forget, false);
    cache.gate_o = gate_forward(cache.concat, w_output, b_output, false);
    cache.gate_g = gate_forward(cache.concat, w_cell, b_cell, true);

    cache.cell = Tensor::zeros({batch, hidden_size_});
    cache.cell_tanh = Tensor::zeros({batch, hidden_size_});
    for (std::size_t i = 0; i < batch * hidden_size_; ++i) {
      cache.cell.data[i] = cache.gate_f.data[i] * c.data[i] +
                           cache.gate_i.data[i] * cache.gate_g.data[i];
      cache.cell_tanh.data[i] = std::tanh(cache.cell.data[i]);
      h.data[i] = cache.gate_o.data[i] * cache.cell_tanh.data[i];
    }
    c = cache.cell;
    steps_.push_back(std::move(cache));
  }
  has_cache_ = true;
  return h;
}

Tensor LstmLayer::backward(const Tensor& grad_hidden) {
  if (!has_cache_) throw StateError("lstm backward before forward");
  require_shape(grad_hidden, {batch_, hidden_size_}, "lstm backward");
  const std::size_t T = steps_.size();
  const std::size_t concat_size = input_size_ + hidden_size_;

  Tensor dx = Tensor::zeros({batch_, T, input_size_});
  Tensor dh = grad_hidden;
  Tensor dc = Tensor::zeros({batch_, hidden_size_});

  for (std::size_t t = T; t-- > 0;) {
    const StepCache& s = steps_[t];
    Tensor di = Tensor::zeros({batch_, hidden_size_});
    Tensor df = di, dout = di, dg = di;
    const Tensor* prev_cell = (t > 0) ? &steps_[t - 1].cell : nullptr;

    for (std::size_t i = 0; i < batch_ * hidden_size_; ++i) {
      const double tc = s.cell_tanh.data[i];
      dout.data[i] = dh.data[i] * tc;
      dc.data[i] += dh.data[i] * s.gate_o.data[i] * (1.0 - tc * tc);

      const double cprev = prev_cell ? prev_cell->data[i] : 0.0;
      di.data[i] = dc.data[i] * s.gate_g.data[i];
      dg.data[i] = dc.data[i] * s.gate_i.data[i];
      df.data[i] = dc.data[i] * cprev;
      dc.data[i] *= s.gate_f.data[i];  // becomes dc for step t-1

      // Through the gate nonlinearities, into the pre-activations.
      const double gi = s.gate_i.data[i], gf = s.gate_f.data[i],
                   go = s.gate_o.data[i], gg = s.gate_g.data[i];
      di.data[i] *= gi * (1.0 - gi);
      df.data[i] *= gf * (1.0 - gf);
      dout.data[i] *= go * (1.0 - go);
      dg.data[i] *= 1.0 - gg * gg;
    }

    Tensor dconcat = Tensor::zeros({batch_, concat_size});
    struct GateRef { const Tensor* dz; Tensor* gw; Tensor* gb; const Tensor* w; };
    const GateRef gates[4] = {{&di, &gw_input, &gb_input, &w_input},
                              {&df, &gw_forget, &gb_forget, &w_forget},
                              {&dout, &gw_output, &gb_output, &w_output},
                              {&dg, &gw_cell, &gb_cell, &w_cell}};
    Tensor dconcat_part = Tensor::zeros({batch_, concat_size});
    for (const GateRef& g : gates) {
      matmul_tn_acc(s.concat.data.data(), g.dz->data.data(),
                    g.gw->data.data(), concat_size, batch_, hidden_size_);
      for (std::size_t i = 0; i < batch_; ++i)
        for (std::size_t j = 0; j < hidden_size_; ++j)
          g.gb->at(j) += g.dz->at(i, j);
      matmul_nt(g.dz->data.data(), g.w->data.data(),
                dconcat_part.data.data(), batch_, hidden_size_, concat_size);
      for (std::size_t i = 0; i < dconcat.data.size(); ++i)
        dconcat.data[i] += dconcat_part.data[i];
    }

    for (std::size_t i = 0; i < batch_; ++i) {
      for (std::size_t j = 0; j < input_size_; ++j)
        dx.at(i, t, j) = dconcat.at(i, j);
      for (std::size_t j = 0; j < hidden_size_; ++j)
        dh.at(i, j) = dconcat.at(i, input_size_ + j);
    }
  }
  return dx;
}

}  // namespace uavsim::nn
