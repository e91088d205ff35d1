#include "uavsim/nn/conv.hpp"

#include <cmath>

namespace uavsim::nn {

Conv2dLayer::Conv2dLayer(std::size_t in_channels, std::size_t out_channels,
                         std::size_t kernel, bool relu)
    : weights(Tensor::zeros({out_channels, in_channels, kernel, kernel})),
      bias(Tensor::zeros({out_channels})),
      relu(relu),
      grad_weights(Tensor::zeros({out_channels, in_channels, kernel, kernel})),
      grad_bias(Tensor::zeros({out_channels})) {
  if (kernel % 2 == 0) throw ConfigError("conv kernel must be odd");
}

void Conv2dLayer::init_glorot(Rng& rng) {
  const double fan_in =
      static_cast<double>(in_channels() * kernel() * kernel());
  const double fan_out =
      static_cast<double>(out_channels() * kernel() * kernel());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& w : weights.data) w = rng.uniform(-limit, limit);
  for (double& b : bias.data) b = 0.0;
}

namespace {
void conv2d_one(const Tensor& x, const Tensor& w, const Tensor& b, bool relu,
                Tensor& y, std::size_t batch_idx, std::size_t oc) {
  const std::size_t in_ch = w.dim(1), k = w.dim(2);
  const std::size_t h = x.dim(2), width = x.dim(3);
  const long pad = static_cast<long>(k / 2);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      double sum = b.at(oc);
      for (std::size_t ic = 0; ic < in_ch; ++ic) {
        for (std::size_t ki = 0; ki < k; ++ki) {
          const long ii = static_cast<long>(i + ki) - pad;
          if (ii < 0 || ii >= static_cast<long>(h)) continue;
          for (std::size_t kj = 0; kj < k; ++kj) {
            const long jj = static_cast<long>(j + kj) - pad;
            if (jj < 0 || jj >= static_cast<long>(width)) continue;
            sum += w.at(oc, ic, ki, kj) *
                   x.at(batch_idx, ic, static_cast<std::size_t>(ii),
                        static_cast<std::size_t>(jj));
          }
        }
      }
      y.at(batch_idx, oc, i, j) = (relu && sum < 0.0) ? 0.0 : sum;
    }
  }
}
}  // namespace

Tensor conv2d_forward_serial(const Tensor& x, const Tensor& weights,
                             const Tensor& bias, bool relu) {
  const std::size_t batch = x.dim(0), out_ch = weights.dim(0);
  Tensor y = Tensor::zeros({batch, out_ch, x.dim(2), x.dim(3)});
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t oc = 0; oc < out_ch; ++oc)
      conv2d_one(x, weights, bias, relu, y, bi, oc);
  return y;
}

Tensor Conv2dLayer::forward(const Tensor& x, bool /*train*/, Rng* /*rng*/) {
  if (x.rank() != 4 || x.dim(1) != in_channels())
    throw DimensionError("conv2d: expected [batch, " +
                         std::to_string(in_channels()) + ", H, W]");
  const std::size_t batch = x.dim(0), out_ch = out_channels();
  Tensor y = Tensor::zeros({batch, out_ch, x.dim(2), x.dim(3)});
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t oc = 0; oc < out_ch; ++oc)
      conv2d_one(x, weights, bias, relu, y, bi, oc);
  input_ = x;
  output_ = y;
  has_cache_ = true;
  return y;
}

Tensor Conv2dLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) throw StateError("conv2d backward before forward");
  if (!grad_out.same_shape(output_))
    throw DimensionError("conv2d backward: gradient shape mismatch");
  const std::size_t batch = input_.dim(0), h = input_.dim(2),
                    width = input_.dim(3);
  const std::size_t k = kernel(), in_ch = in_channels(), out_ch = out_channels();
  const long pad = static_cast<long>(k / 2);

  Tensor gy = grad_out;
  if (relu) {
    for (std::size_t i = 0; i < gy.data.size(); ++i)
      if (output_.data[i] <= 0.0) gy.data[i] = 0.0;
  }

  Tensor gx = Tensor::zeros(input_.shape);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
          const double g = gy.at(bi, oc, i, j);
          if (g == 0.0) continue;
          grad_bias.at(oc) += g;
          for (std::size_t ic = 0; ic < in_ch; ++ic) {
            for (std::size_t ki = 0; ki < k; ++ki) {
              const long ii = static_cast<long>(i + ki) - pad;
              if (ii < 0 || ii >= static_cast<long>(h)) continue;
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long jj = static_cast<long>(j + kj) - pad;
                if (jj < 0 || jj >= static_cast<long>(width)) continue;
                const double xv =
                    input_.at(bi, ic, static_cast<std::size_t>(ii),
                              static_cast<std::size_t>(jj));
                grad_weights.at(oc, ic, ki, kj) += g * xv;
                gx.at(bi, ic, static_cast<std::size_t>(ii),
                      static_cast<std::size_t>(jj)) +=
                    g * weights.at(oc, ic, ki, kj);
              }
            }
          }
        }
      }
    }
  }
  return gx;
}

Tensor MaxPool2dLayer::forward(const Tensor& x, bool /*train*/, Rng* /*rng*/) {
  if (x.rank() != 4) throw DimensionError("maxpool2: expected [batch,ch,H,W]");
  const std::size_t batch = x.dim(0), ch = x.dim(1);
  const std::size_t oh = x.dim(2) / 2, ow = x.dim(3) / 2;
  if (oh == 0 || ow == 0) throw DimensionError("maxpool2: input too small");
  in_shape_ = x.shape;
  Tensor y = Tensor::zeros({batch, ch, oh, ow});
  argmax_.assign(y.numel(), 0);
  std::size_t out_idx = 0;
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          double best = -1e300;
          std::size_t best_idx = 0;
          for (std::size_t di = 0; di < 2; ++di) {
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const std::size_t flat =
                  ((bi * ch + c) * x.dim(2) + (2 * i + di)) * x.dim(3) +
                  (2 * j + dj);
              if (x.data[flat] > best) {
                best = x.data[flat];
                best_idx = flat;
              }
            }
          }
          y.data[out_idx] = best;
          argmax_[out_idx] = best_idx;
          ++out_idx;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2dLayer::backward(const Tensor& grad_out) {
  if (in_shape_.empty()) throw StateError("maxpool2 backward before forward");
  if (grad_out.numel() != argmax_.size())
    throw DimensionError("maxpool2 backward: gradient shape mismatch");
  Tensor gx = Tensor::zeros(in_shape_);
  for (std::size_t i = 0; i < argmax_.size(); ++i)
    gx.data[argmax_[i]] += grad_out.data[i];
  return gx;
}

}  // namespace uavsim::nn
