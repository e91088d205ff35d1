#include "uavsim/predictor/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uavsim/nn/checkpoint.hpp"

namespace uavsim::predictor {

using nn::Tensor;

TrainingSet make_training_set(const Tensor& bucket_counts,
                              std::size_t window_len) {
  if (bucket_counts.rank() != 2)
    throw DimensionError("make_training_set expects [T, B]");
  if (window_len < 1) throw ConfigError("window_len must be >= 1");
  const std::size_t T = bucket_counts.dim(0), B = bucket_counts.dim(1);
  if (T <= window_len)
    throw DataError("insufficient data: need more buckets than window_len");
  const std::size_t N = T - window_len;

  TrainingSet set;
  set.inputs = Tensor::zeros({N, window_len, B});
  set.targets = Tensor::zeros({N, B});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < window_len; ++t)
      for (std::size_t b = 0; b < B; ++b)
        set.inputs.at(n, t, b) = bucket_counts.at(n + t, b);
    for (std::size_t b = 0; b < B; ++b)
      set.targets.at(n, b) = bucket_counts.at(n + window_len, b);
  }
  return set;
}

PredictorModel::PredictorModel(const PredictorConfig& config, Rng& init_rng)
    : lstm(config.block_count, config.hidden_units),
      head(config.hidden_units, config.block_count, nn::Activation::ReLU),
      input_mean(config.block_count, 0.0),
      input_scale(config.block_count, 1.0),
      config_(config) {
  if (config.hidden_units < 1 || config.block_count < 1)
    throw ConfigError("predictor sizes must be >= 1");
  lstm.init_glorot(init_rng);
  head.init_glorot(init_rng);
  // Positive bias keeps every ReLU count output alive at init; the LSTM
  // hidden state is in [-1, 1], so 1.0 dominates the initial w.h term.
  for (double& b : head.bias.data) b = 1.0;
}

namespace {
Tensor standardized(const Tensor& x, const std::vector<double>& mean,
                    const std::vector<double>& scale) {
  const std::size_t B = mean.size();
  Tensor out = x;
  const std::size_t steps = x.numel() / B;
  for (std::size_t i = 0; i < steps; ++i)
    for (std::size_t b = 0; b < B; ++b)
      out.data[i * B + b] = (x.data[i * B + b] - mean[b]) / scale[b];
  return out;
}
}  // namespace

Tensor PredictorModel::predict_batch(const Tensor& history) const {
  if (history.rank() != 3 || history.dim(1) != config_.window_len ||
      history.dim(2) != config_.block_count)
    throw DimensionError("predict: history must be [batch, window, B]");
  const Tensor x = standardized(history, input_mean, input_scale);
  // forward is const-unfriendly because of caching; predictions are pure.
  auto& self = const_cast<PredictorModel&>(*this);
  Tensor hidden = self.lstm.eval(x);
  return self.head.eval(hidden);
}

Tensor PredictorModel::predict(const Tensor& history) const {
  if (history.rank() != 2)
    throw DimensionError("predict: history must be [window, B]");
  Tensor batched =
      history.reshaped({1, history.dim(0), history.dim(1)});
  Tensor out = predict_batch(batched);
  return out.reshaped({out.dim(1)});
}

TrainResult train_predictor(const TrainingSet& data,
                            const PredictorConfig& config,
                            std::uint64_t seed) {
  if (data.inputs.rank() != 3 || data.inputs.dim(0) == 0)
    throw DataError("train_predictor: empty training set");
  const std::size_t N = data.inputs.dim(0);
  const std::size_t window = data.inputs.dim(1);
  const std::size_t B = data.inputs.dim(2);
  if (window != config.window_len || B != config.block_count)
    throw DimensionError("train_predictor: training set shape mismatch");

  Rng root(seed);
  Rng init_rng = root.substream("predictor-init");
  Rng shuffle_rng = root.substream("predictor-shuffle");

  TrainResult result{PredictorModel(config, init_rng), {}};
  PredictorModel& model = result.model;

  if (config.standardize) {
    for (std::size_t b = 0; b < B; ++b) {
      double mean = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < window; ++t)
          mean += data.inputs.at(n, t, b);
      mean /= static_cast<double>(N * window);
      double var = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < window; ++t) {
          const double d = data.inputs.at(n, t, b) - mean;
          var += d * d;
        }
      var /= static_cast<double>(N * window);
      model.input_mean[b] = mean;
      model.input_scale[b] = std::max(std::sqrt(var), 1e-6);
    }
  }
  const Tensor inputs =
      standardized(data.inputs, model.input_mean, model.input_scale);

  std::vector<Tensor*> params = model.lstm.params();
  std::vector<Tensor*> grads = model.lstm.grads();
  for (Tensor* p : model.head.params()) params.push_back(p);
  for (Tensor* g : model.head.grads()) grads.push_back(g);
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  nn::Adam adam(params, adam_cfg);

  std::vector<std::size_t> order(N);
  for (std::size_t i = 0; i < N; ++i) order[i] = i;

  const std::size_t batch_size = std::min(config.batch_size, N);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the dedicated shuffle stream.
    for (std::size_t i = N; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < N; start += batch_size) {
      const std::size_t count = std::min(batch_size, N - start);
      Tensor xb = Tensor::zeros({count, window, B});
      Tensor yb = Tensor::zeros({count, B});
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        for (std::size_t t = 0; t < window; ++t)
          for (std::size_t b = 0; b < B; ++b)
            xb.at(i, t, b) = inputs.at(src, t, b);
        for (std::size_t b = 0; b < B; ++b)
          yb.at(i, b) = data.targets.at(src, b);
      }

      model.lstm.zero_grad();
      model.head.zero_grad();
      Tensor hidden = model.lstm.forward(xb, true, nullptr);
      Tensor pred = model.head.forward(hidden, true, nullptr);

      Tensor gy = Tensor::zeros(pred.shape);
      double loss = 0.0;
      const double inv = 1.0 / static_cast<double>(count * B);
      for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double diff = pred.data[i] - yb.data[i];
        loss += diff * diff * inv;
        gy.data[i] = 2.0 * diff * inv;
      }
      Tensor gh = model.head.backward(gy);
      model.lstm.backward(gh);
      adam.step(grads);

      epoch_loss += loss * static_cast<double>(count);
      seen += count;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
  }
  return result;
}

void PredictorModel::save(const std::filesystem::path& path) const {
  nlohmann::json arch = {
      {"model", "predictor"},
      {"block_count", config_.block_count},
      {"hidden_units", config_.hidden_units},
      {"window_len", config_.window_len},
      {"epochs", config_.epochs},
      {"batch_size", config_.batch_size},
      {"learning_rate", config_.learning_rate},
      {"standardize", config_.standardize},
  };
  nn::Checkpoint ckpt;
  ckpt.arch = arch.dump();
  ckpt.tensors = {
      {"lstm.w_input", lstm.w_input},   {"lstm.w_forget", lstm.w_forget},
      {"lstm.w_output", lstm.w_output}, {"lstm.w_cell", lstm.w_cell},
      {"lstm.b_input", lstm.b_input},   {"lstm.b_forget", lstm.b_forget},
      {"lstm.b_output", lstm.b_output}, {"lstm.b_cell", lstm.b_cell},
      {"head.weights", head.weights},   {"head.bias", head.bias},
  };
  ckpt.tensors.emplace_back(
      "input_mean", Tensor::from({input_mean.size()}, input_mean));
  ckpt.tensors.emplace_back(
      "input_scale", Tensor::from({input_scale.size()}, input_scale));
  nn::save_checkpoint(path, ckpt);
}

PredictorModel PredictorModel::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  nlohmann::json arch;
  try {
    arch = nlohmann::json::parse(ckpt.arch);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad predictor checkpoint arch: " + std::string(e.what()));
  }
  if (arch.value("model", "") != "predictor")
    throw DataError("checkpoint is not a predictor model");
  PredictorConfig config;
  config.block_count = arch.at("block_count").get<std::size_t>();
  config.hidden_units = arch.at("hidden_units").get<std::size_t>();
  config.window_len = arch.at("window_len").get<std::size_t>();
  config.epochs = arch.value("epochs", config.epochs);
  config.batch_size = arch.value("batch_size", config.batch_size);
  config.learning_rate = arch.value("learning_rate", config.learning_rate);
  config.standardize = arch.value("standardize", false);

  Rng dummy(0);
  PredictorModel model(config, dummy);
  model.lstm.w_input = ckpt.find("lstm.w_input");
  model.lstm.w_forget = ckpt.find("lstm.w_forget");
  model.lstm.w_output = ckpt.find("lstm.w_output");
  model.lstm.w_cell = ckpt.find("lstm.w_cell");
  model.lstm.b_input = ckpt.find("lstm.b_input");
  model.lstm.b_forget = ckpt.find("lstm.b_forget");
  model.lstm.b_output = ckpt.find("lstm.b_output");
  model.lstm.b_cell = ckpt.find("lstm.b_cell");
  model.head.weights = ckpt.find("head.weights");
  model.head.bias = ckpt.find("head.bias");
  model.input_mean = ckpt.find("input_mean").data;
  model.input_scale = ckpt.find("input_scale").data;
  return model;
}

void write_training_log(const std::filesystem::path& path,
                        const std::vector<double>& epoch_losses) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < epoch_losses.size(); ++i) {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%zu,%.12g\n", i, epoch_losses[i]);
      out << buf;
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace uavsim::predictor
