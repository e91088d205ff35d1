#pragma once

#include <filesystem>
#include <optional>

#include "uavsim/nn/adam.hpp"
#include "uavsim/nn/lstm.hpp"
#include "uavsim/nn/sequential.hpp"
#include "uavsim/rng.hpp"

namespace uavsim::predictor {

struct PredictorConfig {
  std::size_t block_count = 12;
  std::size_t hidden_units = 100;
  std::size_t window_len = 4;
  std::size_t epochs = 100;
  std::size_t batch_size = 100;
  double learning_rate = 0.001;
  bool standardize = false;  // optional per-block input standardization
};

struct TrainingSet {
  nn::Tensor inputs;   // [N, window, B]
  nn::Tensor targets;  // [N, B]
};

// Sliding windows over the bucketed counts [T, B]; the target is the
// bucket immediately after each window. N = T - window_len.
TrainingSet make_training_set(const nn::Tensor& bucket_counts,
                              std::size_t window_len);

// LSTM over the count history with a ReLU dense head, so forecasts are
// always nonnegative counts.
class PredictorModel {
 public:
  PredictorModel(const PredictorConfig& config, Rng& init_rng);

  // history: [window, B] -> forecast [B]
  nn::Tensor predict(const nn::Tensor& history) const;
  // batch variant: [batch, window, B] -> [batch, B]
  nn::Tensor predict_batch(const nn::Tensor& history) const;

  const PredictorConfig& config() const { return config_; }

  void save(const std::filesystem::path& path) const;
  static PredictorModel load(const std::filesystem::path& path);

  nn::LstmLayer lstm;
  nn::DenseLayer head;

  // Per-block standardization statistics (identity unless enabled).
  std::vector<double> input_mean;
  std::vector<double> input_scale;

 private:
  PredictorConfig config_;
};

struct TrainResult {
  PredictorModel model;
  std::vector<double> epoch_losses;  // training MSE per epoch
};

// Minibatch MSE training with Adam; deterministic given (data, config,
// seed). Throws DataError on an empty training set.
TrainResult train_predictor(const TrainingSet& data,
                            const PredictorConfig& config,
                            std::uint64_t seed);

// Training log CSV: epoch,loss.
void write_training_log(const std::filesystem::path& path,
                        const std::vector<double>& epoch_losses);

}  // namespace uavsim::predictor
