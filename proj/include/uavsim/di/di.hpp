#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uavsim/nn/adam.hpp"
#include "uavsim/nn/conv.hpp"
#include "uavsim/nn/sequential.hpp"
#include "uavsim/rng.hpp"

namespace uavsim::di {

// Synthetic 10-class dataset of 16x16 single-channel images: each class is
// an oriented sinusoidal grating (class-specific angle and frequency) with
// a random phase and additive Gaussian noise.
struct Dataset {
  nn::Tensor images;  // [N, 1, 16, 16]
  std::vector<std::size_t> labels;
  std::size_t size() const { return labels.size(); }
};
Dataset make_pattern_dataset(std::size_t n, std::uint64_t seed,
                             double noise = 0.25);

// Small VGG-style classifier: five conv blocks (3x3 conv + ReLU, 2x2
// max-pool in blocks 1-4) and a fully-connected block, with a dropout
// layer closing every conv block. block_ends[i] is the layer index one
// past block i+1, usable as a split point.
struct DiModel {
  nn::Sequential net;
  std::vector<std::size_t> block_ends;  // 5 conv blocks + FC block
  double dropout_rate = 0.0;

  std::size_t block_count() const { return block_ends.size(); }
  void save(const std::filesystem::path& path) const;
  static DiModel load(const std::filesystem::path& path);
};
DiModel build_desknet(double dropout_rate, Rng& init_rng);
// Copies parameters between structurally identical models.
void copy_params(const DiModel& from, DiModel& to);

struct DiTrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
};
struct DiTrainResult {
  std::vector<double> epoch_losses;
};
// Softmax cross-entropy training with Adam; dropout layers are active.
DiTrainResult train_desknet(DiModel& model, const Dataset& data,
                            const DiTrainConfig& config, std::uint64_t seed);

// Fraction of correctly classified samples with dropout inactive.
double accuracy(DiModel& model, const Dataset& data);
// Class predictions (argmax of logits).
std::vector<std::size_t> predict(DiModel& model, const nn::Tensor& images);

// Fine-tunes a copy of the pre-trained model per dropout rate.
std::vector<DiModel> fine_tune_with_dropout(const DiModel& pretrained,
                                            const std::vector<double>& rates,
                                            const Dataset& data,
                                            const DiTrainConfig& config,
                                            std::uint64_t seed);

// Split the network into input/middle/output sub-networks after conv
// blocks cut_a and cut_b (1-based block indices).
struct SplitPlan {
  std::size_t cut_a = 1;
  std::size_t cut_b = 3;
  void validate(std::size_t block_count) const;
};

struct LossyLink {
  double p = 0.0;  // packet loss probability
  std::size_t elements_per_packet = 1;
  // Rescale surviving elements by 1/(1-p); off by default (zero-fill is
  // what dropout fine-tuning emulates).
  bool rescale = false;
};
// Drops whole packets of the flattened activation i.i.d. with probability
// p, zero-filling lost elements. Shape preserved.
nn::Tensor transmit(const nn::Tensor& activation, const LossyLink& link,
                    Rng& rng);

// in-subNN -> link 1 -> mid-subNN -> link 2 -> out-subNN.
nn::Tensor distributed_logits(DiModel& model, const SplitPlan& plan,
                              const LossyLink& link12, const LossyLink& link23,
                              const nn::Tensor& images, Rng& rng);
std::vector<std::size_t> distributed_infer(DiModel& model,
                                           const SplitPlan& plan,
                                           const LossyLink& link12,
                                           const LossyLink& link23,
                                           const nn::Tensor& images, Rng& rng);

struct SweepRow {
  std::string model_tag;
  std::size_t cut_a;
  std::size_t cut_b;
  double p12;
  double p23;
  std::uint64_t seed;
  double accuracy;
};
struct SweepCell {
  double p12;
  double p23;
};
// Evaluates every (model, plan, cell, seed) combination; each cell+seed
// owns its RNG stream derived from the seed.
std::vector<SweepRow> sweep_eval(
    std::vector<std::pair<std::string, DiModel*>> models,
    const std::vector<SplitPlan>& plans, const std::vector<SweepCell>& cells,
    const std::vector<std::uint64_t>& seeds, const Dataset& data);

void write_sweep_csv(const std::filesystem::path& path,
                     const std::vector<SweepRow>& rows);

}  // namespace uavsim::di
