#include "uavsim/di/di.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "uavsim/nn/checkpoint.hpp"

namespace uavsim::di {

using nn::Tensor;

Dataset make_pattern_dataset(std::size_t n, std::uint64_t seed,
                             double noise) {
  constexpr std::size_t kSide = 16;
  constexpr std::size_t kClasses = 10;
  Rng rng(seed);
  Dataset data;
  data.images = Tensor::zeros({n, 1, kSide, kSide});
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = rng.uniform_int(kClasses);
    data.labels[i] = label;
    const double angle =
        static_cast<double>(label) * 3.141592653589793 / kClasses;
    // Two distinct spatial frequencies double the angular separation.
    const double cycles = (label % 2 == 0) ? 2.0 : 3.5;
    const double omega = 2.0 * 3.141592653589793 * cycles / kSide;
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const double c = std::cos(angle), s = std::sin(angle);
    for (std::size_t y = 0; y < kSide; ++y)
      for (std::size_t x = 0; x < kSide; ++x) {
        const double proj =
            c * static_cast<double>(x) + s * static_cast<double>(y);
        data.images.at(i, 0, y, x) =
            std::sin(omega * proj + phase) + noise * rng.normal();
      }
  }
  return data;
}

DiModel build_desknet(double dropout_rate, Rng& init_rng) {
  DiModel model;
  model.dropout_rate = dropout_rate;
  auto block = [&](std::size_t in_ch, std::size_t out_ch, bool pool) {
    auto& conv = model.net.emplace<nn::Conv2dLayer>(in_ch, out_ch, 3, true);
    conv.init_glorot(init_rng);
    if (pool) model.net.emplace<nn::MaxPool2dLayer>();
    model.net.emplace<nn::DropoutLayer>(dropout_rate);
    model.block_ends.push_back(model.net.size());
  };
  block(1, 8, true);    // 16 -> 8
  block(8, 16, true);   // 8 -> 4
  block(16, 16, true);  // 4 -> 2
  block(16, 32, true);  // 2 -> 1
  block(32, 32, false);
  model.net.emplace<nn::FlattenLayer>();
  auto& fc = model.net.emplace<nn::DenseLayer>(32, 10, nn::Activation::Identity);
  fc.init_glorot(init_rng);
  model.block_ends.push_back(model.net.size());
  return model;
}

void copy_params(const DiModel& from, DiModel& to) {
  auto src = const_cast<DiModel&>(from).net.params();
  auto dst = to.net.params();
  if (src.size() != dst.size())
    throw DimensionError("copy_params: model structures differ");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->shape != dst[i]->shape)
      throw DimensionError("copy_params: parameter shape mismatch");
    dst[i]->data = src[i]->data;
  }
}

namespace {

// Softmax cross-entropy over logits [N, C]; fills grad and returns the
// mean loss.
double cross_entropy(const Tensor& logits,
                     const std::vector<std::size_t>& labels, Tensor& grad) {
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  grad = Tensor::zeros({N, C});
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double* row = logits.data.data() + i * C;
    double mx = row[0];
    for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < C; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    loss -= (row[labels[i]] - lse) * inv;
    for (std::size_t j = 0; j < C; ++j) {
      const double p = std::exp(row[j] - lse);
      grad.data[i * C + j] =
          (p - (j == labels[i] ? 1.0 : 0.0)) * inv;
    }
  }
  return loss;
}

Tensor gather_images(const Tensor& images,
                     const std::vector<std::size_t>& idx, std::size_t start,
                     std::size_t count) {
  const std::size_t sample = images.numel() / images.dim(0);
  Tensor out = Tensor::zeros({count, images.dim(1), images.dim(2),
                              images.dim(3)});
  for (std::size_t i = 0; i < count; ++i)
    std::copy_n(images.data.begin() +
                    static_cast<std::ptrdiff_t>(idx[start + i] * sample),
                sample,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * sample));
  return out;
}

}  // namespace

DiTrainResult train_desknet(DiModel& model, const Dataset& data,
                            const DiTrainConfig& config, std::uint64_t seed) {
  if (data.size() == 0) throw DataError("train_desknet: empty dataset");
  Rng root(seed);
  Rng shuffle_rng = root.substream("di-shuffle");
  Rng dropout_rng = root.substream("di-dropout");

  auto params = model.net.params();
  auto grads = model.net.grads();
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  nn::Adam adam(params, adam_cfg);

  const std::size_t N = data.size();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::min(config.batch_size, N);

  DiTrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = N; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < N; start += batch) {
      const std::size_t count = std::min(batch, N - start);
      const Tensor xb = gather_images(data.images, order, start, count);
      std::vector<std::size_t> yb(count);
      for (std::size_t i = 0; i < count; ++i)
        yb[i] = data.labels[order[start + i]];

      model.net.zero_grad();
      const Tensor logits = model.net.forward(xb, true, &dropout_rng);
      Tensor grad;
      const double loss = cross_entropy(logits, yb, grad);
      if (!std::isfinite(loss))
        throw NumericError("train_desknet: non-finite loss");
      model.net.backward(grad);
      adam.step(grads);

      epoch_loss += loss * static_cast<double>(count);
      seen += count;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
  }
  return result;
}

std::vector<std::size_t> predict(DiModel& model, const Tensor& images) {
  const Tensor logits = model.net.eval(images);
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  std::vector<std::size_t> out(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double* row = logits.data.data() + i * C;
    out[i] = static_cast<std::size_t>(
        std::max_element(row, row + C) - row);
  }
  return out;
}

double accuracy(DiModel& model, const Dataset& data) {
  const auto pred = predict(model, data.images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == data.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<DiModel> fine_tune_with_dropout(const DiModel& pretrained,
                                            const std::vector<double>& rates,
                                            const Dataset& data,
                                            const DiTrainConfig& config,
                                            std::uint64_t seed) {
  std::vector<DiModel> out;
  Rng root(seed);
  for (std::size_t r = 0; r < rates.size(); ++r) {
    if (rates[r] < 0.0 || rates[r] >= 1.0)
      throw ConfigError("dropout rate must be in [0, 1)");
    Rng dummy(0);
    DiModel model = build_desknet(rates[r], dummy);
    copy_params(pretrained, model);
    train_desknet(model, data, config,
                  root.substream(static_cast<std::uint64_t>(r)).next_u64());
    out.push_back(std::move(model));
  }
  return out;
}

void SplitPlan::validate(std::size_t block_count) const {
  if (cut_a < 1 || cut_a >= cut_b || cut_b >= block_count)
    throw ConfigError("split plan requires 0 < cut_a < cut_b < block count");
}

Tensor transmit(const Tensor& activation, const LossyLink& link, Rng& rng) {
  if (link.p < 0.0 || link.p > 1.0)
    throw ConfigError("packet loss probability must be in [0, 1]");
  if (link.elements_per_packet < 1)
    throw ConfigError("elements_per_packet must be >= 1");
  Tensor out = activation;
  const double keep_scale =
      (link.rescale && link.p < 1.0) ? 1.0 / (1.0 - link.p) : 1.0;
  const std::size_t n = out.data.size();
  for (std::size_t start = 0; start < n; start += link.elements_per_packet) {
    const std::size_t end = std::min(n, start + link.elements_per_packet);
    if (rng.bernoulli(link.p)) {
      for (std::size_t i = start; i < end; ++i) out.data[i] = 0.0;
    } else if (keep_scale != 1.0) {
      for (std::size_t i = start; i < end; ++i) out.data[i] *= keep_scale;
    }
  }
  return out;
}

Tensor distributed_logits(DiModel& model, const SplitPlan& plan,
                          const LossyLink& link12, const LossyLink& link23,
                          const Tensor& images, Rng& rng) {
  plan.validate(model.block_count());
  const std::size_t la = model.block_ends[plan.cut_a - 1];
  const std::size_t lb = model.block_ends[plan.cut_b - 1];
  const std::size_t end = model.net.size();
  Tensor a = model.net.forward_range(images, 0, la, false, nullptr);
  a = transmit(a, link12, rng);
  Tensor b = model.net.forward_range(a, la, lb, false, nullptr);
  b = transmit(b, link23, rng);
  return model.net.forward_range(b, lb, end, false, nullptr);
}

std::vector<std::size_t> distributed_infer(DiModel& model,
                                           const SplitPlan& plan,
                                           const LossyLink& link12,
                                           const LossyLink& link23,
                                           const Tensor& images, Rng& rng) {
  const Tensor logits =
      distributed_logits(model, plan, link12, link23, images, rng);
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  std::vector<std::size_t> out(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double* row = logits.data.data() + i * C;
    out[i] = static_cast<std::size_t>(std::max_element(row, row + C) - row);
  }
  return out;
}

std::vector<SweepRow> sweep_eval(
    std::vector<std::pair<std::string, DiModel*>> models,
    const std::vector<SplitPlan>& plans, const std::vector<SweepCell>& cells,
    const std::vector<std::uint64_t>& seeds, const Dataset& data) {
  std::vector<SweepRow> rows;
  for (auto& [tag, model] : models) {
    for (const SplitPlan& plan : plans) {
      plan.validate(model->block_count());
      for (const SweepCell& cell : cells) {
        for (std::uint64_t seed : seeds) {
          Rng rng(seed);
          LossyLink l12{cell.p12, 1, false};
          LossyLink l23{cell.p23, 1, false};
          const auto pred =
              distributed_infer(*model, plan, l12, l23, data.images, rng);
          std::size_t hits = 0;
          for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == data.labels[i]) ++hits;
          rows.push_back({tag, plan.cut_a, plan.cut_b, cell.p12, cell.p23,
                          seed,
                          static_cast<double>(hits) /
                              static_cast<double>(pred.size())});
        }
      }
    }
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path,
                     const std::vector<SweepRow>& rows) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "model_tag,cut_a,cut_b,p12,p23,seed,accuracy\n";
    for (const SweepRow& r : rows) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.12g,%.12g,%llu,%.12g\n",
                    r.model_tag.c_str(), r.cut_a, r.cut_b, r.p12, r.p23,
                    static_cast<unsigned long long>(r.seed), r.accuracy);
      out << buf;
    }
  }
  std::filesystem::rename(tmp, path);
}

void DiModel::save(const std::filesystem::path& path) const {
  nlohmann::json arch = {
      {"model", "desknet"},
      {"dropout_rate", dropout_rate},
  };
  nn::Checkpoint ckpt;
  ckpt.arch = arch.dump();
  auto params = const_cast<DiModel*>(this)->net.params();
  for (std::size_t i = 0; i < params.size(); ++i)
    ckpt.tensors.emplace_back("param." + std::to_string(i), *params[i]);
  nn::save_checkpoint(path, ckpt);
}

DiModel DiModel::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  nlohmann::json arch;
  try {
    arch = nlohmann::json::parse(ckpt.arch);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad desknet checkpoint arch: " + std::string(e.what()));
  }
  if (arch.value("model", "") != "desknet")
    throw DataError("checkpoint is not a desknet model");
  Rng dummy(0);
  DiModel model = build_desknet(arch.at("dropout_rate").get<double>(), dummy);
  auto params = model.net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor t = ckpt.find("param." + std::to_string(i));
    if (t.shape != params[i]->shape)
      throw DataError("desknet checkpoint parameter shape mismatch");
    params[i]->data = t.data;
  }
  return model;
}

}  // namespace uavsim::di
