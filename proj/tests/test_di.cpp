#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "uavsim/di/di.hpp"

using namespace uavsim;
using namespace uavsim::di;
using nn::Tensor;

namespace {

// Trained once, shared by the accuracy-dependent cases.
struct TrainedFixture {
  Dataset train = make_pattern_dataset(600, 100);
  Dataset test = make_pattern_dataset(200, 101);
  DiModel model;

  TrainedFixture() {
    Rng rng(7);
    model = build_desknet(0.0, rng);
    DiTrainConfig cfg;
    cfg.epochs = 12;
    train_desknet(model, train, cfg, 3);
  }
};

TrainedFixture& trained() {
  static TrainedFixture f;
  return f;
}

Tensor random_images(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x = Tensor::zeros({n, 1, 16, 16});
  for (double& v : x.data) v = rng.uniform(-1, 1);
  return x;
}

}  // namespace

TEST_CASE("pattern dataset is deterministic with labeled classes") {
  const Dataset a = make_pattern_dataset(50, 4);
  const Dataset b = make_pattern_dataset(50, 4);
  CHECK(a.images.data == b.images.data);
  CHECK(a.labels == b.labels);
  CHECK(a.images.shape == std::vector<std::size_t>{50, 1, 16, 16});
  for (std::size_t l : a.labels) CHECK(l < 10);
  const Dataset c = make_pattern_dataset(50, 5);
  CHECK(a.images.data != c.images.data);
}

TEST_CASE("desknet block boundaries") {
  Rng rng(1);
  DiModel model = build_desknet(0.3, rng);
  // conv+pool+dropout for blocks 1-4, conv+dropout for block 5,
  // flatten+dense for the FC block.
  CHECK(model.block_ends == std::vector<std::size_t>{3, 6, 9, 12, 14, 16});
  CHECK(model.block_count() == 6);
  const Tensor logits = model.net.eval(random_images(2, 9));
  CHECK(logits.shape == std::vector<std::size_t>{2, 10});
}

TEST_CASE("split plan validation") {
  SplitPlan ok{1, 3};
  CHECK_NOTHROW(ok.validate(6));
  CHECK_THROWS_AS((SplitPlan{0, 3}.validate(6)), ConfigError);
  CHECK_THROWS_AS((SplitPlan{3, 3}.validate(6)), ConfigError);
  CHECK_THROWS_AS((SplitPlan{2, 6}.validate(6)), ConfigError);
}

TEST_CASE("split composition at zero loss is bit-exact") {
  Rng rng(11);
  DiModel model = build_desknet(0.5, rng);  // dropout inactive in eval
  const Tensor x = random_images(4, 3);
  const Tensor whole = model.net.eval(x);
  for (const SplitPlan plan : {SplitPlan{1, 3}, SplitPlan{1, 4},
                               SplitPlan{2, 5}}) {
    Rng link_rng(0);
    const Tensor split =
        distributed_logits(model, plan, {0.0}, {0.0}, x, link_rng);
    CHECK(split.data == whole.data);
  }
}

TEST_CASE("transmit endpoints and statistics") {
  Rng rng(2);
  Tensor act = Tensor::full({10, 10}, 1.5);

  Rng r0(1);
  const Tensor same = transmit(act, {0.0}, r0);
  CHECK(same.data == act.data);

  Rng r1(1);
  const Tensor gone = transmit(act, {1.0}, r1);
  for (double v : gone.data) CHECK(v == 0.0);
  CHECK(gone.shape == act.shape);

  Tensor big = Tensor::full({100000}, 1.0);
  Rng r2(21);
  const Tensor lossy = transmit(big, {0.5}, r2);
  std::size_t zeros = 0;
  for (double v : lossy.data)
    if (v == 0.0) ++zeros;
  const double frac = static_cast<double>(zeros) / 1e5;
  const double sigma = std::sqrt(0.25 / 1e5);
  CHECK(std::abs(frac - 0.5) < 3.0 * sigma);
}

TEST_CASE("transmit drops whole packets and can rescale") {
  Tensor act = Tensor::full({64}, 2.0);
  Rng rng(5);
  const Tensor out = transmit(act, {0.5, 8, false}, rng);
  for (std::size_t start = 0; start < 64; start += 8) {
    const bool dropped = out.data[start] == 0.0;
    for (std::size_t i = start; i < start + 8; ++i)
      CHECK((out.data[i] == 0.0) == dropped);
  }

  Rng rng2(6);
  const Tensor scaled = transmit(act, {0.5, 1, true}, rng2);
  for (double v : scaled.data) CHECK((v == 0.0 || v == 4.0));

  Rng rng3(7);
  CHECK_THROWS_AS(transmit(act, {1.5}, rng3), ConfigError);
  CHECK_THROWS_AS(transmit(act, {0.5, 0}, rng3), ConfigError);
}

TEST_CASE("severed first link equals all-zero mid input") {
  Rng rng(13);
  DiModel model = build_desknet(0.0, rng);
  const Tensor x = random_images(3, 17);
  const SplitPlan plan{1, 3};
  Rng link_rng(1);
  const Tensor severed =
      distributed_logits(model, plan, {1.0}, {0.0}, x, link_rng);

  const std::size_t la = model.block_ends[plan.cut_a - 1];
  const Tensor a = model.net.forward_range(x, 0, la, false, nullptr);
  Tensor zero_mid = Tensor::zeros(a.shape);
  const Tensor expected = model.net.forward_range(
      zero_mid, la, model.net.size(), false, nullptr);
  CHECK(severed.data == expected.data);
}

TEST_CASE("distributed inference matches per-element re-simulation") {
  Rng rng(19);
  DiModel model = build_desknet(0.0, rng);
  const Tensor x = random_images(5, 23);
  const SplitPlan plan{1, 4};
  const LossyLink l12{0.3}, l23{0.3};

  Rng link_rng(21);
  const Tensor logits = distributed_logits(model, plan, l12, l23, x, link_rng);
  Rng link_rng_again(21);
  const Tensor repeat =
      distributed_logits(model, plan, l12, l23, x, link_rng_again);
  CHECK(logits.data == repeat.data);

  // Independent element-by-element Bernoulli oracle with the same stream.
  Rng oracle_rng(21);
  const std::size_t la = model.block_ends[plan.cut_a - 1];
  const std::size_t lb = model.block_ends[plan.cut_b - 1];
  Tensor a = model.net.forward_range(x, 0, la, false, nullptr);
  for (double& v : a.data)
    if (oracle_rng.bernoulli(0.3)) v = 0.0;
  Tensor b = model.net.forward_range(a, la, lb, false, nullptr);
  for (double& v : b.data)
    if (oracle_rng.bernoulli(0.3)) v = 0.0;
  const Tensor expected =
      model.net.forward_range(b, lb, model.net.size(), false, nullptr);
  CHECK(logits.data == expected.data);
}

TEST_CASE("training reduces loss and beats chance accuracy") {
  auto& f = trained();
  const auto& model = f.model;
  (void)model;
  DiModel& m = f.model;
  CHECK(accuracy(m, f.train) > 0.8);
  CHECK(accuracy(m, f.test) > 0.7);
}

TEST_CASE("fine-tuning is deterministic and validates rates") {
  auto& f = trained();
  DiTrainConfig cfg;
  cfg.epochs = 1;
  const auto a = fine_tune_with_dropout(f.model, {0.3}, f.train, cfg, 9);
  const auto b = fine_tune_with_dropout(f.model, {0.3}, f.train, cfg, 9);
  auto pa = const_cast<DiModel&>(a[0]).net.params();
  auto pb = const_cast<DiModel&>(b[0]).net.params();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i]->data == pb[i]->data);
  CHECK(a[0].dropout_rate == 0.3);

  CHECK_THROWS_AS(fine_tune_with_dropout(f.model, {1.0}, f.train, cfg, 1),
                  ConfigError);
}

TEST_CASE("zero-rate fine-tune stays within a point of the pretrained model") {
  auto& f = trained();
  DiTrainConfig cfg;
  cfg.epochs = 2;
  auto tuned = fine_tune_with_dropout(f.model, {0.0}, f.train, cfg, 5);
  const double before = accuracy(f.model, f.test);
  const double after = accuracy(tuned[0], f.test);
  CHECK(after >= before - 0.01 - 1e-12);
}

TEST_CASE("sweep at zero loss equals clean split accuracy and is ordered") {
  auto& f = trained();
  const std::vector<SplitPlan> plans{{1, 3}};
  const std::vector<std::uint64_t> seeds{11, 12, 13, 14, 15};
  const auto rows = sweep_eval({{"pretrained", &f.model}}, plans,
                               {{0.0, 0.0}, {0.9, 0.9}}, seeds, f.test);
  REQUIRE(rows.size() == 10);

  const double clean = accuracy(f.model, f.test);
  double mean_clean = 0.0, mean_lossy = 0.0;
  for (const auto& r : rows) {
    if (r.p12 == 0.0) {
      CHECK(r.accuracy == clean);
      mean_clean += r.accuracy;
    } else {
      mean_lossy += r.accuracy;
    }
  }
  CHECK(mean_clean / 5.0 > mean_lossy / 5.0);

  const auto again = sweep_eval({{"pretrained", &f.model}}, plans,
                                {{0.0, 0.0}, {0.9, 0.9}}, seeds, f.test);
  for (std::size_t i = 0; i < rows.size(); ++i)
    CHECK(rows[i].accuracy == again[i].accuracy);
}

TEST_CASE("sweep CSV format") {
  const auto path = std::filesystem::temp_directory_path() / "di_sweep.csv";
  write_sweep_csv(path, {{"proposed-r0.5", 1, 3, 0.25, 0.5, 42, 0.875}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "model_tag,cut_a,cut_b,p12,p23,seed,accuracy");
  CHECK(row == "proposed-r0.5,1,3,0.25,0.5,42,0.875");
  std::filesystem::remove(path);
}

TEST_CASE("desknet checkpoint round-trip is bit-exact") {
  Rng rng(31);
  DiModel model = build_desknet(0.1, rng);
  const auto path = std::filesystem::temp_directory_path() / "desknet.ckpt";
  model.save(path);
  DiModel loaded = DiModel::load(path);
  CHECK(loaded.dropout_rate == 0.1);
  const Tensor x = random_images(3, 2);
  CHECK(model.net.eval(x).data == loaded.net.eval(x).data);
  std::filesystem::remove(path);
}
