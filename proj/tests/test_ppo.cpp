#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "uavsim/ppo/ppo.hpp"

using namespace uavsim;
using namespace uavsim::ppo;
using nn::Tensor;

namespace {

PolicyNetwork small_policy(std::size_t obs_dim,
                           std::vector<std::size_t> heads,
                           std::uint64_t seed, std::size_t hidden = 8) {
  PpoConfig cfg;
  cfg.hidden_units = hidden;
  Rng rng(seed);
  return PolicyNetwork(obs_dim, std::move(heads), cfg, rng);
}

void zero_params(PolicyNetwork& p) {
  for (Tensor* t : p.params())
    for (double& v : t->data) v = 0.0;
}

// One state, two arms, arm 0 pays 1. Episode length 1.
class BanditEnv : public ppo::RolloutEnv {
 public:
  Tensor reset(std::uint64_t) override { return Tensor::from({1}, {1.0}); }
  Out step(const Action& action) override {
    return {Tensor::from({1}, {1.0}), action[0] == 0 ? 1.0 : 0.0, true};
  }
  std::size_t obs_dim() const override { return 1; }
  std::vector<std::size_t> head_sizes() const override { return {2}; }
};

std::vector<double> head_probs(PolicyNetwork& policy, const Tensor& obs,
                               std::size_t head) {
  const Tensor x = policy.normalize(obs).reshaped({1, policy.obs_dim()});
  const auto fwd = policy.forward(x);
  const std::size_t off = policy.head_offset(head);
  const std::size_t size = policy.head_sizes()[head];
  double mx = -1e300;
  for (std::size_t i = 0; i < size; ++i)
    mx = std::max(mx, fwd.logits.data[off + i]);
  std::vector<double> p(size);
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    p[i] = std::exp(fwd.logits.data[off + i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

TEST_CASE("uniform policy samples all cells at the uniform rate") {
  PolicyNetwork policy = small_policy(2, {4}, 1);
  zero_params(policy);
  Rng rng(9);
  const Tensor obs = Tensor::from({2}, {0.3, -0.2});
  std::vector<std::size_t> counts(4, 0);
  const std::size_t N = 10000;
  for (std::size_t i = 0; i < N; ++i)
    ++counts[sample_action(policy, obs, rng).action[0]];
  const double sigma = std::sqrt(0.25 * 0.75 / static_cast<double>(N));
  for (std::size_t c : counts) {
    const double freq = static_cast<double>(c) / static_cast<double>(N);
    CHECK(std::abs(freq - 0.25) < 3.0 * sigma);
  }
}

TEST_CASE("saturated head is picked with probability ~1") {
  PolicyNetwork policy = small_policy(2, {5}, 2);
  zero_params(policy);
  policy.logits_head.bias.data[3] = 1e3;
  Rng rng(4);
  const Tensor obs = Tensor::from({2}, {1.0, 1.0});
  for (int i = 0; i < 100; ++i)
    CHECK(sample_action(policy, obs, rng).action[0] == 3);
}

TEST_CASE("log_prob equals per-head log-softmax recomputed directly") {
  PolicyNetwork policy = small_policy(3, {4, 3, 6}, 7);
  Rng rng(12);
  Tensor obs = Tensor::zeros({3});
  for (int trial = 0; trial < 20; ++trial) {
    for (double& v : obs.data) v = rng.uniform(-2, 2);
    const SampleResult s = sample_action(policy, obs, rng);

    const Tensor x = policy.normalize(obs).reshaped({1, 3});
    const auto fwd = policy.forward(x);
    double expected = 0.0;
    for (std::size_t h = 0; h < 3; ++h) {
      const std::size_t off = policy.head_offset(h);
      const std::size_t size = policy.head_sizes()[h];
      double mx = -1e300;
      for (std::size_t i = 0; i < size; ++i)
        mx = std::max(mx, fwd.logits.data[off + i]);
      double sum = 0.0;
      for (std::size_t i = 0; i < size; ++i)
        sum += std::exp(fwd.logits.data[off + i] - mx);
      expected += fwd.logits.data[off + s.action[h]] - mx - std::log(sum);
    }
    CHECK(s.log_prob == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("per-head probabilities stay normalized") {
  PolicyNetwork policy = small_policy(3, {7, 3}, 21);
  Rng rng(5);
  Tensor obs = Tensor::zeros({3});
  for (double& v : obs.data) v = rng.uniform(-3, 3);
  for (std::size_t h = 0; h < 2; ++h) {
    const auto p = head_probs(policy, obs, h);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gae with lambda 0 reduces to one-step deltas") {
  RolloutBuffer buf;
  Rng rng(3);
  for (int t = 0; t < 12; ++t)
    buf.push(Tensor::zeros({1}), {0}, 0.0, rng.uniform(-1, 1),
             rng.uniform(-1, 1), t == 7);
  const double last_value = 0.25;
  const auto gae = compute_gae(buf, last_value, 0.9, 0.0);
  for (std::size_t t = 0; t < 12; ++t) {
    const double not_done = buf.dones[t] ? 0.0 : 1.0;
    const double next = (t + 1 < 12) ? buf.values[t + 1] : last_value;
    const double delta =
        buf.rewards[t] + 0.9 * next * not_done - buf.values[t];
    CHECK(gae.advantages[t] == doctest::Approx(delta).epsilon(1e-12));
    CHECK(gae.returns[t] ==
          doctest::Approx(delta + buf.values[t]).epsilon(1e-12));
  }
}

TEST_CASE("gae with gamma=lambda=1 and zero values gives suffix sums") {
  RolloutBuffer buf;
  const std::vector<double> rewards{1, 2, 3, 4};
  for (double r : rewards) buf.push(Tensor::zeros({1}), {0}, 0.0, r, 0.0, false);
  const auto gae = compute_gae(buf, 0.0, 1.0, 1.0);
  CHECK(gae.advantages == std::vector<double>{10, 9, 7, 4});
}

TEST_CASE("gae matches the quadratic double-loop oracle") {
  Rng rng(13);
  RolloutBuffer buf;
  const std::size_t T = 60;
  for (std::size_t t = 0; t < T; ++t)
    buf.push(Tensor::zeros({1}), {0}, 0.0, rng.uniform(-2, 2),
             rng.uniform(-2, 2), rng.bernoulli(0.1));
  const double last_value = rng.uniform(-1, 1);
  const double gamma = 0.99, lambda = 0.95;
  const auto gae = compute_gae(buf, last_value, gamma, lambda);

  for (std::size_t t = 0; t < T; ++t) {
    double acc = 0.0, coef = 1.0;
    for (std::size_t k = t; k < T; ++k) {
      const double not_done = buf.dones[k] ? 0.0 : 1.0;
      const double next = (k + 1 < T) ? buf.values[k + 1] : last_value;
      const double delta =
          buf.rewards[k] + gamma * next * not_done - buf.values[k];
      acc += coef * delta;
      if (buf.dones[k]) break;
      coef *= gamma * lambda;
    }
    CHECK(std::abs(gae.advantages[t] - acc) < 1e-10);
  }
}

TEST_CASE("gae on an empty buffer raises a state error") {
  RolloutBuffer empty;
  CHECK_THROWS_AS(compute_gae(empty, 0.0, 0.99, 0.95), StateError);
}

TEST_CASE("ppo loss gradient matches finite differences") {
  PolicyNetwork policy = small_policy(3, {4, 3}, 31);
  PpoConfig cfg;
  cfg.hidden_units = 8;
  cfg.clip_epsilon = 0.2;
  cfg.entropy_coef = 0.01;
  cfg.value_coef = 0.5;

  Rng rng(44);
  const std::size_t n = 8;
  Tensor obs = Tensor::zeros({n, 3});
  for (double& v : obs.data) v = rng.uniform(-1, 1);
  std::vector<Action> actions;
  std::vector<double> advantages, returns;
  for (std::size_t i = 0; i < n; ++i) {
    actions.push_back({rng.uniform_int(4), rng.uniform_int(3)});
    advantages.push_back(rng.uniform(-1, 1));
    returns.push_back(rng.uniform(-1, 1));
  }
  // Old log-probs near the current ones so every ratio stays inside the
  // clip region, where the loss is smooth.
  std::vector<double> old_logp(n);
  {
    const auto fwd = policy.forward(obs);
    for (std::size_t i = 0; i < n; ++i) {
      double lp = 0.0;
      for (std::size_t h = 0; h < 2; ++h) {
        const std::size_t off = policy.head_offset(h);
        const std::size_t size = policy.head_sizes()[h];
        double mx = -1e300, sum = 0.0;
        for (std::size_t j = 0; j < size; ++j)
          mx = std::max(mx, fwd.logits.data[i * policy.total_logits() + off + j]);
        for (std::size_t j = 0; j < size; ++j)
          sum += std::exp(fwd.logits.data[i * policy.total_logits() + off + j] - mx);
        lp += fwd.logits.data[i * policy.total_logits() + off + actions[i][h]] -
              mx - std::log(sum);
      }
      old_logp[i] = lp + rng.uniform(-0.05, 0.05);
    }
  }

  auto loss = [&]() {
    policy.zero_grad();
    return ppo_batch_grad(policy, obs, actions, old_logp, advantages, returns,
                          cfg, nullptr);
  };
  policy.zero_grad();
  ppo_batch_grad(policy, obs, actions, old_logp, advantages, returns, cfg,
                 nullptr);
  std::vector<Tensor> grad_copies;
  for (Tensor* g : policy.grads()) grad_copies.push_back(*g);
  std::vector<Tensor*> grad_ptrs;
  for (Tensor& g : grad_copies) grad_ptrs.push_back(&g);

  Rng check_rng(71);
  const auto result = testsupport::finite_difference_check(
      loss, policy.params(), grad_ptrs, check_rng, 30);
  CHECK(result.checked >= 100);
  CHECK(result.max_rel_error < 1e-5);
}

TEST_CASE("ratio-1 update has near-zero policy loss") {
  PolicyNetwork policy = small_policy(2, {3}, 8);
  Rng rng(6);
  RolloutBuffer buf;
  Tensor obs = Tensor::zeros({2});
  for (int t = 0; t < 16; ++t) {
    for (double& v : obs.data) v = rng.uniform(-1, 1);
    const SampleResult s = sample_action(policy, obs, rng);
    buf.push(policy.normalize(obs), s.action, s.log_prob, rng.uniform(0, 1),
             s.value, t == 15);
  }
  PpoConfig cfg;
  cfg.hidden_units = 8;
  cfg.epochs_per_update = 1;
  cfg.minibatch_size = 16;
  cfg.learning_rate = 1e-12;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  nn::Adam adam(policy.params(), {cfg.learning_rate});
  Rng shuffle(1);
  const auto stats = ppo_update(policy, buf, 0.0, cfg, adam, shuffle);
  // ratio == 1 exactly, so the loss is -mean(normalized advantages) == 0.
  CHECK(std::abs(stats.policy_loss) < 1e-12);
}

TEST_CASE("all-zero advantages give zero policy loss") {
  PolicyNetwork policy = small_policy(2, {3}, 17);
  Rng rng(2);
  RolloutBuffer buf;
  Tensor obs = Tensor::from({2}, {0.5, -0.5});
  for (int t = 0; t < 8; ++t) {
    const SampleResult s = sample_action(policy, obs, rng);
    buf.push(policy.normalize(obs), s.action, s.log_prob, 0.0, 0.0, false);
  }
  PpoConfig cfg;
  cfg.hidden_units = 8;
  cfg.epochs_per_update = 1;
  cfg.minibatch_size = 8;
  nn::Adam adam(policy.params(), {cfg.learning_rate});
  Rng shuffle(1);
  const auto stats = ppo_update(policy, buf, 0.0, cfg, adam, shuffle);
  CHECK(stats.policy_loss == 0.0);
  CHECK(stats.entropy > 0.0);
}

TEST_CASE("two-arm bandit reaches the optimal arm") {
  BanditEnv env;
  PpoConfig cfg;
  cfg.hidden_units = 16;
  cfg.horizon = 64;
  cfg.minibatch_size = 64;
  cfg.epochs_per_update = 4;
  cfg.learning_rate = 0.01;
  cfg.total_steps = 200 * 64;
  cfg.plateau_window = 0;
  auto result = train(env, cfg, 5);
  CHECK(result.curve.size() <= 200);
  const Tensor obs = Tensor::from({1}, {1.0});
  const auto p = head_probs(result.policy, obs, 0);
  CHECK(p[0] > 0.95);
  // learning curve reaches at least 95% of the max reward of 1 per episode
  CHECK(result.curve.back().mean_reward > 0.95);
  for (const auto& row : result.curve) {
    CHECK(std::isfinite(row.entropy));
    CHECK(row.entropy >= 0.0);
  }
}

TEST_CASE("training is bit-for-bit deterministic from the seed") {
  PpoConfig cfg;
  cfg.hidden_units = 8;
  cfg.horizon = 32;
  cfg.minibatch_size = 32;
  cfg.epochs_per_update = 2;
  cfg.total_steps = 10 * 32;
  cfg.plateau_window = 0;
  BanditEnv env1, env2;
  const auto a = train(env1, cfg, 123);
  const auto b = train(env2, cfg, 123);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].mean_reward == b.curve[i].mean_reward);
    CHECK(a.curve[i].entropy == b.curve[i].entropy);
    CHECK(a.curve[i].value_loss == b.curve[i].value_loss);
  }
  auto& pa = const_cast<TrainResult&>(a).policy;
  auto& pb = const_cast<TrainResult&>(b).policy;
  auto params_a = pa.params();
  auto params_b = pb.params();
  for (std::size_t i = 0; i < params_a.size(); ++i)
    CHECK(params_a[i]->data == params_b[i]->data);
}

TEST_CASE("plateau stop fires on a constant-reward environment") {
  PpoConfig cfg;
  cfg.hidden_units = 8;
  cfg.horizon = 16;
  cfg.minibatch_size = 16;
  cfg.epochs_per_update = 1;
  cfg.total_steps = 1000 * 16;
  cfg.plateau_window = 5;
  BanditEnv env;
  const auto result = train(env, cfg, 7);
  CHECK(result.plateau_stopped);
  CHECK(result.curve.size() < 1000);
}

TEST_CASE("config validation") {
  PpoConfig cfg;
  cfg.clip_epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("policy checkpoint round-trip is bit-exact") {
  PolicyNetwork policy = small_policy(4, {5, 3}, 99, 12);
  policy.obs_mean = {0.1, 0.2, 0.3, 0.4};
  policy.obs_scale = {1.0, 2.0, 3.0, 4.0};
  const auto path = std::filesystem::temp_directory_path() / "policy.ckpt";
  policy.save(path);
  PolicyNetwork loaded = PolicyNetwork::load(path);
  CHECK(loaded.head_sizes() == policy.head_sizes());
  CHECK(loaded.obs_mean == policy.obs_mean);

  Rng rng(1);
  Tensor obs = Tensor::zeros({4});
  for (double& v : obs.data) v = rng.uniform(-2, 2);
  const auto a = greedy_action(policy, obs);
  const auto b = greedy_action(loaded, obs);
  CHECK(a.action == b.action);
  CHECK(a.log_prob == b.log_prob);
  CHECK(a.value == b.value);
  std::filesystem::remove(path);
}

TEST_CASE("learning curve CSV") {
  const auto path = std::filesystem::temp_directory_path() / "curve.csv";
  write_learning_curve(path, {{0, 256, 1.5, 0.9, 0.25}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "update_index,env_steps,mean_reward,entropy,value_loss");
  CHECK(row == "0,256,1.5,0.9,0.25");
  std::filesystem::remove(path);
}
