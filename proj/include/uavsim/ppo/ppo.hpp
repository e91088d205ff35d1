#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "uavsim/nn/adam.hpp"
#include "uavsim/nn/sequential.hpp"
#include "uavsim/rng.hpp"

namespace uavsim::ppo {

struct PpoConfig {
  std::size_t hidden_units = 64;
  nn::Activation activation = nn::Activation::Tanh;
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t epochs_per_update = 10;
  std::size_t minibatch_size = 64;
  double learning_rate = 3e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::size_t horizon = 256;
  std::size_t total_steps = 100000;
  // Stop early when the mean reward over the last plateau_window updates
  // improves on the window before it by less than plateau_tolerance
  // (relative). 0 disables the plateau stop.
  std::size_t plateau_window = 20;
  double plateau_tolerance = 0.01;
  bool normalize_observations = true;

  void validate() const;
};

// Factored discrete policy: a shared dense trunk feeding one categorical
// head per sub-action plus a scalar value head. A joint action picks one
// index per head; its log-probability is the sum over heads.
class PolicyNetwork {
 public:
  PolicyNetwork(std::size_t obs_dim, std::vector<std::size_t> head_sizes,
                const PpoConfig& config, Rng& init_rng);

  struct ForwardOut {
    nn::Tensor logits;  // [batch, total_logits]
    nn::Tensor values;  // [batch]
  };
  // Expects already-normalized observations [batch, obs_dim].
  ForwardOut forward(const nn::Tensor& obs);
  // Backward for the last forward; accumulates parameter gradients.
  void backward(const nn::Tensor& grad_logits, const nn::Tensor& grad_values);

  std::vector<nn::Tensor*> params();
  std::vector<nn::Tensor*> grads();
  void zero_grad();

  nn::Tensor normalize(const nn::Tensor& obs) const;

  std::size_t obs_dim() const { return obs_dim_; }
  const std::vector<std::size_t>& head_sizes() const { return head_sizes_; }
  std::size_t total_logits() const { return total_logits_; }
  std::size_t head_offset(std::size_t h) const { return head_offsets_[h]; }

  void save(const std::filesystem::path& path) const;
  static PolicyNetwork load(const std::filesystem::path& path);

  nn::Sequential trunk;
  nn::DenseLayer logits_head;
  nn::DenseLayer value_head;
  // Observation normalization learned during training, applied in
  // sample_action; identity until the trainer sets it.
  std::vector<double> obs_mean;
  std::vector<double> obs_scale;

 private:
  std::size_t obs_dim_;
  std::vector<std::size_t> head_sizes_;
  std::vector<std::size_t> head_offsets_;
  std::size_t total_logits_;
  PpoConfig config_;
};

using Action = std::vector<std::size_t>;  // one index per head

struct SampleResult {
  Action action;
  double log_prob = 0.0;
  double value = 0.0;
};
// Samples each head independently from its categorical distribution.
// Normalizes the raw observation internally.
SampleResult sample_action(PolicyNetwork& policy, const nn::Tensor& obs,
                           Rng& rng);
// Greedy variant: argmax per head.
SampleResult greedy_action(PolicyNetwork& policy, const nn::Tensor& obs);

struct RolloutBuffer {
  std::vector<nn::Tensor> observations;  // normalized, [obs_dim] each
  std::vector<Action> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<bool> dones;

  void push(nn::Tensor obs, Action action, double log_prob, double reward,
            double value, bool done);
  std::size_t size() const { return rewards.size(); }
  void clear();
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};
// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t);
// A_t = sum_k (gamma * lambda)^k delta_{t+k}, resetting across dones.
GaeResult compute_gae(const RolloutBuffer& buffer, double last_value,
                      double gamma, double lambda);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

// Computes the clipped-surrogate PPO loss over one minibatch and
// accumulates its gradient into the policy (call zero_grad first).
// advantages must already be normalized. Returns the total loss
// policy_loss + value_coef * value_loss - entropy_coef * entropy.
double ppo_batch_grad(PolicyNetwork& policy, const nn::Tensor& obs,
                      const std::vector<Action>& actions,
                      const std::vector<double>& old_log_probs,
                      const std::vector<double>& advantages,
                      const std::vector<double>& returns,
                      const PpoConfig& config, UpdateStats* stats);
// One PPO update over the buffer: advantages normalized to mean 0 / std 1,
// then epochs_per_update passes of clipped-surrogate minibatch SGD via the
// given Adam optimizer. shuffle_rng orders the minibatches.
UpdateStats ppo_update(PolicyNetwork& policy, const RolloutBuffer& buffer,
                       double last_value, const PpoConfig& config,
                       nn::Adam& adam, Rng& shuffle_rng);

// Environment interface the trainer drives. Actions are one index per
// policy head.
class RolloutEnv {
 public:
  virtual ~RolloutEnv() = default;
  struct Out {
    nn::Tensor observation;
    double reward = 0.0;
    bool done = false;
  };
  virtual nn::Tensor reset(std::uint64_t seed) = 0;
  virtual Out step(const Action& action) = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::vector<std::size_t> head_sizes() const = 0;
};

struct CurveRow {
  std::size_t update_index;
  std::size_t env_steps;
  double mean_reward;  // mean return of episodes finished in this rollout
  double entropy;
  double value_loss;
};

struct TrainResult {
  PolicyNetwork policy;
  std::vector<CurveRow> curve;
  bool plateau_stopped = false;
};
TrainResult train(RolloutEnv& env, const PpoConfig& config,
                  std::uint64_t seed);

void write_learning_curve(const std::filesystem::path& path,
                          const std::vector<CurveRow>& rows);

}  // namespace uavsim::ppo
