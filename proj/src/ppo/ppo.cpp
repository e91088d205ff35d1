#include "uavsim/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "uavsim/nn/checkpoint.hpp"

namespace uavsim::ppo {

using nn::Tensor;

void PpoConfig::validate() const {
  if (clip_epsilon <= 0.0) throw ConfigError("clip_epsilon must be > 0");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0, 1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0)
    throw ConfigError("gae_lambda must be in [0, 1]");
  if (hidden_units < 1 || horizon < 1 || minibatch_size < 1 ||
      epochs_per_update < 1)
    throw ConfigError("ppo sizes must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (plateau_tolerance < 0.0)
    throw ConfigError("plateau_tolerance must be >= 0");
}

PolicyNetwork::PolicyNetwork(std::size_t obs_dim,
                             std::vector<std::size_t> head_sizes,
                             const PpoConfig& config, Rng& init_rng)
    : logits_head(config.hidden_units, 1, nn::Activation::Identity),
      value_head(config.hidden_units, 1, nn::Activation::Identity),
      obs_mean(obs_dim, 0.0),
      obs_scale(obs_dim, 1.0),
      obs_dim_(obs_dim),
      head_sizes_(std::move(head_sizes)),
      config_(config) {
  if (obs_dim < 1) throw ConfigError("policy obs_dim must be >= 1");
  if (head_sizes_.empty()) throw ConfigError("policy needs at least one head");
  total_logits_ = 0;
  for (std::size_t s : head_sizes_) {
    if (s < 1) throw ConfigError("head size must be >= 1");
    head_offsets_.push_back(total_logits_);
    total_logits_ += s;
  }
  config_.validate();

  auto& d1 = trunk.emplace<nn::DenseLayer>(obs_dim, config.hidden_units,
                                           config.activation);
  auto& d2 = trunk.emplace<nn::DenseLayer>(
      config.hidden_units, config.hidden_units, config.activation);
  logits_head =
      nn::DenseLayer(config.hidden_units, total_logits_, nn::Activation::Identity);
  value_head =
      nn::DenseLayer(config.hidden_units, 1, nn::Activation::Identity);
  d1.init_glorot(init_rng);
  d2.init_glorot(init_rng);
  logits_head.init_glorot(init_rng);
  value_head.init_glorot(init_rng);
  // Small initial logits keep the initial policy near uniform.
  for (double& w : logits_head.weights.data) w *= 0.01;
}

Tensor PolicyNetwork::normalize(const Tensor& obs) const {
  Tensor out = obs;
  const std::size_t rows = obs.numel() / obs_dim_;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < obs_dim_; ++i) {
      double v = (obs.data[r * obs_dim_ + i] - obs_mean[i]) / obs_scale[i];
      out.data[r * obs_dim_ + i] = std::clamp(v, -10.0, 10.0);
    }
  return out;
}

PolicyNetwork::ForwardOut PolicyNetwork::forward(const Tensor& obs) {
  if (obs.rank() != 2 || obs.dim(1) != obs_dim_)
    throw DimensionError("policy forward expects [batch, obs_dim]");
  const Tensor hidden = trunk.forward(obs, true, nullptr);
  ForwardOut out;
  out.logits = logits_head.forward(hidden, true, nullptr);
  Tensor v = value_head.forward(hidden, true, nullptr);
  out.values = v.reshaped({obs.dim(0)});
  out.logits.require_finite("policy logits");
  out.values.require_finite("policy values");
  return out;
}

void PolicyNetwork::backward(const Tensor& grad_logits,
                             const Tensor& grad_values) {
  const Tensor gv = Tensor::from({grad_values.numel(), 1}, grad_values.data);
  Tensor gh = logits_head.backward(grad_logits);
  const Tensor gh2 = value_head.backward(gv);
  for (std::size_t i = 0; i < gh.data.size(); ++i) gh.data[i] += gh2.data[i];
  trunk.backward(gh);
}

std::vector<Tensor*> PolicyNetwork::params() {
  std::vector<Tensor*> out = trunk.params();
  for (Tensor* p : logits_head.params()) out.push_back(p);
  for (Tensor* p : value_head.params()) out.push_back(p);
  return out;
}

std::vector<Tensor*> PolicyNetwork::grads() {
  std::vector<Tensor*> out = trunk.grads();
  for (Tensor* g : logits_head.grads()) out.push_back(g);
  for (Tensor* g : value_head.grads()) out.push_back(g);
  return out;
}

void PolicyNetwork::zero_grad() {
  trunk.zero_grad();
  logits_head.zero_grad();
  value_head.zero_grad();
}

namespace {

// log-softmax of logits[offset, offset+size) into out.
void head_log_softmax(const double* logits, std::size_t size, double* out) {
  double mx = logits[0];
  for (std::size_t i = 1; i < size; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) sum += std::exp(logits[i] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < size; ++i) out[i] = logits[i] - lse;
}

}  // namespace

SampleResult sample_action(PolicyNetwork& policy, const Tensor& obs,
                           Rng& rng) {
  const Tensor x =
      policy.normalize(obs).reshaped({1, policy.obs_dim()});
  const auto fwd = policy.forward(x);
  SampleResult result;
  result.value = fwd.values.data[0];
  std::vector<double> logp;
  for (std::size_t h = 0; h < policy.head_sizes().size(); ++h) {
    const std::size_t size = policy.head_sizes()[h];
    logp.resize(size);
    head_log_softmax(fwd.logits.data.data() + policy.head_offset(h), size,
                     logp.data());
    const double u = rng.uniform();
    double cdf = 0.0;
    std::size_t pick = size - 1;
    for (std::size_t i = 0; i < size; ++i) {
      cdf += std::exp(logp[i]);
      if (u < cdf) {
        pick = i;
        break;
      }
    }
    result.action.push_back(pick);
    result.log_prob += logp[pick];
  }
  return result;
}

SampleResult greedy_action(PolicyNetwork& policy, const Tensor& obs) {
  const Tensor x =
      policy.normalize(obs).reshaped({1, policy.obs_dim()});
  const auto fwd = policy.forward(x);
  SampleResult result;
  result.value = fwd.values.data[0];
  std::vector<double> logp;
  for (std::size_t h = 0; h < policy.head_sizes().size(); ++h) {
    const std::size_t size = policy.head_sizes()[h];
    logp.resize(size);
    head_log_softmax(fwd.logits.data.data() + policy.head_offset(h), size,
                     logp.data());
    const std::size_t pick = static_cast<std::size_t>(
        std::max_element(logp.begin(), logp.end()) - logp.begin());
    result.action.push_back(pick);
    result.log_prob += logp[pick];
  }
  return result;
}

void RolloutBuffer::push(Tensor obs, Action action, double log_prob,
                         double reward, double value, bool done) {
  observations.push_back(std::move(obs));
  actions.push_back(std::move(action));
  log_probs.push_back(log_prob);
  rewards.push_back(reward);
  values.push_back(value);
  dones.push_back(done);
}

void RolloutBuffer::clear() {
  observations.clear();
  actions.clear();
  log_probs.clear();
  rewards.clear();
  values.clear();
  dones.clear();
}

GaeResult compute_gae(const RolloutBuffer& buffer, double last_value,
                      double gamma, double lambda) {
  const std::size_t T = buffer.size();
  if (T == 0) throw StateError("compute_gae on an empty buffer");
  GaeResult out;
  out.advantages.assign(T, 0.0);
  out.returns.assign(T, 0.0);
  double gae = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    const double not_done = buffer.dones[i] ? 0.0 : 1.0;
    const double next_value = (i + 1 < T) ? buffer.values[i + 1] : last_value;
    const double delta = buffer.rewards[i] +
                         gamma * next_value * not_done - buffer.values[i];
    gae = delta + gamma * lambda * not_done * gae;
    out.advantages[i] = gae;
    out.returns[i] = gae + buffer.values[i];
  }
  return out;
}

double ppo_batch_grad(PolicyNetwork& policy, const Tensor& obs,
                      const std::vector<Action>& actions,
                      const std::vector<double>& old_log_probs,
                      const std::vector<double>& advantages,
                      const std::vector<double>& returns,
                      const PpoConfig& config, UpdateStats* stats) {
  const std::size_t n = actions.size();
  if (n == 0) throw StateError("ppo_batch_grad on an empty batch");
  const std::size_t L = policy.total_logits();
  const std::size_t H = policy.head_sizes().size();

  const auto fwd = policy.forward(obs);
  Tensor grad_logits = Tensor::zeros({n, L});
  Tensor grad_values = Tensor::zeros({n});
  const double inv_n = 1.0 / static_cast<double>(n);

  double pg_loss = 0.0, v_loss = 0.0, ent_sum = 0.0;
  std::vector<double> logp;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = fwd.logits.data.data() + i * L;
    double* grow = grad_logits.data.data() + i * L;

    double new_logp = 0.0, entropy = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = policy.head_offset(h);
      const std::size_t size = policy.head_sizes()[h];
      logp.resize(size);
      head_log_softmax(row + off, size, logp.data());
      new_logp += logp[actions[i][h]];
      for (std::size_t j = 0; j < size; ++j)
        entropy -= std::exp(logp[j]) * logp[j];
    }

    const double ratio = std::exp(new_logp - old_log_probs[i]);
    const double a = advantages[i];
    const double surr1 = ratio * a;
    const double surr2 = std::clamp(ratio, 1.0 - config.clip_epsilon,
                                    1.0 + config.clip_epsilon) * a;
    pg_loss -= std::min(surr1, surr2) * inv_n;
    // Gradient flows through the unclipped branch only.
    const double dlogp = (surr1 <= surr2) ? -a * ratio * inv_n : 0.0;

    const double verr = fwd.values.data[i] - returns[i];
    v_loss += verr * verr * inv_n;
    grad_values.data[i] = config.value_coef * 2.0 * verr * inv_n;

    ent_sum += entropy * inv_n;
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = policy.head_offset(h);
      const std::size_t size = policy.head_sizes()[h];
      logp.resize(size);
      head_log_softmax(row + off, size, logp.data());
      double head_entropy = 0.0;
      for (std::size_t j = 0; j < size; ++j)
        head_entropy -= std::exp(logp[j]) * logp[j];
      for (std::size_t j = 0; j < size; ++j) {
        const double p = std::exp(logp[j]);
        const double onehot = (j == actions[i][h]) ? 1.0 : 0.0;
        grow[off + j] =
            dlogp * (onehot - p) +
            config.entropy_coef * inv_n * p * (logp[j] + head_entropy);
      }
    }
  }

  const double loss =
      pg_loss + config.value_coef * v_loss - config.entropy_coef * ent_sum;
  if (!std::isfinite(loss))
    throw NumericError("ppo: non-finite loss (pg=" + std::to_string(pg_loss) +
                       " v=" + std::to_string(v_loss) + ")");

  policy.backward(grad_logits, grad_values);
  if (stats) {
    stats->policy_loss += pg_loss;
    stats->value_loss += v_loss;
    stats->entropy += ent_sum;
  }
  return loss;
}

UpdateStats ppo_update(PolicyNetwork& policy, const RolloutBuffer& buffer,
                       double last_value, const PpoConfig& config,
                       nn::Adam& adam, Rng& shuffle_rng) {
  const std::size_t T = buffer.size();
  if (T == 0) throw StateError("ppo_update on an empty buffer");
  const auto gae =
      compute_gae(buffer, last_value, config.gamma, config.gae_lambda);

  // Advantage normalization over the whole batch.
  std::vector<double> adv = gae.advantages;
  double mean = std::accumulate(adv.begin(), adv.end(), 0.0) /
                static_cast<double>(T);
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / static_cast<double>(T));
  for (double& a : adv) a = (a - mean) / (stddev + 1e-8);

  const std::size_t obs_dim = policy.obs_dim();
  auto grads = policy.grads();

  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), 0);

  UpdateStats stats;
  std::size_t stat_batches = 0;

  for (std::size_t epoch = 0; epoch < config.epochs_per_update; ++epoch) {
    for (std::size_t i = T; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    const std::size_t batch = std::min(config.minibatch_size, T);
    for (std::size_t start = 0; start < T; start += batch) {
      const std::size_t n = std::min(batch, T - start);
      Tensor xb = Tensor::zeros({n, obs_dim});
      std::vector<Action> actions(n);
      std::vector<double> old_logp(n), adv_b(n), ret_b(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = order[start + i];
        const Tensor& o = buffer.observations[s];
        std::copy(o.data.begin(), o.data.end(),
                  xb.data.begin() + static_cast<std::ptrdiff_t>(i * obs_dim));
        actions[i] = buffer.actions[s];
        old_logp[i] = buffer.log_probs[s];
        adv_b[i] = adv[s];
        ret_b[i] = gae.returns[s];
      }

      policy.zero_grad();
      ppo_batch_grad(policy, xb, actions, old_logp, adv_b, ret_b, config,
                     &stats);
      adam.step(grads);
      ++stat_batches;
    }
  }
  const double inv_b = 1.0 / static_cast<double>(stat_batches);
  stats.policy_loss *= inv_b;
  stats.value_loss *= inv_b;
  stats.entropy *= inv_b;
  return stats;
}

namespace {

// Welford running mean/variance per observation coordinate.
struct RunningNorm {
  std::vector<double> mean, m2;
  double count = 0.0;

  explicit RunningNorm(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}

  void update(const Tensor& obs) {
    count += 1.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = obs.data[i] - mean[i];
      mean[i] += d / count;
      m2[i] += d * (obs.data[i] - mean[i]);
    }
  }
  void apply_to(PolicyNetwork& policy) const {
    if (count < 2.0) return;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      policy.obs_mean[i] = mean[i];
      policy.obs_scale[i] = std::sqrt(m2[i] / count + 1e-8);
    }
  }
};

}  // namespace

TrainResult train(RolloutEnv& env, const PpoConfig& config,
                  std::uint64_t seed) {
  config.validate();
  Rng root(seed);
  Rng init_rng = root.substream("policy-init");
  Rng action_rng = root.substream("ppo-actions");
  Rng shuffle_rng = root.substream("ppo-shuffle");
  Rng env_seed_rng = root.substream("env");

  TrainResult result{
      PolicyNetwork(env.obs_dim(), env.head_sizes(), config, init_rng),
      {},
      false};
  PolicyNetwork& policy = result.policy;

  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  nn::Adam adam(policy.params(), adam_cfg);

  RunningNorm norm(env.obs_dim());
  RolloutBuffer buffer;
  Tensor obs = env.reset(env_seed_rng.next_u64());
  if (config.normalize_observations) norm.update(obs);

  std::size_t env_steps = 0;
  std::size_t update_index = 0;
  double episode_return = 0.0;
  std::vector<double> reward_history;
  double last_mean_reward = 0.0;

  while (env_steps < config.total_steps) {
    if (config.normalize_observations) norm.apply_to(policy);
    buffer.clear();
    std::vector<double> finished_returns;
    for (std::size_t t = 0; t < config.horizon; ++t) {
      const SampleResult s = sample_action(policy, obs, action_rng);
      const auto out = env.step(s.action);
      buffer.push(policy.normalize(obs), s.action, s.log_prob, out.reward,
                  s.value, out.done);
      episode_return += out.reward;
      ++env_steps;
      if (out.done) {
        finished_returns.push_back(episode_return);
        episode_return = 0.0;
        obs = env.reset(env_seed_rng.next_u64());
      } else {
        obs = out.observation;
      }
      if (config.normalize_observations) norm.update(obs);
    }

    const double last_value =
        buffer.dones.back() ? 0.0
                            : sample_action(policy, obs, action_rng).value;
    const UpdateStats stats =
        ppo_update(policy, buffer, last_value, config, adam, shuffle_rng);

    double mean_reward = last_mean_reward;
    if (!finished_returns.empty()) {
      mean_reward = std::accumulate(finished_returns.begin(),
                                    finished_returns.end(), 0.0) /
                    static_cast<double>(finished_returns.size());
    }
    last_mean_reward = mean_reward;
    reward_history.push_back(mean_reward);
    result.curve.push_back({update_index, env_steps, mean_reward,
                            stats.entropy, stats.value_loss});
    ++update_index;

    if (config.plateau_window > 0 &&
        reward_history.size() >= 2 * config.plateau_window) {
      const std::size_t w = config.plateau_window;
      const std::size_t end = reward_history.size();
      double recent = 0.0, previous = 0.0;
      for (std::size_t i = end - w; i < end; ++i) recent += reward_history[i];
      for (std::size_t i = end - 2 * w; i < end - w; ++i)
        previous += reward_history[i];
      recent /= static_cast<double>(w);
      previous /= static_cast<double>(w);
      const double denom = std::max(std::abs(previous), 1e-8);
      if ((recent - previous) / denom < config.plateau_tolerance) {
        result.plateau_stopped = true;
        break;
      }
    }
  }
  if (config.normalize_observations) norm.apply_to(policy);
  return result;
}

void PolicyNetwork::save(const std::filesystem::path& path) const {
  nlohmann::json arch = {
      {"model", "policy"},
      {"obs_dim", obs_dim_},
      {"head_sizes", head_sizes_},
      {"hidden_units", config_.hidden_units},
      {"activation", nn::to_string(config_.activation)},
  };
  auto& self = const_cast<PolicyNetwork&>(*this);
  auto& d1 = static_cast<nn::DenseLayer&>(self.trunk.layer(0));
  auto& d2 = static_cast<nn::DenseLayer&>(self.trunk.layer(1));
  nn::Checkpoint ckpt;
  ckpt.arch = arch.dump();
  ckpt.tensors = {
      {"trunk.0.weights", d1.weights}, {"trunk.0.bias", d1.bias},
      {"trunk.1.weights", d2.weights}, {"trunk.1.bias", d2.bias},
      {"logits.weights", logits_head.weights},
      {"logits.bias", logits_head.bias},
      {"value.weights", value_head.weights},
      {"value.bias", value_head.bias},
  };
  ckpt.tensors.emplace_back("obs_mean",
                            Tensor::from({obs_mean.size()}, obs_mean));
  ckpt.tensors.emplace_back("obs_scale",
                            Tensor::from({obs_scale.size()}, obs_scale));
  nn::save_checkpoint(path, ckpt);
}

PolicyNetwork PolicyNetwork::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  nlohmann::json arch;
  try {
    arch = nlohmann::json::parse(ckpt.arch);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad policy checkpoint arch: " + std::string(e.what()));
  }
  if (arch.value("model", "") != "policy")
    throw DataError("checkpoint is not a policy model");
  PpoConfig config;
  config.hidden_units = arch.at("hidden_units").get<std::size_t>();
  config.activation =
      nn::activation_from_string(arch.at("activation").get<std::string>());
  Rng dummy(0);
  PolicyNetwork policy(arch.at("obs_dim").get<std::size_t>(),
                       arch.at("head_sizes").get<std::vector<std::size_t>>(),
                       config, dummy);
  auto& d1 = static_cast<nn::DenseLayer&>(policy.trunk.layer(0));
  auto& d2 = static_cast<nn::DenseLayer&>(policy.trunk.layer(1));
  d1.weights = ckpt.find("trunk.0.weights");
  d1.bias = ckpt.find("trunk.0.bias");
  d2.weights = ckpt.find("trunk.1.weights");
  d2.bias = ckpt.find("trunk.1.bias");
  policy.logits_head.weights = ckpt.find("logits.weights");
  policy.logits_head.bias = ckpt.find("logits.bias");
  policy.value_head.weights = ckpt.find("value.weights");
  policy.value_head.bias = ckpt.find("value.bias");
  policy.obs_mean = ckpt.find("obs_mean").data;
  policy.obs_scale = ckpt.find("obs_scale").data;
  return policy;
}

void write_learning_curve(const std::filesystem::path& path,
                          const std::vector<CurveRow>& rows) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "update_index,env_steps,mean_reward,entropy,value_loss\n";
    for (const CurveRow& r : rows) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%zu,%zu,%.12g,%.12g,%.12g\n",
                    r.update_index, r.env_steps, r.mean_reward, r.entropy,
                    r.value_loss);
      out << buf;
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace uavsim::ppo
