#include "uavsim/cli/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace uavsim::cli {

using nlohmann::json;

nlohmann::json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("bad JSON in " + path.string() + ": " + e.what());
  }
}

namespace {

const json& section(const json& cfg, const std::string& name) {
  if (!cfg.contains(name))
    throw ConfigError("config is missing the \"" + name + "\" section");
  return cfg.at(name);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  try {
    return j.value(key, fallback);
  } catch (const json::exception& e) {
    throw ConfigError("config key \"" + key + "\": " + e.what());
  }
}

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

world::WorldConfig parse_world_config(const json& j) {
  world::WorldConfig c;
  c.station_xy.x = get_or(j, "station_x", c.station_xy.x);
  c.station_xy.y = get_or(j, "station_y", c.station_xy.y);
  c.placement_radius_m = get_or(j, "placement_radius_m", c.placement_radius_m);
  c.grid_spacing_m = get_or(j, "grid_spacing_m", c.grid_spacing_m);
  c.comm_range_m = get_or(j, "comm_range_m", c.comm_range_m);
  c.sensing_range_m = get_or(j, "sensing_range_m", c.sensing_range_m);
  c.deterrence_range_m = get_or(j, "deterrence_range_m", c.deterrence_range_m);
  c.uav_total = get_or(j, "uav_total", c.uav_total);
  c.block_count = get_or(j, "block_count", c.block_count);
  c.validate();
  return c;
}

crime::WindowFilter parse_window_filter(const json& j) {
  crime::WindowFilter f;
  f.weekday = get_or(j, "weekday", f.weekday);
  f.start_minute = get_or(j, "start_minute", f.start_minute);
  f.end_minute = get_or(j, "end_minute", f.end_minute);
  if (j.contains("region")) f.region = j.at("region").get<int>();
  if (f.weekday > 6) throw ConfigError("window weekday must be 0..6");
  if (f.start_minute >= f.end_minute || f.end_minute > 1440)
    throw ConfigError("window minutes must satisfy start < end <= 1440");
  return f;
}

env::EnvConfig parse_env_config(const json& j) {
  env::EnvConfig c;
  c.world = parse_world_config(section(j, "world"));
  if (j.contains("window")) c.window = parse_window_filter(j.at("window"));
  c.replay_year = get_or(j, "replay_year", c.replay_year);
  c.episode_cycles = get_or(j, "episode_cycles", c.episode_cycles);
  return c;
}

predictor::PredictorConfig parse_predictor_config(const json& j) {
  predictor::PredictorConfig c;
  c.block_count = get_or(j, "block_count", c.block_count);
  c.hidden_units = get_or(j, "hidden_units", c.hidden_units);
  c.window_len = get_or(j, "window_len", c.window_len);
  c.epochs = get_or(j, "epochs", c.epochs);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.standardize = get_or(j, "standardize", c.standardize);
  if (c.block_count < 1 || c.hidden_units < 1 || c.window_len < 1 ||
      c.epochs < 1 || c.batch_size < 1 || c.learning_rate <= 0.0)
    throw ConfigError("predictor config values must be positive");
  return c;
}

ppo::PpoConfig parse_ppo_config(const json& j) {
  ppo::PpoConfig c;
  c.hidden_units = get_or(j, "hidden_units", c.hidden_units);
  if (j.contains("activation"))
    c.activation =
        nn::activation_from_string(j.at("activation").get<std::string>());
  c.clip_epsilon = get_or(j, "clip_epsilon", c.clip_epsilon);
  c.gamma = get_or(j, "gamma", c.gamma);
  c.gae_lambda = get_or(j, "gae_lambda", c.gae_lambda);
  c.epochs_per_update = get_or(j, "epochs_per_update", c.epochs_per_update);
  c.minibatch_size = get_or(j, "minibatch_size", c.minibatch_size);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.entropy_coef = get_or(j, "entropy_coef", c.entropy_coef);
  c.value_coef = get_or(j, "value_coef", c.value_coef);
  c.horizon = get_or(j, "horizon", c.horizon);
  c.total_steps = get_or(j, "total_steps", c.total_steps);
  c.plateau_window = get_or(j, "plateau_window", c.plateau_window);
  c.plateau_tolerance = get_or(j, "plateau_tolerance", c.plateau_tolerance);
  c.normalize_observations =
      get_or(j, "normalize_observations", c.normalize_observations);
  c.validate();
  return c;
}

di::DiTrainConfig parse_di_train_config(const json& j) {
  di::DiTrainConfig c;
  c.epochs = get_or(j, "epochs", c.epochs);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  if (c.epochs < 1 || c.batch_size < 1 || c.learning_rate <= 0.0)
    throw ConfigError("di training config values must be positive");
  return c;
}

SynthCrimeConfig parse_synth_config(const json& j) {
  SynthCrimeConfig c;
  c.year = get_or(j, "year", c.year);
  c.blocks.nx = get_or(j, "blocks_nx", c.blocks.nx);
  c.blocks.ny = get_or(j, "blocks_ny", c.blocks.ny);
  c.blocks.block_width = get_or(j, "block_width", c.blocks.block_width);
  c.blocks.block_height = get_or(j, "block_height", c.blocks.block_height);
  c.blocks.origin_x = get_or(
      j, "origin_x",
      -0.5 * c.blocks.block_width * static_cast<double>(c.blocks.nx));
  c.blocks.origin_y = get_or(
      j, "origin_y",
      -0.5 * c.blocks.block_height * static_cast<double>(c.blocks.ny));
  if (j.contains("block_weights"))
    c.block_weights = j.at("block_weights").get<std::vector<double>>();
  c.events_per_week = get_or(j, "events_per_week", c.events_per_week);
  c.major_fraction = get_or(j, "major_fraction", c.major_fraction);
  c.cluster_sigma_frac = get_or(j, "cluster_sigma_frac", c.cluster_sigma_frac);
  c.window_start_minute =
      get_or(j, "window_start_minute", c.window_start_minute);
  c.window_end_minute = get_or(j, "window_end_minute", c.window_end_minute);

  if (c.blocks.nx < 1 || c.blocks.ny < 1 || c.blocks.block_width <= 0.0 ||
      c.blocks.block_height <= 0.0)
    throw ConfigError("synthetic block tiling must be non-empty");
  if (!c.block_weights.empty() &&
      c.block_weights.size() != c.blocks.count())
    throw ConfigError("block_weights length must equal nx * ny");
  for (double w : c.block_weights)
    if (w < 0.0) throw ConfigError("block_weights must be non-negative");
  if (c.events_per_week < 0.0)
    throw ConfigError("events_per_week must be >= 0");
  if (c.major_fraction < 0.0 || c.major_fraction > 1.0)
    throw ConfigError("major_fraction must be in [0, 1]");
  if (c.window_start_minute >= c.window_end_minute ||
      c.window_end_minute > 1440)
    throw ConfigError("synthetic window minutes must satisfy start < end");
  return c;
}

namespace {

std::size_t poisson_draw(double lambda, Rng& rng) {
  // Knuth's product method; fine for desk-scale weekly rates.
  const double limit = std::exp(-lambda);
  std::size_t k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.uniform();
  } while (p > limit);
  return k - 1;
}

}  // namespace

std::vector<crime::CrimeEvent> generate_synthetic_events(
    const SynthCrimeConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t B = config.blocks.count();
  std::vector<double> cdf(B);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    total += config.block_weights.empty() ? 1.0 : config.block_weights[b];
    cdf[b] = total;
  }
  if (total <= 0.0) throw ConfigError("block weights sum to zero");

  std::vector<crime::CrimeEvent> events;
  const auto fridays = crime::friday_buckets(config.year, config.year);
  for (const auto friday : fridays) {
    const crime::CivilTime day = crime::to_civil(friday);
    const std::size_t n = poisson_draw(config.events_per_week, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.uniform(0.0, total);
      std::size_t block = 0;
      while (block + 1 < B && u >= cdf[block]) ++block;

      double cx, cy;
      config.blocks.centroid(block, cx, cy);
      const double w = config.blocks.block_width;
      const double h = config.blocks.block_height;
      double x, y;
      if (config.cluster_sigma_frac > 0.0) {
        x = cx + config.cluster_sigma_frac * w * rng.normal();
        y = cy + config.cluster_sigma_frac * h * rng.normal();
        // the upper edge belongs to the next block, so clamp just inside
        x = std::clamp(x, cx - 0.5 * w, cx + 0.5 * w * (1.0 - 1e-9));
        y = std::clamp(y, cy - 0.5 * h, cy + 0.5 * h * (1.0 - 1e-9));
      } else {
        x = cx + rng.uniform(-0.5, 0.5) * w;
        y = cy + rng.uniform(-0.5, 0.5) * h;
      }

      crime::CrimeEvent e;
      e.timestamp = crime::from_civil(
          day.year, day.month, day.day,
          config.window_start_minute +
              static_cast<unsigned>(rng.uniform_int(
                  config.window_end_minute - config.window_start_minute)));
      e.x_m = x;
      e.y_m = y;
      e.block_id = config.blocks.block_id(x, y);
      e.severity = rng.bernoulli(config.major_fraction)
                       ? crime::Severity::Major
                       : crime::Severity::Misdemeanor;
      events.push_back(e);
    }
  }
  std::sort(events.begin(), events.end(),
            [](const crime::CrimeEvent& a, const crime::CrimeEvent& b) {
              return a.timestamp < b.timestamp;
            });
  return events;
}

env::ActionVector CrimeRolloutEnv::to_env_action(const ppo::Action& action,
                                                 std::size_t uav_total) {
  if (action.size() != 2 * uav_total)
    throw DataError("policy action length must be 2 * uav_total");
  env::ActionVector out;
  for (std::size_t u = 0; u < uav_total; ++u)
    out.push_back(
        {action[2 * u], static_cast<world::Role>(action[2 * u + 1])});
  return out;
}

CrimeRolloutEnv::Out CrimeRolloutEnv::step(const ppo::Action& action) {
  const env::EnvStep s =
      env_.step(to_env_action(action, env_.uav_total()));
  return {s.observation, s.reward, s.done};
}

std::vector<std::size_t> CrimeRolloutEnv::head_sizes() const {
  std::vector<std::size_t> sizes;
  for (std::size_t u = 0; u < env_.uav_total(); ++u) {
    sizes.push_back(env_.grid_size());
    sizes.push_back(3);
  }
  return sizes;
}

void write_sweep_rows(const std::filesystem::path& path,
                      const std::vector<SweepTrialRow>& rows) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "range_m,trial,deterred,potential,ratio\n";
    for (const SweepTrialRow& r : rows) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%.12g,%zu,%zu,%zu,%.12g\n", r.range_m,
                    r.trial, r.deterred, r.potential, r.ratio);
      out << buf;
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<SweepTrialRow> run_policy_sweep(
    const std::function<env::CrimeEnv(double)>& make_env,
    ppo::PolicyNetwork& policy, const std::vector<double>& ranges,
    std::size_t trials, std::uint64_t seed) {
  std::vector<SweepTrialRow> rows;
  const Rng root(seed);
  for (double range : ranges) {
    env::CrimeEnv env = make_env(range);
    for (std::size_t trial = 0; trial < trials; ++trial) {
      // Same action stream per trial at every range: deterred counts are
      // then non-decreasing in range by disk nesting.
      Rng rng = root.substream("eval-trial").substream(trial);
      nn::Tensor obs = env.reset(trial);
      while (!env.done()) {
        const ppo::SampleResult s = ppo::sample_action(policy, obs, rng);
        obs = env
                  .step(CrimeRolloutEnv::to_env_action(s.action,
                                                       env.uav_total()))
                  .observation;
      }
      rows.push_back({range, trial, env.stats().total_deterred,
                      env.stats().total_potential,
                      env::deterrence_ratio(env.stats())});
    }
  }
  return rows;
}

std::vector<SweepTrialRow> run_random_baseline(
    const std::function<env::CrimeEnv(double)>& make_env,
    const std::vector<double>& ranges, std::size_t trials,
    std::uint64_t seed) {
  std::vector<SweepTrialRow> rows;
  const Rng root(seed);
  for (double range : ranges) {
    env::CrimeEnv env = make_env(range);
    for (std::size_t trial = 0; trial < trials; ++trial) {
      Rng rng = root.substream("baseline-placement").substream(trial);
      env.reset(trial);
      while (!env.done()) {
        env::ActionVector action;
        for (std::size_t u = 0; u < env.uav_total(); ++u)
          action.push_back({rng.uniform_int(env.grid_size()),
                            world::Role::Deterrence});
        env.step(action);
      }
      rows.push_back({range, trial, env.stats().total_deterred,
                      env.stats().total_potential,
                      env::deterrence_ratio(env.stats())});
    }
  }
  return rows;
}

std::vector<PlotRow> summarize_sweep(const std::vector<SweepTrialRow>& rows) {
  std::vector<PlotRow> out;
  std::vector<double> order;  // ranges in first-appearance order
  for (const SweepTrialRow& r : rows)
    if (std::find(order.begin(), order.end(), r.range_m) == order.end())
      order.push_back(r.range_m);
  for (double range : order) {
    std::vector<double> ratios;
    for (const SweepTrialRow& r : rows)
      if (r.range_m == range) ratios.push_back(r.ratio);
    const double n = static_cast<double>(ratios.size());
    double mean = 0.0;
    for (double v : ratios) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : ratios) var += (v - mean) * (v - mean);
    const double stderr_ratio =
        ratios.size() > 1 ? std::sqrt(var / (n - 1.0)) / std::sqrt(n) : 0.0;
    out.push_back({range, mean, stderr_ratio, ratios.size()});
  }
  return out;
}

namespace {

void write_plot_rows(const std::filesystem::path& path,
                     const std::vector<PlotRow>& rows) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "range_m,mean_ratio,stderr,n\n";
    for (const PlotRow& r : rows) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%zu\n", r.range_m,
                    r.mean_ratio, r.stderr_ratio, r.n);
      out << buf;
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::vector<PlotRow> emit_plotdata(const std::filesystem::path& sweep_csv,
                                   const std::filesystem::path& out_csv) {
  std::ifstream in(sweep_csv);
  if (!in) throw IoError("cannot read sweep CSV " + sweep_csv.string());
  std::string line;
  if (!std::getline(in, line) || line != "range_m,trial,deterred,potential,ratio")
    throw DataError("unexpected sweep CSV header in " + sweep_csv.string());
  std::vector<SweepTrialRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    SweepTrialRow r;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    if (!(fields >> r.range_m >> r.trial >> r.deterred >> r.potential >>
          r.ratio))
      throw DataError("malformed sweep CSV row " + std::to_string(lineno) +
                      " in " + sweep_csv.string());
    rows.push_back(r);
  }
  const auto plot = summarize_sweep(rows);
  write_plot_rows(out_csv, plot);
  return plot;
}

// ---- subcommand drivers ------------------------------------------------

namespace {

std::vector<crime::CrimeEvent> load_folded_events(const json& data_cfg,
                                                  int replay_year) {
  const std::string path = data_cfg.at("canonical_csv").get<std::string>();
  const auto events = crime::read_canonical_csv(path);
  std::set<int> years;
  for (const auto& e : events) years.insert(crime::to_civil(e.timestamp).year);
  if (years.empty()) return events;
  return crime::fold_years(
      events, std::vector<int>(years.begin(), years.end()), replay_year);
}

std::shared_ptr<predictor::PredictorModel> load_predictor(const json& cfg) {
  if (!cfg.contains("predictor_checkpoint"))
    throw ConfigError("config is missing \"predictor_checkpoint\"");
  return std::make_shared<predictor::PredictorModel>(
      predictor::PredictorModel::load(
          cfg.at("predictor_checkpoint").get<std::string>()));
}

}  // namespace

void cmd_ingest(const json& cfg, std::uint64_t seed,
                const std::filesystem::path& out_dir) {
  const json& ing = section(cfg, "ingest");
  std::vector<crime::CrimeEvent> events;
  if (ing.contains("synthetic")) {
    const SynthCrimeConfig synth = parse_synth_config(ing.at("synthetic"));
    events = generate_synthetic_events(synth, seed);
  } else {
    if (!ing.contains("input_csv"))
      throw ConfigError("ingest needs \"synthetic\" or \"input_csv\"");
    crime::CsvSchema schema;
    if (ing.contains("schema_file"))
      schema = crime::CsvSchema::from_json_file(
          ing.at("schema_file").get<std::string>());
    crime::Projection projection;
    if (ing.contains("projection")) {
      projection.lat0 = ing.at("projection").value("lat0", 0.0);
      projection.lon0 = ing.at("projection").value("lon0", 0.0);
    }
    crime::BlockGrid blocks;
    if (ing.contains("blocks")) {
      const json& b = ing.at("blocks");
      blocks.origin_x = b.value("origin_x", blocks.origin_x);
      blocks.origin_y = b.value("origin_y", blocks.origin_y);
      blocks.block_width = b.value("block_width", blocks.block_width);
      blocks.block_height = b.value("block_height", blocks.block_height);
      blocks.nx = b.value("nx", blocks.nx);
      blocks.ny = b.value("ny", blocks.ny);
    }
    const crime::WindowFilter window =
        ing.contains("window") ? parse_window_filter(ing.at("window"))
                               : crime::WindowFilter{};
    std::vector<std::string> majors = crime::default_major_list();
    if (ing.contains("major_offenses"))
      majors = ing.at("major_offenses").get<std::vector<std::string>>();

    const auto parsed =
        crime::parse_csv(ing.at("input_csv").get<std::string>(), schema);
    const auto filtered = crime::filter_window(parsed.events, window);
    events = crime::canonicalize(filtered, projection, blocks, majors).events;
  }

  std::filesystem::create_directories(out_dir);
  crime::write_canonical_csv(out_dir / "canonical.csv", events);
}

void cmd_train_predictor(const json& cfg, std::uint64_t seed,
                         const std::filesystem::path& out_dir) {
  const predictor::PredictorConfig pcfg =
      parse_predictor_config(section(cfg, "predictor"));
  const json& data = section(cfg, "data");
  const int replay_year = get_or(data, "replay_year", 2016);
  const crime::WindowFilter window =
      data.contains("window") ? parse_window_filter(data.at("window"))
                              : crime::WindowFilter{};

  const auto events = load_folded_events(data, replay_year);
  const auto buckets = crime::friday_buckets(replay_year, replay_year);
  const nn::Tensor counts =
      crime::block_counts(events, pcfg.block_count, buckets, window);
  const auto set = predictor::make_training_set(counts, pcfg.window_len);
  const auto result = predictor::train_predictor(set, pcfg, seed);

  std::filesystem::create_directories(out_dir);
  result.model.save(out_dir / "predictor.ckpt");
  predictor::write_training_log(out_dir / "predictor_log.csv",
                                result.epoch_losses);
}

void cmd_train_policy(const json& cfg, std::uint64_t seed,
                      const std::filesystem::path& out_dir) {
  const env::EnvConfig ecfg = parse_env_config(section(cfg, "env"));
  const ppo::PpoConfig pcfg = parse_ppo_config(section(cfg, "ppo"));
  const auto events =
      load_folded_events(section(cfg, "data"), ecfg.replay_year);
  env::CrimeEnv env(ecfg, events, load_predictor(cfg));
  CrimeRolloutEnv adapter(env);

  const auto result = ppo::train(adapter, pcfg, seed);

  std::filesystem::create_directories(out_dir);
  result.policy.save(out_dir / "policy.ckpt");
  ppo::write_learning_curve(out_dir / "learning_curve.csv", result.curve);
}

namespace {

struct SweepSetup {
  env::EnvConfig ecfg;
  std::vector<crime::CrimeEvent> events;
  std::shared_ptr<predictor::PredictorModel> model;
  std::vector<double> ranges{80, 160, 320, 640, 1280};
  std::size_t trials = 10;
};

SweepSetup prepare_sweep(const json& cfg, std::size_t trials_flag) {
  SweepSetup s;
  s.ecfg = parse_env_config(section(cfg, "env"));
  s.events = load_folded_events(section(cfg, "data"), s.ecfg.replay_year);
  s.model = load_predictor(cfg);
  if (cfg.contains("sweep")) {
    const json& sw = cfg.at("sweep");
    if (sw.contains("ranges"))
      s.ranges = sw.at("ranges").get<std::vector<double>>();
    s.trials = get_or(sw, "trials", s.trials);
  }
  if (trials_flag > 0) s.trials = trials_flag;
  if (s.ranges.empty()) throw ConfigError("sweep ranges must be non-empty");
  for (double r : s.ranges)
    if (r <= 0.0) throw ConfigError("sweep ranges must be positive");
  return s;
}

std::function<env::CrimeEnv(double)> env_factory(const SweepSetup& s) {
  return [&s](double range) {
    env::EnvConfig c = s.ecfg;
    c.world.deterrence_range_m = range;
    return env::CrimeEnv(c, s.events, s.model);
  };
}

}  // namespace

void cmd_eval_sweep(const json& cfg, std::uint64_t seed,
                    const std::filesystem::path& out_dir,
                    std::size_t trials) {
  const SweepSetup s = prepare_sweep(cfg, trials);
  if (!cfg.contains("policy_checkpoint"))
    throw ConfigError("config is missing \"policy_checkpoint\"");
  ppo::PolicyNetwork policy = ppo::PolicyNetwork::load(
      cfg.at("policy_checkpoint").get<std::string>());

  const auto rows =
      run_policy_sweep(env_factory(s), policy, s.ranges, s.trials, seed);
  std::filesystem::create_directories(out_dir);
  write_sweep_rows(out_dir / "sweep.csv", rows);
  emit_plotdata(out_dir / "sweep.csv", out_dir / "sweep_plot.csv");
}

void cmd_baseline(const json& cfg, std::uint64_t seed,
                  const std::filesystem::path& out_dir, std::size_t trials) {
  const SweepSetup s = prepare_sweep(cfg, trials);
  const auto rows =
      run_random_baseline(env_factory(s), s.ranges, s.trials, seed);
  std::filesystem::create_directories(out_dir);
  write_sweep_rows(out_dir / "baseline.csv", rows);
  emit_plotdata(out_dir / "baseline.csv", out_dir / "baseline_plot.csv");
}

void cmd_di_train(const json& cfg, std::uint64_t seed,
                  const std::filesystem::path& out_dir) {
  const json& di_cfg = section(cfg, "di");
  const std::size_t train_size = get_or(di_cfg, "train_size", std::size_t{800});
  const std::size_t test_size = get_or(di_cfg, "test_size", std::size_t{200});
  const double noise = get_or(di_cfg, "noise", 0.25);
  const di::DiTrainConfig pretrain_cfg = parse_di_train_config(
      di_cfg.contains("pretrain") ? di_cfg.at("pretrain") : json::object());
  di::DiTrainConfig tune_cfg = parse_di_train_config(
      di_cfg.contains("fine_tune") ? di_cfg.at("fine_tune") : json::object());
  std::vector<double> rates{0.1, 0.3, 0.5};
  if (di_cfg.contains("fine_tune") &&
      di_cfg.at("fine_tune").contains("rates"))
    rates = di_cfg.at("fine_tune").at("rates").get<std::vector<double>>();
  for (double r : rates)
    if (r < 0.0 || r >= 1.0)
      throw ConfigError("fine-tune rates must be in [0, 1)");
  if (train_size < 1 || test_size < 1)
    throw ConfigError("di dataset sizes must be >= 1");

  Rng root(seed);
  const di::Dataset train = di::make_pattern_dataset(
      train_size, root.substream("di-data-train").next_u64(), noise);
  di::Dataset test = di::make_pattern_dataset(
      test_size, root.substream("di-data-test").next_u64(), noise);

  Rng init_rng = root.substream("di-init");
  di::DiModel conventional = di::build_desknet(0.0, init_rng);
  di::train_desknet(conventional, train, pretrain_cfg,
                    root.substream("di-pretrain").next_u64());
  auto tuned = di::fine_tune_with_dropout(
      conventional, rates, train, tune_cfg,
      root.substream("di-finetune").next_u64());

  std::filesystem::create_directories(out_dir);
  conventional.save(out_dir / "desknet_conventional.ckpt");
  for (std::size_t i = 0; i < rates.size(); ++i)
    tuned[i].save(out_dir /
                  ("desknet_r" + format_g(rates[i]) + ".ckpt"));

  const std::filesystem::path acc_path = out_dir / "di_accuracy.csv";
  const std::filesystem::path tmp = acc_path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << "model_tag,clean_accuracy\n";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "conventional,%.12g\n",
                  di::accuracy(conventional, test));
    out << buf;
    for (std::size_t i = 0; i < rates.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "r%s,%.12g\n",
                    format_g(rates[i]).c_str(),
                    di::accuracy(tuned[i], test));
      out << buf;
    }
  }
  std::filesystem::rename(tmp, acc_path);
}

void cmd_di_sweep(const json& cfg, std::uint64_t seed,
                  const std::filesystem::path& out_dir) {
  const json& sw = section(cfg, "di_sweep");
  if (!sw.contains("models") || sw.at("models").empty())
    throw ConfigError("di_sweep needs a non-empty \"models\" list");

  std::vector<std::pair<std::string, std::string>> model_specs;
  for (const json& m : sw.at("models"))
    model_specs.emplace_back(m.at("tag").get<std::string>(),
                             m.at("checkpoint").get<std::string>());

  std::vector<di::SplitPlan> plans;
  if (sw.contains("plans")) {
    for (const json& p : sw.at("plans"))
      plans.push_back({p.at(0).get<std::size_t>(),
                       p.at(1).get<std::size_t>()});
  } else {
    plans = {{1, 3}, {1, 4}};
  }

  std::vector<double> p_values =
      sw.contains("p_values")
          ? sw.at("p_values").get<std::vector<double>>()
          : std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8};
  const double fixed_p = get_or(sw, "fixed_p", 0.5);
  const std::size_t seed_count = get_or(sw, "seeds", std::size_t{10});
  const std::size_t test_size = get_or(sw, "test_size", std::size_t{200});
  const double noise = get_or(sw, "noise", 0.25);
  for (double p : p_values)
    if (p < 0.0 || p > 1.0)
      throw ConfigError("di_sweep p values must be in [0, 1]");
  if (seed_count < 1) throw ConfigError("di_sweep needs at least one seed");

  // Both Fig.-style slices: vary the first link at fixed second, and vice
  // versa.
  std::vector<di::SweepCell> cells;
  for (double p : p_values) cells.push_back({p, fixed_p});
  for (double p : p_values) cells.push_back({fixed_p, p});

  Rng root(seed);
  Rng link_seeds = root.substream("loss-links");
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < seed_count; ++i)
    seeds.push_back(link_seeds.next_u64());

  const di::Dataset test = di::make_pattern_dataset(
      test_size, root.substream("di-data-test").next_u64(), noise);

  std::vector<di::DiModel> models;
  std::vector<std::pair<std::string, di::DiModel*>> tagged;
  models.reserve(model_specs.size());
  for (const auto& [tag, path] : model_specs)
    models.push_back(di::DiModel::load(path));
  for (std::size_t i = 0; i < models.size(); ++i)
    tagged.emplace_back(model_specs[i].first, &models[i]);

  const auto rows = di::sweep_eval(tagged, plans, cells, seeds, test);
  std::filesystem::create_directories(out_dir);
  di::write_sweep_csv(out_dir / "di_sweep.csv", rows);
}

void cmd_env_stdio(const json& cfg, std::istream& in, std::ostream& out) {
  const env::EnvConfig ecfg = parse_env_config(section(cfg, "env"));
  const auto events =
      load_folded_events(section(cfg, "data"), ecfg.replay_year);
  env::CrimeEnv env(ecfg, events, load_predictor(cfg));
  env::run_env_protocol(in, out, env);
}

}  // namespace uavsim::cli
