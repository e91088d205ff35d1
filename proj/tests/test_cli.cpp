#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "uavsim/cli/experiments.hpp"

using namespace uavsim;
using namespace uavsim::cli;
using nlohmann::json;
using nn::Tensor;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

json tiny_synth_cfg() {
  return json{{"ingest",
               {{"synthetic",
                 {{"year", 2016},
                  {"blocks_nx", 4},
                  {"blocks_ny", 3},
                  {"block_width", 400.0},
                  {"block_height", 400.0},
                  {"events_per_week", 12.0},
                  {"major_fraction", 0.5}}}}}};
}

json tiny_env_cfg() {
  return json{{"world",
               {{"placement_radius_m", 600.0},
                {"grid_spacing_m", 200.0},
                {"comm_range_m", 600.0},
                {"sensing_range_m", 200.0},
                {"deterrence_range_m", 160.0},
                {"uav_total", 3},
                {"block_count", 12}}},
              {"replay_year", 2016},
              {"episode_cycles", 6}};
}

}  // namespace

TEST_CASE("config parsers reject bad values") {
  CHECK_THROWS_AS(parse_world_config({{"uav_total", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_window_filter({{"weekday", 9}}), ConfigError);
  CHECK_THROWS_AS(parse_predictor_config({{"epochs", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_ppo_config({{"clip_epsilon", 0.0}}), ConfigError);
  CHECK_THROWS_AS(parse_di_train_config({{"learning_rate", -1.0}}),
                  ConfigError);
  CHECK_THROWS_AS(parse_synth_config({{"major_fraction", 2.0}}), ConfigError);
  CHECK_THROWS_AS(
      parse_synth_config({{"block_weights", {1.0, 2.0}}}), ConfigError);
  CHECK_NOTHROW(parse_ppo_config(json::object()));
}

TEST_CASE("synthetic events are deterministic, windowed, and block-consistent") {
  SynthCrimeConfig cfg = parse_synth_config(json::object());
  const auto a = generate_synthetic_events(cfg, 7);
  const auto b = generate_synthetic_events(cfg, 7);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() > 500);  // ~52 weeks * 30 events
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].timestamp == b[i].timestamp);
    CHECK(a[i].x_m == b[i].x_m);
  }
  for (const auto& e : a) {
    const crime::CivilTime t = crime::to_civil(e.timestamp);
    CHECK(t.year == 2016);
    CHECK(t.weekday == 5);
    CHECK(t.minute_of_day >= cfg.window_start_minute);
    CHECK(t.minute_of_day < cfg.window_end_minute);
    CHECK(e.block_id == cfg.blocks.block_id(e.x_m, e.y_m));
  }
  const auto c = generate_synthetic_events(cfg, 8);
  CHECK(a.size() != c.size());
}

TEST_CASE("zero-weight blocks receive no events") {
  json j = {{"block_weights",
             std::vector<double>{1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}}};
  const SynthCrimeConfig cfg = parse_synth_config(j);
  for (const auto& e : generate_synthetic_events(cfg, 3))
    CHECK(e.block_id == 0);
}

TEST_CASE("sweep summary matches the arithmetic oracle") {
  std::vector<SweepTrialRow> rows;
  double sum = 0.0;
  for (std::size_t t = 0; t < 10; ++t) {
    const double ratio = 0.1 * static_cast<double>(t);
    rows.push_back({320.0, t, t, 10, ratio});
    sum += ratio;
  }
  rows.push_back({640.0, 0, 5, 10, 0.5});
  const auto plot = summarize_sweep(rows);
  REQUIRE(plot.size() == 2);
  CHECK(plot[0].range_m == 320.0);
  CHECK(plot[0].mean_ratio == doctest::Approx(sum / 10.0));
  CHECK(plot[0].n == 10);
  CHECK(plot[0].stderr_ratio > 0.0);
  // single point: stderr is zero
  CHECK(plot[1].stderr_ratio == 0.0);
  CHECK(plot[1].n == 1);
}

TEST_CASE("plot data round-trips through the CSV files") {
  const auto dir = temp_dir("uavsim_plot");
  std::vector<SweepTrialRow> rows{{80, 0, 2, 10, 0.2}, {80, 1, 4, 10, 0.4}};
  write_sweep_rows(dir / "sweep.csv", rows);
  const auto plot = emit_plotdata(dir / "sweep.csv", dir / "plot.csv");
  REQUIRE(plot.size() == 1);
  CHECK(plot[0].mean_ratio == doctest::Approx(0.3));

  const std::string text = slurp(dir / "plot.csv");
  CHECK(text.rfind("range_m,mean_ratio,stderr,n\n", 0) == 0);

  std::ofstream bad(dir / "bad.csv");
  bad << "range_m,trial,deterred,potential,ratio\nnot,a,valid,row,x\n";
  bad.close();
  CHECK_THROWS_AS(emit_plotdata(dir / "bad.csv", dir / "plot2.csv"),
                  DataError);
  std::ofstream wrong(dir / "wrong.csv");
  wrong << "something,else\n";
  wrong.close();
  CHECK_THROWS_AS(emit_plotdata(dir / "wrong.csv", dir / "plot3.csv"),
                  DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("rollout adapter maps interleaved heads to env actions") {
  const auto action = CrimeRolloutEnv::to_env_action({4, 1, 2, 0}, 2);
  REQUIRE(action.size() == 2);
  CHECK(action[0].cell_index == 4);
  CHECK(action[0].role == world::Role::Computing);
  CHECK(action[1].cell_index == 2);
  CHECK(action[1].role == world::Role::Sensing);
  CHECK_THROWS_AS(CrimeRolloutEnv::to_env_action({1, 2, 3}, 2), DataError);
}

namespace {

std::shared_ptr<predictor::PredictorModel> tiny_predictor() {
  predictor::PredictorConfig c;
  c.block_count = 12;
  c.hidden_units = 4;
  c.window_len = 2;
  Rng rng(0);
  return std::make_shared<predictor::PredictorModel>(c, rng);
}

std::function<env::CrimeEnv(double)> tiny_env_factory(
    const std::vector<crime::CrimeEvent>& events) {
  return [&events](double range) {
    env::EnvConfig c = parse_env_config(tiny_env_cfg());
    c.world.deterrence_range_m = range;
    return env::CrimeEnv(c, events, tiny_predictor());
  };
}

}  // namespace

TEST_CASE("random baseline: ratios, limits, and monotonicity") {
  SynthCrimeConfig synth = parse_synth_config(json::object());
  synth.blocks.block_width = 300.0;
  synth.blocks.block_height = 300.0;
  synth.blocks.origin_x = -600.0;
  synth.blocks.origin_y = -450.0;
  const auto events = generate_synthetic_events(synth, 5);
  auto factory = tiny_env_factory(events);

  const std::vector<double> ranges{100, 300, 1e7};
  const auto rows = run_random_baseline(factory, ranges, 4, 9);
  REQUIRE(rows.size() == 12);
  // unbounded range covers everything
  for (const auto& r : rows)
    if (r.range_m == 1e7) CHECK(r.ratio == 1.0);
  // per trial, deterred counts are non-decreasing in range
  for (std::size_t trial = 0; trial < 4; ++trial) {
    std::vector<std::size_t> counts;
    for (const auto& r : rows)
      if (r.trial == trial) counts.push_back(r.deterred);
    REQUIRE(counts.size() == 3);
    CHECK(counts[0] <= counts[1]);
    CHECK(counts[1] <= counts[2]);
  }

  // no majors -> all ratios zero
  SynthCrimeConfig no_majors = synth;
  no_majors.major_fraction = 0.0;
  const auto quiet = generate_synthetic_events(no_majors, 5);
  auto quiet_factory = tiny_env_factory(quiet);
  for (const auto& r : run_random_baseline(quiet_factory, {100, 300}, 2, 9))
    CHECK(r.ratio == 0.0);
}

TEST_CASE("single random UAV coverage matches the grid-fraction oracle") {
  // One UAV, one major at the station every cycle: the per-cycle hit
  // probability is exactly the fraction of grid cells within range.
  env::EnvConfig ecfg = parse_env_config(tiny_env_cfg());
  ecfg.world.uav_total = 1;
  ecfg.episode_cycles = 0;
  const double range = 250.0;

  std::vector<crime::CrimeEvent> events;
  const auto fridays = crime::friday_buckets(2016, 2016);
  for (const auto friday : fridays) {
    const auto day = crime::to_civil(friday);
    crime::CrimeEvent e;
    e.timestamp = crime::from_civil(day.year, day.month, day.day, 20 * 60);
    e.x_m = 0.0;
    e.y_m = 0.0;
    e.block_id = 5;
    e.severity = crime::Severity::Major;
    events.push_back(e);
  }

  auto factory = [&](double r) {
    env::EnvConfig c = ecfg;
    c.world.deterrence_range_m = r;
    return env::CrimeEnv(c, events, tiny_predictor());
  };
  const std::size_t trials = 40;
  const auto rows = run_random_baseline(factory, {range}, trials, 31);

  const auto grid = world::build_grid(ecfg.world);
  std::size_t covered = 0;
  for (const auto& cell : grid)
    if (std::hypot(cell.x, cell.y) <= range) ++covered;
  const double p = static_cast<double>(covered) /
                   static_cast<double>(grid.size());

  double mean = 0.0;
  for (const auto& r : rows) mean += r.ratio;
  mean /= static_cast<double>(rows.size());
  const std::size_t cycles = events.size();
  const double sigma =
      std::sqrt(p * (1.0 - p) /
                static_cast<double>(cycles * trials));
  CHECK(std::abs(mean - p) < 3.0 * sigma);
}

TEST_CASE("policy sweep is deterministic and range-monotone") {
  SynthCrimeConfig synth = parse_synth_config(json::object());
  synth.blocks.block_width = 300.0;
  synth.blocks.block_height = 300.0;
  synth.blocks.origin_x = -600.0;
  synth.blocks.origin_y = -450.0;
  const auto events = generate_synthetic_events(synth, 11);
  auto factory = tiny_env_factory(events);

  env::CrimeEnv probe = factory(100.0);
  ppo::PpoConfig pcfg;
  pcfg.hidden_units = 8;
  CrimeRolloutEnv adapter(probe);
  Rng init(3);
  ppo::PolicyNetwork policy(adapter.obs_dim(), adapter.head_sizes(), pcfg,
                            init);

  const std::vector<double> ranges{100, 400};
  const auto a = run_policy_sweep(factory, policy, ranges, 3, 17);
  const auto b = run_policy_sweep(factory, policy, ranges, 3, 17);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].deterred == b[i].deterred);
    CHECK(a[i].ratio == b[i].ratio);
  }
  for (std::size_t trial = 0; trial < 3; ++trial) {
    std::size_t small = 0, large = 0;
    for (const auto& r : a) {
      if (r.trial != trial) continue;
      if (r.range_m == 100) small = r.deterred;
      if (r.range_m == 400) large = r.deterred;
    }
    CHECK(small <= large);
  }
}

TEST_CASE("end-to-end pipeline through the subcommand drivers") {
  const auto dir = temp_dir("uavsim_e2e");

  // ingest (synthetic) twice -> byte-identical canonical file
  json ingest_cfg = tiny_synth_cfg();
  cmd_ingest(ingest_cfg, 42, dir / "data");
  const std::string canon1 = slurp(dir / "data" / "canonical.csv");
  cmd_ingest(ingest_cfg, 42, dir / "data2");
  CHECK(canon1 == slurp(dir / "data2" / "canonical.csv"));
  CHECK(canon1.rfind("iso_datetime,x_m,y_m,block_id,severity\n", 0) == 0);

  const std::string canonical = (dir / "data" / "canonical.csv").string();

  // predictor training
  json pred_cfg = {
      {"predictor",
       {{"block_count", 12}, {"hidden_units", 6}, {"window_len", 2},
        {"epochs", 3}, {"batch_size", 16}}},
      {"data", {{"canonical_csv", canonical}, {"replay_year", 2016}}}};
  cmd_train_predictor(pred_cfg, 1, dir / "pred");
  CHECK(std::filesystem::exists(dir / "pred" / "predictor.ckpt"));
  const std::string log1 = slurp(dir / "pred" / "predictor_log.csv");
  cmd_train_predictor(pred_cfg, 1, dir / "pred2");
  CHECK(log1 == slurp(dir / "pred2" / "predictor_log.csv"));

  // policy training (tiny budget)
  json policy_cfg = {
      {"env", tiny_env_cfg()},
      {"data", {{"canonical_csv", canonical}}},
      {"predictor_checkpoint", (dir / "pred" / "predictor.ckpt").string()},
      {"ppo",
       {{"hidden_units", 8}, {"horizon", 12}, {"minibatch_size", 12},
        {"epochs_per_update", 1}, {"total_steps", 36},
        {"plateau_window", 0}}}};
  cmd_train_policy(policy_cfg, 2, dir / "pol");
  CHECK(std::filesystem::exists(dir / "pol" / "policy.ckpt"));
  const std::string curve1 = slurp(dir / "pol" / "learning_curve.csv");
  cmd_train_policy(policy_cfg, 2, dir / "pol2");
  CHECK(curve1 == slurp(dir / "pol2" / "learning_curve.csv"));

  // evaluation sweep + baseline
  json sweep_cfg = policy_cfg;
  sweep_cfg["policy_checkpoint"] = (dir / "pol" / "policy.ckpt").string();
  sweep_cfg["sweep"] = {{"ranges", {100.0, 400.0}}, {"trials", 2}};
  cmd_eval_sweep(sweep_cfg, 3, dir / "sweep", 0);
  CHECK(std::filesystem::exists(dir / "sweep" / "sweep.csv"));
  CHECK(std::filesystem::exists(dir / "sweep" / "sweep_plot.csv"));
  const std::string sweep1 = slurp(dir / "sweep" / "sweep.csv");
  cmd_eval_sweep(sweep_cfg, 3, dir / "sweep2", 0);
  CHECK(sweep1 == slurp(dir / "sweep2" / "sweep.csv"));

  cmd_baseline(sweep_cfg, 3, dir / "base", 2);
  const std::string base1 = slurp(dir / "base" / "baseline.csv");
  cmd_baseline(sweep_cfg, 3, dir / "base2", 2);
  CHECK(base1 == slurp(dir / "base2" / "baseline.csv"));

  // config errors leave no artifacts
  json broken = sweep_cfg;
  broken.erase("policy_checkpoint");
  CHECK_THROWS_AS(cmd_eval_sweep(broken, 3, dir / "none", 0), ConfigError);
  CHECK_FALSE(std::filesystem::exists(dir / "none"));

  std::filesystem::remove_all(dir);
}

TEST_CASE("di training and sweep drivers produce deterministic CSVs") {
  const auto dir = temp_dir("uavsim_di");
  json train_cfg = {
      {"di",
       {{"train_size", 120}, {"test_size", 60},
        {"pretrain", {{"epochs", 2}}},
        {"fine_tune", {{"rates", {0.3}}, {"epochs", 1}}}}}};
  cmd_di_train(train_cfg, 6, dir / "a");
  CHECK(std::filesystem::exists(dir / "a" / "desknet_conventional.ckpt"));
  CHECK(std::filesystem::exists(dir / "a" / "desknet_r0.3.ckpt"));
  const std::string acc1 = slurp(dir / "a" / "di_accuracy.csv");
  cmd_di_train(train_cfg, 6, dir / "b");
  CHECK(acc1 == slurp(dir / "b" / "di_accuracy.csv"));

  json sweep_cfg = {
      {"di_sweep",
       {{"models",
         {{{"tag", "conventional"},
           {"checkpoint", (dir / "a" / "desknet_conventional.ckpt").string()}},
          {{"tag", "r0.3"},
           {"checkpoint", (dir / "a" / "desknet_r0.3.ckpt").string()}}}},
        {"plans", {{1, 3}}},
        {"p_values", {0.0, 0.5}},
        {"seeds", 2},
        {"test_size", 40}}}};
  cmd_di_sweep(sweep_cfg, 7, dir / "s1");
  const std::string sweep1 = slurp(dir / "s1" / "di_sweep.csv");
  cmd_di_sweep(sweep_cfg, 7, dir / "s2");
  CHECK(sweep1 == slurp(dir / "s2" / "di_sweep.csv"));
  CHECK(sweep1.rfind("model_tag,cut_a,cut_b,p12,p23,seed,accuracy\n", 0) == 0);
  // 2 models * 1 plan * (2+2 cells) * 2 seeds = 16 rows + header
  CHECK(std::count(sweep1.begin(), sweep1.end(), '\n') == 17);
  std::filesystem::remove_all(dir);
}

TEST_CASE("env-stdio driver speaks the JSON protocol") {
  const auto dir = temp_dir("uavsim_stdio");
  cmd_ingest(tiny_synth_cfg(), 42, dir / "data");
  json pred_cfg = {
      {"predictor",
       {{"block_count", 12}, {"hidden_units", 4}, {"window_len", 2},
        {"epochs", 1}, {"batch_size", 16}}},
      {"data",
       {{"canonical_csv", (dir / "data" / "canonical.csv").string()},
        {"replay_year", 2016}}}};
  cmd_train_predictor(pred_cfg, 1, dir / "pred");

  json cfg = {
      {"env", tiny_env_cfg()},
      {"data", {{"canonical_csv", (dir / "data" / "canonical.csv").string()}}},
      {"predictor_checkpoint", (dir / "pred" / "predictor.ckpt").string()}};
  std::istringstream in(
      "{\"cmd\":\"reset\",\"seed\":1}\n{\"cmd\":\"quit\"}\n");
  std::ostringstream out;
  cmd_env_stdio(cfg, in, out);
  std::istringstream lines(out.str());
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(json::parse(line).at("observation").size() == 12);
  std::filesystem::remove_all(dir);
}
