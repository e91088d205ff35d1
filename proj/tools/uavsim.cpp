#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "uavsim/cli/experiments.hpp"

namespace {

using namespace uavsim;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  std::size_t trials = 0;  // 0 = config value / default
};

// CI override: UAVSIM_CONFIG, UAVSIM_SEED, UAVSIM_OUT, UAVSIM_TRIALS take
// effect when the corresponding flag is not given.
void apply_env_overrides(CommonArgs& args, const CLI::App& sub) {
  const auto from_env = [&](const char* name, auto& target) {
    if (const char* v = std::getenv(name)) {
      std::istringstream stream(v);
      stream >> target;
    }
  };
  const auto unset = [&](const std::string& flag) {
    const CLI::Option* opt = sub.get_option_no_throw(flag);
    return opt != nullptr && opt->count() == 0;
  };
  if (unset("--config")) from_env("UAVSIM_CONFIG", args.config_path);
  if (unset("--seed")) from_env("UAVSIM_SEED", args.seed);
  if (unset("--out")) from_env("UAVSIM_OUT", args.out_dir);
  if (unset("--trials")) from_env("UAVSIM_TRIALS", args.trials);
}

CLI::App* add_subcommand(CLI::App& app, CommonArgs& args,
                         const std::string& name, const std::string& desc,
                         bool with_trials = false) {
  CLI::App* sub = app.add_subcommand(name, desc);
  sub->add_option("--config", args.config_path, "JSON config file");
  sub->add_option("--seed", args.seed, "global RNG seed");
  sub->add_option("--out", args.out_dir, "output directory");
  if (with_trials)
    sub->add_option("--trials", args.trials, "trials per sweep point");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "uavsim: multi-UAV crime-deterrence placement training and "
      "packet-loss-resilient distributed inference experiments"};
  app.require_subcommand(1);
  CommonArgs args;

  auto* ingest = add_subcommand(app, args, "ingest",
                                "build the canonical crime event file");
  auto* train_predictor = add_subcommand(
      app, args, "train-predictor", "train the per-block crime forecaster");
  auto* train_policy = add_subcommand(
      app, args, "train-policy", "train the UAV placement and role policy");
  auto* eval_sweep = add_subcommand(
      app, args, "eval-sweep",
      "evaluate a trained policy across deterrence ranges", true);
  auto* baseline = add_subcommand(
      app, args, "baseline",
      "random all-deterrence placement baseline sweep", true);
  auto* di_train = add_subcommand(
      app, args, "di-train",
      "train the classifier and its dropout fine-tuned variants");
  auto* di_sweep = add_subcommand(
      app, args, "di-sweep",
      "accuracy sweep of split inference over packet loss rates");
  auto* env_stdio = add_subcommand(
      app, args, "env-stdio",
      "serve the environment over newline-delimited JSON on stdio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? uavsim::kExitOk : uavsim::kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  apply_env_overrides(args, *active);

  try {
    if (args.config_path.empty())
      throw ConfigError("no config file given (--config or UAVSIM_CONFIG)");
    const nlohmann::json cfg = cli::load_config(args.config_path);

    if (active == ingest) {
      cli::cmd_ingest(cfg, args.seed, args.out_dir);
    } else if (active == train_predictor) {
      cli::cmd_train_predictor(cfg, args.seed, args.out_dir);
    } else if (active == train_policy) {
      cli::cmd_train_policy(cfg, args.seed, args.out_dir);
    } else if (active == eval_sweep) {
      cli::cmd_eval_sweep(cfg, args.seed, args.out_dir, args.trials);
    } else if (active == baseline) {
      cli::cmd_baseline(cfg, args.seed, args.out_dir, args.trials);
    } else if (active == di_train) {
      cli::cmd_di_train(cfg, args.seed, args.out_dir);
    } else if (active == di_sweep) {
      cli::cmd_di_sweep(cfg, args.seed, args.out_dir);
    } else if (active == env_stdio) {
      cli::cmd_env_stdio(cfg, std::cin, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return uavsim::kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return uavsim::kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return uavsim::kExitData;
  }
  return uavsim::kExitOk;
}
