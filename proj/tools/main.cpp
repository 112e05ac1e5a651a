#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gslab/cli.hpp"
#include "gslab/errors.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON experiment config")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "root seed (overrides config and GSL_SEED)");
  cmd->add_option("--workers", flags.workers, "worker threads, 0 = hardware default");
  cmd->add_option("--out", flags.out_dir, "output directory");
}

std::optional<std::uint64_t> env_u64(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(v, &end, 10);
  if (end == nullptr || *end != '\0')
    throw gslab::ConfigError(std::string("not a number: '") + v + "'", name);
  return parsed;
}

// Precedence: command-line flag, then environment, then config file.
gslab::ExperimentConfig resolve(const CommonFlags& flags) {
  gslab::ExperimentConfig config = flags.config_path.empty()
                                       ? gslab::ExperimentConfig{}
                                       : gslab::load_experiment_config(flags.config_path);
  if (auto s = env_u64("GSL_SEED")) config.fl.seed = *s;
  if (auto w = env_u64("GSL_WORKERS")) config.fl.workers = static_cast<int>(*w);
  if (flags.seed) config.fl.seed = *flags.seed;
  if (flags.workers) config.fl.workers = *flags.workers;
  if (flags.out_dir) config.out_dir = *flags.out_dir;
  if (config.fl.workers < 0) throw gslab::ConfigError("must be >= 0", "workers");
  return config;
}

int run_train(const CommonFlags& flags) {
  gslab::ExperimentConfig config = resolve(flags);
  gslab::RunRecord record = gslab::cmd_train(config);
  std::printf("train: %d rounds, final accuracy %.4f, final loss %.6f\n",
              static_cast<int>(record.rounds.size()), record.final_accuracy,
              record.final_loss);
  std::printf("train: wrote %s/record.json\n", config.out_dir.c_str());
  return 0;
}

int run_attack(const CommonFlags& flags) {
  gslab::ExperimentConfig config = resolve(flags);
  auto rows = gslab::cmd_attack(config);
  double mse = 0.0, ssim = 0.0;
  int label_hits = 0;
  for (const auto& r : rows) {
    mse += r.metrics.mse;
    ssim += r.metrics.ssim;
    if (r.label_inferred == r.label_true) ++label_hits;
  }
  const double n = static_cast<double>(rows.size());
  std::printf("attack: %d images, mean mse %.6g, mean ssim %.4f, labels %d/%d\n",
              static_cast<int>(rows.size()), mse / n, ssim / n, label_hits,
              static_cast<int>(rows.size()));
  std::printf("attack: wrote %s/attack.csv\n", config.out_dir.c_str());
  return 0;
}

int run_defend_eval(const CommonFlags& flags) {
  gslab::ExperimentConfig config = resolve(flags);
  auto cells = gslab::cmd_defend_eval(config);
  for (const auto& c : cells)
    std::printf("defend-eval: %-8s x %-10s mse %.6g ssim %.4f distance %.6g\n",
                c.defense.c_str(), c.attack.c_str(), c.mean_metrics.mse, c.mean_metrics.ssim,
                c.mean_distance);
  std::printf("defend-eval: wrote %s/matrix.csv\n", config.out_dir.c_str());
  return 0;
}

int run_bench(const CommonFlags& flags) {
  gslab::ExperimentConfig config = resolve(flags);
  auto rows = gslab::cmd_bench(config);
  for (const auto& r : rows)
    std::printf("bench: trials %-4d plain %.3f ms, defended %.3f ms, overhead %+.1f%%\n",
                r.trials, r.plain_median_ms, r.defended_median_ms, r.overhead_pct);
  std::printf("bench: wrote %s/bench.csv\n", config.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient privacy laboratory"};
  app.require_subcommand(1);

  CommonFlags flags;
  CLI::App* train = app.add_subcommand("train", "federated training run");
  CLI::App* attack = app.add_subcommand("attack", "gradient inversion against one client");
  CLI::App* defend_eval =
      app.add_subcommand("defend-eval", "defense x attack reconstruction matrix");
  CLI::App* bench = app.add_subcommand("bench", "defense overhead timings");
  for (CLI::App* cmd : {train, attack, defend_eval, bench}) add_common(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return run_train(flags);
    if (attack->parsed()) return run_attack(flags);
    if (defend_eval->parsed()) return run_defend_eval(flags);
    return run_bench(flags);
  } catch (const gslab::ConfigError& e) {
    std::fprintf(stderr, "gslab: config error: %s\n", e.what());
    return 2;
  } catch (const gslab::ParseError& e) {
    std::fprintf(stderr, "gslab: parse error: %s\n", e.what());
    return 2;
  } catch (const gslab::Error& e) {
    std::fprintf(stderr, "gslab: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gslab: unexpected error: %s\n", e.what());
    return 3;
  }
}
