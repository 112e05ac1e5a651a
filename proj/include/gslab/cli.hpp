#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gslab/attack.hpp"
#include "gslab/fl.hpp"
#include "gslab/report.hpp"

namespace gslab {

struct DatasetSpec {
  enum class Source { kSynthetic, kIdx, kCsv };
  Source source = Source::kSynthetic;

  // synthetic
  int classes = 10;
  int train_per_class = 100;
  int test_per_class = 20;
  int side = 8;

  // file-backed
  std::string images_path;
  std::string labels_path;
  std::string csv_path;
  double test_fraction = 0.2;
};

struct AttackSpec {
  AttackConfig config;
  enum class Method { kPixel, kLatent };
  Method method = Method::kPixel;
  int images = 10;
  int generator_latent = 8;
  int generator_steps = 800;
};

struct DefendEvalSpec {
  std::vector<std::string> defenses = {"censor"};
  std::vector<std::string> attacks = {"neg_cosine"};
  int images = 3;
};

struct BenchSpec {
  int repetitions = 30;
  std::vector<int> trial_counts = {20, 40};
  int batch_size = 8;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  FLConfig fl;  // defense included; fl.seed / fl.workers are the run-wide values
  AttackSpec attack;
  DefendEvalSpec defend_eval;
  BenchSpec bench;
  std::string out_dir = "out";
};

// Strict parse: every key must be known (unknown ones raise ConfigError with
// the offending path), every value type- and range-checked.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

struct SplitDataset {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
};

SplitDataset build_dataset(const DatasetSpec& spec, std::uint64_t seed);

// train: full federated run, curves and record under out_dir.
RunRecord cmd_train(const ExperimentConfig& config);

// attack: per-image gradient inversion against the configured defense at the
// round-0 model; metrics CSV, record, and PGM pairs under out_dir.
std::vector<AttackReportRow> cmd_attack(const ExperimentConfig& config);

struct DefendEvalCell {
  std::string defense;
  std::string attack;
  MetricsBundle mean_metrics;
  double mean_distance = 0.0;
};

// defend-eval: defenses x attacks matrix (always includes the no-defense
// baseline row), one mean MetricsBundle per cell, written as matrix.csv.
std::vector<DefendEvalCell> cmd_defend_eval(const ExperimentConfig& config);

struct BenchRow {
  int trials = 0;  // 0 = the none-vs-none control row
  double plain_median_ms = 0.0;
  double defended_median_ms = 0.0;
  double overhead_pct = 0.0;
  std::vector<double> plain_ms;
  std::vector<double> defended_ms;
};

// bench: per-local-update wall time with and without the defense;
// overhead_pct = (defended - plain) / plain * 100.
std::vector<BenchRow> cmd_bench(const ExperimentConfig& config);

}  // namespace gslab
