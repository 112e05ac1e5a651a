// Acceptance gate. Each criterion prints exactly one PASS/FAIL line; the
// process exits nonzero if any criterion fails. Tolerances and bounds are
// pinned here as constants next to the value of the oracle run that fixed
// them, so a regression shows up as a failed line rather than a silently
// loosened check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gslab/attack.hpp"
#include "gslab/cli.hpp"
#include "gslab/dataset.hpp"
#include "gslab/defense.hpp"
#include "gslab/fl.hpp"
#include "gslab/metrics.hpp"
#include "gslab/model.hpp"
#include "gslab/report.hpp"
#include "gslab/rng.hpp"
#include "gslab/tape.hpp"
#include "gslab/update.hpp"

#include "json.hpp"

namespace {

using namespace gslab;
using clk = std::chrono::steady_clock;

constexpr double kOrthoTol = 1e-6;        // normalized |<defended_l, g0_l>|
constexpr double kNormRelTol = 1e-9;      // per-layer norm ratio vs 1
constexpr double kSecondOrderRelTol = 1e-4;
constexpr double kLabelLeakMax = 0.30;    // chance band for C=10
// Oracle run at seed 0 (2000 iterations, 4 restarts, step 0.1, tv 3e-4)
// reconstructs at MSE 1.105e-3; the committed bound leaves slack for
// platform-level FP differences without admitting a broken attack.
constexpr double kBaselineMseBound = 2e-3;
constexpr double kDefendedMseFactor = 10.0;
constexpr double kDefendedSsimMax = 0.2;
constexpr double kAccuracyGapMax = 0.05;
constexpr double kConvergenceFloor = 0.5;  // parity is vacuous if neither run learns

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

double elapsed_s(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

struct RandomCase {
  Model model;
  Batch batch;
};

// Random small MLP plus a batch drawn from matching synthetic data.
RandomCase random_case(const RngKey& key) {
  Rng meta(key.child(0));
  const int side = 4 + static_cast<int>(meta.uniform_int(3));
  const int classes = 2 + static_cast<int>(meta.uniform_int(9));
  const int hidden = 8 << meta.uniform_int(3);
  const int batch_size = 1 + static_cast<int>(meta.uniform_int(6));

  auto data = synth_dataset(classes, 3, side, key.child(1).state);
  std::vector<LabeledExample> picked;
  for (int b = 0; b < batch_size; ++b)
    picked.push_back(data[meta.uniform_int(data.size())]);

  RandomCase c;
  c.model = build_mlp(side * side, {hidden}, classes, key.child(2).state);
  c.batch = make_batch(picked);
  return c;
}

GradientUpdate mean_grad(const Model& model, const Batch& batch) {
  GradientUpdate g = loss_and_grad(model, batch).grad;
  scale_inplace(g, 1.0 / batch.size());
  return g;
}

struct LayerStats {
  double max_cos = 0.0;
  double max_norm_rel = 0.0;
  int degenerate = 0;
};

void accumulate_layer_stats(const GradientUpdate& defended, const GradientUpdate& original,
                            LayerStats& s) {
  for (std::size_t l = 0; l < original.entries.size(); ++l) {
    const auto& d = defended.entries[l].second.values();
    const auto& o = original.entries[l].second.values();
    double dot = 0.0, nd = 0.0, no = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
      dot += d[i] * o[i];
      nd += d[i] * d[i];
      no += o[i] * o[i];
    }
    nd = std::sqrt(nd);
    no = std::sqrt(no);
    if (no == 0.0 || nd == 0.0) {
      ++s.degenerate;
      continue;
    }
    s.max_cos = std::max(s.max_cos, std::abs(dot) / (nd * no));
    s.max_norm_rel = std::max(s.max_norm_rel, std::abs(nd / no - 1.0));
  }
}

// Criteria 1 and 2 share the same 100 sampled cases.
LayerStats g_layer_stats;
int g_layer_cases = 0;
int g_layer_fallbacks = 0;
double g_layer_seconds = 0.0;
bool g_layer_ran = false;

void run_layer_suite() {
  if (g_layer_ran) return;
  const RngKey root = RngKey::root(101);
  CensorConfig cfg;
  cfg.trials = 8;
  const auto t0 = clk::now();
  for (int i = 0; i < 100; ++i) {
    RandomCase c = random_case(root.child(i));
    GradientUpdate g0 = mean_grad(c.model, c.batch);
    CensorResult res = censor_local_update(c.model, c.batch, cfg, root.child(i).child(3));
    ++g_layer_cases;
    if (res.fallback) {
      ++g_layer_fallbacks;
      continue;
    }
    accumulate_layer_stats(res.update, g0, g_layer_stats);
  }
  g_layer_seconds = elapsed_s(t0);
  g_layer_ran = true;
}

Outcome c1_orthogonality() {
  run_layer_suite();
  const int informative = g_layer_cases - g_layer_fallbacks;
  const bool pass = g_layer_stats.max_cos < kOrthoTol && g_layer_seconds < 10.0 &&
                    informative >= 50;
  return {pass, fmt("%d cases (%d fallback), max normalized |cos| %.3g vs %.0e, %.1fs < 10s",
                    g_layer_cases, g_layer_fallbacks, g_layer_stats.max_cos, kOrthoTol,
                    g_layer_seconds)};
}

Outcome c2_norm_preservation() {
  run_layer_suite();
  const bool pass = g_layer_stats.max_norm_rel < kNormRelTol;
  return {pass, fmt("same cases, max |norm ratio - 1| %.3g vs %.0e (%d degenerate layers)",
                    g_layer_stats.max_norm_rel, kNormRelTol, g_layer_stats.degenerate)};
}

Outcome c3_selection_soundness() {
  const RngKey root = RngKey::root(303);
  CensorConfig cfg;
  cfg.trials = 8;
  int fallbacks = 0;
  double worst_gap = -1e300;  // max of loss_after - loss_before over improved cases
  for (int i = 0; i < 100; ++i) {
    RandomCase c = random_case(root.child(i));
    GradientUpdate g0 = mean_grad(c.model, c.batch);
    CensorResult res = censor_local_update(c.model, c.batch, cfg, root.child(i).child(3));
    if (res.fallback) {
      if (!res.update.bitwise_equal(g0))
        return {false, fmt("case %d: fallback result is not the original gradient", i)};
      ++fallbacks;
      continue;
    }
    const double before = evaluate_loss(c.model, c.batch);
    Model stepped = c.model;
    apply_update(stepped, res.update, cfg.learning_rate);
    const double after = evaluate_loss(stepped, c.batch);
    worst_gap = std::max(worst_gap, after - before);
    if (after > before)
      return {false, fmt("case %d: selected update raised loss %.17g -> %.17g", i, before,
                         after)};
  }
  return {true, fmt("100 cases (%d fallback, returned original bitwise), worst gap %.3g <= 0",
                    fallbacks, worst_gap)};
}

Outcome c4_second_order() {
  const RngKey root = RngKey::root(404);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const RngKey key = root.child(i);
    Rng meta(key.child(0));
    const int side = 4 + static_cast<int>(meta.uniform_int(2));
    const int dim = side * side;
    const int classes = 2 + static_cast<int>(meta.uniform_int(4));
    Model model = build_mlp(dim, {4 + static_cast<int>(meta.uniform_int(5))}, classes,
                            key.child(1).state);

    auto data = synth_dataset(classes, 1, side, key.child(2).state);
    std::vector<LabeledExample> one{data[meta.uniform_int(data.size())]};
    Batch batch = make_batch(one);
    GradientUpdate target = mean_grad(model, batch);

    Rng xr(key.child(3));
    Tensor x = Tensor::zeros({dim});
    for (int p = 0; p < dim; ++p) x.at(p) = xr.uniform();
    const int y = one[0].label;
    const auto distance = i % 2 == 0 ? AttackConfig::Distance::kNegCosine
                                     : AttackConfig::Distance::kL2;
    const double tv = i % 3 == 0 ? 1e-2 : 0.0;

    Tensor exact = gradient_matching_grad(model, x, y, target, distance, tv);
    Tensor fd = ad::finite_diff_gradient(
        [&](const Tensor& xx) {
          return gradient_matching_loss(model, xx, y, target, distance, tv);
        },
        x);
    double diff = 0.0, ref = 0.0;
    for (int p = 0; p < dim; ++p) {
      diff += (exact.at(p) - fd.at(p)) * (exact.at(p) - fd.at(p));
      ref += fd.at(p) * fd.at(p);
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12));
  }
  return {worst < kSecondOrderRelTol,
          fmt("20 cases, worst relative error %.3g vs %.0e", worst, kSecondOrderRelTol)};
}

Outcome c5_label_inference() {
  const RngKey root = RngKey::root(505);
  CensorConfig cfg;
  cfg.trials = 20;
  int open_correct = 0;
  int censored_correct = 0;
  for (int i = 0; i < 200; ++i) {
    const RngKey key = root.child(i);
    auto data = synth_dataset(10, 1, 8, key.child(0).state);
    Model model = build_mlp(64, {32}, 10, key.child(1).state);
    std::vector<LabeledExample> one{data[static_cast<std::size_t>(i) % data.size()]};
    Batch batch = make_batch(one);

    GradientUpdate g0 = mean_grad(model, batch);
    if (infer_label(g0, model) == one[0].label) ++open_correct;
    GradientUpdate defended = censor_local_update(model, batch, cfg, key.child(2)).update;
    if (infer_label(defended, model) == one[0].label) ++censored_correct;
  }
  const double leak = censored_correct / 200.0;
  const bool pass = open_correct == 200 && leak <= kLabelLeakMax;
  return {pass, fmt("undefended %d/200 exact, censored %d/200 (%.1f%% <= %.0f%%)",
                    open_correct, censored_correct, 100.0 * leak, 100.0 * kLabelLeakMax)};
}

// Shared setup for criteria 6-8: one 8x8 victim image against a 2-layer MLP,
// matching the committed oracle run at seed 0.
struct AttackBed {
  Model model;
  Batch batch;
  LabeledExample example;
  GradientUpdate raw;
  AttackConfig config;
  RngKey root = RngKey::root(0);
};

AttackBed attack_bed() {
  AttackBed bed;
  auto data = synth_dataset(10, 4, 8, bed.root.child(1).state);
  bed.example = data[0];
  std::vector<LabeledExample> one{bed.example};
  bed.batch = make_batch(one);
  bed.model = build_mlp(64, {64}, 10, bed.root.child(2).state);
  bed.raw = mean_grad(bed.model, bed.batch);
  bed.config.iterations = 2000;
  bed.config.restarts = 4;
  bed.config.step_size = 0.1;
  bed.config.distance = AttackConfig::Distance::kNegCosine;
  bed.config.tv_weight = 3e-4;
  return bed;
}

Outcome c6_attack_baseline() {
  const auto t0 = clk::now();
  AttackBed bed = attack_bed();
  InversionResult res = invert_gradient(bed.model, bed.raw, bed.config, bed.root.child(3));
  const double seconds = elapsed_s(t0);
  const double m = mse(res.reconstruction, bed.example.image);
  const bool pass = m < kBaselineMseBound && seconds < 120.0;
  return {pass, fmt("undefended reconstruction MSE %.3g < %.0e, %.1fs < 120s", m,
                    kBaselineMseBound, seconds)};
}

Outcome c7_defense_efficacy() {
  AttackBed bed = attack_bed();
  CensorConfig cfg;
  cfg.trials = 20;
  GradientUpdate defended =
      censor_local_update(bed.model, bed.batch, cfg, bed.root.child(4)).update;
  InversionResult res = invert_gradient(bed.model, defended, bed.config, bed.root.child(5));
  const double m = mse(res.reconstruction, bed.example.image);
  const double s = ssim(res.reconstruction, bed.example.image);
  const double floor = kDefendedMseFactor * kBaselineMseBound;
  const bool pass = m >= floor && s < kDefendedSsimMax;
  return {pass, fmt("censored (T=20) MSE %.3g >= %.3g, SSIM %.3g < %.1f", m, floor, s,
                    kDefendedSsimMax)};
}

Outcome c8_eot_robustness() {
  AttackBed bed = attack_bed();
  CensorConfig cfg;
  cfg.trials = 20;
  // Strict privacy: a single fallback inside the 100 samples would hand the
  // mean a component along the raw gradient and void the closure property.
  cfg.fallback = CensorConfig::Fallback::kStrictPrivacy;
  GradientUpdate eot = eot_estimate(
      [&](int s) {
        return censor_local_update(bed.model, bed.batch, cfg, bed.root.child(6).child(s))
            .update;
      },
      100);

  LayerStats stats;
  accumulate_layer_stats(eot, bed.raw, stats);
  InversionResult res = invert_gradient(bed.model, eot, bed.config, bed.root.child(7));
  const double m = mse(res.reconstruction, bed.example.image);
  const double floor = kDefendedMseFactor * kBaselineMseBound;
  const bool pass = m >= floor && stats.max_cos < kOrthoTol;
  return {pass, fmt("100-sample mean: MSE %.3g >= %.3g, max layer |cos| %.3g < %.0e", m,
                    floor, stats.max_cos, kOrthoTol)};
}

Outcome c9_convergence(const std::filesystem::path& out_dir) {
  const auto t0 = clk::now();
  auto train = synth_dataset(10, 300, 8, RngKey::root(0).child(1).state);
  auto test = synth_dataset(10, 60, 8, RngKey::root(0).child(2).state);

  FLConfig cfg;
  cfg.num_clients = 100;
  cfg.clients_per_round = 10;
  cfg.rounds = 200;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 64;
  cfg.dirichlet_alpha = 0.5;
  cfg.hidden_dims = {64};
  cfg.seed = 0;

  RunRecord none = run_training(cfg, train, test);
  cfg.defense.kind = DefenseConfig::Kind::kCensor;
  cfg.defense.censor.trials = 20;
  RunRecord censored = run_training(cfg, train, test);
  const double seconds = elapsed_s(t0);

  report_emit(none, (out_dir / "convergence_none").string());
  report_emit(censored, (out_dir / "convergence_censor").string());

  const double gap = std::abs(censored.final_accuracy - none.final_accuracy);
  const bool pass = gap <= kAccuracyGapMax && none.final_accuracy >= kConvergenceFloor &&
                    censored.final_accuracy >= kConvergenceFloor && seconds < 600.0;
  return {pass,
          fmt("none %.3f vs censor %.3f, gap %.3f <= %.2f, curves in %s, %.0fs < 600s",
              none.final_accuracy, censored.final_accuracy, gap, kAccuracyGapMax,
              out_dir.string().c_str(), seconds)};
}

GradientUpdate single_layer(const std::string& name, std::vector<double> v) {
  GradientUpdate g;
  Tensor t = Tensor::zeros({static_cast<int>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i) t.at(static_cast<std::int64_t>(i)) = v[i];
  g.entries.emplace_back(name, t);
  return g;
}

bool values_equal(const GradientUpdate& g, const std::vector<double>& want) {
  const auto& have = g.entries[0].second.values();
  return std::equal(have.begin(), have.end(), want.begin(), want.end());
}

Outcome c10_baseline_defenses() {
  // Clipping, pinned cases.
  GradientUpdate g34 = single_layer("fc0.weight", {3.0, 4.0});
  if (!clip_defense(g34, 5.0).bitwise_equal(g34)) return {false, "clip (3,4) b=5 changed"};
  GradientUpdate g68 = single_layer("fc0.weight", {6.0, 8.0});
  if (!values_equal(clip_defense(g68, 5.0), {3.0, 4.0}))
    return {false, "clip (6,8) b=5 != (3,4)"};
  if (!clip_defense(g68, 1e18).bitwise_equal(g68)) return {false, "clip huge bound changed"};
  GradientUpdate two;
  two.entries = {g34.entries[0], g68.entries[0]};
  two.entries[1].first = "fc1.weight";
  GradientUpdate clipped = clip_defense(two, 5.0);
  if (!values_equal(single_layer("x", {clipped.entries[0].second.at(0),
                                       clipped.entries[0].second.at(1)}),
                    {3.0, 4.0}) ||
      clipped.entries[1].second.at(0) != 3.0 || clipped.entries[1].second.at(1) != 4.0)
    return {false, "clip is not per-layer"};

  // Top-k, pinned cases.
  GradientUpdate g3 = single_layer("fc0.weight", {0.5, -2.0, 1.0});
  if (!values_equal(topk_defense(g3, 1.0 / 3.0), {0.0, -2.0, 0.0}))
    return {false, "topk (0.5,-2,1) k=1 != (0,-2,0)"};
  if (!topk_defense(g3, 1.0).bitwise_equal(g3)) return {false, "topk keep_ratio=1 changed"};
  GradientUpdate ties = single_layer("fc0.weight", {1.0, -1.0, 1.0});
  if (!values_equal(topk_defense(ties, 2.0 / 3.0), {1.0, -1.0, 0.0}))
    return {false, "topk tie-break is not lowest-flat-index"};

  // Noise, statistical at n=1e5.
  const int n = 100000;
  const double sigma = 0.1;
  std::vector<double> zeros(n, 0.0);
  GradientUpdate gz = single_layer("fc0.weight", zeros);
  Rng rng(RngKey::root(1010));
  GradientUpdate noised = noise_defense(gz, sigma, rng);
  double mean = 0.0;
  for (double v : noised.entries[0].second.values()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : noised.entries[0].second.values()) var += (v - mean) * (v - mean);
  var /= n - 1;
  const double mean_bound = 3.0 * sigma / std::sqrt(static_cast<double>(n));
  if (std::abs(mean) >= mean_bound)
    return {false, fmt("noise mean %.3g exceeds %.3g", mean, mean_bound)};
  if (std::abs(var - sigma * sigma) >= 0.05 * sigma * sigma)
    return {false, fmt("noise variance %.4g off sigma^2=%.4g by >5%%", var, sigma * sigma)};

  return {true, fmt("clip and top-k pinned cases bitwise; noise n=1e5 mean %.2g, var %.5g",
                    mean, var)};
}

Outcome c11_bench_overhead(const std::filesystem::path& out_dir) {
  ExperimentConfig cfg;
  cfg.dataset.classes = 4;
  cfg.dataset.train_per_class = 30;
  cfg.dataset.test_per_class = 5;
  cfg.dataset.side = 6;
  cfg.fl.hidden_dims = {32};
  cfg.fl.seed = 0;
  cfg.bench.repetitions = 30;
  cfg.bench.trial_counts = {20, 40};
  cfg.bench.batch_size = 8;
  cfg.out_dir = (out_dir / "bench").string();

  std::vector<BenchRow> rows = cmd_bench(cfg);
  if (rows.size() != 3 || rows[1].trials != 20 || rows[2].trials != 40)
    return {false, "bench rows missing"};
  for (const BenchRow& r : rows) {
    const double want =
        (r.defended_median_ms - r.plain_median_ms) / r.plain_median_ms * 100.0;
    if (r.overhead_pct != want) return {false, "overhead formula mismatch"};
    if (static_cast<int>(r.plain_ms.size()) != cfg.bench.repetitions)
      return {false, "bench repetitions not recorded"};
  }
  const bool ordered = rows[2].defended_median_ms >= rows[1].defended_median_ms;
  return {ordered, fmt("medians over 30 reps: T=20 %.3fms, T=40 %.3fms (order %s), "
                       "overhead +%.0f%% / +%.0f%%",
                       rows[1].defended_median_ms, rows[2].defended_median_ms,
                       ordered ? "ok" : "VIOLATED", rows[1].overhead_pct,
                       rows[2].overhead_pct)};
}

// Wall-clock timings and the worker-count knob are execution details, not
// results; everything else must match bitwise.
nlohmann::json record_json_stable(const RunRecord& r) {
  nlohmann::json j = nlohmann::json::parse(run_record_to_json(r));
  for (auto& round : j.at("rounds")) round["elapsed_ms"] = 0.0;
  j.at("config")["workers"] = 0;
  return j;
}

Outcome c12_reproducibility(const std::filesystem::path& out_dir) {
  ExperimentConfig cfg;
  cfg.dataset.classes = 4;
  cfg.dataset.train_per_class = 30;
  cfg.dataset.test_per_class = 8;
  cfg.dataset.side = 6;
  cfg.fl.num_clients = 10;
  cfg.fl.clients_per_round = 3;
  cfg.fl.rounds = 6;
  cfg.fl.learning_rate = 0.2;
  cfg.fl.batch_size = 8;
  cfg.fl.hidden_dims = {16};
  cfg.fl.seed = 12;
  cfg.fl.defense.kind = DefenseConfig::Kind::kCensor;
  cfg.fl.defense.censor.trials = 5;
  cfg.fl.victim_client = 0;
  cfg.fl.victim_rounds = {0, 3};

  cfg.fl.workers = 1;
  cfg.out_dir = (out_dir / "repro_w1").string();
  nlohmann::json w1 = record_json_stable(cmd_train(cfg));
  cfg.out_dir = (out_dir / "repro_w1_again").string();
  nlohmann::json w1b = record_json_stable(cmd_train(cfg));
  cfg.fl.workers = 8;
  cfg.out_dir = (out_dir / "repro_w8").string();
  nlohmann::json w8 = record_json_stable(cmd_train(cfg));

  if (w1 != w1b) return {false, "same config+seed, workers=1: records differ"};
  if (w1 != w8) return {false, "workers=1 vs workers=8: records differ"};
  return {true, "train re-run and workers 1 vs 8: records bit-identical (wall clock aside)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out_dir = argc > 1 ? argv[1] : "acceptance_out";
  std::filesystem::create_directories(out_dir);

  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"orthogonality", c1_orthogonality},
      {"norm preservation", c2_norm_preservation},
      {"selection soundness", c3_selection_soundness},
      {"second-order gradients", c4_second_order},
      {"label inference", c5_label_inference},
      {"attack baseline", c6_attack_baseline},
      {"defense efficacy", c7_defense_efficacy},
      {"EOT robustness", c8_eot_robustness},
      {"convergence parity", [&] { return c9_convergence(out_dir); }},
      {"baseline defenses", c10_baseline_defenses},
      {"bench overhead", [&] { return c11_bench_overhead(out_dir); }},
      {"reproducibility", [&] { return c12_reproducibility(out_dir); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%2zu/12] %s %-24s %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  if (failed > 0) std::printf("%d of 12 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
