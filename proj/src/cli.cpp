#include "gslab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numeric>

#include "json.hpp"

#include "gslab/errors.hpp"
#include "gslab/metrics.hpp"

namespace gslab {

namespace {

using nlohmann::json;

constexpr std::uint64_t kDataTrainSalt = 0x64617431ULL;  // "dat1"
constexpr std::uint64_t kDataTestSalt = 0x64617432ULL;   // "dat2"
constexpr std::uint64_t kDefKeySalt = 0x61746bULL;       // "atk"
constexpr std::uint64_t kInvKeySalt = 0x696e76ULL;       // "inv"
constexpr std::uint64_t kGenSalt = 0x67656eULL;          // "gen"
constexpr std::uint64_t kMatrixSalt = 0x6d7478ULL;       // "mtx"
constexpr std::uint64_t kBenchSalt = 0x626e63ULL;        // "bnc"

std::uint64_t name_salt(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("expected an object", path.empty() ? "<root>" : path);
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown key", join_path(path, item.key()));
  }
}

int get_int(const json& j, const std::string& path, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError("expected an integer", join_path(path, key));
  return v.get<int>();
}

std::uint64_t get_u64(const json& j, const std::string& path, const char* key,
                      std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)))
    throw ConfigError("expected a non-negative integer", join_path(path, key));
  return v.get<std::uint64_t>();
}

double get_double(const json& j, const std::string& path, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError("expected a number", join_path(path, key));
  return v.get<double>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError("expected a boolean", join_path(path, key));
  return v.get<bool>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError("expected a string", join_path(path, key));
  return v.get<std::string>();
}

std::vector<int> get_int_list(const json& j, const std::string& path, const char* key,
                              std::vector<int> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError("expected an array of integers", join_path(path, key));
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer())
      throw ConfigError("expected an array of integers", join_path(path, key));
    out.push_back(e.get<int>());
  }
  return out;
}

std::vector<std::string> get_string_list(const json& j, const std::string& path,
                                         const char* key, std::vector<std::string> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError("expected an array of strings", join_path(path, key));
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string())
      throw ConfigError("expected an array of strings", join_path(path, key));
    out.push_back(e.get<std::string>());
  }
  return out;
}

DatasetSpec parse_dataset(const json& j) {
  DatasetSpec d;
  check_keys(j, "dataset",
             {"source", "classes", "train_per_class", "test_per_class", "side", "images_path",
              "labels_path", "csv_path", "test_fraction"});
  const std::string src = get_string(j, "dataset", "source", "synthetic");
  if (src == "synthetic")
    d.source = DatasetSpec::Source::kSynthetic;
  else if (src == "idx")
    d.source = DatasetSpec::Source::kIdx;
  else if (src == "csv")
    d.source = DatasetSpec::Source::kCsv;
  else
    throw ConfigError("must be one of synthetic|idx|csv", "dataset.source");
  d.classes = get_int(j, "dataset", "classes", d.classes);
  d.train_per_class = get_int(j, "dataset", "train_per_class", d.train_per_class);
  d.test_per_class = get_int(j, "dataset", "test_per_class", d.test_per_class);
  d.side = get_int(j, "dataset", "side", d.side);
  d.images_path = get_string(j, "dataset", "images_path", d.images_path);
  d.labels_path = get_string(j, "dataset", "labels_path", d.labels_path);
  d.csv_path = get_string(j, "dataset", "csv_path", d.csv_path);
  d.test_fraction = get_double(j, "dataset", "test_fraction", d.test_fraction);

  if (d.source == DatasetSpec::Source::kSynthetic) {
    if (d.classes < 2) throw ConfigError("needs at least 2 classes", "dataset.classes");
    if (d.train_per_class < 1) throw ConfigError("must be positive", "dataset.train_per_class");
    if (d.test_per_class < 1) throw ConfigError("must be positive", "dataset.test_per_class");
    if (d.side < 2) throw ConfigError("must be at least 2", "dataset.side");
  }
  if (d.source == DatasetSpec::Source::kIdx && d.images_path.empty())
    throw ConfigError("required for idx sources", "dataset.images_path");
  if (d.source == DatasetSpec::Source::kCsv && d.csv_path.empty())
    throw ConfigError("required for csv sources", "dataset.csv_path");
  if (d.test_fraction <= 0.0 || d.test_fraction >= 1.0)
    throw ConfigError("must be in (0, 1)", "dataset.test_fraction");
  return d;
}

DefenseConfig parse_defense(const json& j) {
  DefenseConfig d;
  check_keys(j, "defense",
             {"kind", "trials", "temperature", "perturbation_scale", "fallback", "source",
              "learning_rate", "loss_reference", "decoy_count", "noise_sigma", "clip_bound",
              "topk_ratio", "topk_per_layer", "soteria_ratio", "soteria_layer"});
  const std::string kind = get_string(j, "defense", "kind", "none");
  if (kind == "none")
    d.kind = DefenseConfig::Kind::kNone;
  else if (kind == "censor")
    d.kind = DefenseConfig::Kind::kCensor;
  else if (kind == "noise")
    d.kind = DefenseConfig::Kind::kNoise;
  else if (kind == "clip")
    d.kind = DefenseConfig::Kind::kClip;
  else if (kind == "topk")
    d.kind = DefenseConfig::Kind::kTopK;
  else if (kind == "soteria")
    d.kind = DefenseConfig::Kind::kSoteria;
  else
    throw ConfigError("must be one of none|censor|noise|clip|topk|soteria", "defense.kind");

  d.censor.trials = get_int(j, "defense", "trials", d.censor.trials);
  d.censor.temperature = get_double(j, "defense", "temperature", d.censor.temperature);
  d.censor.perturbation_scale =
      get_double(j, "defense", "perturbation_scale", d.censor.perturbation_scale);
  const std::string fb = get_string(j, "defense", "fallback", "prefer_original");
  if (fb == "prefer_original")
    d.censor.fallback = CensorConfig::Fallback::kPaperFaithful;
  else if (fb == "strict_privacy")
    d.censor.fallback = CensorConfig::Fallback::kStrictPrivacy;
  else
    throw ConfigError("must be prefer_original|strict_privacy", "defense.fallback");
  const std::string src = get_string(j, "defense", "source", "gaussian");
  if (src == "gaussian")
    d.censor.source = CensorConfig::Source::kGaussian;
  else if (src == "decoy")
    d.censor.source = CensorConfig::Source::kDecoy;
  else
    throw ConfigError("must be gaussian|decoy", "defense.source");
  d.censor.learning_rate = get_double(j, "defense", "learning_rate", d.censor.learning_rate);
  const std::string lr = get_string(j, "defense", "loss_reference", "current_model");
  if (lr == "current_model")
    d.censor.loss_reference = CensorConfig::LossReference::kCurrentModel;
  else if (lr == "original_applied")
    d.censor.loss_reference = CensorConfig::LossReference::kOriginalApplied;
  else
    throw ConfigError("must be current_model|original_applied", "defense.loss_reference");

  d.decoy_count = get_int(j, "defense", "decoy_count", d.decoy_count);
  if (d.decoy_count < 1) throw ConfigError("must be positive", "defense.decoy_count");
  d.noise_sigma = get_double(j, "defense", "noise_sigma", d.noise_sigma);
  d.clip_bound = get_double(j, "defense", "clip_bound", d.clip_bound);
  d.topk_ratio = get_double(j, "defense", "topk_ratio", d.topk_ratio);
  d.topk_per_layer = get_bool(j, "defense", "topk_per_layer", d.topk_per_layer);
  d.soteria_ratio = get_double(j, "defense", "soteria_ratio", d.soteria_ratio);
  d.soteria_layer = get_string(j, "defense", "soteria_layer", d.soteria_layer);
  return d;
}

AttackSpec parse_attack(const json& j) {
  AttackSpec a;
  check_keys(j, "attack",
             {"method", "images", "iterations", "step_size", "distance", "restarts",
              "infer_label", "eot_samples", "tv_weight", "signed_gradients", "latent_reg",
              "generator_latent", "generator_steps"});
  const std::string method = get_string(j, "attack", "method", "pixel");
  if (method == "pixel")
    a.method = AttackSpec::Method::kPixel;
  else if (method == "latent")
    a.method = AttackSpec::Method::kLatent;
  else
    throw ConfigError("must be pixel|latent", "attack.method");
  a.images = get_int(j, "attack", "images", a.images);
  if (a.images < 1) throw ConfigError("must be positive", "attack.images");
  a.config.iterations = get_int(j, "attack", "iterations", a.config.iterations);
  a.config.step_size = get_double(j, "attack", "step_size", a.config.step_size);
  const std::string dist = get_string(j, "attack", "distance", "neg_cosine");
  if (dist == "neg_cosine")
    a.config.distance = AttackConfig::Distance::kNegCosine;
  else if (dist == "l2")
    a.config.distance = AttackConfig::Distance::kL2;
  else
    throw ConfigError("must be neg_cosine|l2", "attack.distance");
  a.config.restarts = get_int(j, "attack", "restarts", a.config.restarts);
  a.config.infer_label = get_bool(j, "attack", "infer_label", a.config.infer_label);
  a.config.eot_samples = get_int(j, "attack", "eot_samples", a.config.eot_samples);
  a.config.tv_weight = get_double(j, "attack", "tv_weight", a.config.tv_weight);
  a.config.signed_gradients =
      get_bool(j, "attack", "signed_gradients", a.config.signed_gradients);
  a.config.latent_reg = get_double(j, "attack", "latent_reg", a.config.latent_reg);
  a.generator_latent = get_int(j, "attack", "generator_latent", a.generator_latent);
  a.generator_steps = get_int(j, "attack", "generator_steps", a.generator_steps);
  return a;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "<root>");
  }
  check_keys(j, "",
             {"dataset", "fl", "defense", "attack", "defend_eval", "bench", "out_dir", "seed",
              "workers"});

  ExperimentConfig c;
  try {
    if (j.contains("dataset")) c.dataset = parse_dataset(j.at("dataset"));
    if (j.contains("fl")) {
      const json& f = j.at("fl");
      check_keys(f, "fl",
                 {"num_clients", "clients_per_round", "rounds", "learning_rate", "batch_size",
                  "dirichlet_alpha", "hidden_dims", "victim_client", "victim_rounds"});
      c.fl.num_clients = get_int(f, "fl", "num_clients", c.fl.num_clients);
      c.fl.clients_per_round = get_int(f, "fl", "clients_per_round", c.fl.clients_per_round);
      c.fl.rounds = get_int(f, "fl", "rounds", c.fl.rounds);
      c.fl.learning_rate = get_double(f, "fl", "learning_rate", c.fl.learning_rate);
      c.fl.batch_size = get_int(f, "fl", "batch_size", c.fl.batch_size);
      c.fl.dirichlet_alpha = get_double(f, "fl", "dirichlet_alpha", c.fl.dirichlet_alpha);
      c.fl.hidden_dims = get_int_list(f, "fl", "hidden_dims", c.fl.hidden_dims);
      c.fl.victim_client = get_int(f, "fl", "victim_client", c.fl.victim_client);
      c.fl.victim_rounds = get_int_list(f, "fl", "victim_rounds", c.fl.victim_rounds);
    }
    if (j.contains("defense")) c.fl.defense = parse_defense(j.at("defense"));
    if (j.contains("attack")) c.attack = parse_attack(j.at("attack"));
    if (j.contains("defend_eval")) {
      const json& d = j.at("defend_eval");
      check_keys(d, "defend_eval", {"defenses", "attacks", "images"});
      c.defend_eval.defenses =
          get_string_list(d, "defend_eval", "defenses", c.defend_eval.defenses);
      c.defend_eval.attacks = get_string_list(d, "defend_eval", "attacks", c.defend_eval.attacks);
      c.defend_eval.images = get_int(d, "defend_eval", "images", c.defend_eval.images);
      if (c.defend_eval.images < 1) throw ConfigError("must be positive", "defend_eval.images");
    }
    if (j.contains("bench")) {
      const json& b = j.at("bench");
      check_keys(b, "bench", {"repetitions", "trial_counts", "batch_size"});
      c.bench.repetitions = get_int(b, "bench", "repetitions", c.bench.repetitions);
      c.bench.trial_counts = get_int_list(b, "bench", "trial_counts", c.bench.trial_counts);
      c.bench.batch_size = get_int(b, "bench", "batch_size", c.bench.batch_size);
      if (c.bench.repetitions < 1) throw ConfigError("must be positive", "bench.repetitions");
      for (int t : c.bench.trial_counts)
        if (t < 1) throw ConfigError("entries must be positive", "bench.trial_counts");
      if (c.bench.batch_size < 1) throw ConfigError("must be positive", "bench.batch_size");
    }
    c.out_dir = get_string(j, "", "out_dir", c.out_dir);
    c.fl.seed = get_u64(j, "", "seed", c.fl.seed);
    c.fl.workers = get_int(j, "", "workers", c.fl.workers);
    if (c.fl.workers < 0) throw ConfigError("must be >= 0", "workers");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid value: ") + e.what(), "<root>");
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file '" + path + "'", "--config");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

SplitDataset build_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  const RngKey root = RngKey::root(seed);
  SplitDataset out;
  if (spec.source == DatasetSpec::Source::kSynthetic) {
    out.train = synth_dataset(spec.classes, spec.train_per_class, spec.side,
                              root.child(kDataTrainSalt).state);
    out.test = synth_dataset(spec.classes, spec.test_per_class, spec.side,
                             root.child(kDataTestSalt).state);
    return out;
  }

  std::vector<LabeledExample> all =
      spec.source == DatasetSpec::Source::kIdx
          ? (spec.labels_path.empty() ? load_idx(spec.images_path)
                                      : load_idx(spec.images_path, spec.labels_path))
          : load_csv(spec.csv_path);
  if (all.size() < 2)
    throw ContractError("dataset: need at least 2 examples to split, got " +
                        std::to_string(all.size()));

  std::vector<int> idx(all.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(root.child(kDataTrainSalt));
  rng.shuffle(idx);
  std::size_t n_test = static_cast<std::size_t>(
      std::lround(spec.test_fraction * static_cast<double>(all.size())));
  n_test = std::max<std::size_t>(1, std::min(n_test, all.size() - 1));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto& dst = i < idx.size() - n_test ? out.train : out.test;
    dst.push_back(all[static_cast<std::size_t>(idx[i])]);
  }
  return out;
}

namespace {

// Decoy-source CENSOR needs a sampling pool; the config file cannot carry
// images, so the pool is the head of the training split.
void fill_decoys(DefenseConfig& defense, const std::vector<LabeledExample>& train) {
  if (defense.kind != DefenseConfig::Kind::kCensor) return;
  if (defense.censor.source != CensorConfig::Source::kDecoy) return;
  if (!defense.censor.decoy_examples.empty()) return;
  const int n = std::min<int>(defense.decoy_count, static_cast<int>(train.size()));
  defense.censor.decoy_examples.assign(train.begin(), train.begin() + n);
}

Model initial_model(const ExperimentConfig& config, const SplitDataset& data) {
  return initial_fl_model(config.fl, data.train, data.test);
}

GradientUpdate observe_gradient(const Model& model, const Batch& batch,
                                const DefenseConfig& defense, const AttackConfig& attack_cfg,
                                const RngKey& defense_key) {
  GradientUpdate raw = loss_and_grad(model, batch).grad;
  scale_inplace(raw, 1.0 / batch.size());
  if (attack_cfg.eot_samples > 0) {
    return eot_estimate(
        [&](int s) {
          return defend_update(model, batch, raw, defense,
                               defense_key.child(static_cast<std::uint64_t>(s)));
        },
        attack_cfg.eot_samples);
  }
  return defend_update(model, batch, raw, defense, defense_key);
}

AttackReportRow attack_one(const Model& model, const LabeledExample& ex, int index,
                           const DefenseConfig& defense, const AttackConfig& attack_cfg,
                           AttackSpec::Method method, const Generator* gen,
                           const RngKey& defense_key, const RngKey& attack_key,
                           Tensor* recon_out) {
  std::vector<LabeledExample> one{ex};
  Batch batch = make_batch(one);
  GradientUpdate observed = observe_gradient(model, batch, defense, attack_cfg, defense_key);

  InversionResult res = method == AttackSpec::Method::kLatent
                            ? latent_invert(model, observed, *gen, attack_cfg, attack_key)
                            : invert_gradient(model, observed, attack_cfg, attack_key);

  AttackReportRow row;
  row.image_index = index;
  row.label_true = ex.label;
  row.label_inferred = res.inferred_label;
  row.metrics = compute_metrics(res.reconstruction, ex.image);
  row.final_distance = res.final_distance;
  if (recon_out != nullptr) *recon_out = res.reconstruction;
  return row;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

RunRecord cmd_train(const ExperimentConfig& config) {
  SplitDataset data = build_dataset(config.dataset, config.fl.seed);
  FLConfig fl = config.fl;
  fill_decoys(fl.defense, data.train);
  RunRecord record = run_training(fl, data.train, data.test);
  report_emit(record, config.out_dir);
  return record;
}

std::vector<AttackReportRow> cmd_attack(const ExperimentConfig& config) {
  SplitDataset data = build_dataset(config.dataset, config.fl.seed);
  DefenseConfig defense = config.fl.defense;
  fill_decoys(defense, data.train);
  if (static_cast<int>(data.test.size()) < config.attack.images)
    throw ContractError("attack: test split has " + std::to_string(data.test.size()) +
                        " examples, need " + std::to_string(config.attack.images));

  Model model = initial_model(config, data);
  const RngKey root = RngKey::root(config.fl.seed);

  Generator gen;
  if (config.attack.method == AttackSpec::Method::kLatent)
    gen = train_toy_generator(data.train, config.attack.generator_latent,
                              config.attack.generator_steps, root.child(kGenSalt).state);

  std::vector<AttackReportRow> rows;
  std::vector<Tensor> recons, truths;
  for (int i = 0; i < config.attack.images; ++i) {
    const LabeledExample& ex = data.test[static_cast<std::size_t>(i)];
    Tensor recon;
    rows.push_back(attack_one(model, ex, i, defense, config.attack.config,
                              config.attack.method, &gen,
                              root.child(kDefKeySalt).child(static_cast<std::uint64_t>(i)),
                              root.child(kInvKeySalt).child(static_cast<std::uint64_t>(i)),
                              &recon));
    recons.push_back(recon);
    truths.push_back(ex.image);
  }

  RunRecord record;
  record.config = config.fl;
  record.root_seed = config.fl.seed;
  record.final_model = model;
  report_emit(record, rows, recons, truths, config.out_dir);
  return rows;
}

std::vector<DefendEvalCell> cmd_defend_eval(const ExperimentConfig& config) {
  SplitDataset data = build_dataset(config.dataset, config.fl.seed);
  if (static_cast<int>(data.test.size()) < config.defend_eval.images)
    throw ContractError("defend-eval: test split too small");
  Model model = initial_model(config, data);
  const RngKey root = RngKey::root(config.fl.seed);

  std::vector<std::string> defenses = config.defend_eval.defenses;
  if (std::find(defenses.begin(), defenses.end(), "none") == defenses.end())
    defenses.insert(defenses.begin(), "none");

  std::vector<DefendEvalCell> cells;
  for (const std::string& dname : defenses) {
    DefenseConfig defense = config.fl.defense;
    if (dname == "none")
      defense.kind = DefenseConfig::Kind::kNone;
    else if (dname == "censor")
      defense.kind = DefenseConfig::Kind::kCensor;
    else if (dname == "noise")
      defense.kind = DefenseConfig::Kind::kNoise;
    else if (dname == "clip")
      defense.kind = DefenseConfig::Kind::kClip;
    else if (dname == "topk")
      defense.kind = DefenseConfig::Kind::kTopK;
    else if (dname == "soteria")
      defense.kind = DefenseConfig::Kind::kSoteria;
    else
      throw ConfigError("unknown defense '" + dname + "'", "defend_eval.defenses");
    fill_decoys(defense, data.train);

    for (const std::string& aname : config.defend_eval.attacks) {
      AttackConfig acfg = config.attack.config;
      if (aname == "neg_cosine")
        acfg.distance = AttackConfig::Distance::kNegCosine;
      else if (aname == "l2")
        acfg.distance = AttackConfig::Distance::kL2;
      else
        throw ConfigError("unknown attack '" + aname + "'", "defend_eval.attacks");

      const RngKey pair_key =
          root.child(kMatrixSalt).child(name_salt(dname)).child(name_salt(aname));
      DefendEvalCell cell;
      cell.defense = dname;
      cell.attack = aname;
      for (int i = 0; i < config.defend_eval.images; ++i) {
        AttackReportRow row = attack_one(
            model, data.test[static_cast<std::size_t>(i)], i, defense, acfg,
            AttackSpec::Method::kPixel, nullptr,
            pair_key.child(kDefKeySalt).child(static_cast<std::uint64_t>(i)),
            pair_key.child(kInvKeySalt).child(static_cast<std::uint64_t>(i)), nullptr);
        cell.mean_metrics.mse += row.metrics.mse;
        cell.mean_metrics.psnr += row.metrics.psnr;
        cell.mean_metrics.ssim += row.metrics.ssim;
        cell.mean_distance += row.final_distance;
      }
      const double n = config.defend_eval.images;
      cell.mean_metrics.mse /= n;
      cell.mean_metrics.psnr /= n;
      cell.mean_metrics.ssim /= n;
      cell.mean_distance /= n;
      cells.push_back(cell);
    }
  }

  std::filesystem::create_directories(config.out_dir);
  std::string csv = "defense,attack,mse,psnr,ssim,distance\n";
  for (const DefendEvalCell& c : cells)
    csv += csv_field(c.defense) + "," + csv_field(c.attack) + "," +
           format_double(c.mean_metrics.mse) + "," + format_double(c.mean_metrics.psnr) + "," +
           format_double(c.mean_metrics.ssim) + "," + format_double(c.mean_distance) + "\n";
  std::ofstream f(std::filesystem::path(config.out_dir) / "matrix.csv",
                  std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("defend-eval: cannot write matrix.csv");
  f << csv;
  return cells;
}

std::vector<BenchRow> cmd_bench(const ExperimentConfig& config) {
  SplitDataset data = build_dataset(config.dataset, config.fl.seed);
  const int batch_size = std::min<int>(config.bench.batch_size,
                                       static_cast<int>(data.train.size()));
  std::vector<LabeledExample> head(data.train.begin(), data.train.begin() + batch_size);
  Batch batch = make_batch(head);

  Model model = initial_fl_model(config.fl, data.train, data.test);
  const RngKey root = RngKey::root(config.fl.seed);

  auto time_plain = [&]() {
    const auto t0 = std::chrono::steady_clock::now();
    GradientUpdate g = loss_and_grad(model, batch).grad;
    scale_inplace(g, 1.0 / batch.size());
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };
  auto time_censor = [&](int trials, int rep) {
    CensorConfig cfg = config.fl.defense.censor;
    cfg.trials = trials;
    const auto t0 = std::chrono::steady_clock::now();
    censor_local_update(model, batch, cfg,
                        root.child(kBenchSalt).child(static_cast<std::uint64_t>(trials))
                            .child(static_cast<std::uint64_t>(rep)));
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };

  std::vector<BenchRow> rows;
  BenchRow control;
  control.trials = 0;
  for (int r = 0; r < config.bench.repetitions; ++r) {
    control.plain_ms.push_back(time_plain());
    control.defended_ms.push_back(time_plain());
  }
  control.plain_median_ms = median(control.plain_ms);
  control.defended_median_ms = median(control.defended_ms);
  control.overhead_pct =
      (control.defended_median_ms - control.plain_median_ms) / control.plain_median_ms * 100.0;
  rows.push_back(control);

  for (int trials : config.bench.trial_counts) {
    BenchRow row;
    row.trials = trials;
    for (int r = 0; r < config.bench.repetitions; ++r) {
      row.plain_ms.push_back(time_plain());
      row.defended_ms.push_back(time_censor(trials, r));
    }
    row.plain_median_ms = median(row.plain_ms);
    row.defended_median_ms = median(row.defended_ms);
    row.overhead_pct =
        (row.defended_median_ms - row.plain_median_ms) / row.plain_median_ms * 100.0;
    rows.push_back(row);
  }

  std::filesystem::create_directories(config.out_dir);
  std::string csv = "trials,plain_median_ms,defended_median_ms,overhead_pct,repetitions\n";
  for (const BenchRow& r : rows)
    csv += std::to_string(r.trials) + "," + format_double(r.plain_median_ms) + "," +
           format_double(r.defended_median_ms) + "," + format_double(r.overhead_pct) + "," +
           std::to_string(r.plain_ms.size()) + "\n";
  std::ofstream f(std::filesystem::path(config.out_dir) / "bench.csv",
                  std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("bench: cannot write bench.csv");
  f << csv;
  return rows;
}

}  // namespace gslab
