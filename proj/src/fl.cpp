#include "gslab/fl.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "gslab/errors.hpp"
#include "gslab/parallel.hpp"

namespace gslab {

namespace {

constexpr std::uint64_t kRoundSalt = 0x726f756e64ULL;   // "round"
constexpr std::uint64_t kSelectSalt = 0x73656cULL;      // "sel"
constexpr std::uint64_t kClientSalt = 0x636c69ULL;      // "cli"
constexpr std::uint64_t kBatchSalt = 0x6261ULL;         // "ba"
constexpr std::uint64_t kDefenseSalt = 0x6465ULL;       // "de"
constexpr std::uint64_t kModelSalt = 0x6d6f64ULL;       // "mod"
constexpr std::uint64_t kPartitionSalt = 0x706172ULL;   // "par"

RngKey round_key(const RngKey& root, int round) {
  return root.child(kRoundSalt).child(static_cast<std::uint64_t>(round));
}

RngKey client_key(const RngKey& root, int round, int client_id) {
  return round_key(root, round).child(kClientSalt).child(static_cast<std::uint64_t>(client_id));
}

void validate(const FLConfig& c) {
  if (c.num_clients < 1) throw ContractError("fl: num_clients must be >= 1");
  if (c.clients_per_round < 1 || c.clients_per_round > c.num_clients)
    throw ContractError("fl: clients_per_round must be in [1, num_clients]");
  if (c.rounds < 0) throw ContractError("fl: rounds must be >= 0");
  if (c.learning_rate <= 0.0) throw ContractError("fl: learning_rate must be positive");
  if (c.batch_size < 1) throw ContractError("fl: batch_size must be >= 1");
  if (c.dirichlet_alpha <= 0.0) throw ContractError("fl: dirichlet_alpha must be positive");
  if (c.victim_client >= c.num_clients)
    throw ContractError("fl: victim_client out of range");
}

// First `k` indices of a seeded partial shuffle, returned ascending so the
// aggregation (and batch assembly) order never depends on draw order.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + rng.uniform_int(n - i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Batch draw_batch(const ClientDataset& client, int batch_size, const RngKey& key) {
  const int n = static_cast<int>(client.examples.size());
  if (n == 0) throw ContractError("fl: client " + std::to_string(client.client_id) +
                                  " has no examples");
  if (batch_size >= n) return make_batch(client.examples);
  Rng rng(key.child(kBatchSalt));
  std::vector<int> picks = sample_without_replacement(n, batch_size, rng);
  std::vector<LabeledExample> chosen;
  chosen.reserve(picks.size());
  for (int i : picks) chosen.push_back(client.examples[static_cast<std::size_t>(i)]);
  return make_batch(chosen);
}

}  // namespace

GradientUpdate defend_update(const Model& model, const Batch& batch,
                             const GradientUpdate& raw, const DefenseConfig& defense,
                             const RngKey& key) {
  switch (defense.kind) {
    case DefenseConfig::Kind::kNone:
      return raw;
    case DefenseConfig::Kind::kCensor:
      return censor_local_update(model, batch, defense.censor, key).update;
    case DefenseConfig::Kind::kNoise: {
      Rng rng(key);
      return noise_defense(raw, defense.noise_sigma, rng);
    }
    case DefenseConfig::Kind::kClip:
      return clip_defense(raw, defense.clip_bound);
    case DefenseConfig::Kind::kTopK:
      return topk_defense(raw, defense.topk_ratio, defense.topk_per_layer);
    case DefenseConfig::Kind::kSoteria:
      return soteria_mask_defense(raw, model, batch, defense.soteria_ratio,
                                  defense.soteria_layer);
  }
  throw ContractError("fl: unknown defense kind");
}

const char* defense_kind_name(DefenseConfig::Kind kind) {
  switch (kind) {
    case DefenseConfig::Kind::kNone: return "none";
    case DefenseConfig::Kind::kCensor: return "censor";
    case DefenseConfig::Kind::kNoise: return "noise";
    case DefenseConfig::Kind::kClip: return "clip";
    case DefenseConfig::Kind::kTopK: return "topk";
    case DefenseConfig::Kind::kSoteria: return "soteria";
  }
  return "unknown";
}

GradientUpdate client_update(const ServerState& state, const FLConfig& config,
                             const ClientDataset& client, Batch* batch_out) {
  const RngKey ckey = client_key(state.root, state.round, client.client_id);
  Batch batch = draw_batch(client, config.batch_size, ckey);

  GradientUpdate raw = loss_and_grad(state.model, batch).grad;
  scale_inplace(raw, 1.0 / batch.size());
  GradientUpdate out =
      defend_update(state.model, batch, raw, config.defense, ckey.child(kDefenseSalt));
  if (batch_out != nullptr) *batch_out = std::move(batch);
  return out;
}

RoundResult run_round(ServerState& state, const FLConfig& config,
                      const std::vector<ClientDataset>& clients,
                      const std::vector<int>& selected_ids) {
  if (selected_ids.empty()) throw ContractError("run_round: empty client selection");

  RoundResult result;
  result.selected = selected_ids;
  std::sort(result.selected.begin(), result.selected.end());
  if (std::adjacent_find(result.selected.begin(), result.selected.end()) !=
      result.selected.end())
    throw ContractError("run_round: duplicate client id in selection");
  for (int id : result.selected)
    if (id < 0 || id >= static_cast<int>(clients.size()))
      throw ContractError("run_round: client id " + std::to_string(id) + " out of range");

  const bool capture_round =
      config.victim_client >= 0 &&
      std::find(config.victim_rounds.begin(), config.victim_rounds.end(), state.round) !=
          config.victim_rounds.end();

  const int k = static_cast<int>(result.selected.size());
  std::vector<GradientUpdate> updates(static_cast<std::size_t>(k));
  std::vector<Batch> batches(static_cast<std::size_t>(k));
  const int workers = config.workers > 0 ? config.workers : default_workers();
  parallel_for(k, workers, [&](int i) {
    const int id = result.selected[static_cast<std::size_t>(i)];
    const bool want_batch = capture_round && id == config.victim_client;
    updates[static_cast<std::size_t>(i)] =
        client_update(state, config, clients[static_cast<std::size_t>(id)],
                      want_batch ? &batches[static_cast<std::size_t>(i)] : nullptr);
  });

  if (capture_round) {
    for (int i = 0; i < k; ++i) {
      if (result.selected[static_cast<std::size_t>(i)] != config.victim_client) continue;
      VictimCapture cap;
      cap.round = state.round;
      cap.client_id = config.victim_client;
      cap.batch = std::move(batches[static_cast<std::size_t>(i)]);
      cap.transmitted = updates[static_cast<std::size_t>(i)];
      cap.model_before = state.model;
      result.captures.push_back(std::move(cap));
    }
  }

  result.aggregate = state.model.zero_update();
  for (int i = 0; i < k; ++i) axpy(result.aggregate, 1.0, updates[static_cast<std::size_t>(i)]);
  scale_inplace(result.aggregate, 1.0 / k);

  apply_update(state.model, result.aggregate, config.learning_rate);
  ++state.round;
  return result;
}

Model initial_fl_model(const FLConfig& config, const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& test) {
  if (train.empty()) throw ContractError("initial_fl_model: empty training split");
  int num_classes = 0;
  for (const auto& ex : train) num_classes = std::max(num_classes, ex.label + 1);
  for (const auto& ex : test) num_classes = std::max(num_classes, ex.label + 1);
  num_classes = std::max(num_classes, 2);
  const int input_dim = static_cast<int>(train[0].image.numel());
  return build_mlp(input_dim, config.hidden_dims, num_classes,
                   RngKey::root(config.seed).child(kModelSalt).state);
}

RunRecord run_training(const FLConfig& config, const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& test) {
  validate(config);
  if (train.empty()) throw ContractError("run_training: empty training split");
  if (test.empty()) throw ContractError("run_training: empty test split");

  RunRecord record;
  record.config = config;
  record.root_seed = config.seed;

  const RngKey root = RngKey::root(config.seed);
  std::vector<ClientDataset> clients =
      dirichlet_partition(train, config.num_clients, config.dirichlet_alpha,
                          root.child(kPartitionSalt).state);

  ServerState state;
  state.model = initial_fl_model(config, train, test);
  state.round = 0;
  state.root = root;

  for (int r = 0; r < config.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();

    Rng sel(round_key(root, r).child(kSelectSalt));
    std::vector<int> selected =
        sample_without_replacement(config.num_clients, config.clients_per_round, sel);
    const bool capture_round =
        config.victim_client >= 0 &&
        std::find(config.victim_rounds.begin(), config.victim_rounds.end(), r) !=
            config.victim_rounds.end();
    if (capture_round &&
        std::find(selected.begin(), selected.end(), config.victim_client) == selected.end()) {
      selected.back() = config.victim_client;
      std::sort(selected.begin(), selected.end());
    }

    RoundResult round = run_round(state, config, clients, selected);
    for (auto& cap : round.captures) record.captures.push_back(std::move(cap));

    EvalResult eval = evaluate_model(state.model, test);
    const auto t1 = std::chrono::steady_clock::now();

    RoundMetrics row;
    row.round = r;
    row.test_accuracy = eval.accuracy;
    row.test_loss = eval.mean_loss;
    row.elapsed_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    record.rounds.push_back(row);
  }

  EvalResult final_eval = evaluate_model(state.model, test);
  record.final_accuracy = final_eval.accuracy;
  record.final_loss = final_eval.mean_loss;
  record.final_model = std::move(state.model);
  return record;
}

EvalResult evaluate_model(const Model& model, const std::vector<LabeledExample>& test_split) {
  if (test_split.empty()) throw ContractError("evaluate_model: empty test split");
  EvalResult r;
  r.accuracy = evaluate_accuracy(model, test_split);
  r.mean_loss = evaluate_loss(model, test_split);
  return r;
}

}  // namespace gslab
