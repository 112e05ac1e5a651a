#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gslab/dataset.hpp"
#include "gslab/defense.hpp"
#include "gslab/model.hpp"
#include "gslab/rng.hpp"
#include "gslab/update.hpp"

namespace gslab {

// Defense a client applies to its update before transmitting.
struct DefenseConfig {
  enum class Kind { kNone, kCensor, kNoise, kClip, kTopK, kSoteria };
  Kind kind = Kind::kNone;

  CensorConfig censor;
  // Decoy-source sampling pools this many examples from the training split
  // when the censor config carries none of its own.
  int decoy_count = 16;
  double noise_sigma = 0.01;
  double clip_bound = 1.0;
  double topk_ratio = 0.1;
  bool topk_per_layer = false;
  double soteria_ratio = 0.5;
  std::string soteria_layer = "fc0";
};

const char* defense_kind_name(DefenseConfig::Kind kind);

struct FLConfig {
  int num_clients = 100;
  int clients_per_round = 10;
  int rounds = 200;
  double learning_rate = 0.1;
  int batch_size = 64;
  double dirichlet_alpha = 0.5;
  std::vector<int> hidden_dims = {64};
  DefenseConfig defense;
  std::uint64_t seed = 0;

  // Client whose transmitted update is captured for attack evaluation; -1
  // disables capture. At capture rounds the victim is forced into the
  // selection (it replaces the last sampled client if absent).
  int victim_client = -1;
  std::vector<int> victim_rounds = {0};

  int workers = 0;  // 0 = one per available core
};

// Everything an attacker observing round `round` would hold, plus the ground
// truth needed to score a reconstruction afterwards.
struct VictimCapture {
  int round = 0;
  int client_id = 0;
  Batch batch;                // the private batch behind the update
  GradientUpdate transmitted; // after the defense
  Model model_before;         // broadcast weights the update was computed at
};

struct RoundMetrics {
  int round = 0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  double elapsed_ms = 0.0;  // wall time; the one field exempt from replay equality
};

struct RunRecord {
  FLConfig config;
  std::uint64_t root_seed = 0;
  std::vector<RoundMetrics> rounds;
  std::vector<VictimCapture> captures;
  double final_accuracy = 0.0;
  double final_loss = 0.0;
  Model final_model;
};

struct ServerState {
  Model model;
  int round = 0;
  RngKey root;
};

struct RoundResult {
  std::vector<int> selected;  // ascending client ids, the aggregation order
  GradientUpdate aggregate;   // mean of the transmitted updates
  std::vector<VictimCapture> captures;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Applies the configured defense to a client's raw (mean-loss) gradient.
// CENSOR and Soteria recompute what they need from the model and batch; the
// key seeds any defensive randomness.
GradientUpdate defend_update(const Model& model, const Batch& batch,
                             const GradientUpdate& raw, const DefenseConfig& defense,
                             const RngKey& key);

// One defended local update for client `client_id` of `clients` at the
// state's current round. Exposed so defenses can be exercised against the
// exact batches the simulator would draw.
GradientUpdate client_update(const ServerState& state, const FLConfig& config,
                             const ClientDataset& client, Batch* batch_out = nullptr);

// One synchronous round over an explicit client selection: local updates in
// parallel, mean aggregation in ascending client-id order, one server step.
// Advances state.round.
RoundResult run_round(ServerState& state, const FLConfig& config,
                      const std::vector<ClientDataset>& clients,
                      const std::vector<int>& selected_ids);

/// The model a training run with this config starts from. Depends only on the
// seed, hidden_dims, and the data's input size and label range.
Model initial_fl_model(const FLConfig& config, const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& test);

// Full protocol: Dirichlet partition, seeded per-round sampling without
// replacement, per-round evaluation on `test`, victim capture per config.
RunRecord run_training(const FLConfig& config, const std::vector<LabeledExample>& train,
                       const std::vector<LabeledExample>& test);

EvalResult evaluate_model(const Model& model, const std::vector<LabeledExample>& test_split);

}  // namespace gslab
