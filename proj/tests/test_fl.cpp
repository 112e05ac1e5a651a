#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "gslab/errors.hpp"
#include "gslab/fl.hpp"
#include "gslab/model.hpp"
#include "gslab/rng.hpp"

using namespace gslab;

namespace {

std::vector<LabeledExample> random_examples(int n, int dim, int classes, std::uint64_t seed) {
  Rng rng(RngKey::root(seed));
  std::vector<LabeledExample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor img = Tensor::zeros({dim});
    for (double& v : img.values()) v = rng.uniform();
    out.push_back({img, rng.uniform_int(classes)});
  }
  return out;
}

GradientUpdate mean_grad(const Model& m, const std::vector<LabeledExample>& ex) {
  Batch b = make_batch(ex);
  GradientUpdate g = loss_and_grad(m, b).grad;
  scale_inplace(g, 1.0 / b.size());
  return g;
}

ServerState fresh_state(const Model& m, std::uint64_t seed) {
  ServerState s;
  s.model = m;
  s.round = 0;
  s.root = RngKey::root(seed);
  return s;
}

}  // namespace

TEST_CASE("a single-client round equals a centralized step") {
  std::vector<LabeledExample> data = random_examples(6, 8, 3, 1);
  Model m0 = build_mlp(8, {6}, 3, 1);

  FLConfig cfg;
  cfg.num_clients = 1;
  cfg.clients_per_round = 1;
  cfg.batch_size = 6;
  cfg.learning_rate = 0.1;
  ServerState state = fresh_state(m0, 3);
  std::vector<ClientDataset> clients{{0, data}};
  RoundResult round = run_round(state, cfg, clients, {0});

  Model manual = m0;
  GradientUpdate g = mean_grad(m0, data);
  apply_update(manual, g, cfg.learning_rate);

  CHECK(round.aggregate.bitwise_equal(g));
  CHECK(state.model.parameters_as_update().bitwise_equal(manual.parameters_as_update()));
  CHECK(state.round == 1);
}

TEST_CASE("identical clients aggregate to the single-client update") {
  std::vector<LabeledExample> data = random_examples(5, 8, 3, 2);
  Model m0 = build_mlp(8, {6}, 3, 2);

  FLConfig cfg;
  cfg.num_clients = 4;
  cfg.clients_per_round = 4;
  cfg.batch_size = 5;
  std::vector<ClientDataset> quad;
  for (int id = 0; id < 4; ++id) quad.push_back({id, data});
  ServerState s4 = fresh_state(m0, 4);
  RoundResult round4 = run_round(s4, cfg, quad, {0, 1, 2, 3});

  FLConfig one = cfg;
  one.num_clients = 1;
  one.clients_per_round = 1;
  std::vector<ClientDataset> solo{{0, data}};
  ServerState s1 = fresh_state(m0, 4);
  RoundResult round1 = run_round(s1, one, solo, {0});

  CHECK(round4.aggregate.bitwise_equal(round1.aggregate));
  CHECK(s4.model.parameters_as_update().bitwise_equal(s1.model.parameters_as_update()));
}

TEST_CASE("two-client aggregation matches the hand-computed mean") {
  std::vector<LabeledExample> a = random_examples(2, 8, 3, 5);
  std::vector<LabeledExample> b = random_examples(3, 8, 3, 6);
  Model m0 = build_mlp(8, {6}, 3, 5);

  FLConfig cfg;
  cfg.num_clients = 2;
  cfg.clients_per_round = 2;
  cfg.batch_size = 3;
  cfg.learning_rate = 0.25;
  ServerState state = fresh_state(m0, 7);
  std::vector<ClientDataset> clients{{0, a}, {1, b}};
  RoundResult round = run_round(state, cfg, clients, {1, 0});

  GradientUpdate ga = mean_grad(m0, a);
  GradientUpdate gb = mean_grad(m0, b);
  GradientUpdate want = m0.zero_update();
  axpy(want, 1.0, ga);
  axpy(want, 1.0, gb);
  scale_inplace(want, 0.5);

  CHECK(round.selected == std::vector<int>{0, 1});
  CHECK(round.aggregate.bitwise_equal(want));

  Model manual = m0;
  apply_update(manual, want, cfg.learning_rate);
  CHECK(state.model.parameters_as_update().bitwise_equal(manual.parameters_as_update()));
}

TEST_CASE("run_round rejects bad selections") {
  std::vector<LabeledExample> data = random_examples(4, 8, 3, 8);
  FLConfig cfg;
  cfg.num_clients = 2;
  cfg.clients_per_round = 1;
  ServerState state = fresh_state(build_mlp(8, {6}, 3, 8), 9);
  std::vector<ClientDataset> clients{{0, data}, {1, data}};

  CHECK_THROWS_AS(run_round(state, cfg, clients, {}), ContractError);
  CHECK_THROWS_AS(run_round(state, cfg, clients, {0, 0}), ContractError);
  CHECK_THROWS_AS(run_round(state, cfg, clients, {2}), ContractError);
  CHECK_THROWS_AS(run_round(state, cfg, clients, {-1}), ContractError);
}

TEST_CASE("per-round batches are deterministic draws without replacement") {
  std::vector<LabeledExample> data;
  for (int i = 0; i < 10; ++i) {
    Tensor img = Tensor::full({4}, 0.1 * i);
    data.push_back({img, i});
  }
  ClientDataset client{3, data};
  Model m = build_mlp(4, {4}, 10, 10);

  FLConfig cfg;
  cfg.batch_size = 4;
  ServerState state = fresh_state(m, 11);

  Batch b1, b2;
  client_update(state, cfg, client, &b1);
  client_update(state, cfg, client, &b2);
  REQUIRE(b1.size() == 4);
  CHECK(b1.y == b2.y);
  for (std::size_t i = 0; i + 1 < b1.y.size(); ++i) CHECK(b1.y[i] < b1.y[i + 1]);

  bool differs = false;
  for (int r = 1; r <= 5 && !differs; ++r) {
    ServerState later = state;
    later.round = r;
    Batch br;
    client_update(later, cfg, client, &br);
    differs = br.y != b1.y;
  }
  CHECK(differs);

  cfg.batch_size = 16;
  Batch full;
  client_update(state, cfg, client, &full);
  CHECK(full.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(full.y[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("victim captures are taken at the configured rounds and self-consistent") {
  std::vector<LabeledExample> train = synth_dataset(2, 12, 4, 20);
  std::vector<LabeledExample> test = synth_dataset(2, 6, 4, 21);

  FLConfig cfg;
  cfg.num_clients = 6;
  cfg.clients_per_round = 2;
  cfg.rounds = 3;
  cfg.batch_size = 1;
  cfg.dirichlet_alpha = 10.0;
  cfg.hidden_dims = {8};
  cfg.seed = 22;
  cfg.victim_client = 5;
  cfg.victim_rounds = {0, 2};

  RunRecord rec = run_training(cfg, train, test);
  REQUIRE(rec.captures.size() == 2);
  CHECK(rec.captures[0].round == 0);
  CHECK(rec.captures[1].round == 2);
  for (const VictimCapture& cap : rec.captures) {
    CHECK(cap.client_id == 5);
    REQUIRE(cap.batch.size() == 1);
    GradientUpdate expect = loss_and_grad(cap.model_before, cap.batch).grad;
    scale_inplace(expect, 1.0 / cap.batch.size());
    CHECK(cap.transmitted.bitwise_equal(expect));
  }
  CHECK(rec.rounds.size() == 3);
}

TEST_CASE("training numerics are identical at 1 and 8 workers") {
  std::vector<LabeledExample> train = synth_dataset(3, 10, 4, 30);
  std::vector<LabeledExample> test = synth_dataset(3, 5, 4, 31);

  FLConfig cfg;
  cfg.num_clients = 5;
  cfg.clients_per_round = 3;
  cfg.rounds = 4;
  cfg.batch_size = 4;
  cfg.hidden_dims = {8};
  cfg.seed = 32;
  cfg.defense.kind = DefenseConfig::Kind::kCensor;
  cfg.defense.censor.trials = 3;
  cfg.victim_client = 1;
  cfg.victim_rounds = {1};

  FLConfig cfg1 = cfg;
  cfg1.workers = 1;
  FLConfig cfg8 = cfg;
  cfg8.workers = 8;
  RunRecord r1 = run_training(cfg1, train, test);
  RunRecord r8 = run_training(cfg8, train, test);

  REQUIRE(r1.rounds.size() == r8.rounds.size());
  for (std::size_t i = 0; i < r1.rounds.size(); ++i) {
    CHECK(r1.rounds[i].test_accuracy == r8.rounds[i].test_accuracy);
    CHECK(r1.rounds[i].test_loss == r8.rounds[i].test_loss);
  }
  CHECK(r1.final_model.parameters_as_update().bitwise_equal(
      r8.final_model.parameters_as_update()));
  REQUIRE(r1.captures.size() == r8.captures.size());
  for (std::size_t i = 0; i < r1.captures.size(); ++i)
    CHECK(r1.captures[i].transmitted.bitwise_equal(r8.captures[i].transmitted));
}

TEST_CASE("evaluate_model handles perfect, chance, and empty splits") {
  Model m = build_mlp(4, {4}, 3, 40);
  for (Layer& l : m.layers)
    for (double& v : l.weight.values()) v = 0.0;
  for (Layer& l : m.layers)
    for (double& v : l.bias.values()) v = 0.0;
  m.layers.back().bias.at(1) = 5.0;

  std::vector<LabeledExample> ones;
  for (int i = 0; i < 10; ++i) ones.push_back({Tensor::full({4}, 0.3), 1});
  EvalResult perfect = evaluate_model(m, ones);
  CHECK(perfect.accuracy == 1.0);

  Model rnd = build_mlp(6, {8}, 4, 41);
  std::vector<LabeledExample> blob = random_examples(800, 6, 4, 42);
  EvalResult chance = evaluate_model(rnd, blob);
  CHECK(chance.accuracy > 0.10);
  CHECK(chance.accuracy < 0.45);

  CHECK_THROWS_AS(evaluate_model(m, {}), ContractError);
}

TEST_CASE("censor rounds never raise the training loss except via fallback") {
  std::vector<LabeledExample> data = random_examples(6, 8, 3, 50);
  Batch full = make_batch(data);

  FLConfig cfg;
  cfg.num_clients = 1;
  cfg.clients_per_round = 1;
  cfg.batch_size = 6;
  cfg.learning_rate = 0.1;
  cfg.defense.kind = DefenseConfig::Kind::kCensor;
  cfg.defense.censor.trials = 10;
  cfg.defense.censor.learning_rate = cfg.learning_rate;

  ServerState state = fresh_state(build_mlp(8, {6}, 3, 50), 51);
  std::vector<ClientDataset> clients{{0, data}};
  for (int r = 0; r < 20; ++r) {
    const double before = evaluate_loss(state.model, full);
    GradientUpdate g0 = mean_grad(state.model, data);
    RoundResult round = run_round(state, cfg, clients, {0});
    const double after = evaluate_loss(state.model, full);
    if (!round.aggregate.bitwise_equal(g0)) CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("federated training on separable data learns") {
  std::vector<LabeledExample> train = synth_dataset(3, 40, 6, 60);
  std::vector<LabeledExample> test = synth_dataset(3, 20, 6, 61);

  FLConfig cfg;
  cfg.num_clients = 10;
  cfg.clients_per_round = 4;
  cfg.rounds = 30;
  cfg.batch_size = 16;
  cfg.dirichlet_alpha = 0.7;
  cfg.hidden_dims = {32};
  cfg.learning_rate = 0.1;
  cfg.seed = 62;

  RunRecord rec = run_training(cfg, train, test);
  REQUIRE(rec.rounds.size() == 30);
  CHECK(rec.final_accuracy > 0.6);
  CHECK(rec.final_accuracy > rec.rounds.front().test_accuracy);
  CHECK(rec.final_accuracy == rec.rounds.back().test_accuracy);
  CHECK(rec.final_loss == rec.rounds.back().test_loss);
}

TEST_CASE("fl config validation") {
  std::vector<LabeledExample> train = random_examples(10, 4, 2, 70);
  std::vector<LabeledExample> test = random_examples(4, 4, 2, 71);

  FLConfig ok;
  ok.num_clients = 2;
  ok.clients_per_round = 2;
  ok.rounds = 1;
  ok.hidden_dims = {4};

  FLConfig bad = ok;
  bad.clients_per_round = 3;
  CHECK_THROWS_AS(run_training(bad, train, test), ContractError);
  bad = ok;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(run_training(bad, train, test), ContractError);
  bad = ok;
  bad.batch_size = 0;
  CHECK_THROWS_AS(run_training(bad, train, test), ContractError);
  bad = ok;
  bad.dirichlet_alpha = 0.0;
  CHECK_THROWS_AS(run_training(bad, train, test), ContractError);
  bad = ok;
  bad.victim_client = 2;
  CHECK_THROWS_AS(run_training(bad, train, test), ContractError);
  bad = ok;
  bad.rounds = -1;
  CHECK_THROWS_AS(run_training(bad, train, test), ContractError);
  CHECK_THROWS_AS(run_training(ok, {}, test), ContractError);
  CHECK_THROWS_AS(run_training(ok, train, {}), ContractError);

  FLConfig zero = ok;
  zero.rounds = 0;
  RunRecord rec = run_training(zero, train, test);
  CHECK(rec.rounds.empty());
  CHECK(rec.final_accuracy >= 0.0);
}
