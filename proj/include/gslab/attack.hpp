#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gslab/dataset.hpp"
#include "gslab/model.hpp"
#include "gslab/rng.hpp"
#include "gslab/update.hpp"

namespace gslab {

struct AttackConfig {
  int iterations = 2000;
  double step_size = 0.1;
  enum class Distance { kNegCosine, kL2 };
  Distance distance = Distance::kNegCosine;
  int restarts = 4;
  bool infer_label = true;
  int eot_samples = 0;  // 0 = off; >0 callers average that many defended gradients
  double tv_weight = 1e-4;
  bool signed_gradients = false;  // Adam on sign(grad) instead of grad
  double latent_reg = 1e-3;       // weight on ||z||^2 in latent_invert
};

struct InversionResult {
  Tensor reconstruction;  // rank-1, clamped to [0,1]
  int inferred_label = -1;
  double final_distance = 0.0;
  std::vector<double> per_restart_distances;
  std::vector<int> aborted_restarts;  // restarts cut short by non-finite losses
};

// Row of the final FC weight gradient with the most negative row sum. For an
// undefended batch-of-one gradient that row is the true label: the label
// logit's gradient is the only negative one, and hidden activations feeding
// the FC layer are non-negative.
int infer_label(const GradientUpdate& g, const Model& model);

// D(F(x), g_target) + tv_weight * TV(x) evaluated once. F is the model's
// batch gradient at input x with label y. Square inputs get 2-D total
// variation; anything else falls back to differences along the flat vector.
double gradient_matching_loss(const Model& model, const Tensor& x, int y,
                              const GradientUpdate& g_target, AttackConfig::Distance distance,
                              double tv_weight);

// d/dx of gradient_matching_loss, exact via backward-over-backward.
Tensor gradient_matching_grad(const Model& model, const Tensor& x, int y,
                              const GradientUpdate& g_target, AttackConfig::Distance distance,
                              double tv_weight);

// Adam-based reconstruction of the input behind g_observed. Each restart
// starts from clamped Gaussian noise seeded by key.child(restart); the best
// restart by final objective value is reported.
InversionResult invert_gradient(const Model& model, const GradientUpdate& g_observed,
                                const AttackConfig& config, const RngKey& key);

// Elementwise mean of `samples` defended gradients; the adaptive attacker's
// estimate of the defense's expectation.
GradientUpdate eot_estimate(const std::function<GradientUpdate(int)>& defense_sampler,
                            int samples);

// Small decoder trained as an autoencoder on a public split; stands in for a
// pre-trained generative prior.
struct Generator {
  int latent_dim = 0;
  Model decoder;  // latent -> pixels, sigmoid applied on top
};

Generator train_toy_generator(const std::vector<LabeledExample>& public_examples,
                              int latent_dim, int steps, std::uint64_t seed);

Tensor generate(const Generator& gen, const Tensor& z);

// Optimizes a latent code z so the decoded image's gradient matches
// g_observed, with an L2 penalty keeping z near the prior.
InversionResult latent_invert(const Model& model, const GradientUpdate& g_observed,
                              const Generator& gen, const AttackConfig& config,
                              const RngKey& key);

}  // namespace gslab
