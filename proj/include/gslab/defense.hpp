#pragma once

#include <string>
#include <vector>

#include "gslab/dataset.hpp"
#include "gslab/model.hpp"
#include "gslab/rng.hpp"
#include "gslab/update.hpp"

namespace gslab {

struct CensorConfig {
  int trials = 20;
  // 0 selects the minimal-loss candidate outright; larger values sample a
  // candidate with probability proportional to exp(-loss / temperature).
  double temperature = 0.0;
  double perturbation_scale = 1.0;

  enum class Fallback { kPaperFaithful, kStrictPrivacy };
  // kPaperFaithful returns the original gradient when no candidate beats the
  // reference loss; kStrictPrivacy returns the best candidate anyway, since
  // the fallback hands the attacker the raw gradient.
  Fallback fallback = Fallback::kPaperFaithful;

  enum class Source { kGaussian, kDecoy };
  Source source = Source::kGaussian;
  // Sampling pool for kDecoy: the raw direction is the gradient of one decoy
  // example instead of Gaussian noise.
  std::vector<LabeledExample> decoy_examples;

  // Step used when test-applying a candidate before evaluating its loss.
  double learning_rate = 0.1;

  enum class LossReference { kCurrentModel, kOriginalApplied };
  // Reference loss the candidates must beat: the incoming model as-is, or
  // the incoming model after applying the original gradient.
  LossReference loss_reference = LossReference::kCurrentModel;
};

struct CensorResult {
  GradientUpdate update;
  bool fallback = false;       // returned the original gradient
  bool beat_reference = false; // selected candidate improved on the reference loss
  int selected_trial = -1;     // -1 when fallback
  double reference_loss = 0.0;
  double selected_loss = 0.0;  // loss of the returned update's test application
  std::vector<double> trial_losses;
};

// Raw direction for one trial: per-layer Gaussian draws scaled by
// perturbation_scale, or a decoy example's gradient.
GradientUpdate sample_direction(const Model& model, const CensorConfig& config, Rng& rng);

// Per-layer projection of `raw` onto the complement of the original layer
// gradient. A zero original layer passes `raw` through untouched.
GradientUpdate orthogonal_grad(const GradientUpdate& original, const GradientUpdate& raw);
// Convenience: Gaussian raw direction with unit scale.
GradientUpdate orthogonal_grad(const GradientUpdate& original, Rng& rng);

// Rescales each layer of `orth` to the norm of the matching original layer.
// A zero layer on either side yields a zero output layer.
GradientUpdate normalize_grad(const GradientUpdate& orth, const GradientUpdate& original);

// Full local update: project, normalize, test-apply, and select across
// config.trials candidates. The original gradient is the mean-loss gradient
// of the batch, matching the step the server would apply. Trial t draws from
// key.child(t), so outcomes are independent of evaluation order.
CensorResult censor_local_update(const Model& model, const Batch& batch,
                                 const CensorConfig& config, const RngKey& key);

// min(1, exp(M*(loss_cur - loss_prop) + log_prior_prop - log_prior_cur)).
// Reference acceptance rule for the rejection-sampling view; the main path
// above never calls it.
double mh_accept_probability(double loss_current, double loss_proposed,
                             double log_prior_current, double log_prior_proposed,
                             double temperature);

GradientUpdate noise_defense(const GradientUpdate& g, double sigma, Rng& rng);

// Per-layer rescale to at most `bound`: g_l * min(1, bound / ||g_l||).
GradientUpdate clip_defense(const GradientUpdate& g, double bound);

// Keeps the ceil(keep_ratio * n) largest-magnitude entries. Ranking spans
// the flattened update by default; per_layer ranks within each tensor.
// Magnitude ties keep the lowest flat index.
GradientUpdate topk_defense(const GradientUpdate& g, double keep_ratio, bool per_layer = false);

// Zeroes the ceil(prune_ratio * n) weight-gradient entries of the defended
// layer with the highest leakage score |gradient| * |input activation|.
GradientUpdate soteria_mask_defense(const GradientUpdate& g, const Model& model,
                                    const Batch& batch, double prune_ratio,
                                    const std::string& defended_layer);

}  // namespace gslab
