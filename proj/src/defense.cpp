#include "gslab/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gslab/errors.hpp"

namespace gslab {

namespace {

void validate(const CensorConfig& c) {
  if (c.trials < 1) throw ContractError("censor: trials must be >= 1");
  if (c.temperature < 0.0) throw ContractError("censor: temperature must be >= 0");
  if (c.perturbation_scale <= 0.0)
    throw ContractError("censor: perturbation_scale must be positive");
  if (c.source == CensorConfig::Source::kDecoy && c.decoy_examples.empty())
    throw ContractError("censor: decoy source selected but no decoy examples given");
}

Model applied_copy(const Model& m, const GradientUpdate& g, double lr) {
  Model out = m;
  apply_update(out, g, lr);
  return out;
}

}  // namespace

GradientUpdate sample_direction(const Model& model, const CensorConfig& config, Rng& rng) {
  if (config.source == CensorConfig::Source::kDecoy) {
    const auto& pool = config.decoy_examples;
    if (pool.empty()) throw ContractError("sample_direction: empty decoy pool");
    const int pick = rng.uniform_int(static_cast<int>(pool.size()));
    Batch decoy = make_batch(std::span<const LabeledExample>(&pool[static_cast<std::size_t>(pick)], 1));
    return loss_and_grad(model, decoy).grad;
  }
  GradientUpdate raw = model.zero_update();
  for (auto& [name, t] : raw.entries)
    for (double& v : t.values()) v = config.perturbation_scale * rng.normal();
  return raw;
}

GradientUpdate orthogonal_grad(const GradientUpdate& original, const GradientUpdate& raw) {
  if (!original.same_layout(raw))
    throw ShapeError("orthogonal_grad: direction layout does not match original");
  GradientUpdate out = raw;
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    const Tensor& gl = original.entries[i].second;
    Tensor& gr = out.entries[i].second;
    const double denom = dot(gl, gl);
    if (denom == 0.0) continue;
    axpy(gr, -dot(gr, gl) / denom, gl);
  }
  return out;
}

GradientUpdate orthogonal_grad(const GradientUpdate& original, Rng& rng) {
  GradientUpdate raw = zeros_like(original);
  for (auto& [name, t] : raw.entries)
    for (double& v : t.values()) v = rng.normal();
  return orthogonal_grad(original, raw);
}

GradientUpdate normalize_grad(const GradientUpdate& orth, const GradientUpdate& original) {
  if (!orth.same_layout(original))
    throw ShapeError("normalize_grad: layouts do not match");
  GradientUpdate out = orth;
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    Tensor& go = out.entries[i].second;
    const double no = l2_norm(go);
    const double nl = l2_norm(original.entries[i].second);
    if (no == 0.0 || nl == 0.0) {
      go = Tensor::zeros(go.shape());
      continue;
    }
    for (double& v : go.values()) v *= nl / no;
  }
  return out;
}

CensorResult censor_local_update(const Model& model, const Batch& batch,
                                 const CensorConfig& config, const RngKey& key) {
  validate(config);
  if (batch.size() < 1) throw ContractError("censor_local_update: empty batch");

  CensorResult res;
  GradientUpdate original = loss_and_grad(model, batch).grad;
  scale_inplace(original, 1.0 / batch.size());

  res.reference_loss =
      config.loss_reference == CensorConfig::LossReference::kCurrentModel
          ? evaluate_loss(model, batch)
          : evaluate_loss(applied_copy(model, original, config.learning_rate), batch);

  std::vector<GradientUpdate> candidates;
  candidates.reserve(static_cast<std::size_t>(config.trials));
  res.trial_losses.reserve(static_cast<std::size_t>(config.trials));
  for (int t = 0; t < config.trials; ++t) {
    Rng rng(key.child(static_cast<std::uint64_t>(t)));
    GradientUpdate raw = sample_direction(model, config, rng);
    GradientUpdate cand = normalize_grad(orthogonal_grad(original, raw), original);
    const double loss =
        evaluate_loss(applied_copy(model, cand, config.learning_rate), batch);
    res.trial_losses.push_back(loss);
    candidates.push_back(std::move(cand));
  }

  int chosen = -1;
  if (config.temperature == 0.0) {
    double best = res.reference_loss;
    for (int t = 0; t < config.trials; ++t) {
      if (res.trial_losses[static_cast<std::size_t>(t)] < best) {
        best = res.trial_losses[static_cast<std::size_t>(t)];
        chosen = t;
      }
    }
    if (chosen < 0 && config.fallback == CensorConfig::Fallback::kStrictPrivacy) {
      chosen = static_cast<int>(std::min_element(res.trial_losses.begin(),
                                                 res.trial_losses.end()) -
                                res.trial_losses.begin());
    }
  } else {
    // Cold-posterior draw: weights exp(-loss/M), stabilized around the
    // minimum so tiny temperatures do not underflow to all-zero weights.
    const double lmin = *std::min_element(res.trial_losses.begin(), res.trial_losses.end());
    std::vector<double> w(res.trial_losses.size());
    for (std::size_t t = 0; t < w.size(); ++t)
      w[t] = std::exp(-(res.trial_losses[t] - lmin) / config.temperature);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    Rng rng(key.child(0x73656c65637400ULL));
    double u = rng.uniform() * total;
    chosen = static_cast<int>(w.size()) - 1;
    for (std::size_t t = 0; t < w.size(); ++t) {
      u -= w[t];
      if (u <= 0.0) {
        chosen = static_cast<int>(t);
        break;
      }
    }
  }

  if (chosen < 0) {
    res.update = std::move(original);
    res.fallback = true;
    res.selected_loss = res.reference_loss;
    return res;
  }
  res.update = std::move(candidates[static_cast<std::size_t>(chosen)]);
  res.selected_trial = chosen;
  res.selected_loss = res.trial_losses[static_cast<std::size_t>(chosen)];
  res.beat_reference = res.selected_loss < res.reference_loss;
  return res;
}

double mh_accept_probability(double loss_current, double loss_proposed,
                             double log_prior_current, double log_prior_proposed,
                             double temperature) {
  if (temperature <= 0.0)
    throw ContractError("mh_accept_probability: temperature must be positive");
  if (!std::isfinite(loss_current) || !std::isfinite(loss_proposed) ||
      !std::isfinite(log_prior_current) || !std::isfinite(log_prior_proposed))
    throw NumericalError("mh_accept_probability: non-finite input");
  const double log_ratio = temperature * (loss_current - loss_proposed) +
                           log_prior_proposed - log_prior_current;
  return std::min(1.0, std::exp(log_ratio));
}

GradientUpdate noise_defense(const GradientUpdate& g, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ContractError("noise_defense: sigma must be >= 0");
  GradientUpdate out = g;
  if (sigma == 0.0) return out;
  for (auto& [name, t] : out.entries)
    for (double& v : t.values()) v += sigma * rng.normal();
  return out;
}

GradientUpdate clip_defense(const GradientUpdate& g, double bound) {
  if (bound <= 0.0) throw ContractError("clip_defense: bound must be positive");
  GradientUpdate out = g;
  for (auto& [name, t] : out.entries) {
    const double norm = l2_norm(t);
    if (norm > bound)
      for (double& v : t.values()) v *= bound / norm;
  }
  return out;
}

namespace {

// Flat indices of the k largest magnitudes; ties keep the lowest index.
std::vector<std::int64_t> top_magnitude_indices(const std::vector<double>& mags,
                                                std::int64_t k) {
  std::vector<std::int64_t> idx(mags.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
    return mags[static_cast<std::size_t>(a)] > mags[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace

GradientUpdate topk_defense(const GradientUpdate& g, double keep_ratio, bool per_layer) {
  if (keep_ratio <= 0.0 || keep_ratio > 1.0)
    throw ContractError("topk_defense: keep_ratio must lie in (0,1]");
  if (keep_ratio == 1.0) return g;

  GradientUpdate out = zeros_like(g);
  if (per_layer) {
    for (std::size_t e = 0; e < g.entries.size(); ++e) {
      const Tensor& src = g.entries[e].second;
      std::vector<double> mags(static_cast<std::size_t>(src.numel()));
      for (std::int64_t i = 0; i < src.numel(); ++i)
        mags[static_cast<std::size_t>(i)] = std::abs(src.at(i));
      const auto k = static_cast<std::int64_t>(
          std::ceil(keep_ratio * static_cast<double>(src.numel())));
      for (std::int64_t i : top_magnitude_indices(mags, k))
        out.entries[e].second.at(i) = src.at(i);
    }
    return out;
  }

  const std::int64_t n = g.total_numel();
  std::vector<double> mags(static_cast<std::size_t>(n));
  std::int64_t off = 0;
  for (const auto& [name, t] : g.entries)
    for (std::int64_t i = 0; i < t.numel(); ++i)
      mags[static_cast<std::size_t>(off++)] = std::abs(t.at(i));

  const auto k = static_cast<std::int64_t>(std::ceil(keep_ratio * static_cast<double>(n)));
  std::vector<char> keep(static_cast<std::size_t>(n), 0);
  for (std::int64_t i : top_magnitude_indices(mags, k)) keep[static_cast<std::size_t>(i)] = 1;

  off = 0;
  for (std::size_t e = 0; e < g.entries.size(); ++e) {
    const Tensor& src = g.entries[e].second;
    Tensor& dst = out.entries[e].second;
    for (std::int64_t i = 0; i < src.numel(); ++i, ++off)
      if (keep[static_cast<std::size_t>(off)]) dst.at(i) = src.at(i);
  }
  return out;
}

GradientUpdate soteria_mask_defense(const GradientUpdate& g, const Model& model,
                                    const Batch& batch, double prune_ratio,
                                    const std::string& defended_layer) {
  if (prune_ratio < 0.0 || prune_ratio >= 1.0)
    throw ContractError("soteria_mask_defense: prune_ratio must lie in [0,1)");
  if (prune_ratio == 0.0) return g;

  int layer_index = -1;
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (model.layers[i].name == defended_layer) layer_index = static_cast<int>(i);
  if (layer_index < 0)
    throw ContractError("soteria_mask_defense: no layer named '" + defended_layer + "'");

  const std::string weight_name = defended_layer + ".weight";
  int entry_index = -1;
  for (std::size_t i = 0; i < g.entries.size(); ++i)
    if (g.entries[i].first == weight_name) entry_index = static_cast<int>(i);
  if (entry_index < 0)
    throw ShapeError("soteria_mask_defense: update has no entry '" + weight_name + "'");

  std::vector<Tensor> inputs;
  forward_logits(model, batch.x, &inputs);
  const Tensor& acts = inputs[static_cast<std::size_t>(layer_index)];

  const Tensor& wgrad_shape = g.entries[static_cast<std::size_t>(entry_index)].second;
  if (wgrad_shape.cols() != acts.cols())
    throw ShapeError("soteria_mask_defense: gradient " + shape_str(wgrad_shape.shape()) +
                     " does not match activations " + shape_str(acts.shape()));

  // Mean absolute input activation per column; dL/dW[o,i] pairs with input i.
  const int in_dim = acts.cols();
  std::vector<double> col(static_cast<std::size_t>(in_dim), 0.0);
  for (int r = 0; r < acts.rows(); ++r)
    for (int c = 0; c < in_dim; ++c) col[static_cast<std::size_t>(c)] += std::abs(acts.at(r, c));
  for (double& v : col) v /= acts.rows();

  const Tensor& wgrad = g.entries[static_cast<std::size_t>(entry_index)].second;
  const std::int64_t n = wgrad.numel();
  std::vector<double> score(static_cast<std::size_t>(n));
  for (int o = 0; o < wgrad.rows(); ++o)
    for (int i = 0; i < wgrad.cols(); ++i)
      score[static_cast<std::size_t>(o) * static_cast<std::size_t>(in_dim) +
            static_cast<std::size_t>(i)] =
          std::abs(wgrad.at(o, i)) * col[static_cast<std::size_t>(i)];

  const auto k = static_cast<std::int64_t>(std::ceil(prune_ratio * static_cast<double>(n)));
  GradientUpdate out = g;
  Tensor& masked = out.entries[static_cast<std::size_t>(entry_index)].second;
  for (std::int64_t i : top_magnitude_indices(score, k)) masked.at(i) = 0.0;
  return out;
}

}  // namespace gslab
