#include "gslab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gslab/errors.hpp"
#include "gslab/tape.hpp"

namespace gslab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const AttackConfig& c) {
  if (c.iterations < 0) throw ContractError("attack: iterations must be >= 0");
  if (c.restarts < 1) throw ContractError("attack: restarts must be >= 1");
  if (c.step_size <= 0.0) throw ContractError("attack: step_size must be positive");
  if (c.tv_weight < 0.0) throw ContractError("attack: tv_weight must be >= 0");
  if (c.eot_samples < 0) throw ContractError("attack: eot_samples must be >= 0");
  if (c.latent_reg < 0.0) throw ContractError("attack: latent_reg must be >= 0");
}

struct Adam {
  double lr;
  double b1 = 0.9;
  double b2 = 0.999;
  double eps = 1e-8;
  Tensor m;
  Tensor v;
  int t = 0;

  explicit Adam(double lr_, const std::vector<int>& shape)
      : lr(lr_), m(Tensor::zeros(shape)), v(Tensor::zeros(shape)) {}

  void step(Tensor& x, const Tensor& g) {
    ++t;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const double gi = g.at(i);
      m.at(i) = b1 * m.at(i) + (1.0 - b1) * gi;
      v.at(i) = b2 * v.at(i) + (1.0 - b2) * gi * gi;
      x.at(i) -= lr * (m.at(i) / c1) / (std::sqrt(v.at(i) / c2) + eps);
    }
  }
};

Tensor flat_difference_matrix(int n) {
  Tensor d = Tensor::zeros({n - 1, n});
  for (int i = 0; i + 1 < n; ++i) {
    d.at(i, i) = -1.0;
    d.at(i, i + 1) = 1.0;
  }
  return d;
}

int exact_square_side(std::int64_t dim) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
  return static_cast<std::int64_t>(side) * side == dim ? side : 0;
}

// Total variation of the input row; 2-D differences when the pixel count is
// a perfect square, flat neighbor differences otherwise.
ad::Var tv_term(ad::Tape& tape, ad::Var x_row, int dim) {
  const int side = exact_square_side(dim);
  if (side >= 2) {
    ad::Var img = ad::reshape(x_row, {side, side});
    ad::Var dv = tape.leaf(flat_difference_matrix(side));
    ad::Var vert = ad::matmul(dv, img);
    ad::Var horz = ad::matmul(img, ad::transpose(dv));
    return ad::add(ad::sum(ad::abs(vert)), ad::sum(ad::abs(horz)));
  }
  if (dim >= 2) {
    ad::Var d = tape.leaf(flat_difference_matrix(dim));
    return ad::sum(ad::abs(ad::matmul(d, ad::reshape(x_row, {dim, 1}))));
  }
  return tape.leaf(Tensor::scalar(0.0));
}

// Batch loss of logits against either a hard label or a trainable soft label
// distribution softmax(label_logits).
ad::Var inner_loss(ad::Tape& tape, ad::Var logits, int hard_label, ad::Var* label_logits) {
  if (label_logits == nullptr) {
    const int labels[] = {hard_label};
    return ad::softmax_cross_entropy(logits, labels);
  }
  const int classes = tape.value(logits).cols();
  const Tensor& lab = tape.value(*label_logits);
  double mx = lab.at(0);
  for (int c = 1; c < classes; ++c) mx = std::max(mx, lab.at(c));
  ad::Var shift = tape.leaf(Tensor::full({classes}, mx));
  ad::Var e_row = ad::reshape(ad::exp(ad::sub(*label_logits, shift)), {1, classes});
  ad::Var soft_row = ad::div(e_row, ad::col_broadcast(ad::reduce_cols(e_row), classes));

  const Tensor& z = tape.value(logits);
  double zmax = z.at(0, 0);
  for (int c = 1; c < classes; ++c) zmax = std::max(zmax, z.at(0, c));
  ad::Var zm = tape.leaf(Tensor::vector({zmax}));
  ad::Var lse = ad::add(ad::log(ad::reduce_cols(ad::exp(ad::sub(logits, ad::col_broadcast(zm, classes))))), zm);
  ad::Var picked = ad::reduce_cols(ad::mul(logits, soft_row));
  return ad::sum(ad::sub(lse, picked));
}

struct BuiltObjective {
  ad::Var total;
  std::vector<ad::Var> model_params;
};

// distance(F(x_row), target) + tv_weight * TV(x_row) with every piece taped,
// so the caller can differentiate the result with respect to x_row (and any
// other leaves it planted upstream).
BuiltObjective build_objective(ad::Tape& tape, const Model& model, ad::Var x_row,
                               int hard_label, ad::Var* label_logits,
                               const GradientUpdate& target,
                               AttackConfig::Distance distance, double tv_weight) {
  BuiltObjective built;
  built.model_params = taped_parameters(tape, model, true);
  ad::Var logits = taped_logits(tape, model, built.model_params, x_row);
  ad::Var loss = inner_loss(tape, logits, hard_label, label_logits);
  std::vector<ad::Var> grads = tape.backward(loss, built.model_params);

  ad::Var dist = tape.leaf(Tensor::scalar(0.0));
  if (distance == AttackConfig::Distance::kNegCosine) {
    const double nv = l2_norm_flat(target);
    if (nv == 0.0) throw ContractError("attack objective: target gradient is zero");
    ad::Var dot_uv = tape.leaf(Tensor::scalar(0.0));
    ad::Var uu = tape.leaf(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < grads.size(); ++i) {
      ad::Var t = tape.leaf(target.entries[i].second);
      dot_uv = ad::add(dot_uv, ad::sum(ad::mul(grads[i], t)));
      uu = ad::add(uu, ad::sum(ad::mul(grads[i], grads[i])));
    }
    ad::Var one = tape.leaf(Tensor::scalar(1.0));
    dist = ad::sub(one, ad::div(dot_uv, ad::scale(ad::sqrt(uu), nv)));
  } else {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      ad::Var t = tape.leaf(target.entries[i].second);
      ad::Var d = ad::sub(grads[i], t);
      dist = ad::add(dist, ad::sum(ad::mul(d, d)));
    }
  }

  built.total = dist;
  if (tv_weight > 0.0) {
    const int dim = static_cast<int>(tape.value(x_row).numel());
    built.total = ad::add(built.total, ad::scale(tv_term(tape, x_row, dim), tv_weight));
  }
  return built;
}

Tensor sigmoid_plain(const Tensor& z) {
  Tensor out = z;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

ad::Var sigmoid_var(ad::Tape& tape, ad::Var z) {
  ad::Var ones = tape.leaf(Tensor::full(tape.value(z).shape(), 1.0));
  return ad::div(ones, ad::add(ones, ad::exp(ad::neg(z))));
}

}  // namespace

int infer_label(const GradientUpdate& g, const Model& model) {
  if (model.layers.empty()) throw ContractError("infer_label: model has no layers");
  const std::string name = model.layers.back().name + ".weight";
  const Tensor* wgrad = nullptr;
  for (const auto& [n, t] : g.entries)
    if (n == name) wgrad = &t;
  if (wgrad == nullptr)
    throw ShapeError("infer_label: update has no entry '" + name + "'");

  int best = 0;
  double best_sum = kInf;
  for (int r = 0; r < wgrad->rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < wgrad->cols(); ++c) s += wgrad->at(r, c);
    if (s < best_sum) {
      best_sum = s;
      best = r;
    }
  }
  return best;
}

double gradient_matching_loss(const Model& model, const Tensor& x, int y,
                              const GradientUpdate& g_target,
                              AttackConfig::Distance distance, double tv_weight) {
  if (x.numel() != model.input_dim)
    throw ShapeError("gradient_matching_loss: input has " + std::to_string(x.numel()) +
                     " pixels, model expects " + std::to_string(model.input_dim));
  ad::Tape tape;
  ad::Var x_row = tape.leaf(reshape(x, {1, model.input_dim}), false);
  BuiltObjective built =
      build_objective(tape, model, x_row, y, nullptr, g_target, distance, tv_weight);
  return tape.value(built.total).at(0);
}

Tensor gradient_matching_grad(const Model& model, const Tensor& x, int y,
                              const GradientUpdate& g_target,
                              AttackConfig::Distance distance, double tv_weight) {
  if (x.numel() != model.input_dim)
    throw ShapeError("gradient_matching_grad: input has " + std::to_string(x.numel()) +
                     " pixels, model expects " + std::to_string(model.input_dim));
  ad::Tape tape;
  ad::Var x_row = tape.leaf(reshape(x, {1, model.input_dim}), true);
  BuiltObjective built =
      build_objective(tape, model, x_row, y, nullptr, g_target, distance, tv_weight);
  const ad::Var wrt[] = {x_row};
  return reshape(tape.value(tape.backward(built.total, wrt)[0]), {model.input_dim});
}

namespace {

struct RestartOutcome {
  Tensor x;
  Tensor label_logits;
  double objective = kInf;
  bool aborted = false;
};

// One optimization run from a seeded start. Objective values are tracked
// best-so-far; the returned x is the best iterate seen, not the last.
RestartOutcome run_restart(const Model& model, const GradientUpdate& g_observed,
                           const AttackConfig& cfg, int hard_label, Rng& rng) {
  const int dim = model.input_dim;
  const int classes = model.num_classes;
  const bool joint = !cfg.infer_label;

  RestartOutcome out;
  Tensor x = Tensor::zeros({dim});
  for (double& v : x.values()) v = rng.normal();
  x = clamp01(x);
  Tensor lab = Tensor::zeros({classes});

  out.x = x;
  out.label_logits = lab;

  Adam opt_x(cfg.step_size, {dim});
  Adam opt_lab(cfg.step_size, {classes});

  auto evaluate_only = [&](const Tensor& xv, const Tensor& labv) {
    ad::Tape tape;
    ad::Var x_row = tape.leaf(reshape(xv, {1, dim}), false);
    ad::Var lab_leaf = tape.leaf(labv, false);
    BuiltObjective built = build_objective(tape, model, x_row, hard_label,
                                           joint ? &lab_leaf : nullptr, g_observed,
                                           cfg.distance, cfg.tv_weight);
    return tape.value(built.total).at(0);
  };

  if (cfg.iterations == 0) {
    out.objective = evaluate_only(x, lab);
    return out;
  }

  for (int it = 0; it < cfg.iterations; ++it) {
    ad::Tape tape;
    ad::Var x_row = tape.leaf(reshape(x, {1, dim}), true);
    ad::Var lab_leaf = tape.leaf(lab, true);
    BuiltObjective built = build_objective(tape, model, x_row, hard_label,
                                           joint ? &lab_leaf : nullptr, g_observed,
                                           cfg.distance, cfg.tv_weight);
    const double val = tape.value(built.total).at(0);
    if (!std::isfinite(val)) {
      out.aborted = true;
      return out;
    }
    if (val < out.objective) {
      out.objective = val;
      out.x = x;
      out.label_logits = lab;
    }

    std::vector<ad::Var> wrt{x_row};
    if (joint) wrt.push_back(lab_leaf);
    std::vector<ad::Var> outer = tape.backward(built.total, wrt);
    Tensor gx = reshape(tape.value(outer[0]), {dim});
    if (!gx.all_finite()) {
      out.aborted = true;
      return out;
    }
    if (cfg.signed_gradients) gx = sign(gx);
    opt_x.step(x, gx);
    x = clamp01(x);
    if (joint) {
      Tensor glab = tape.value(outer[1]);
      if (!glab.all_finite()) {
        out.aborted = true;
        return out;
      }
      opt_lab.step(lab, glab);
    }
  }

  const double final_val = evaluate_only(x, lab);
  if (std::isfinite(final_val) && final_val < out.objective) {
    out.objective = final_val;
    out.x = x;
    out.label_logits = lab;
  }
  return out;
}

}  // namespace

InversionResult invert_gradient(const Model& model, const GradientUpdate& g_observed,
                                const AttackConfig& config, const RngKey& key) {
  validate(config);
  if (!g_observed.all_finite())
    throw NumericalError("invert_gradient: observed gradient has non-finite values");

  const int hard_label = config.infer_label ? infer_label(g_observed, model) : -1;

  InversionResult res;
  res.inferred_label = hard_label;
  res.final_distance = kInf;
  res.reconstruction = Tensor::zeros({model.input_dim});

  Tensor best_lab;
  for (int r = 0; r < config.restarts; ++r) {
    Rng rng(key.child(static_cast<std::uint64_t>(r)));
    RestartOutcome outcome = run_restart(model, g_observed, config, hard_label, rng);
    if (outcome.aborted) {
      res.aborted_restarts.push_back(r);
      res.per_restart_distances.push_back(kInf);
      continue;
    }
    res.per_restart_distances.push_back(outcome.objective);
    if (outcome.objective < res.final_distance) {
      res.final_distance = outcome.objective;
      res.reconstruction = outcome.x;
      best_lab = outcome.label_logits;
    }
  }

  if (!config.infer_label && best_lab.numel() > 0) {
    int arg = 0;
    for (int c = 1; c < best_lab.numel(); ++c)
      if (best_lab.at(c) > best_lab.at(arg)) arg = c;
    res.inferred_label = arg;
  }
  return res;
}

GradientUpdate eot_estimate(const std::function<GradientUpdate(int)>& defense_sampler,
                            int samples) {
  if (samples < 1) throw ContractError("eot_estimate: samples must be >= 1");
  GradientUpdate mean = defense_sampler(0);
  for (int s = 1; s < samples; ++s) {
    GradientUpdate next = defense_sampler(s);
    if (!mean.same_layout(next))
      throw ShapeError("eot_estimate: sampler returned mismatched layouts");
    axpy(mean, 1.0, next);
  }
  scale_inplace(mean, 1.0 / samples);
  return mean;
}

Generator train_toy_generator(const std::vector<LabeledExample>& public_examples,
                              int latent_dim, int steps, std::uint64_t seed) {
  if (public_examples.empty())
    throw ContractError("train_toy_generator: empty public split");
  if (latent_dim < 2) throw ContractError("train_toy_generator: latent_dim must be >= 2");
  if (steps < 1) throw ContractError("train_toy_generator: steps must be >= 1");

  const int dim = static_cast<int>(public_examples[0].image.numel());
  const RngKey root = RngKey::root(seed);

  Model encoder = build_mlp(dim, {64}, latent_dim, root.child(1).state);
  Generator gen;
  gen.latent_dim = latent_dim;
  gen.decoder = build_mlp(latent_dim, {64}, dim, root.child(2).state);

  const int batch_size = std::min<int>(32, static_cast<int>(public_examples.size()));
  Rng pick(root.child(3));

  std::vector<Adam> opt;
  for (const Layer& l : encoder.layers) {
    opt.emplace_back(1e-2, l.weight.shape());
    opt.emplace_back(1e-2, l.bias.shape());
  }
  for (const Layer& l : gen.decoder.layers) {
    opt.emplace_back(1e-2, l.weight.shape());
    opt.emplace_back(1e-2, l.bias.shape());
  }

  for (int step = 0; step < steps; ++step) {
    Tensor xb = Tensor::zeros({batch_size, dim});
    for (int i = 0; i < batch_size; ++i) {
      const auto& ex = public_examples[static_cast<std::size_t>(
          pick.uniform_int(static_cast<int>(public_examples.size())))];
      for (int k = 0; k < dim; ++k) xb.at(i, k) = ex.image.at(k);
    }

    ad::Tape tape;
    std::vector<ad::Var> enc_params = taped_parameters(tape, encoder, true);
    std::vector<ad::Var> dec_params = taped_parameters(tape, gen.decoder, true);
    ad::Var x = tape.leaf(xb, false);
    ad::Var z = taped_logits(tape, encoder, enc_params, x);
    ad::Var recon = sigmoid_var(tape, taped_logits(tape, gen.decoder, dec_params, z));
    ad::Var d = ad::sub(recon, x);
    ad::Var loss = ad::scale(ad::sum(ad::mul(d, d)), 1.0 / (batch_size * dim));

    std::vector<ad::Var> wrt = enc_params;
    wrt.insert(wrt.end(), dec_params.begin(), dec_params.end());
    std::vector<ad::Var> grads = tape.backward(loss, wrt);

    std::size_t slot = 0;
    for (Layer& l : encoder.layers) {
      opt[slot].step(l.weight, tape.value(grads[slot]));
      ++slot;
      opt[slot].step(l.bias, tape.value(grads[slot]));
      ++slot;
    }
    for (Layer& l : gen.decoder.layers) {
      opt[slot].step(l.weight, tape.value(grads[slot]));
      ++slot;
      opt[slot].step(l.bias, tape.value(grads[slot]));
      ++slot;
    }
  }
  return gen;
}

Tensor generate(const Generator& gen, const Tensor& z) {
  if (z.numel() != gen.latent_dim)
    throw ShapeError("generate: latent has " + std::to_string(z.numel()) +
                     " entries, expected " + std::to_string(gen.latent_dim));
  Tensor row = reshape(z, {1, gen.latent_dim});
  return reshape(sigmoid_plain(forward_logits(gen.decoder, row)),
                 {static_cast<int>(gen.decoder.num_classes)});
}

InversionResult latent_invert(const Model& model, const GradientUpdate& g_observed,
                              const Generator& gen, const AttackConfig& config,
                              const RngKey& key) {
  validate(config);
  if (!g_observed.all_finite())
    throw NumericalError("latent_invert: observed gradient has non-finite values");
  const int hard_label = config.infer_label ? infer_label(g_observed, model) : -1;
  const int ldim = gen.latent_dim;

  InversionResult res;
  res.inferred_label = hard_label;
  res.final_distance = kInf;
  res.reconstruction = Tensor::zeros({model.input_dim});

  const bool joint = !config.infer_label;
  const int classes = model.num_classes;

  Tensor best_lab;
  for (int r = 0; r < config.restarts; ++r) {
    Rng rng(key.child(static_cast<std::uint64_t>(r)));
    Tensor z = Tensor::zeros({ldim});
    for (double& v : z.values()) v = rng.normal();
    Tensor lab = Tensor::zeros({classes});
    Adam opt(config.step_size, {ldim});
    Adam opt_lab(config.step_size, {classes});

    double best = kInf;
    Tensor best_z = z;
    Tensor rbest_lab = lab;
    bool aborted = false;

    auto objective = [&](const Tensor& zv, const Tensor& labv, bool with_grad, Tensor* gz,
                         Tensor* glab) {
      ad::Tape tape;
      ad::Var z_leaf = tape.leaf(reshape(zv, {1, ldim}), with_grad);
      ad::Var lab_leaf = tape.leaf(labv, with_grad);
      std::vector<ad::Var> dec_params = taped_parameters(tape, gen.decoder, false);
      ad::Var x_row = sigmoid_var(tape, taped_logits(tape, gen.decoder, dec_params, z_leaf));
      BuiltObjective built =
          build_objective(tape, model, x_row, hard_label, joint ? &lab_leaf : nullptr,
                          g_observed, config.distance, config.tv_weight);
      ad::Var reg = ad::scale(ad::sum(ad::mul(z_leaf, z_leaf)), config.latent_reg);
      ad::Var total = ad::add(built.total, reg);
      if (with_grad) {
        std::vector<ad::Var> wrt{z_leaf};
        if (joint) wrt.push_back(lab_leaf);
        std::vector<ad::Var> outer = tape.backward(total, wrt);
        *gz = reshape(tape.value(outer[0]), {ldim});
        if (joint) *glab = tape.value(outer[1]);
      }
      return tape.value(total).at(0);
    };

    const int iters = std::max(config.iterations, 0);
    if (iters == 0) best = objective(z, lab, false, nullptr, nullptr);
    for (int it = 0; it < iters; ++it) {
      Tensor gz;
      Tensor glab;
      const double val = objective(z, lab, true, &gz, &glab);
      if (!std::isfinite(val) || !gz.all_finite() || (joint && !glab.all_finite())) {
        aborted = true;
        break;
      }
      if (val < best) {
        best = val;
        best_z = z;
        rbest_lab = lab;
      }
      if (config.signed_gradients) gz = sign(gz);
      opt.step(z, gz);
      if (joint) opt_lab.step(lab, glab);
    }
    if (!aborted && iters > 0) {
      const double final_val = objective(z, lab, false, nullptr, nullptr);
      if (std::isfinite(final_val) && final_val < best) {
        best = final_val;
        best_z = z;
        rbest_lab = lab;
      }
    }

    if (aborted) {
      res.aborted_restarts.push_back(r);
      res.per_restart_distances.push_back(kInf);
      continue;
    }
    res.per_restart_distances.push_back(best);
    if (best < res.final_distance) {
      res.final_distance = best;
      res.reconstruction = clamp01(generate(gen, best_z));
      best_lab = rbest_lab;
    }
  }

  if (joint && best_lab.numel() > 0) {
    int arg = 0;
    for (int c = 1; c < best_lab.numel(); ++c)
      if (best_lab.at(c) > best_lab.at(arg)) arg = c;
    res.inferred_label = arg;
  }
  return res;
}

}  // namespace gslab
