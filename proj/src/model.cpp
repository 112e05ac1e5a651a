#include "gslab/model.hpp"

#include <algorithm>
#include <cmath>

#include "gslab/errors.hpp"
#include "gslab/rng.hpp"

namespace gslab {

GradientUpdate Model::zero_update() const {
  GradientUpdate u;
  u.entries.reserve(layers.size() * 2);
  for (const Layer& l : layers) {
    u.entries.emplace_back(l.name + ".weight", Tensor::zeros(l.weight.shape()));
    u.entries.emplace_back(l.name + ".bias", Tensor::zeros(l.bias.shape()));
  }
  return u;
}

GradientUpdate Model::parameters_as_update() const {
  GradientUpdate u;
  u.entries.reserve(layers.size() * 2);
  for (const Layer& l : layers) {
    u.entries.emplace_back(l.name + ".weight", l.weight);
    u.entries.emplace_back(l.name + ".bias", l.bias);
  }
  return u;
}

std::int64_t Model::num_parameters() const {
  std::int64_t n = 0;
  for (const Layer& l : layers) n += l.weight.numel() + l.bias.numel();
  return n;
}

Model build_mlp(int input_dim, const std::vector<int>& hidden_dims, int num_classes,
                std::uint64_t seed) {
  if (input_dim < 1) throw ContractError("build_mlp: input_dim must be positive");
  if (num_classes < 2) throw ContractError("build_mlp: need at least two classes");
  for (int h : hidden_dims)
    if (h < 1) throw ContractError("build_mlp: hidden dims must be positive");

  Model m;
  m.input_dim = input_dim;
  m.num_classes = num_classes;

  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(num_classes);

  const RngKey root = RngKey::root(seed);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int fan_in = dims[i];
    const int fan_out = dims[i + 1];
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng(root.child(0x6d6c7000 + static_cast<std::uint64_t>(i)));

    Layer l;
    l.name = "fc" + std::to_string(i + 1);
    l.weight = Tensor::zeros({fan_out, fan_in});
    for (double& w : l.weight.values()) w = s * rng.normal();
    l.bias = Tensor::zeros({fan_out});
    for (double& b : l.bias.values()) b = s * rng.normal();
    m.layers.push_back(std::move(l));
  }
  return m;
}

Batch make_batch(std::span<const LabeledExample> examples) {
  if (examples.empty()) throw ContractError("make_batch: empty example list");
  const auto dim = examples[0].image.numel();
  Batch b;
  b.x = Tensor::zeros({static_cast<int>(examples.size()), static_cast<int>(dim)});
  b.y.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const LabeledExample& ex = examples[i];
    if (ex.image.numel() != dim)
      throw ShapeError("make_batch: example " + std::to_string(i) + " has " +
                       std::to_string(ex.image.numel()) + " pixels, expected " +
                       std::to_string(dim));
    std::copy(ex.image.values().begin(), ex.image.values().end(),
              b.x.values().begin() + static_cast<std::ptrdiff_t>(i) * dim);
    b.y.push_back(ex.label);
  }
  return b;
}

Batch make_batch(const std::vector<LabeledExample>& examples) {
  return make_batch(std::span<const LabeledExample>(examples));
}

Tensor forward_logits(const Model& m, const Tensor& x) {
  return forward_logits(m, x, nullptr);
}

Tensor forward_logits(const Model& m, const Tensor& x, std::vector<Tensor>* inputs) {
  if (x.rank() != 2 || x.shape()[1] != m.input_dim)
    throw ShapeError("forward_logits: input must be [B," + std::to_string(m.input_dim) +
                     "], got " + shape_str(x.shape()));
  Tensor h = x;
  if (inputs) inputs->clear();
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (inputs) inputs->push_back(h);
    const Layer& l = m.layers[i];
    Tensor z = add(matmul(h, transpose(l.weight)), row_broadcast(l.bias, h.rows()));
    h = (i + 1 < m.layers.size()) ? relu(z) : std::move(z);
  }
  return h;
}

namespace {

double mean_cross_entropy(const Tensor& logits, const std::vector<int>& y) {
  const int batch = logits.rows();
  const int classes = logits.cols();
  if (batch != static_cast<int>(y.size()))
    throw ShapeError("cross_entropy: " + std::to_string(batch) + " logit rows vs " +
                     std::to_string(y.size()) + " labels");
  double total = 0.0;
  for (int r = 0; r < batch; ++r) {
    const int label = y[static_cast<std::size_t>(r)];
    if (label < 0 || label >= classes)
      throw ContractError("cross_entropy: label " + std::to_string(label) + " out of range");
    double mx = logits.at(r, 0);
    for (int c = 1; c < classes; ++c) mx = std::max(mx, logits.at(r, c));
    double se = 0.0;
    for (int c = 0; c < classes; ++c) se += std::exp(logits.at(r, c) - mx);
    total += std::log(se) + mx - logits.at(r, label);
  }
  return total / batch;
}

}  // namespace

double evaluate_loss(const Model& m, const Batch& batch) {
  return mean_cross_entropy(forward_logits(m, batch.x), batch.y);
}

double evaluate_loss(const Model& m, const std::vector<LabeledExample>& examples) {
  return evaluate_loss(m, make_batch(examples));
}

double evaluate_accuracy(const Model& m, const std::vector<LabeledExample>& examples) {
  if (examples.empty()) throw ContractError("evaluate_accuracy: empty example list");
  const Batch b = make_batch(examples);
  const Tensor logits = forward_logits(m, b.x);
  int correct = 0;
  for (int r = 0; r < logits.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    if (best == b.y[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / logits.rows();
}

std::vector<ad::Var> taped_parameters(ad::Tape& tape, const Model& m, bool requires_grad) {
  std::vector<ad::Var> params;
  params.reserve(m.layers.size() * 2);
  for (const Layer& l : m.layers) {
    params.push_back(tape.leaf(l.weight, requires_grad));
    params.push_back(tape.leaf(l.bias, requires_grad));
  }
  return params;
}

ad::Var taped_logits(ad::Tape& tape, const Model& m, std::span<const ad::Var> params,
                     ad::Var x) {
  if (params.size() != m.layers.size() * 2)
    throw ContractError("taped_logits: parameter count does not match model layout");
  const int batch = tape.value(x).rows();
  ad::Var h = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    ad::Var w = params[2 * i];
    ad::Var b = params[2 * i + 1];
    ad::Var z = ad::add(ad::matmul(h, ad::transpose(w)), ad::row_broadcast(b, batch));
    h = (i + 1 < m.layers.size()) ? ad::relu(z) : z;
  }
  return h;
}

LossAndGrad loss_and_grad(const Model& m, const Batch& batch) {
  ad::Tape tape;
  std::vector<ad::Var> params = taped_parameters(tape, m, true);
  ad::Var x = tape.leaf(batch.x, false);
  ad::Var logits = taped_logits(tape, m, params, x);
  ad::Var loss_sum = ad::softmax_cross_entropy(logits, batch.y);
  std::vector<ad::Var> grads = tape.backward(loss_sum, params);

  LossAndGrad out;
  out.mean_loss = tape.value(loss_sum).at(0) / batch.size();
  out.grad.entries.reserve(params.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    out.grad.entries.emplace_back(m.layers[i].name + ".weight", tape.value(grads[2 * i]));
    out.grad.entries.emplace_back(m.layers[i].name + ".bias", tape.value(grads[2 * i + 1]));
  }
  return out;
}

void apply_update(Model& m, const GradientUpdate& g, double c) {
  if (g.entries.size() != m.layers.size() * 2)
    throw ShapeError("apply_update: update layout does not match model");
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    Layer& l = m.layers[i];
    const Tensor& gw = g.entries[2 * i].second;
    const Tensor& gb = g.entries[2 * i + 1].second;
    check_same_shape(l.weight, gw, "apply_update");
    check_same_shape(l.bias, gb, "apply_update");
    axpy(l.weight, -c, gw);
    axpy(l.bias, -c, gb);
  }
}

}  // namespace gslab
