#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gslab/dataset.hpp"
#include "gslab/tape.hpp"
#include "gslab/tensor.hpp"
#include "gslab/update.hpp"

namespace gslab {

// Fully-connected layer; weight is [out,in], so row i feeds class/unit i.
struct Layer {
  std::string name;
  Tensor weight;
  Tensor bias;
};

// Feed-forward classifier: relu on every hidden layer, a bare FC classifier
// on top. Parameter layout order (weight then bias per layer) is the layout
// of every GradientUpdate derived from this model.
struct Model {
  int input_dim = 0;
  int num_classes = 0;
  std::vector<Layer> layers;

  // Gradient (or parameter) container matching this model's layout.
  GradientUpdate zero_update() const;
  GradientUpdate parameters_as_update() const;
  std::int64_t num_parameters() const;
};

// Gaussian init scaled by 1/sqrt(fan_in); deterministic per seed.
Model build_mlp(int input_dim, const std::vector<int>& hidden_dims, int num_classes,
                std::uint64_t seed);

struct Batch {
  Tensor x;              // [B, input_dim]
  std::vector<int> y;    // B labels
  int size() const { return static_cast<int>(y.size()); }
};

Batch make_batch(std::span<const LabeledExample> examples);
Batch make_batch(const std::vector<LabeledExample>& examples);

// Plain forward, no recording.
Tensor forward_logits(const Model& m, const Tensor& x);
// Forward that also returns each layer's input (post-activation of the
// previous layer); inputs[i] feeds layers[i].
Tensor forward_logits(const Model& m, const Tensor& x, std::vector<Tensor>* inputs);

// Mean cross-entropy over the batch, no recording.
double evaluate_loss(const Model& m, const Batch& batch);
double evaluate_loss(const Model& m, const std::vector<LabeledExample>& examples);
// Fraction of argmax-correct predictions; ties resolve to the lowest index.
double evaluate_accuracy(const Model& m, const std::vector<LabeledExample>& examples);

struct LossAndGrad {
  double mean_loss = 0.0;
  GradientUpdate grad;  // summed over the batch
};

// Batch-summed gradient; loss reported as the mean for logging.
LossAndGrad loss_and_grad(const Model& m, const Batch& batch);

// theta <- theta - c * g
void apply_update(Model& m, const GradientUpdate& g, double c);

// Taped forward pieces for attack code that differentiates through the
// gradient computation. `params` are leaves in layout order.
std::vector<ad::Var> taped_parameters(ad::Tape& tape, const Model& m, bool requires_grad);
ad::Var taped_logits(ad::Tape& tape, const Model& m, std::span<const ad::Var> params, ad::Var x);

}  // namespace gslab
