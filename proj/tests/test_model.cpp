#include "doctest.h"

#include <cmath>
#include <vector>

#include "gslab/errors.hpp"
#include "gslab/model.hpp"
#include "gslab/rng.hpp"

using namespace gslab;

namespace {

// Raw-loop reference for the batch-summed loss; shares no code with the
// taped path under test.
double raw_sum_loss(const Model& m, const Batch& b) {
  const int batch = b.size();
  double total = 0.0;
  for (int r = 0; r < batch; ++r) {
    std::vector<double> h(static_cast<std::size_t>(m.input_dim));
    for (int i = 0; i < m.input_dim; ++i) h[static_cast<std::size_t>(i)] = b.x.at(r, i);
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      const Layer& l = m.layers[li];
      const int out = l.weight.rows();
      const int in = l.weight.cols();
      std::vector<double> z(static_cast<std::size_t>(out));
      for (int o = 0; o < out; ++o) {
        double acc = l.bias.at(o);
        for (int i = 0; i < in; ++i) acc += l.weight.at(o, i) * h[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(o)] =
            (li + 1 < m.layers.size() && acc < 0.0) ? 0.0 : acc;
      }
      h = std::move(z);
    }
    double mx = h[0];
    for (double v : h) mx = std::max(mx, v);
    double se = 0.0;
    for (double v : h) se += std::exp(v - mx);
    total += std::log(se) + mx - h[static_cast<std::size_t>(b.y[static_cast<std::size_t>(r)])];
  }
  return total;
}

Batch random_batch(int n, int dim, int classes, std::uint64_t seed) {
  Rng rng(RngKey::root(seed));
  Batch b;
  b.x = Tensor::zeros({n, dim});
  for (double& v : b.x.values()) v = rng.uniform();
  for (int i = 0; i < n; ++i) b.y.push_back(rng.uniform_int(classes));
  return b;
}

}  // namespace

TEST_CASE("build_mlp is deterministic and shaped as requested") {
  Model a = build_mlp(64, {32}, 10, 1);
  Model b = build_mlp(64, {32}, 10, 1);
  REQUIRE(a.layers.size() == 2);
  CHECK(a.layers[0].name == "fc1");
  CHECK(a.layers[1].name == "fc2");
  CHECK(a.layers[0].weight.rows() == 32);
  CHECK(a.layers[0].weight.cols() == 64);
  CHECK(a.layers[1].weight.rows() == 10);
  CHECK(a.parameters_as_update().bitwise_equal(b.parameters_as_update()));

  Model c = build_mlp(64, {32}, 10, 2);
  CHECK_FALSE(a.parameters_as_update().bitwise_equal(c.parameters_as_update()));

  Model deep = build_mlp(8, {16, 12, 6}, 3, 0);
  CHECK(deep.layers.size() == 4);

  CHECK_THROWS_AS(build_mlp(0, {4}, 2, 0), ContractError);
  CHECK_THROWS_AS(build_mlp(4, {0}, 2, 0), ContractError);
  CHECK_THROWS_AS(build_mlp(4, {4}, 1, 0), ContractError);
}

TEST_CASE("hidden activations are non-negative") {
  Model m = build_mlp(64, {32, 16}, 10, 3);
  Batch b = random_batch(5, 64, 10, 9);
  std::vector<Tensor> inputs;
  forward_logits(m, b.x, &inputs);
  REQUIRE(inputs.size() == 3);
  // inputs[i] feeds layer i; every layer after the first sees post-relu data.
  for (std::size_t i = 1; i < inputs.size(); ++i)
    for (int k = 0; k < inputs[i].numel(); ++k) CHECK(inputs[i].at(k) >= 0.0);
}

TEST_CASE("duplicated example doubles the summed gradient exactly") {
  Model m = build_mlp(6, {5}, 3, 4);
  Batch once = random_batch(1, 6, 3, 12);
  Batch twice;
  twice.x = Tensor::zeros({2, 6});
  for (int i = 0; i < 6; ++i) {
    twice.x.at(0, i) = once.x.at(0, i);
    twice.x.at(1, i) = once.x.at(0, i);
  }
  twice.y = {once.y[0], once.y[0]};

  GradientUpdate g1 = loss_and_grad(m, once).grad;
  GradientUpdate g2 = loss_and_grad(m, twice).grad;
  scale_inplace(g1, 2.0);
  CHECK(g1.bitwise_equal(g2));
}

TEST_CASE("zero final layer gives uniform loss ln C") {
  Model m = build_mlp(8, {6}, 5, 7);
  for (double& v : m.layers.back().weight.values()) v = 0.0;
  for (double& v : m.layers.back().bias.values()) v = 0.0;
  Batch b = random_batch(3, 8, 5, 21);
  CHECK(evaluate_loss(m, b) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("loss_and_grad matches finite differences on every parameter") {
  Model m = build_mlp(6, {5}, 3, 0);
  Batch b = random_batch(2, 6, 3, 0);

  LossAndGrad lg = loss_and_grad(m, b);
  CHECK(lg.mean_loss == doctest::Approx(raw_sum_loss(m, b) / b.size()).epsilon(1e-10));

  const double h = 1e-5;
  double worst = 0.0;
  double scale = 1e-8;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    for (int part = 0; part < 2; ++part) {
      const Tensor& got = lg.grad.entries[2 * li + static_cast<std::size_t>(part)].second;
      Tensor& target = part == 0 ? m.layers[li].weight : m.layers[li].bias;
      for (int i = 0; i < target.numel(); ++i) {
        const double keep = target.at(i);
        target.at(i) = keep + h;
        const double up = raw_sum_loss(m, b);
        target.at(i) = keep - h;
        const double dn = raw_sum_loss(m, b);
        target.at(i) = keep;
        const double want = (up - dn) / (2.0 * h);
        scale = std::max(scale, std::abs(want));
        worst = std::max(worst, std::abs(got.at(i) - want));
      }
    }
  }
  CHECK(worst / scale < 1e-4);
}

TEST_CASE("apply_update moves parameters against the gradient") {
  Model m = build_mlp(4, {3}, 2, 5);
  const double w0 = m.layers[0].weight.at(0);
  GradientUpdate g = m.zero_update();
  g.entries[0].second.at(0) = 2.0;
  apply_update(m, g, 0.25);
  CHECK(m.layers[0].weight.at(0) == doctest::Approx(w0 - 0.5).epsilon(1e-15));

  GradientUpdate wrong = m.zero_update();
  wrong.entries.pop_back();
  CHECK_THROWS_AS(apply_update(m, wrong, 1.0), ShapeError);
}

TEST_CASE("accuracy counts argmax hits") {
  Model m = build_mlp(2, {}, 2, 0);
  m.layers[0].weight = Tensor::matrix(2, 2, {1, 0, 0, 1});
  m.layers[0].bias = Tensor::vector({0, 0});
  std::vector<LabeledExample> ex;
  ex.push_back({Tensor::vector({0.9, 0.1}), 0});
  ex.push_back({Tensor::vector({0.2, 0.8}), 1});
  ex.push_back({Tensor::vector({0.7, 0.3}), 1});
  CHECK(evaluate_accuracy(m, ex) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("make_batch validates shapes") {
  std::vector<LabeledExample> ex;
  ex.push_back({Tensor::vector({0.1, 0.2}), 0});
  ex.push_back({Tensor::vector({0.1, 0.2, 0.3}), 1});
  CHECK_THROWS_AS(make_batch(ex), ShapeError);
  std::vector<LabeledExample> none;
  CHECK_THROWS_AS(make_batch(none), ContractError);
}
