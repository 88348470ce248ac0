#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "hiros/tensor/graph.hpp"
#include "hiros/tensor/tensor.hpp"

namespace hiros::tensor {

// Builds the op under test from graph variables bound to `inputs`.
using GradCheckOp = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Gradients smaller than this in magnitude are compared absolutely.
  double floor = 1e-7;
  std::uint64_t projection_seed = 7;
};

namespace detail {

// Reduces a non-scalar output to a scalar with a fixed random projection so
// every output element contributes to the checked gradient.
inline double projected(const Tensor& out, const std::vector<double>& proj) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * proj[i];
  return s;
}

}  // namespace detail

// Central finite differences against reverse-mode gradients. Returns the
// maximum relative error over every element of every input.
inline double grad_check(const GradCheckOp& op, std::vector<Tensor> inputs,
                         const GradCheckOptions& opt = {}) {
  std::vector<double> proj;
  auto evaluate = [&](const std::vector<Tensor>& in) {
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : in) vars.push_back(g.constant(t));
    return detail::projected(g.value(op(g, vars)), proj);
  };

  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.variable(t));
  const Var out = op(g, vars);
  const Tensor& y = g.value(out);
  std::mt19937_64 rng(opt.projection_seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  proj.resize(y.size());
  for (double& p : proj) p = u(rng);

  // scalar = sum(out * proj), recorded so backward can run on it.
  Tensor proj_t({y.size()}, proj);
  const Var self{g.size()};
  const Var loss = g.record(Tensor::scalar(detail::projected(y, proj)), true, [=](Graph& gr) {
    const double s = gr.grad(self)[0];
    Tensor& dy = gr.grad(out);
    for (std::size_t i = 0; i < proj_t.size(); ++i) dy[i] += s * proj_t[i];
  });
  g.backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = g.grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + opt.step;
      const double plus = evaluate(inputs);
      inputs[k][i] = orig - opt.step;
      const double minus = evaluate(inputs);
      inputs[k][i] = orig;
      const double numeric = (plus - minus) / (2.0 * opt.step);
      const double a = analytic[i];
      const double scale = std::max({std::abs(a), std::abs(numeric)});
      const double err = scale > opt.floor ? std::abs(a - numeric) / scale : std::abs(a - numeric);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace hiros::tensor
