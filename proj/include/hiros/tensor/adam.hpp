#pragma once

#include <cmath>
#include <span>

#include "hiros/tensor/tensor.hpp"

namespace hiros::tensor {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update. Each parameter keeps its own step count so
// parameters added later start with a fresh correction.
inline void adam_step(std::span<Parameter* const> params, const AdamOptions& opt = {}) {
  for (Parameter* p : params) {
    ++p->step_count;
    const double t = static_cast<double>(p->step_count);
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    double* w = p->value.raw();
    double* g = p->grad.raw();
    double* m = p->adam_m.raw();
    double* v = p->adam_v.raw();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      w[i] -= opt.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps);
      g[i] = 0.0;
    }
  }
}

}  // namespace hiros::tensor
