#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "giplab/error.hpp"
#include "giplab/matrix.hpp"

namespace giplab {

struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// One bias-corrected Adam update. Moments are allocated on the first call
// and must keep their shapes afterwards.
inline void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
                      AdamState& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state tracks a different parameter set");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = *grads[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || m.rows() != p.rows() || m.cols() != p.cols())
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " is " + p.shape_str() +
                       ", gradient " + g.shape_str());
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g.data()[k];
      double& mk = m.data()[k];
      double& vk = v.data()[k];
      mk = state.beta1 * mk + (1.0 - state.beta1) * gk;
      vk = state.beta2 * vk + (1.0 - state.beta2) * gk * gk;
      p.data()[k] -= state.lr * (mk / c1) / (std::sqrt(vk / c2) + state.eps);
    }
  }
}

}  // namespace giplab
