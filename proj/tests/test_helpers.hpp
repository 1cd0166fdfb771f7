#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "softflow/nn.hpp"
#include "softflow/tensor.hpp"

namespace softflow::testing {

// Central finite differences over every named parameter of `params`.
// `loss` must evaluate the scalar objective at the current parameter values.
inline GradientMap finite_difference_gradients(std::vector<std::pair<std::string, Tensor*>> params,
                                               const std::function<double()>& loss,
                                               double eps = 1e-5) {
  GradientMap grads;
  for (auto& [name, tensor] : params) {
    Tensor g = Tensor::zeros(tensor->shape());
    for (size_t i = 0; i < tensor->values().size(); ++i) {
      const double saved = tensor->values()[i];
      tensor->values()[i] = saved + eps;
      const double up = loss();
      tensor->values()[i] = saved - eps;
      const double down = loss();
      tensor->values()[i] = saved;
      g.values()[i] = (up - down) / (2.0 * eps);
    }
    grads.emplace(name, std::move(g));
  }
  return grads;
}

// Relative error with a floor so FD roundoff noise on near-zero gradients
// does not dominate: |a - f| / max(|a| + |f|, 1e-3). When a second FD
// estimate at a different epsilon is supplied, coordinates where the two FD
// values disagree are skipped: there the objective is non-smooth (a relu
// kink sits inside the stencil) and FD itself is invalid. A wrong analytic
// gradient still fails on the smooth coordinates.
inline double max_relative_gradient_error(const GradientMap& analytic, const GradientMap& fd,
                                          const GradientMap* fd_coarse = nullptr) {
  double worst = 0.0;
  for (const auto& [name, g] : analytic) {
    const Tensor& f = fd.at(name);
    for (size_t i = 0; i < g.values().size(); ++i) {
      const double a = g.values()[i];
      const double b = f.values()[i];
      const double denom = std::max(std::abs(a) + std::abs(b), 1e-3);
      if (fd_coarse) {
        const double b2 = fd_coarse->at(name).values()[i];
        const double fd_spread = std::abs(b - b2) / std::max(std::abs(b) + std::abs(b2), 1e-3);
        if (fd_spread > 1e-3) continue;
      }
      worst = std::max(worst, std::abs(a - b) / denom);
    }
  }
  return worst;
}

inline std::vector<std::pair<std::string, Tensor*>> mlp_param_refs(MlpParams& mlp) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (size_t l = 0; l < mlp.weights.size(); ++l) {
    out.emplace_back("w" + std::to_string(l), &mlp.weights[l]);
    out.emplace_back("b" + std::to_string(l), &mlp.biases[l]);
  }
  return out;
}

}  // namespace softflow::testing
