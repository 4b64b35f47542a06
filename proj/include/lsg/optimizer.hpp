#pragma once

#include <span>
#include <string>
#include <vector>

#include "lsg/error.hpp"
#include "lsg/matrix.hpp"

namespace lsg {

/// Classical (heavy-ball) momentum SGD:
///   v <- momentum * v + grad
///   param <- param - lr * v
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum)
      : learning_rate_(learning_rate), momentum_(momentum) {
    if (!(learning_rate > 0.0)) throw ValueError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ValueError("momentum must lie in [0, 1)");
  }

  double learning_rate() const noexcept { return learning_rate_; }
  double momentum() const noexcept { return momentum_; }
  const std::vector<Matrix>& velocity() const noexcept { return velocity_; }

  /// Applies one update. Velocity buffers are created as zeros on first use;
  /// `lr_scale` multiplies the learning rate per parameter (empty = all 1).
  void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
            std::span<const double> lr_scale = {}) {
    if (params.size() != grads.size()) {
      throw ShapeError("sgd step: " + std::to_string(params.size()) + " params vs " +
                       std::to_string(grads.size()) + " grads");
    }
    if (!lr_scale.empty() && lr_scale.size() != params.size())
      throw ShapeError("sgd step: lr_scale length mismatch");
    if (velocity_.empty()) {
      velocity_.reserve(params.size());
      for (const Matrix* p : params) velocity_.emplace_back(p->rows(), p->cols());
    }
    if (velocity_.size() != params.size())
      throw ShapeError("sgd step: parameter count changed between steps");
    for (std::size_t k = 0; k < params.size(); ++k) {
      Matrix& p = *params[k];
      const Matrix& g = *grads[k];
      Matrix& v = velocity_[k];
      if (!p.same_shape(g) || !p.same_shape(v)) {
        throw ShapeError("sgd step: parameter " + std::to_string(k) + " is " +
                         p.shape_string() + ", grad " + g.shape_string());
      }
      const double lr = learning_rate_ * (lr_scale.empty() ? 1.0 : lr_scale[k]);
      auto pd = p.data();
      auto gd = g.data();
      auto vd = v.data();
      for (std::size_t i = 0; i < pd.size(); ++i) {
        vd[i] = momentum_ * vd[i] + gd[i];
        pd[i] -= lr * vd[i];
      }
    }
  }

 private:
  double learning_rate_;
  double momentum_;
  std::vector<Matrix> velocity_;
};

}  // namespace lsg
