#pragma once

#include <vector>

#include "xsrank/numkernel.hpp"

namespace xsrank::nk {

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update to `params` given matching gradients.
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  double learning_rate() const noexcept { return lr_; }
  long steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace xsrank::nk
