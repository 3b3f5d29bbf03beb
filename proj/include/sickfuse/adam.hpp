#pragma once

#include <cstddef>
#include <vector>

#include "sickfuse/autodiff.hpp"

namespace sickfuse {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected moments. Holds one (m, v) pair per parameter.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options = {});

  /// Applies one update from the current gradients and increments the step counter.
  void step();
  void zero_grad();

  std::size_t steps() const noexcept { return t_; }
  const AdamOptions& options() const noexcept { return options_; }
  const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamOptions options_;
  std::size_t t_ = 0;
};

}  // namespace sickfuse
