#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "dgp/autodiff.hpp"
#include "dgp/model.hpp"

namespace dgp {

struct AdamState {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam descent step on every parameter that has an entry
/// in `grads`; parameters without one are left untouched.
void adam_step(std::span<const ParameterRef> params, const Gradients& grads,
               AdamState& state);

}  // namespace dgp
