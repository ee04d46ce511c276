#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dgp/autodiff.hpp"

namespace dgp {

struct GradientCheckOptions {
  /// Central-difference step.
  double step = 1e-6;
  /// Entries whose absolute error is at most this do not count towards the
  /// relative error.
  double atol = 0.0;
};

struct ParameterCheck {
  std::string name;
  std::size_t entries = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradientCheckReport {
  std::vector<ParameterCheck> parameters;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  Gradients analytic;
  Gradients numeric;

  bool passed(double rtol) const { return max_rel_error < rtol; }
};

/// Compares reverse-mode gradients of a scalar function with central
/// differences, entry by entry, for every bound parameter.
///
/// The relative error of an entry is |ad - fd| / max(|ad|, |fd|).
GradientCheckReport check_gradients(const TapeFunction& fn,
                                    const Bindings& params,
                                    const GradientCheckOptions& options = {});

}  // namespace dgp
