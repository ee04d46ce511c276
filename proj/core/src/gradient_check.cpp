#include "dgp/gradient_check.hpp"

#include <algorithm>
#include <cmath>

namespace dgp {

GradientCheckReport check_gradients(const TapeFunction& fn,
                                    const Bindings& params,
                                    const GradientCheckOptions& options) {
  GradientCheckReport report;
  report.analytic = value_and_gradients(fn, params).gradients;

  Bindings probe = params;
  for (const auto& [name, value] : params) {
    ParameterCheck check;
    check.name = name;
    check.entries = value.size();
    Tensor numeric(value.shape());
    const Tensor& analytic = report.analytic.at(name);
    Tensor& slot = probe.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double x = value[i];
      slot[i] = x + options.step;
      const double up = forward(fn, probe).item();
      slot[i] = x - options.step;
      const double down = forward(fn, probe).item();
      slot[i] = x;
      numeric[i] = (up - down) / (2.0 * options.step);

      const double abs_err = std::abs(analytic[i] - numeric[i]);
      const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
      const double rel_err =
          abs_err <= options.atol || scale == 0.0 ? 0.0 : abs_err / scale;
      if (abs_err > check.max_abs_error) check.max_abs_error = abs_err;
      if (rel_err > check.max_rel_error) {
        check.max_rel_error = rel_err;
        check.worst_index = i;
      }
    }
    report.max_abs_error = std::max(report.max_abs_error, check.max_abs_error);
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.numeric.emplace(name, std::move(numeric));
    report.parameters.push_back(std::move(check));
  }
  return report;
}

}  // namespace dgp
