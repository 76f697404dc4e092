#include "promptseg/gradient_check.hpp"

#include <cmath>

#include <fmt/format.h>

#include "promptseg/loss.hpp"

namespace promptseg {

std::string GradientCheckReport::describe() const {
  return fmt::format("{} over {} parameters; worst {}[{}]: analytic {:.6e} vs numeric {:.6e} "
                     "(relative error {:.3e})",
                     passed ? "passed" : "FAILED", checked, worst_parameter, worst_index,
                     worst_analytic, worst_numeric, max_relative_error);
}

GradientCheckReport gradient_check(const Network& net, const Volume& input, int label,
                                   double tolerance, double step, double floor) {
  Gradients analytic = net.zero_gradients();
  net.accumulate_gradient(input, label, 1.0, analytic);

  Network probe = net;
  auto loss_at = [&] { return bce_loss(probe.forward(input), label); };

  GradientCheckReport report;
  auto& params = probe.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].values.size(); ++i) {
      double& v = params[p].values[i];
      const double saved = v;
      v = saved + step;
      const double up = loss_at();
      v = saved - step;
      const double down = loss_at();
      v = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p][i];
      const double err = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
      ++report.checked;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = err;
        report.worst_parameter = params[p].name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace promptseg
