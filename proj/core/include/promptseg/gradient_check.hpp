#pragma once

#include <cstddef>
#include <string>

#include "promptseg/network.hpp"

namespace promptseg {

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;

  std::string describe() const;
};

/// Compares the backpropagated gradient of the per-sample BCE against central
/// differences on every parameter. Relative error is
/// |a - n| / max(|a| + |n|, floor), with the floor absorbing round-off on
/// near-zero gradients.
GradientCheckReport gradient_check(const Network& net, const Volume& input, int label,
                                   double tolerance = 1e-5, double step = 1e-6,
                                   double floor = 1e-4);

}  // namespace promptseg
