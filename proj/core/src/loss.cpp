#include "promptseg/loss.hpp"

#include <algorithm>
#include <cmath>

#include "promptseg/errors.hpp"

namespace promptseg {

double bce_loss(double p, int y) noexcept {
  const double q = std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  return y != 0 ? -std::log(q) : -std::log(1.0 - q);
}

double bce_mean(std::span<const double> p, std::span<const int> y) {
  if (p.size() != y.size() || p.empty()) {
    throw ValidationError("bce_mean needs equally sized, non-empty inputs");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += bce_loss(p[i], y[i]);
  return total / static_cast<double>(p.size());
}

}  // namespace promptseg
