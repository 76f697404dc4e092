#pragma once

#include <span>

namespace promptseg {

inline constexpr double kProbabilityEpsilon = 1e-12;

/// -[y log p + (1 - y) log(1 - p)] with p clamped to [eps, 1 - eps].
double bce_loss(double p, int y) noexcept;

/// Mean per-sample BCE over paired probabilities and labels.
double bce_mean(std::span<const double> p, std::span<const int> y);

}  // namespace promptseg
