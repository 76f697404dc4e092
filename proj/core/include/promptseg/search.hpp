#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promptseg/scorer.hpp"
#include "promptseg/volume.hpp"

namespace promptseg {

/// Spiral around the prompt: step t sits at radius t / scale and angle
/// 2*pi*t / steps_per_circle.
struct SpiralParams {
  double scale = 4.0;
  int steps_per_circle = 200;
  int steps = 80;

  void validate() const;
};

struct Offset3 {
  double w = 0.0;
  double h = 0.0;
  double d = 0.0;
};

enum class Strategy { Spiral, SlidingWindow, Random };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

struct SearchConfig {
  Size3 crop_size{10, 10, 6};
  double alpha = 0.25;
  double tau = 0.05;
  SpiralParams spiral{};
  int n_runs = 6;
  Strategy strategy = Strategy::Spiral;
  std::uint64_t seed = 0;

  static constexpr double kDefaultMaxRadius = 20.0;

  /// Sets steps and rescales so the outermost step sits at `max_radius`.
  void set_steps(int steps, double max_radius = kDefaultMaxRadius);
  /// steps / scale: furthest in-plane reach of an unjittered spiral.
  double max_radius() const { return spiral.steps / spiral.scale; }

  void validate() const;
};

/// Per-run variation within a multi-run search.
struct RunVariant {
  int index = 0;
  double angle_offset = 0.0;
  double scale = 4.0;
  std::uint64_t seed = 0;
};

/// Run k of n: angle offset 2*pi*k/n and scale jitter
/// scale * (1 + 0.1 * (k / (n - 1) - 0.5)); no jitter when n == 1.
RunVariant run_variant(const SearchConfig& config, int k, std::uint64_t stream = 0);

struct RunResult {
  int run_index = 0;
  std::vector<Index3> trajectory;
  std::vector<double> scores;
  std::vector<std::uint8_t> decisions;
  Mask positive_region;

  std::size_t positive_crops() const;
};

struct VoteMap {
  Size3 size{};
  std::vector<int> counts;
  int n_runs = 0;

  int at(int w, int h, int d) const {
    return counts[(static_cast<std::size_t>(d) * size.h + h) * size.w + w];
  }
};

/// Displacement of step t from the prompt: (r cos b, r sin b, 0) with
/// r = t / scale, b = 2*pi*t / steps_per_circle + angle_offset.
Offset3 spiral_offset(const SpiralParams& params, int t, double angle_offset = 0.0);

/// Crop centers visited by one run, in order. Spiral: prompt + rounded offset
/// for t = 0..T, clamped into the volume. Sliding window: grid at stride
/// floor(crop / 2) over the in-plane square of half-width floor(T / scale)
/// around the prompt and every depth, restricted to centers whose crop needs
/// no clamping, w fastest. Random: T + 1 uniform draws from that same box.
std::vector<Index3> plan_trajectory(Strategy strategy, Index3 prompt, const SearchConfig& config,
                                    Size3 volume, const RunVariant& variant);

/// alpha * f + (1 - alpha) * g. A scorer whose weight is exactly zero is not
/// evaluated.
double joint_score(const Crop& crop, const CropScorer& wsc, const CropScorer& fsc, double alpha);

/// 1 iff score > tau.
inline int threshold_score(double score, double tau) noexcept { return score > tau ? 1 : 0; }

RunResult run_search(const Volume& volume, Index3 prompt, const SearchConfig& config,
                     const CropScorer& wsc, const CropScorer& fsc,
                     const RunVariant& variant);

/// Convenience overload using run_variant(config, 0) with n treated as 1.
RunResult run_search(const Volume& volume, Index3 prompt, const SearchConfig& config,
                     const CropScorer& wsc, const CropScorer& fsc);

VoteMap count_votes(std::span<const RunResult> runs);

/// Voxel set iff covered by at least floor(n / 2) + 1 runs.
Mask majority_vote(std::span<const RunResult> runs);

struct SegmentDiagnostics {
  std::size_t crops_evaluated = 0;
  double wall_ms = 0.0;
  /// positive_crops[prompt][run]
  std::vector<std::vector<std::size_t>> positive_crops;
};

struct Segmentation {
  Mask mask;
  SegmentDiagnostics diagnostics;
};

/// Per prompt: n_runs searches (one for the sliding window, whose runs would be
/// identical), majority vote, then union across prompts. Throws PromptError
/// naming the first out-of-bounds prompt.
Segmentation segment(const Volume& volume, std::span<const Index3> prompts,
                     const SearchConfig& config, const CropScorer& wsc, const CropScorer& fsc);

}  // namespace promptseg
