#include "promptseg/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "promptseg/errors.hpp"
#include "promptseg/rng.hpp"

namespace promptseg {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Spiral:
      return "spiral";
    case Strategy::SlidingWindow:
      return "sliding_window";
    case Strategy::Random:
      return "random";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "spiral") return Strategy::Spiral;
  if (name == "sliding_window" || name == "sliding") return Strategy::SlidingWindow;
  if (name == "random") return Strategy::Random;
  throw ValidationError("unknown strategy '" + name + "'");
}

void SpiralParams::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("spiral scale must be > 0");
  if (steps_per_circle < 1) throw ValidationError("steps per circle must be >= 1");
  if (steps < 1) throw ValidationError("spiral steps must be >= 1");
}

void SearchConfig::set_steps(int steps, double max_radius) {
  if (steps < 1 || !(max_radius > 0.0)) throw ValidationError("steps and radius must be positive");
  spiral.steps = steps;
  spiral.scale = steps / max_radius;
}

void SearchConfig::validate() const {
  spiral.validate();
  if (!crop_size.positive()) throw ValidationError("crop size must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0, 1]");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tau must be in [0, 1]");
  if (n_runs < 1) throw ValidationError("n_runs must be >= 1");
}

RunVariant run_variant(const SearchConfig& config, int k, std::uint64_t stream) {
  const int n = config.n_runs;
  RunVariant v;
  v.index = k;
  v.angle_offset = 2.0 * std::numbers::pi * k / n;
  v.scale = config.spiral.scale;
  if (n > 1) v.scale *= 1.0 + 0.1 * (static_cast<double>(k) / (n - 1) - 0.5);
  v.seed = derive_seed(derive_seed(config.seed, stream), static_cast<std::uint64_t>(k));
  return v;
}

std::size_t RunResult::positive_crops() const {
  return static_cast<std::size_t>(std::count(decisions.begin(), decisions.end(), std::uint8_t{1}));
}

Offset3 spiral_offset(const SpiralParams& params, int t, double angle_offset) {
  const double r = t / params.scale;
  const double beta = 2.0 * std::numbers::pi * (static_cast<double>(t) / params.steps_per_circle) + angle_offset;
  return {r * std::cos(beta), r * std::sin(beta), 0.0};
}

namespace {

struct Box {
  int lo[3];
  int hi[3];
};

// Reachable region of an unjittered spiral: in-plane square of half-width
// floor(T / s) around the prompt, all depths, intersected with the centers
// whose crops need no clamping (so no two grid crops coincide).
Box search_box(Index3 prompt, const SearchConfig& config, Size3 volume) {
  const int r = static_cast<int>(std::floor(config.max_radius()));
  const Size3 c = config.crop_size;
  const int lo_w = c.w / 2, lo_h = c.h / 2, lo_d = c.d / 2;
  const int hi_w = volume.w - c.w + c.w / 2;
  const int hi_h = volume.h - c.h + c.h / 2;
  const int hi_d = volume.d - c.d + c.d / 2;
  return {{std::clamp(prompt.w - r, lo_w, hi_w), std::clamp(prompt.h - r, lo_h, hi_h), lo_d},
          {std::clamp(prompt.w + r, lo_w, hi_w), std::clamp(prompt.h + r, lo_h, hi_h), hi_d}};
}

Index3 clamp_into(Index3 p, Size3 volume) {
  return {std::clamp(p.w, 0, volume.w - 1), std::clamp(p.h, 0, volume.h - 1),
          std::clamp(p.d, 0, volume.d - 1)};
}

}  // namespace

std::vector<Index3> plan_trajectory(Strategy strategy, Index3 prompt, const SearchConfig& config,
                                    Size3 volume, const RunVariant& variant) {
  config.validate();
  if (!volume.contains(prompt)) {
    throw PromptError(0, "prompt " + to_string(prompt) + " lies outside volume " + to_string(volume));
  }
  std::vector<Index3> centers;
  switch (strategy) {
    case Strategy::Spiral: {
      SpiralParams params = config.spiral;
      params.scale = variant.scale;
      centers.reserve(static_cast<std::size_t>(params.steps) + 1);
      for (int t = 0; t <= params.steps; ++t) {
        const Offset3 o = spiral_offset(params, t, variant.angle_offset);
        centers.push_back(clamp_into({prompt.w + static_cast<int>(std::round(o.w)),
                                      prompt.h + static_cast<int>(std::round(o.h)),
                                      prompt.d + static_cast<int>(std::round(o.d))},
                                     volume));
      }
      break;
    }
    case Strategy::SlidingWindow: {
      (void)crop_origin(volume, {config.crop_size, prompt});
      const Box box = search_box(prompt, config, volume);
      const int sw = std::max(1, config.crop_size.w / 2);
      const int sh = std::max(1, config.crop_size.h / 2);
      const int sd = std::max(1, config.crop_size.d / 2);
      for (int d = box.lo[2]; d <= box.hi[2]; d += sd) {
        for (int h = box.lo[1]; h <= box.hi[1]; h += sh) {
          for (int w = box.lo[0]; w <= box.hi[0]; w += sw) centers.push_back({w, h, d});
        }
      }
      break;
    }
    case Strategy::Random: {
      (void)crop_origin(volume, {config.crop_size, prompt});
      const Box box = search_box(prompt, config, volume);
      Rng rng(variant.seed);
      centers.reserve(static_cast<std::size_t>(config.spiral.steps) + 1);
      for (int t = 0; t <= config.spiral.steps; ++t) {
        const int w = rng.between(box.lo[0], box.hi[0]);
        const int h = rng.between(box.lo[1], box.hi[1]);
        const int d = rng.between(box.lo[2], box.hi[2]);
        centers.push_back({w, h, d});
      }
      break;
    }
  }
  return centers;
}

double joint_score(const Crop& crop, const CropScorer& wsc, const CropScorer& fsc, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0, 1]");
  if (alpha == 1.0) return wsc.score(crop);
  if (alpha == 0.0) return fsc.score(crop);
  return alpha * wsc.score(crop) + (1.0 - alpha) * fsc.score(crop);
}

RunResult run_search(const Volume& volume, Index3 prompt, const SearchConfig& config,
                     const CropScorer& wsc, const CropScorer& fsc, const RunVariant& variant) {
  RunResult run;
  run.run_index = variant.index;
  run.trajectory = plan_trajectory(config.strategy, prompt, config, volume.size(), variant);
  run.positive_region = Mask(volume.size());
  run.scores.reserve(run.trajectory.size());
  run.decisions.reserve(run.trajectory.size());
  for (const Index3& center : run.trajectory) {
    const Crop crop = extract_crop(volume, {config.crop_size, center});
    const double s = joint_score(crop, wsc, fsc, config.alpha);
    const int positive = threshold_score(s, config.tau);
    run.scores.push_back(s);
    run.decisions.push_back(static_cast<std::uint8_t>(positive));
    if (positive) run.positive_region.fill_box(crop.origin, config.crop_size);
  }
  return run;
}

RunResult run_search(const Volume& volume, Index3 prompt, const SearchConfig& config,
                     const CropScorer& wsc, const CropScorer& fsc) {
  SearchConfig single = config;
  single.n_runs = 1;
  return run_search(volume, prompt, config, wsc, fsc, run_variant(single, 0));
}

VoteMap count_votes(std::span<const RunResult> runs) {
  if (runs.empty()) throw ValidationError("majority vote over zero runs");
  VoteMap votes;
  votes.size = runs.front().positive_region.size();
  votes.n_runs = static_cast<int>(runs.size());
  votes.counts.assign(votes.size.voxels(), 0);
  for (const auto& run : runs) {
    if (run.positive_region.size() != votes.size) throw DimensionError("runs disagree on volume dims");
    const auto data = run.positive_region.data();
    for (std::size_t i = 0; i < data.size(); ++i) votes.counts[i] += data[i];
  }
  return votes;
}

Mask majority_vote(std::span<const RunResult> runs) {
  const VoteMap votes = count_votes(runs);
  const int needed = votes.n_runs / 2 + 1;
  std::vector<std::uint8_t> out(votes.counts.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = votes.counts[i] >= needed ? 1 : 0;
  return Mask(votes.size, std::move(out));
}

Segmentation segment(const Volume& volume, std::span<const Index3> prompts,
                     const SearchConfig& config, const CropScorer& wsc, const CropScorer& fsc) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  if (prompts.empty()) throw ValidationError("segment needs at least one prompt");
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (!volume.size().contains(prompts[i])) {
      throw PromptError(i, fmt::format("prompt {} at {} lies outside volume {}", i,
                                       to_string(prompts[i]), to_string(volume.size())));
    }
  }
  (void)crop_origin(volume.size(), {config.crop_size, {}});

  Segmentation out;
  out.mask = Mask(volume.size());
  const int runs_per_prompt = config.strategy == Strategy::SlidingWindow ? 1 : config.n_runs;
  SearchConfig effective = config;
  effective.n_runs = runs_per_prompt;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    std::vector<RunResult> runs;
    runs.reserve(static_cast<std::size_t>(runs_per_prompt));
    std::vector<std::size_t> positives;
    for (int k = 0; k < runs_per_prompt; ++k) {
      runs.push_back(run_search(volume, prompts[i], effective, wsc, fsc, run_variant(effective, k, i)));
      out.diagnostics.crops_evaluated += runs.back().trajectory.size();
      positives.push_back(runs.back().positive_crops());
    }
    out.mask |= majority_vote(runs);
    out.diagnostics.positive_crops.push_back(std::move(positives));
  }
  out.diagnostics.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace promptseg
