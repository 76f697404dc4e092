#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "promptseg/network.hpp"
#include "promptseg/phantom.hpp"
#include "promptseg/search.hpp"
#include "promptseg/training.hpp"

namespace promptseg {

/// 2|A & B| / (|A| + |B|); 1 when both masks are empty.
double dice(const Mask& pred, const Mask& gt);

/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_stdev(std::span<const double> values);
double mean(std::span<const double> values);

struct ScorerPair {
  std::unique_ptr<CropScorer> wsc;
  std::unique_ptr<CropScorer> fsc;
};

/// Builds the scorers for one case, given its ground truth.
using ScorerFactory = std::function<ScorerPair(const Mask& gt)>;

/// f = g = ROI fraction of the case's ground truth.
ScorerFactory oracle_scorers();
/// Fixed networks, borrowed; they must outlive every use of the factory.
ScorerFactory network_scorers(const Network& wsc, const Network& fsc);

struct PromptVariance {
  std::vector<Index3> prompts;
  std::vector<double> dice;
  double mean_dice = 0.0;
  double stdev = 0.0;
};

/// Segments once per prompt and summarises the Dice spread.
PromptVariance prompt_variance(const Volume& volume, const Mask& gt, const SearchConfig& config,
                               const CropScorer& wsc, const CropScorer& fsc,
                               std::span<const Index3> prompts);

/// Draws `samples` prompts uniformly (with replacement) from the ground-truth
/// voxels. Throws ValidationError if gt is empty or samples < 2.
PromptVariance prompt_variance(const Volume& volume, const Mask& gt, const SearchConfig& config,
                               const CropScorer& wsc, const CropScorer& fsc, int samples,
                               std::uint64_t seed);

struct EvalCase {
  const Volume* volume = nullptr;
  const Mask* gt = nullptr;
  std::vector<Index3> prompts;
};

struct CaseResult {
  std::string id;
  double dice = 0.0;
  std::size_t crops_evaluated = 0;
  double wall_ms = 0.0;
  Mask prediction;
};

struct EvalReport {
  std::vector<CaseResult> cases;
  double mean_dice = 0.0;
  double stdev_dice = 0.0;
  std::optional<double> prompt_stdev;
  std::string config_json;

  /// case,dice,crops_evaluated,wall_ms
  void write_csv(std::ostream& out, bool include_timing = true) const;
  std::string summary_json() const;
};

EvalReport evaluate_cases(std::span<const EvalCase> cases, const SearchConfig& config,
                          const ScorerFactory& scorers);

/// Lesion-bearing phantoms with a single prompt at the lesion centroid.
std::vector<EvalCase> centroid_cases(std::span<const Phantom> phantoms);

struct StrategyRow {
  Strategy strategy = Strategy::Spiral;
  double mean_ms = 0.0;
  double mean_dice = 0.0;
  double mean_crops = 0.0;
  std::vector<double> dice;
  std::vector<std::size_t> crops;
};

/// Runs every strategy over the same cases, scorers and config.
std::vector<StrategyRow> benchmark_strategies(std::span<const EvalCase> cases,
                                              const SearchConfig& config,
                                              const ScorerFactory& scorers);

/// strategy,mean_ms,mean_dice,mean_crops
void write_strategy_csv(std::ostream& out, std::span<const StrategyRow> rows,
                        bool include_timing = true);

std::string to_json(const SearchConfig& config);
std::string to_json(const PhantomConfig& config);

/// Everything an ablation needs to regenerate its data.
struct DatasetSpec {
  PhantomConfig phantom{};
  std::uint64_t seed = 1;
  /// Weak pool: half with lesions.
  int wsc_samples = 8;
  /// Lesion-bearing phantoms whose crops train the FSC.
  int fsc_samples = 24;
  int crops_per_image = 16;
  double crop_balance = 0.5;
  int heldout_weak = 8;
  int heldout_fsc = 8;
  int eval_cases = 10;
  TrainConfig wsc_train{1e-3, 0.9, 0.999, 1e-8, 200, 4, 11};
  TrainConfig fsc_train{1e-3, 0.9, 0.999, 1e-8, 40, 16, 12};

  std::string to_json() const;
};

struct AblationGrid {
  /// tau, alpha, T, mu, n, crop_size, wsc_samples, fsc_samples, strategy
  std::string axis;
  std::vector<std::string> values;

  void validate() const;
};

struct AblationRow {
  std::string axis;
  std::string value;
  std::optional<double> wsc_accuracy;
  std::optional<double> fsc_accuracy;
  double dice_mean = 0.0;
  double dice_stdev = 0.0;
  std::size_t crops_evaluated = 0;
  bool failed = false;
  std::string error;
  std::vector<Mask> predictions;
};

struct AblationReport {
  std::string axis;
  std::vector<AblationRow> rows;
  std::string base_config_json;
  std::string dataset_json;

  /// axis,value,wsc_accuracy,fsc_accuracy,dice_mean,dice_stdev,crops_evaluated,status
  void write_csv(std::ostream& out) const;
  std::string summary_json() const;
};

/// Classifiers a sweep may reuse for inference-only axes.
struct TrainedPair {
  Network wsc;
  Network fsc;
  double wsc_accuracy = 0.0;
  double fsc_accuracy = 0.0;
};

/// Trains both classifiers from `dataset` (weak pool of `wsc_samples`,
/// crops from `fsc_samples` lesion phantoms) and measures held-out accuracy.
TrainedPair train_pair(const DatasetSpec& dataset, Size3 crop_size);

/// Data-budget axes (wsc_samples, fsc_samples) and crop_size retrain; the
/// others reuse `fixed` (trained from `dataset` when absent). A grid point that
/// throws becomes a failed row. Throws ValidationError on an empty grid.
AblationReport run_ablation(const AblationGrid& grid, const SearchConfig& base,
                            const DatasetSpec& dataset,
                            const TrainedPair* fixed = nullptr);

/// Writes ablation_<axis>_<timestamp>.csv and .json into `dir`; returns the CSV path.
std::filesystem::path write_ablation_report(const AblationReport& report,
                                            const std::filesystem::path& dir,
                                            const std::string& timestamp);

}  // namespace promptseg
