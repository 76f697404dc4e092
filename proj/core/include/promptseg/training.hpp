#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "promptseg/network.hpp"
#include "promptseg/volume.hpp"

namespace promptseg {

struct WeakItem {
  Volume volume;
  int label = 0;
};

struct CropItem {
  Crop crop;
  int label = 0;
};

using WeakDataset = std::vector<WeakItem>;
using CropDataset = std::vector<CropItem>;

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 200;
  int batch_size = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  /// Mean per-sample loss over the epoch's forward passes.
  double loss = 0.0;
  /// Fraction of the epoch's forward passes on the right side of 0.5.
  double accuracy = 0.0;
};

struct TrainResult {
  Network network;
  std::vector<EpochStats> history;
  /// Mean batch loss before each optimizer step.
  std::vector<double> step_losses;
};

/// A borrowed (input, label) pair.
struct Sample {
  const Volume* input = nullptr;
  int label = 0;
};

/// Minibatch Adam on the mean BCE. Deterministic given cfg.seed: the seed
/// drives initialisation and the per-epoch shuffle. Throws TrainingError on a
/// non-finite loss.
TrainResult train_classifier(std::span<const Sample> samples, const NetworkSpec& spec,
                             const TrainConfig& cfg);

/// Requires a global-average-pool head and both labels present.
TrainResult train_wsc(const WeakDataset& data, const NetworkSpec& spec, const TrainConfig& cfg);

/// Requires a flatten head whose input size matches every crop.
TrainResult train_fsc(const CropDataset& data, const NetworkSpec& spec, const TrainConfig& cfg);

double accuracy(const Network& net, std::span<const Sample> samples, double threshold = 0.5);
double accuracy(const Network& net, const WeakDataset& data);
double accuracy(const Network& net, const CropDataset& data);

std::vector<Sample> as_samples(const WeakDataset& data);
std::vector<Sample> as_samples(const CropDataset& data);

/// epoch,loss,accuracy
void write_history_csv(std::ostream& out, std::span<const EpochStats> history);
void write_history_csv(const std::filesystem::path& path, std::span<const EpochStats> history);

}  // namespace promptseg
