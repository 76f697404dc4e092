#include "promptseg/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "promptseg/errors.hpp"
#include "promptseg/rng.hpp"

namespace promptseg {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning rate must be finite and >= 0");
  }
  if (epochs < 1 || batch_size < 1) throw ValidationError("epochs and batch size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_epsilon > 0.0)) {
    throw ValidationError("Adam constants out of range");
  }
}

namespace {

class Adam {
 public:
  Adam(const Network& net, const TrainConfig& cfg)
      : cfg_(cfg), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

  void step(Network& net, const Gradients& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
    auto& params = net.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& values = params[p].values;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = grads[p][i];
        double& m = m_[p][i];
        double& v = v_[p][i];
        m = cfg_.adam_beta1 * m + (1.0 - cfg_.adam_beta1) * g;
        v = cfg_.adam_beta2 * v + (1.0 - cfg_.adam_beta2) * g * g;
        values[i] -= cfg_.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg_.adam_epsilon);
      }
    }
  }

 private:
  TrainConfig cfg_;
  Gradients m_;
  Gradients v_;
  int t_ = 0;
};

}  // namespace

TrainResult train_classifier(std::span<const Sample> samples, const NetworkSpec& spec,
                             const TrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw ValidationError("training set is empty");

  TrainResult result{Network::initialized(spec, derive_seed(cfg.seed, 1)), {}, {}};
  Network& net = result.network;
  Adam adam(net, cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, 2));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double weight = 1.0 / static_cast<double>(end - start);
      Gradients grads = net.zero_gradients();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = samples[order[k]];
        const double loss = net.accumulate_gradient(*s.input, s.label, weight, grads);
        if (!std::isfinite(loss)) {
          throw TrainingError(fmt::format("non-finite loss at epoch {}, sample {}", epoch, order[k]));
        }
        batch_loss += loss;
        // loss < ln 2 iff the prediction is on the label's side of 0.5
        if (loss < std::log(2.0)) ++correct;
      }
      epoch_loss += batch_loss;
      result.step_losses.push_back(batch_loss * weight);
      adam.step(net, grads);
    }
    const auto n = static_cast<double>(order.size());
    result.history.push_back({epoch, epoch_loss / n, static_cast<double>(correct) / n});
  }
  return result;
}

std::vector<Sample> as_samples(const WeakDataset& data) {
  std::vector<Sample> out;
  out.reserve(data.size());
  for (const auto& item : data) out.push_back({&item.volume, item.label});
  return out;
}

std::vector<Sample> as_samples(const CropDataset& data) {
  std::vector<Sample> out;
  out.reserve(data.size());
  for (const auto& item : data) out.push_back({&item.crop.data, item.label});
  return out;
}

TrainResult train_wsc(const WeakDataset& data, const NetworkSpec& spec, const TrainConfig& cfg) {
  if (spec.head != Head::GlobalAveragePool) {
    throw ValidationError("weakly-supervised classifier needs a global-average-pool head");
  }
  const bool has_pos = std::any_of(data.begin(), data.end(), [](const WeakItem& i) { return i.label == 1; });
  const bool has_neg = std::any_of(data.begin(), data.end(), [](const WeakItem& i) { return i.label == 0; });
  if (!has_pos || !has_neg) throw ValidationError("weak dataset needs both labels");
  const auto samples = as_samples(data);
  return train_classifier(samples, spec, cfg);
}

TrainResult train_fsc(const CropDataset& data, const NetworkSpec& spec, const TrainConfig& cfg) {
  if (spec.head != Head::Flatten) {
    throw ValidationError("fully-supervised classifier needs a flatten head");
  }
  for (const auto& item : data) {
    if (item.crop.data.size() != spec.input_size) {
      throw ShapeError(fmt::format("crop {} does not match FSC input {}",
                                   to_string(item.crop.data.size()), to_string(spec.input_size)));
    }
  }
  const auto samples = as_samples(data);
  return train_classifier(samples, spec, cfg);
}

double accuracy(const Network& net, std::span<const Sample> samples, double threshold) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const int predicted = net.forward(*s.input) > threshold ? 1 : 0;
    if (predicted == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double accuracy(const Network& net, const WeakDataset& data) {
  const auto s = as_samples(data);
  return accuracy(net, s);
}

double accuracy(const Network& net, const CropDataset& data) {
  const auto s = as_samples(data);
  return accuracy(net, s);
}

void write_history_csv(std::ostream& out, std::span<const EpochStats> history) {
  out << "epoch,loss,accuracy\n";
  for (const auto& e : history) fmt::print(out, "{},{:.9f},{:.6f}\n", e.epoch, e.loss, e.accuracy);
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochStats> history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_history_csv(out, history);
}

}  // namespace promptseg
