#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <string>
#include <vector>

#include "promptseg/geometry.hpp"
#include "promptseg/volume.hpp"

namespace promptseg {

/// Cache-line aligned allocation. Vectorised kernels split their work by
/// buffer alignment, so a fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using RealBuffer = std::vector<double, AlignedAllocator<double>>;

enum class Head {
  /// Mean over all spatial positions; accepts any input extent.
  GlobalAveragePool,
  /// Flattened feature map; input extent fixed to NetworkSpec::input_size.
  Flatten,
};

std::string to_string(Head head);
Head head_from_string(const std::string& name);

/// Three 3x3x3 same-padded conv layers, each followed by ReLU and a 2x2x2
/// ceil-mode max pool, then dense(hidden) + ReLU and dense(1) + sigmoid.
struct NetworkSpec {
  std::vector<int> conv_filters{16, 32, 64};
  int input_channels = 2;
  Head head = Head::GlobalAveragePool;
  /// Only meaningful for Head::Flatten.
  Size3 input_size{10, 10, 6};
  int hidden_width = 64;

  static NetworkSpec weakly_supervised(int channels = 2);
  static NetworkSpec fully_supervised(Size3 crop, int channels = 2);

  /// Width of the vector entering the first dense layer.
  int feature_width() const;
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

/// Spatial extent after one ceil-mode 2x pool.
constexpr int pooled_extent(int n) noexcept { return (n + 1) / 2; }

struct Parameter {
  std::string name;
  std::vector<int> shape;
  RealBuffer values;
};

/// Same layout as Network::parameters(), holding d(loss)/d(parameter).
using Gradients = std::vector<RealBuffer>;

class Network {
 public:
  /// All parameters zero.
  explicit Network(NetworkSpec spec);

  /// Uniform fan-in initialisation: weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)),
  /// biases zero.
  static Network initialized(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  std::size_t parameter_count() const noexcept;

  Gradients zero_gradients() const;

  /// Pre-sigmoid output. Throws ShapeError on channel or extent mismatch.
  double logit(const Volume& input) const;
  /// Probability of ROI presence.
  double forward(const Volume& input) const;

  /// Adds weight * d(bce(sigmoid(logit), label))/d(theta) to `grads` and
  /// returns the unweighted per-sample loss.
  double accumulate_gradient(const Volume& input, int label, double weight,
                             Gradients& grads) const;

  bool operator==(const Network&) const;

 private:
  NetworkSpec spec_;
  std::vector<Parameter> params_;
};

double sigmoid(double z) noexcept;

}  // namespace promptseg
