#include "promptseg/network.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <fmt/format.h>

#include "promptseg/errors.hpp"
#include "promptseg/loss.hpp"
#include "promptseg/rng.hpp"

namespace promptseg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

constexpr int kKernel = 3;
constexpr int kTaps = kKernel * kKernel * kKernel;
constexpr int kConvLayers = 3;

struct Tensor {
  int c = 0, d = 0, h = 0, w = 0;
  RealBuffer v;

  std::size_t spatial() const { return static_cast<std::size_t>(d) * h * w; }
};

// Rows are (ic, kd, kh, kw); columns are output positions (d, h, w). Zero padding 1.
void im2col(const Tensor& in, RealBuffer& col) {
  const std::size_t positions = in.spatial();
  col.assign(static_cast<std::size_t>(in.c) * kTaps * positions, 0.0);
  for (int ic = 0; ic < in.c; ++ic) {
    for (int kd = 0; kd < kKernel; ++kd) {
      for (int kh = 0; kh < kKernel; ++kh) {
        for (int kw = 0; kw < kKernel; ++kw) {
          const std::size_t row = ((static_cast<std::size_t>(ic) * kKernel + kd) * kKernel + kh) * kKernel + kw;
          double* dst = col.data() + row * positions;
          const int w0 = std::max(0, 1 - kw);
          const int w1 = std::min(in.w, in.w + 1 - kw);
          for (int d = 0; d < in.d; ++d) {
            const int sd = d + kd - 1;
            if (sd < 0 || sd >= in.d) continue;
            for (int h = 0; h < in.h; ++h) {
              const int sh = h + kh - 1;
              if (sh < 0 || sh >= in.h) continue;
              const double* src = in.v.data() + ((static_cast<std::size_t>(ic) * in.d + sd) * in.h + sh) * in.w + (kw - 1);
              double* out = dst + (static_cast<std::size_t>(d) * in.h + h) * in.w;
              for (int w = w0; w < w1; ++w) out[w] = src[w];
            }
          }
        }
      }
    }
  }
}

void col2im(const RealBuffer& col, Tensor& grad_in) {
  const std::size_t positions = grad_in.spatial();
  std::fill(grad_in.v.begin(), grad_in.v.end(), 0.0);
  for (int ic = 0; ic < grad_in.c; ++ic) {
    for (int kd = 0; kd < kKernel; ++kd) {
      for (int kh = 0; kh < kKernel; ++kh) {
        for (int kw = 0; kw < kKernel; ++kw) {
          const std::size_t row = ((static_cast<std::size_t>(ic) * kKernel + kd) * kKernel + kh) * kKernel + kw;
          const double* src = col.data() + row * positions;
          const int w0 = std::max(0, 1 - kw);
          const int w1 = std::min(grad_in.w, grad_in.w + 1 - kw);
          for (int d = 0; d < grad_in.d; ++d) {
            const int sd = d + kd - 1;
            if (sd < 0 || sd >= grad_in.d) continue;
            for (int h = 0; h < grad_in.h; ++h) {
              const int sh = h + kh - 1;
              if (sh < 0 || sh >= grad_in.h) continue;
              double* dst = grad_in.v.data() + ((static_cast<std::size_t>(ic) * grad_in.d + sd) * grad_in.h + sh) * grad_in.w + (kw - 1);
              const double* g = src + (static_cast<std::size_t>(d) * grad_in.h + h) * grad_in.w;
              for (int w = w0; w < w1; ++w) dst[w] += g[w];
            }
          }
        }
      }
    }
  }
}

// 2x2x2 max pool, ceil mode. argmax holds the flat input index of each winner;
// ties go to the first element in (d, h, w) scan order.
void max_pool(const Tensor& in, Tensor& out, std::vector<std::uint32_t>& argmax) {
  out.c = in.c;
  out.d = pooled_extent(in.d);
  out.h = pooled_extent(in.h);
  out.w = pooled_extent(in.w);
  out.v.assign(static_cast<std::size_t>(out.c) * out.spatial(), 0.0);
  argmax.assign(out.v.size(), 0);
  std::size_t k = 0;
  for (int c = 0; c < in.c; ++c) {
    for (int d = 0; d < out.d; ++d) {
      for (int h = 0; h < out.h; ++h) {
        for (int w = 0; w < out.w; ++w, ++k) {
          double best = -INFINITY;
          std::uint32_t best_i = 0;
          for (int zd = 2 * d; zd < std::min(2 * d + 2, in.d); ++zd) {
            for (int zh = 2 * h; zh < std::min(2 * h + 2, in.h); ++zh) {
              for (int zw = 2 * w; zw < std::min(2 * w + 2, in.w); ++zw) {
                const std::size_t i = ((static_cast<std::size_t>(c) * in.d + zd) * in.h + zh) * in.w + zw;
                if (in.v[i] > best) {
                  best = in.v[i];
                  best_i = static_cast<std::uint32_t>(i);
                }
              }
            }
          }
          out.v[k] = best;
          argmax[k] = best_i;
        }
      }
    }
  }
}

struct ConvTrace {
  Tensor input;
  RealBuffer col;
  Tensor activated;  // post-ReLU, pre-pool
  Tensor pooled;
  std::vector<std::uint32_t> argmax;
};

struct Trace {
  ConvTrace conv[kConvLayers];
  Vec features;
  Vec hidden;  // post-ReLU
  double logit = 0.0;
};

Tensor to_tensor(const Volume& v) {
  Tensor t;
  t.c = v.channels();
  t.d = v.size().d;
  t.h = v.size().h;
  t.w = v.size().w;
  t.v.assign(v.data().begin(), v.data().end());
  return t;
}

std::vector<Parameter> make_parameters(const NetworkSpec& spec) {
  std::vector<Parameter> params;
  int in = spec.input_channels;
  for (int l = 0; l < kConvLayers; ++l) {
    const int out = spec.conv_filters[static_cast<std::size_t>(l)];
    params.push_back({fmt::format("conv{}.weight", l + 1), {out, in, kKernel, kKernel, kKernel},
                      RealBuffer(static_cast<std::size_t>(out) * in * kTaps, 0.0)});
    params.push_back({fmt::format("conv{}.bias", l + 1), {out}, RealBuffer(static_cast<std::size_t>(out), 0.0)});
    in = out;
  }
  const int features = spec.feature_width();
  const int hidden = spec.hidden_width;
  params.push_back({"dense1.weight", {hidden, features},
                    RealBuffer(static_cast<std::size_t>(hidden) * features, 0.0)});
  params.push_back({"dense1.bias", {hidden}, RealBuffer(static_cast<std::size_t>(hidden), 0.0)});
  params.push_back({"dense2.weight", {1, hidden}, RealBuffer(static_cast<std::size_t>(hidden), 0.0)});
  params.push_back({"dense2.bias", {1}, RealBuffer(1, 0.0)});
  return params;
}

void check_input(const NetworkSpec& spec, const Volume& input) {
  if (input.channels() != spec.input_channels) {
    throw ShapeError(fmt::format("network expects {} channel(s), input has {}",
                                 spec.input_channels, input.channels()));
  }
  if (spec.head == Head::Flatten && input.size() != spec.input_size) {
    throw ShapeError(fmt::format("flatten head expects input {}, got {}",
                                 to_string(spec.input_size), to_string(input.size())));
  }
}

Trace run_forward(const NetworkSpec& spec, const std::vector<Parameter>& params,
                  const Volume& input) {
  check_input(spec, input);
  Trace tr;
  Tensor x = to_tensor(input);
  for (int l = 0; l < kConvLayers; ++l) {
    ConvTrace& ct = tr.conv[l];
    const auto& weight = params[static_cast<std::size_t>(2 * l)].values;
    const auto& bias = params[static_cast<std::size_t>(2 * l + 1)].values;
    const int oc = spec.conv_filters[static_cast<std::size_t>(l)];
    const auto positions = static_cast<Eigen::Index>(x.spatial());
    const auto taps = static_cast<Eigen::Index>(x.c) * kTaps;

    im2col(x, ct.col);
    ct.activated = Tensor{oc, x.d, x.h, x.w, RealBuffer(static_cast<std::size_t>(oc) * x.spatial())};
    Eigen::Map<const RowMat> wm(weight.data(), oc, taps);
    Eigen::Map<const RowMat> cm(ct.col.data(), taps, positions);
    Eigen::Map<RowMat> om(ct.activated.v.data(), oc, positions);
    om.noalias() = wm * cm;
    for (int o = 0; o < oc; ++o) {
      om.row(o) = (om.row(o).array() + bias[static_cast<std::size_t>(o)]).cwiseMax(0.0);
    }
    max_pool(ct.activated, ct.pooled, ct.argmax);
    ct.input = std::move(x);
    x = ct.pooled;
  }

  const Tensor& last = tr.conv[kConvLayers - 1].pooled;
  if (spec.head == Head::GlobalAveragePool) {
    tr.features = Vec::Zero(last.c);
    const std::size_t s = last.spatial();
    for (int c = 0; c < last.c; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < s; ++i) sum += last.v[static_cast<std::size_t>(c) * s + i];
      tr.features[c] = sum / static_cast<double>(s);
    }
  } else {
    tr.features = Eigen::Map<const Vec>(last.v.data(), static_cast<Eigen::Index>(last.v.size()));
  }

  const auto& w1 = params[6].values;
  const auto& b1 = params[7].values;
  const auto& w2 = params[8].values;
  const double b2 = params[9].values[0];
  const int hidden = spec.hidden_width;
  const auto features = static_cast<Eigen::Index>(tr.features.size());
  Eigen::Map<const RowMat> w1m(w1.data(), hidden, features);
  tr.hidden = (w1m * tr.features + Eigen::Map<const Vec>(b1.data(), hidden)).cwiseMax(0.0);
  tr.logit = Eigen::Map<const Vec>(w2.data(), hidden).dot(tr.hidden) + b2;
  return tr;
}

}  // namespace

std::string to_string(Head head) {
  return head == Head::GlobalAveragePool ? "global_average_pool" : "flatten";
}

Head head_from_string(const std::string& name) {
  if (name == "global_average_pool") return Head::GlobalAveragePool;
  if (name == "flatten") return Head::Flatten;
  throw ValidationError("unknown head '" + name + "'");
}

NetworkSpec NetworkSpec::weakly_supervised(int channels) {
  NetworkSpec s;
  s.input_channels = channels;
  s.head = Head::GlobalAveragePool;
  return s;
}

NetworkSpec NetworkSpec::fully_supervised(Size3 crop, int channels) {
  NetworkSpec s;
  s.input_channels = channels;
  s.head = Head::Flatten;
  s.input_size = crop;
  return s;
}

int NetworkSpec::feature_width() const {
  const int filters = conv_filters.empty() ? 0 : conv_filters.back();
  if (head == Head::GlobalAveragePool) return filters;
  int w = input_size.w, h = input_size.h, d = input_size.d;
  for (int l = 0; l < kConvLayers; ++l) {
    w = pooled_extent(w);
    h = pooled_extent(h);
    d = pooled_extent(d);
  }
  return filters * w * h * d;
}

void NetworkSpec::validate() const {
  if (conv_filters.size() != kConvLayers) {
    throw ValidationError(fmt::format("expected {} conv layers, got {}", kConvLayers, conv_filters.size()));
  }
  for (int f : conv_filters) {
    if (f < 1) throw ValidationError("conv filter counts must be positive");
  }
  if (input_channels < 1 || hidden_width < 1) {
    throw ValidationError("input channels and hidden width must be positive");
  }
  if (head == Head::Flatten && !input_size.positive()) {
    throw ValidationError("flatten head needs a positive input size");
  }
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  params_ = make_parameters(spec_);
}

Network Network::initialized(NetworkSpec spec, std::uint64_t seed) {
  Network net(std::move(spec));
  Rng rng(seed);
  for (auto& p : net.params_) {
    if (p.shape.size() < 2) continue;  // biases stay zero
    int fan_in = 1;
    for (std::size_t i = 1; i < p.shape.size(); ++i) fan_in *= p.shape[i];
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : p.values) v = rng.uniform(-bound, bound);
  }
  return net;
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.values.size();
  return n;
}

Gradients Network::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.emplace_back(p.values.size(), 0.0);
  return g;
}

double Network::logit(const Volume& input) const { return run_forward(spec_, params_, input).logit; }

double Network::forward(const Volume& input) const { return sigmoid(logit(input)); }

double Network::accumulate_gradient(const Volume& input, int label, double weight,
                                    Gradients& grads) const {
  Trace tr = run_forward(spec_, params_, input);
  const double p = sigmoid(tr.logit);
  const double loss = bce_loss(p, label);
  // d(bce(sigmoid(z)))/dz = p - y
  const double dz = weight * (p - static_cast<double>(label));

  const int hidden = spec_.hidden_width;
  const auto features = static_cast<Eigen::Index>(tr.features.size());
  Eigen::Map<const Vec> w2(params_[8].values.data(), hidden);
  Eigen::Map<Vec>(grads[8].data(), hidden) += dz * tr.hidden;
  grads[9][0] += dz;

  Vec dhidden = dz * w2;
  for (int i = 0; i < hidden; ++i) {
    if (tr.hidden[i] <= 0.0) dhidden[i] = 0.0;
  }
  Eigen::Map<RowMat>(grads[6].data(), hidden, features) += dhidden * tr.features.transpose();
  Eigen::Map<Vec>(grads[7].data(), hidden) += dhidden;
  Eigen::Map<const RowMat> w1(params_[6].values.data(), hidden, features);
  const Vec dfeatures = w1.transpose() * dhidden;

  // Gradient w.r.t. the last pooled map.
  const Tensor& last = tr.conv[kConvLayers - 1].pooled;
  RealBuffer dpooled(last.v.size());
  if (spec_.head == Head::GlobalAveragePool) {
    const std::size_t s = last.spatial();
    for (int c = 0; c < last.c; ++c) {
      const double g = dfeatures[c] / static_cast<double>(s);
      std::fill_n(dpooled.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * s),
                  s, g);
    }
  } else {
    std::copy(dfeatures.data(), dfeatures.data() + dfeatures.size(), dpooled.begin());
  }

  for (int l = kConvLayers - 1; l >= 0; --l) {
    const ConvTrace& ct = tr.conv[l];
    const int oc = ct.activated.c;
    const auto positions = static_cast<Eigen::Index>(ct.activated.spatial());
    const auto taps = static_cast<Eigen::Index>(ct.input.c) * kTaps;

    RealBuffer dact(ct.activated.v.size(), 0.0);
    for (std::size_t k = 0; k < dpooled.size(); ++k) dact[ct.argmax[k]] += dpooled[k];
    for (std::size_t i = 0; i < dact.size(); ++i) {
      if (ct.activated.v[i] <= 0.0) dact[i] = 0.0;
    }

    Eigen::Map<const RowMat> dm(dact.data(), oc, positions);
    Eigen::Map<const RowMat> cm(ct.col.data(), taps, positions);
    Eigen::Map<RowMat>(grads[static_cast<std::size_t>(2 * l)].data(), oc, taps).noalias() +=
        dm * cm.transpose();
    Eigen::Map<Vec>(grads[static_cast<std::size_t>(2 * l + 1)].data(), oc) += dm.rowwise().sum();

    if (l == 0) break;
    Eigen::Map<const RowMat> wm(params_[static_cast<std::size_t>(2 * l)].values.data(), oc, taps);
    RealBuffer dcol(static_cast<std::size_t>(taps * positions));
    Eigen::Map<RowMat>(dcol.data(), taps, positions).noalias() = wm.transpose() * dm;
    Tensor dinput = ct.input;
    col2im(dcol, dinput);
    dpooled = std::move(dinput.v);
  }
  return loss;
}

bool Network::operator==(const Network& other) const {
  if (!(spec_ == other.spec_) || params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || params_[i].shape != other.params_[i].shape ||
        params_[i].values != other.params_[i].values) {
      return false;
    }
  }
  return true;
}

}  // namespace promptseg
