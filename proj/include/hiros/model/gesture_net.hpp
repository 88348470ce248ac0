#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "hiros/error.hpp"
#include "hiros/model/config.hpp"
#include "hiros/tensor/adam.hpp"
#include "hiros/tensor/graph.hpp"
#include "hiros/tensor/ops.hpp"
#include "hiros/tensor/tensor.hpp"

namespace hiros::model {

using tensor::Graph;
using tensor::Parameter;
using tensor::Tensor;
using tensor::Var;

// Two conv3d/ReLU/maxpool blocks, an LSTM over the remaining time steps and a
// softmax classifier on the last hidden state.
class GestureNet {
 public:
  enum Index : std::size_t {
    kConv1W, kConv1B, kConv2W, kConv2B, kLstmWx, kLstmWh, kLstmB, kOutW, kOutB, kCount
  };

  GestureNet() = default;

  explicit GestureNet(ModelConfig config) : config_(config) {
    config_.validate();
    const auto& b1 = config_.block1;
    const auto& b2 = config_.block2;
    const std::size_t hd = config_.lstm_hidden;
    const std::size_t k1 = b1.kernel[0] * b1.kernel[1] * b1.kernel[2];
    const std::size_t k2 = b2.kernel[0] * b2.kernel[1] * b2.kernel[2];
    params_.reserve(kCount);
    params_.emplace_back("conv1.weight", Tensor({b1.filters, config_.channels, b1.kernel[0],
                                                 b1.kernel[1], b1.kernel[2]}));
    params_.emplace_back("conv1.bias", Tensor({b1.filters}));
    params_.emplace_back("conv2.weight", Tensor({b2.filters, b1.filters, b2.kernel[0],
                                                 b2.kernel[1], b2.kernel[2]}));
    params_.emplace_back("conv2.bias", Tensor({b2.filters}));
    params_.emplace_back("lstm.input_weight", Tensor({config_.lstm_input(), 4 * hd}));
    params_.emplace_back("lstm.recurrent_weight", Tensor({hd, 4 * hd}));
    params_.emplace_back("lstm.bias", Tensor({4 * hd}));
    params_.emplace_back("out.weight", Tensor({hd, config_.num_classes}));
    params_.emplace_back("out.bias", Tensor({config_.num_classes}));

    std::mt19937_64 rng(config_.seed);
    glorot(params_[kConv1W], config_.channels * k1, b1.filters * k1, rng);
    glorot(params_[kConv2W], b1.filters * k2, b2.filters * k2, rng);
    glorot(params_[kLstmWx], config_.lstm_input(), 4 * hd, rng);
    glorot(params_[kLstmWh], hd, 4 * hd, rng);
    glorot(params_[kOutW], hd, config_.num_classes, rng);
  }

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  // Records the network on `graph` and returns the [N, K] probability node.
  Var record(Graph& graph, Var clips) {
    const Tensor& x = graph.value(clips);
    const Shape expect{x.rank() == 5 ? x.dim(0) : 0, config_.channels, config_.frames,
                       config_.height, config_.width};
    if (x.shape() != expect) {
      throw DimensionError("forward: clips must be [N," + std::to_string(config_.channels) + "," +
                           std::to_string(config_.frames) + "," + std::to_string(config_.height) +
                           "," + std::to_string(config_.width) + "], got " +
                           tensor::shape_str(x.shape()));
    }
    const std::size_t n = x.dim(0);
    std::vector<Var> p;
    p.reserve(kCount);
    for (auto& param : params_) p.push_back(graph.parameter(param));

    Var h1 = block(graph, clips, p[kConv1W], p[kConv1B], config_.block1);
    Var h2 = block(graph, h1, p[kConv2W], p[kConv2B], config_.block2);

    const std::size_t steps = graph.value(h2).dim(2);
    tensor::LstmState state{graph.constant(Tensor({n, config_.lstm_hidden})),
                            graph.constant(Tensor({n, config_.lstm_hidden}))};
    const tensor::LstmWeights w{p[kLstmWx], p[kLstmWh], p[kLstmB]};
    for (std::size_t t = 0; t < steps; ++t) {
      state = tensor::lstm_step(graph, tensor::time_slice(graph, h2, t), state, w);
    }
    Var logits = tensor::affine(graph, state.h, p[kOutW], p[kOutB]);
    return tensor::softmax(graph, logits);
  }

  Tensor forward(const Tensor& clips) {
    Graph graph(false);
    Var in = graph.constant(clips);
    return graph.value(record(graph, in));
  }

 private:
  using Shape = tensor::Shape;

  static Var block(Graph& graph, Var in, Var w, Var b, const ConvBlock& cfg) {
    tensor::Conv3dOptions opt;
    opt.padding = {cfg.kernel[0] / 2, cfg.kernel[1] / 2, cfg.kernel[2] / 2};
    Var c = tensor::conv3d(graph, in, w, b, opt);
    // ReLU is monotone, so pooling first gives the same values and gradients
    // as conv -> ReLU -> pool on an eighth of the elements.
    return tensor::relu(graph, tensor::maxpool3d(graph, c, cfg.pool));
  }

  static void glorot(Parameter& p, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& v : p.value.data()) v = u(rng);
  }

  ModelConfig config_;
  std::vector<Parameter> params_;
};

inline GestureNet build(const ModelConfig& config) { return GestureNet(config); }

}  // namespace hiros::model
