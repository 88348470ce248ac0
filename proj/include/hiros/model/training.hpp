#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "hiros/error.hpp"
#include "hiros/model/gesture_net.hpp"
#include "hiros/tensor/adam.hpp"

namespace hiros::model {

// One labelled clip; pixels are T x H x W x C bytes.
struct Sample {
  std::span<const std::uint8_t> pixels;
  int label = 0;
};

// Packs samples into a [N, C, T, H, W] tensor scaled to [0, 1].
inline Tensor make_batch(const ModelConfig& cfg, std::span<const Sample> samples,
                         std::span<const std::size_t> order) {
  const std::size_t t = cfg.frames, h = cfg.height, w = cfg.width, c = cfg.channels;
  const std::size_t per = cfg.clip_values();
  Tensor batch({order.size(), c, t, h, w});
  for (std::size_t b = 0; b < order.size(); ++b) {
    const Sample& s = samples[order[b]];
    if (s.pixels.size() != per) {
      throw DimensionError("clip has " + std::to_string(s.pixels.size()) + " pixels, model expects " +
                           std::to_string(per));
    }
    double* dst = batch.raw() + b * per;
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t yi = 0; yi < h; ++yi)
        for (std::size_t xi = 0; xi < w; ++xi)
          for (std::size_t ci = 0; ci < c; ++ci)
            dst[((ci * t + ti) * h + yi) * w + xi] =
                static_cast<double>(s.pixels[((ti * h + yi) * w + xi) * c + ci]) / 255.0;
  }
  return batch;
}

inline std::size_t argmax_row(const Tensor& probs, std::size_t row) {
  const std::size_t k = probs.dim(1);
  const double* p = probs.raw() + row * k;
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

// Predicted class of every sample, evaluated in chunks of `batch`.
inline std::vector<int> predict(GestureNet& net, std::span<const Sample> samples,
                                std::size_t batch = 32) {
  std::vector<int> out;
  out.reserve(samples.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    idx.resize(std::min(batch, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor probs = net.forward(make_batch(net.config(), samples, idx));
    for (std::size_t r = 0; r < idx.size(); ++r) out.push_back(static_cast<int>(argmax_row(probs, r)));
  }
  return out;
}

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> val_accuracy;
  std::size_t epochs_run = 0;
  // First epoch (1-based) from which validation accuracy moves less than half
  // a point across the following five epochs; diagnostic only.
  std::optional<std::size_t> converged_epoch;
};

struct TrainOptions {
  std::size_t epochs = 100;
  std::size_t batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  // Called after every epoch with (epoch index, report so far); optional.
  std::function<void(std::size_t, const TrainReport&)> on_epoch;
};

inline double accuracy_of(std::span<const int> preds, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) hit += preds[i] == samples[i].label;
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

inline std::optional<std::size_t> converged_epoch(std::span<const double> val_accuracy,
                                                  std::size_t window = 5, double band = 0.005) {
  if (val_accuracy.size() < window) return std::nullopt;
  for (std::size_t e = 0; e + window <= val_accuracy.size(); ++e) {
    const auto [lo, hi] = std::minmax_element(val_accuracy.begin() + static_cast<std::ptrdiff_t>(e),
                                              val_accuracy.begin() + static_cast<std::ptrdiff_t>(e + window));
    if (*hi - *lo < band) return e + 1;
  }
  return std::nullopt;
}

// Mini-batch Adam with a seeded reshuffle every epoch.
inline TrainReport train_fold(GestureNet& net, std::span<const Sample> train,
                              std::span<const Sample> val, const TrainOptions& opt = {}) {
  if (train.empty()) throw InputError("train_fold: empty training set");
  if (opt.batch == 0) throw InputError("train_fold: batch size must be positive");
  for (const Sample& s : train) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= net.config().num_classes) {
      throw InputError("train_fold: label " + std::to_string(s.label) + " outside the model's classes");
    }
  }
  TrainReport report;
  std::vector<tensor::Parameter*> params;
  for (auto& p : net.parameters()) params.push_back(&p);
  const tensor::AdamOptions adam{opt.lr};
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(opt.batch, order.size() - start));
      labels.clear();
      for (std::size_t i : idx) labels.push_back(train[i].label);
      Graph graph;
      const Var in = graph.constant(make_batch(net.config(), train, idx));
      const Var probs = net.record(graph, in);
      const Var loss = tensor::cross_entropy(graph, probs, labels);
      const double l = graph.value(loss)[0];
      if (!std::isfinite(l)) {
        throw ResultError("train_fold: non-finite loss in epoch " + std::to_string(epoch + 1));
      }
      loss_sum += l * static_cast<double>(idx.size());
      const Tensor& pv = graph.value(probs);
      for (std::size_t r = 0; r < idx.size(); ++r) correct += static_cast<int>(argmax_row(pv, r)) == labels[r];
      graph.backward(loss);
      tensor::adam_step(params, adam);
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
    report.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(train.size()));
    if (!val.empty()) {
      const auto preds = predict(net, val);
      report.val_accuracy.push_back(accuracy_of(preds, val));
    } else {
      report.val_accuracy.push_back(0.0);
    }
    report.epochs_run = epoch + 1;
    if (opt.on_epoch) opt.on_epoch(epoch, report);
  }
  report.converged_epoch = converged_epoch(report.val_accuracy);
  return report;
}

struct CrossValidationResult {
  std::vector<int> predictions;  // pooled, aligned with `labels` and `indices`
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // sample index of each pooled prediction
  std::vector<double> fold_accuracy;
  std::vector<TrainReport> reports;
};

struct CrossValidationOptions {
  std::size_t folds = 5;
  TrainOptions train;
  std::function<void(std::size_t fold, const TrainReport&)> on_fold;
};

// Trains one fresh network per fold (fold f held out for testing) and pools
// the held-out predictions. `fold_of[i]` is the fold of sample i.
inline CrossValidationResult cross_validate(const ModelConfig& config, std::span<const Sample> samples,
                                            std::span<const int> fold_of,
                                            const CrossValidationOptions& opt) {
  if (fold_of.size() != samples.size()) {
    throw InputError("cross_validate: fold labels do not cover the dataset");
  }
  if (opt.folds < 2) throw InputError("cross_validate: need at least two folds");
  std::vector<std::size_t> per_fold(opt.folds, 0);
  for (int f : fold_of) {
    if (f < 0 || static_cast<std::size_t>(f) >= opt.folds) {
      throw InputError("cross_validate: fold label " + std::to_string(f) + " outside [0, " +
                       std::to_string(opt.folds) + ")");
    }
    ++per_fold[static_cast<std::size_t>(f)];
  }
  for (std::size_t f = 0; f < opt.folds; ++f) {
    if (per_fold[f] == 0) throw InputError("cross_validate: fold " + std::to_string(f) + " is empty");
  }

  CrossValidationResult result;
  for (std::size_t f = 0; f < opt.folds; ++f) {
    std::vector<Sample> train, test;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (static_cast<std::size_t>(fold_of[i]) == f) {
        test.push_back(samples[i]);
        test_idx.push_back(i);
      } else {
        train.push_back(samples[i]);
      }
    }
    ModelConfig cfg = config;
    cfg.seed = config.seed + f;
    GestureNet net(cfg);
    TrainOptions to = opt.train;
    to.seed = opt.train.seed + f;
    TrainReport rep = train_fold(net, train, test, to);
    const auto preds = predict(net, test);
    result.fold_accuracy.push_back(accuracy_of(preds, test));
    for (std::size_t i = 0; i < test.size(); ++i) {
      result.predictions.push_back(preds[i]);
      result.labels.push_back(test[i].label);
      result.indices.push_back(test_idx[i]);
    }
    if (opt.on_fold) opt.on_fold(f, rep);
    result.reports.push_back(std::move(rep));
  }
  return result;
}

}  // namespace hiros::model
