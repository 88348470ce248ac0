#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "hiros/model/checkpoint.hpp"
#include "hiros/model/gesture_net.hpp"
#include "hiros/model/training.hpp"

using namespace hiros;
using namespace hiros::model;

namespace {

ModelConfig tiny(std::size_t classes = 2) {
  ModelConfig c;
  c.frames = 4;
  c.height = 8;
  c.width = 8;
  c.block1 = {2, {3, 3, 3}, {2, 2, 2}};
  c.block2 = {3, {3, 3, 3}, {1, 2, 2}};
  c.lstm_hidden = 5;
  c.num_classes = classes;
  c.seed = 11;
  return c;
}

Tensor random_clips(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({n, c.channels, c.frames, c.height, c.width});
  for (double& v : t.data()) v = u(rng);
  return t;
}

std::vector<std::uint8_t> pattern_clip(const ModelConfig& c, int cls, std::uint64_t seed, int noise = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(-noise, noise);
  std::vector<std::uint8_t> px(c.clip_values());
  for (std::size_t t = 0; t < c.frames; ++t)
    for (std::size_t y = 0; y < c.height; ++y)
      for (std::size_t x = 0; x < c.width; ++x) {
        const bool on = cls == 0 ? (x < c.width / 2) : (y < c.height / 2);
        px[(t * c.height + y) * c.width + x] = static_cast<std::uint8_t>(std::clamp((on ? 200 : 40) + u(rng), 0, 255));
      }
  return px;
}

}  // namespace

TEST(Build, DefaultParameterCountMatchesLayerFormulas) {
  ModelConfig c;
  GestureNet net(c);
  // conv1: 8 * 1 * 27 + 8; conv2: 16 * 8 * 27 + 16; after pooling T=4, H=W=8,
  // so the LSTM sees 16 * 8 * 8 inputs; LSTM: 4 * 64 * (1024 + 64 + 1); out: 64 * 27 + 27.
  const std::size_t expect = (8 * 27 + 8) + (16 * 8 * 27 + 16) + 4 * 64 * (1024 + 64 + 1) + (64 * 27 + 27);
  EXPECT_EQ(net.parameter_count(), expect);
  EXPECT_EQ(expect, 284235u);
  EXPECT_EQ(c.lstm_input(), 1024u);
}

TEST(Build, SeededInitIsDeterministicAndBounded) {
  const ModelConfig c = tiny();
  GestureNet a(c), b(c);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
  const auto& w = a.parameters()[GestureNet::kOutW].value;
  const double limit = std::sqrt(6.0 / double(c.lstm_hidden + c.num_classes));
  for (double v : w.data()) EXPECT_LE(std::abs(v), limit);
  for (double v : a.parameters()[GestureNet::kLstmB].value.data()) EXPECT_EQ(v, 0.0);
  ModelConfig other = c;
  other.seed = 12;
  EXPECT_NE(GestureNet(other).parameters()[GestureNet::kConv1W].value, a.parameters()[GestureNet::kConv1W].value);
}

TEST(Build, InvalidConfigsAreRejected) {
  ModelConfig c = tiny();
  c.block1.kernel = {2, 3, 3};
  EXPECT_THROW(GestureNet{c}, ConfigError);
  c = tiny();
  c.frames = 3;
  EXPECT_THROW(GestureNet{c}, ConfigError);
  c = tiny();
  c.num_classes = 0;
  EXPECT_THROW(GestureNet{c}, ConfigError);
}

TEST(Forward, RowsAreDistributionsAndReproducible) {
  const ModelConfig c = tiny(3);
  GestureNet net(c);
  Tensor x = random_clips(c, 3, 1);
  // Make row 2 a copy of row 0.
  const std::size_t per = c.clip_values();
  std::copy_n(x.raw(), per, x.raw() + 2 * per);
  const Tensor p = net.forward(x);
  ASSERT_EQ(p.shape(), (tensor::Shape{3, 3}));
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += p[r * 3 + k];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(p[k], p[6 + k]);
  GestureNet again(c);
  EXPECT_EQ(again.forward(x), p);
  EXPECT_THROW(net.forward(Tensor({1, 1, 4, 8, 7})), DimensionError);
}

TEST(Forward, TwoClassConfigHasTwoOutputs) {
  GestureNet net(tiny(2));
  EXPECT_EQ(net.forward(random_clips(tiny(2), 1, 2)).dim(1), 2u);
}

TEST(Forward, RecordedGraphGradientsPassCheck) {
  // Whole-network gradient check through a small random net.
  const ModelConfig c = tiny(3);
  GestureNet net(c);
  Graph g;
  Var in = g.constant(random_clips(c, 2, 3));
  std::vector<int> labels{0, 2};
  Var loss = tensor::cross_entropy(g, net.record(g, in), labels);
  g.backward(loss);
  auto& w = net.parameters()[GestureNet::kConv1W];
  const double h = 1e-5;
  for (std::size_t i = 0; i < w.value.size(); i += 7) {
    const double orig = w.value[i];
    auto eval = [&] {
      Graph f(false);
      return f.value(tensor::cross_entropy(f, net.record(f, f.constant(g.value(in))), labels))[0];
    };
    w.value[i] = orig + h;
    const double up = eval();
    w.value[i] = orig - h;
    const double down = eval();
    w.value[i] = orig;
    const double num = (up - down) / (2 * h);
    EXPECT_NEAR(w.grad[i], num, 1e-6 + 1e-4 * std::abs(num));
  }
}

TEST(Train, OverfitsTwoClipToySet) {
  const ModelConfig c = tiny(2);
  GestureNet net(c);
  const auto a = pattern_clip(c, 0, 1), b = pattern_clip(c, 1, 2);
  std::vector<Sample> train{{a, 0}, {b, 1}};
  TrainOptions opt;
  opt.epochs = 200;
  opt.lr = 1e-2;
  const TrainReport r = train_fold(net, train, {}, opt);
  EXPECT_EQ(r.epochs_run, 200u);
  EXPECT_EQ(r.train_loss.size(), 200u);
  EXPECT_LT(r.train_loss.back(), 0.01);
  for (double l : r.train_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Train, ZeroEpochsLeavesNetUntouched) {
  const ModelConfig c = tiny(2);
  GestureNet net(c);
  const auto before = encode_checkpoint(net);
  const auto a = pattern_clip(c, 0, 1);
  std::vector<Sample> train{{a, 0}};
  TrainOptions opt;
  opt.epochs = 0;
  const TrainReport r = train_fold(net, train, {}, opt);
  EXPECT_EQ(r.epochs_run, 0u);
  EXPECT_TRUE(r.train_loss.empty());
  EXPECT_EQ(encode_checkpoint(net), before);
}

TEST(Train, InputErrors) {
  GestureNet net(tiny(2));
  EXPECT_THROW(train_fold(net, {}, {}), InputError);
  const auto a = pattern_clip(tiny(2), 0, 1);
  std::vector<Sample> bad{{a, 5}};
  EXPECT_THROW(train_fold(net, bad, {}), InputError);
}

TEST(Train, ConvergedEpochDiagnostic) {
  std::vector<double> acc{0.1, 0.5, 0.8, 0.9, 0.901, 0.902, 0.9, 0.903};
  EXPECT_EQ(converged_epoch(acc), std::optional<std::size_t>(4));
  std::vector<double> noisy{0.1, 0.5, 0.1, 0.5, 0.1, 0.5};
  EXPECT_FALSE(converged_epoch(noisy).has_value());
}

TEST(CrossValidate, PartitionAndSeparableOracle) {
  const ModelConfig c = tiny(2);
  std::vector<std::vector<std::uint8_t>> store;
  std::vector<Sample> samples;
  std::vector<int> folds;
  for (int p = 0; p < 10; ++p)
    for (int cls = 0; cls < 2; ++cls) {
      store.push_back(pattern_clip(c, cls, 0));
      folds.push_back(p / 2);
    }
  for (std::size_t i = 0; i < store.size(); ++i) samples.push_back({store[i], int(i % 2)});
  CrossValidationOptions opt;
  opt.train.epochs = 30;
  opt.train.lr = 1e-2;
  const auto r = cross_validate(c, samples, folds, opt);
  ASSERT_EQ(r.predictions.size(), samples.size());
  std::set<std::size_t> seen(r.indices.begin(), r.indices.end());
  EXPECT_EQ(seen.size(), samples.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < r.predictions.size(); ++i) hit += r.predictions[i] == r.labels[i];
  EXPECT_GE(double(hit) / double(samples.size()), 0.99);
  ASSERT_EQ(r.fold_accuracy.size(), 5u);
  for (double a : r.fold_accuracy) EXPECT_EQ(a, 1.0);

  const auto again = cross_validate(c, samples, folds, opt);
  EXPECT_EQ(again.fold_accuracy, r.fold_accuracy);
  EXPECT_EQ(again.predictions, r.predictions);
}

TEST(CrossValidate, RejectsEmptyFolds) {
  const ModelConfig c = tiny(2);
  const auto a = pattern_clip(c, 0, 1);
  std::vector<Sample> s{{a, 0}, {a, 0}, {a, 0}};
  std::vector<int> folds{0, 1, 1};
  CrossValidationOptions opt;
  opt.folds = 3;
  EXPECT_THROW(cross_validate(c, s, folds, opt), InputError);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const ModelConfig c = tiny(3);
  GestureNet net(c);
  const auto bytes = encode_checkpoint(net);
  GestureNet back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config(), c);
  for (std::size_t i = 0; i < net.parameters().size(); ++i)
    EXPECT_EQ(back.parameters()[i].value, net.parameters()[i].value);
  const Tensor probe = random_clips(c, 2, 5);
  EXPECT_EQ(back.forward(probe), net.forward(probe));

  const auto path = std::filesystem::temp_directory_path() / "hiros_model_test.gnet";
  save_checkpoint(net, path);
  EXPECT_EQ(load_checkpoint(path).forward(probe), net.forward(probe));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), InputError);
}

TEST(Checkpoint, LayoutHeader) {
  GestureNet net(tiny(2));
  const auto bytes = encode_checkpoint(net);
  ASSERT_GT(bytes.size(), 9u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GNET");
  EXPECT_EQ(bytes[4], 1);
  const std::uint32_t len = bytes[5] | bytes[6] << 8 | bytes[7] << 16 | std::uint32_t(bytes[8]) << 24;
  const auto cfg = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + len);
  EXPECT_EQ(cfg.at("num_classes"), 2);
  std::size_t expect = 9 + len;
  for (const auto& p : net.parameters()) expect += 8 + 8 * p.value.size();
  EXPECT_EQ(bytes.size(), expect);
}

TEST(Checkpoint, CorruptionAndTruncationAreFormatErrors) {
  GestureNet net(tiny(2));
  auto bytes = encode_checkpoint(net);
  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_checkpoint(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = bytes;
  bad[4] = 2;
  try {
    decode_checkpoint(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    const std::span<const std::uint8_t> cut(bytes.data(), n);
    try {
      decode_checkpoint(cut);
      FAIL() << "truncation at " << n << " accepted";
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), n);
    }
  }
  bytes.push_back(0);
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}
