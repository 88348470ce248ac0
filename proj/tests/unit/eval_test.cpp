#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "hiros/eval/metrics.hpp"
#include "hiros/eval/sweep.hpp"

using namespace hiros;
using namespace hiros::eval;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  ConfusionMatrix cm(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows.size(); ++c) cm.at(r, c) = rows[r][c];
  return cm;
}

// Command-only table of k entries, for pruning tests on small matrices.
std::vector<dataset::GestureClass> commands(std::size_t k) {
  std::vector<dataset::GestureClass> t;
  for (std::size_t i = 0; i < k; ++i) t.push_back({int(i), "c", dataset::ClassKind::kCommand});
  return t;
}

}  // namespace

TEST(Confusion, HandTally) {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  const std::vector<int> preds{0, 1, 1, 1, 0, 2};
  const ConfusionMatrix cm = confusion(preds, labels, 3);
  EXPECT_EQ(cm, from_rows({{1, 1, 0}, {0, 2, 0}, {1, 0, 1}}));
  EXPECT_EQ(cm.total(), 6u);
  EXPECT_NEAR(accuracy(cm), 4.0 / 6.0, 1e-15);
}

TEST(Confusion, PerfectAndSingleColumn) {
  const std::vector<int> labels{0, 1, 2, 3, 1};
  const ConfusionMatrix perfect = confusion(labels, labels, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      if (r != c) EXPECT_EQ(perfect.at(r, c), 0u);
  EXPECT_EQ(accuracy(perfect), 1.0);
  const std::vector<int> twos(5, 2);
  const ConfusionMatrix col = confusion(twos, labels, 4);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(col.col_sum(c), c == 2 ? 5u : 0u);
}

TEST(Confusion, InputErrors) {
  const std::vector<int> a{0, 1}, b{0};
  EXPECT_THROW(confusion(a, b, 2), InputError);
  const std::vector<int> out{0, 2};
  EXPECT_THROW(confusion(out, a, 2), InputError);
  const std::vector<int> neg{-1, 0};
  EXPECT_THROW(confusion(a, neg, 2), InputError);
  EXPECT_THROW(accuracy(ConfusionMatrix(3)), InputError);
}

TEST(Metrics, Definitions) {
  const ConfusionMatrix cm = from_rows({{2, 1, 0}, {0, 4, 0}, {0, 0, 0}});
  const ClassMetrics m = metrics(cm);
  EXPECT_NEAR(m.recall[0], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(m.precision[0], 1.0);
  EXPECT_EQ(m.recall[1], 1.0);
  EXPECT_NEAR(m.precision[1], 0.8, 1e-15);
  EXPECT_EQ(m.recall[2], 0.0);
  EXPECT_EQ(m.precision[2], 0.0);
  const ClassMetrics d = metrics(from_rows({{3, 0}, {0, 5}}));
  EXPECT_EQ(d.recall, (std::vector<double>{1, 1}));
  EXPECT_EQ(d.precision, (std::vector<double>{1, 1}));
}

TEST(Metrics, AgreeWithDirectCountingOnRandomVectors) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng() % 10, n = 1 + rng() % 200;
    std::vector<int> p(n), l(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = int(rng() % k);
      l[i] = int(rng() % k);
    }
    const ConfusionMatrix cm = confusion(p, l, k);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < n; ++i) hit += p[i] == l[i];
    ASSERT_NEAR(accuracy(cm), double(hit) / double(n), 1e-12);
    const ClassMetrics m = metrics(cm);
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t tp = 0, row = 0, col = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += p[i] == int(c) && l[i] == int(c);
        row += l[i] == int(c);
        col += p[i] == int(c);
      }
      ASSERT_NEAR(m.recall[c], row ? double(tp) / double(row) : 0.0, 1e-12);
      ASSERT_NEAR(m.precision[c], col ? double(tp) / double(col) : 0.0, 1e-12);
      // Count consistency.
      ASSERT_NEAR(m.recall[c] * double(row), std::round(m.recall[c] * double(row)), 1e-9);
    }
  }
}

TEST(Metrics, BalancedClassesAccuracyIsMeanRecall) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng() % 8, per = 1 + rng() % 20;
    ConfusionMatrix cm(k);
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t i = 0; i < per; ++i) ++cm.at(r, rng() % k);
    const ClassMetrics m = metrics(cm);
    double mean = 0.0;
    for (double v : m.recall) mean += v;
    ASSERT_NEAR(accuracy(cm), mean / double(k), 1e-12);
  }
}

TEST(PooledCv, FormattingAndSampleStd) {
  const std::vector<double> equal(5, 0.8);
  EXPECT_EQ(pooled_cv(equal).str(), "80.0±0.0%");
  const std::vector<double> spread{0.79, 0.81, 0.83, 0.85, 0.87};
  const auto r = pooled_cv(spread);
  // Deviations ±0.04, ±0.02, 0: sum of squares 0.004, / 4 = 0.001.
  EXPECT_NEAR(r.stddev, std::sqrt(0.001), 1e-12);
  EXPECT_EQ(r.str(), "83.0±3.2%");
  EXPECT_EQ(pooled_cv(std::vector<double>{0.5}).stddev, 0.0);
  EXPECT_THROW(pooled_cv(std::vector<double>{}), InputError);
}

TEST(Prune, DropsLowRecallCommands) {
  // Recalls 0.9, 0.66, 0.71 on 100-row classes.
  const ConfusionMatrix cm = from_rows({{90, 5, 5}, {17, 66, 17}, {15, 14, 71}});
  const auto table = commands(3);
  const PruneResult r = prune_by_recall(cm, table, 0.85);
  EXPECT_EQ(r.retained, (std::vector<int>{0}));
  EXPECT_EQ(r.pruned, (std::vector<int>{1, 2}));
  EXPECT_NEAR(r.restricted_accuracy, 0.9, 1e-15);
}

TEST(Prune, ThresholdZeroKeepsEverything) {
  std::mt19937_64 rng(5);
  ConfusionMatrix cm(27);
  for (std::size_t r = 0; r < 27; ++r)
    for (int i = 0; i < 10; ++i) ++cm.at(r, rng() % 27);
  const PruneResult r = prune_by_recall(cm, dataset::kClassTable, 0.0);
  EXPECT_EQ(r.retained.size(), 27u);
  EXPECT_NEAR(r.restricted_accuracy, accuracy(cm), 1e-15);
}

TEST(Prune, BackgroundClassesAreExempt) {
  ConfusionMatrix cm(27);
  for (std::size_t r = 0; r < 27; ++r) cm.at(r, (r + 1) % 27) = 4;  // every recall is 0
  const PruneResult r = prune_by_recall(cm, dataset::kClassTable, 0.85);
  EXPECT_EQ(r.retained, (std::vector<int>{25, 26}));
  EXPECT_EQ(r.restricted_accuracy, 0.0);
}

TEST(Prune, AllPrunedIsResultError) {
  const ConfusionMatrix cm = from_rows({{0, 3}, {3, 0}});
  EXPECT_THROW(prune_by_recall(cm, commands(2), 0.85), ResultError);
}

TEST(Prune, RestrictedAccuracyIsRetainedMeanRecallWhenBalanced) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 3 + rng() % 8, per = 5 + rng() % 20;
    ConfusionMatrix cm(k);
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t hits = rng() % (per + 1);
      cm.at(r, r) += hits;
      for (std::size_t i = hits; i < per; ++i) ++cm.at(r, (r + 1 + rng() % (k - 1)) % k);
    }
    const auto table = commands(k);
    const double theta = 0.5;
    PruneResult r;
    try {
      r = prune_by_recall(cm, table, theta);
    } catch (const ResultError&) {
      continue;
    }
    const ClassMetrics m = metrics(cm);
    double mean = 0.0;
    for (int c : r.retained) mean += m.recall[std::size_t(c)];
    mean /= double(r.retained.size());
    ASSERT_NEAR(r.restricted_accuracy, mean, 1e-12);
    ASSERT_GE(r.restricted_accuracy + 1e-12, accuracy(cm));
  }
}

TEST(Export, CsvAndJson) {
  const ConfusionMatrix cm = from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(to_csv(cm), "true\\pred,Start,Stop\nStart,1,2\nStop,3,4\n");
  const auto j = to_json(cm);
  EXPECT_EQ(j.at("labels")[1], "Stop");
  EXPECT_EQ(j.at("counts")[1][0], 3);
  ConfusionMatrix big(10);
  EXPECT_NE(to_csv(big).find(",Point to an Object\n"), std::string::npos);
  const auto mj = to_json(metrics(cm));
  EXPECT_EQ(mj.size(), 2u);
  EXPECT_NEAR(mj[1].at("recall").get<double>(), 4.0 / 7.0, 1e-15);
}

TEST(Sweep, EmptySizesRunsNothing) {
  SweepOptions opt;
  opt.sizes = {};
  const SweepReport r = size_sweep(opt);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(r.csv(), "size,stage1_mean,stage1_std,stage2_mean,stage2_std\n");
}

TEST(Sweep, OneRowPerSizeWithBothStages) {
  SweepOptions opt;
  opt.sizes = {5, 10};
  opt.base.participants = 5;
  opt.base.classes = 2;
  opt.base.frames = 4;
  opt.base.height = 32;
  opt.base.width = 32;
  opt.model.frames = 4;
  opt.model.height = 32;
  opt.model.width = 32;
  opt.model.block1 = {2, {3, 3, 3}, {2, 2, 2}};
  opt.model.block2 = {2, {3, 3, 3}, {1, 2, 2}};
  opt.model.lstm_hidden = 4;
  opt.train.epochs = 1;
  std::size_t cells = 0;
  opt.on_cell = [&](const SweepCell&) { ++cells; };
  const SweepReport r = size_sweep(opt);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(cells, 4u);
  for (const auto& row : r.rows) {
    ASSERT_TRUE(row.stage1 && row.stage2);
    EXPECT_EQ(row.stage1->confusion.total(), row.size * 2);
    EXPECT_EQ(row.stage2->fold_accuracy.size(), 5u);
  }
  EXPECT_EQ(r.json().size(), 2u);
  EXPECT_NE(r.table().find("~5"), std::string::npos);

  opt.sizes = {7};
  EXPECT_THROW(size_sweep(opt), ConfigError);
}
