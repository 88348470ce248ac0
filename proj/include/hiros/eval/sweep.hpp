#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiros/dataset/generator.hpp"
#include "hiros/dataset/manifest.hpp"
#include "hiros/error.hpp"
#include "hiros/eval/metrics.hpp"
#include "hiros/model/training.hpp"

namespace hiros::eval {

struct SweepCell {
  int stage = 2;
  std::size_t size = 0;  // clips per gesture across all participants
  PooledAccuracy accuracy;
  std::vector<double> fold_accuracy;
  ConfusionMatrix confusion;
};

struct SweepRow {
  std::size_t size = 0;
  std::optional<SweepCell> stage1;
  std::optional<SweepCell> stage2;
};

struct SweepReport {
  std::vector<SweepRow> rows;

  // Plain-text table: size, Stage 1, Stage 2.
  std::string table() const {
    std::string out = "clips/gesture  stage 1        stage 2\n";
    for (const auto& r : rows) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "~%-12zu  %-13s  %s\n", r.size,
                    r.stage1 ? r.stage1->accuracy.str().c_str() : "-",
                    r.stage2 ? r.stage2->accuracy.str().c_str() : "-");
      out += buf;
    }
    return out;
  }

  std::string csv() const {
    std::string out = "size,stage1_mean,stage1_std,stage2_mean,stage2_std\n";
    auto cell = [](const std::optional<SweepCell>& c) {
      return c ? std::to_string(c->accuracy.mean) + "," + std::to_string(c->accuracy.stddev) : std::string(",");
    };
    for (const auto& r : rows) out += std::to_string(r.size) + "," + cell(r.stage1) + "," + cell(r.stage2) + "\n";
    return out;
  }

  nlohmann::json json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json row{{"size", r.size}};
      for (const auto* c : {&r.stage1, &r.stage2}) {
        if (!*c) continue;
        row["stage" + std::to_string((*c)->stage)] = {{"mean", (*c)->accuracy.mean},
                                                     {"std", (*c)->accuracy.stddev},
                                                     {"formatted", (*c)->accuracy.str()},
                                                     {"folds", (*c)->fold_accuracy}};
      }
      out.push_back(std::move(row));
    }
    return out;
  }
};

struct SweepOptions {
  std::vector<std::size_t> sizes{50, 100, 150};
  std::vector<int> stages{1, 2};
  dataset::GenerationSpec base;  // stage and clips_per_class are overridden per cell
  model::ModelConfig model;      // num_classes is overridden with base.classes
  std::size_t folds = 5;
  std::uint64_t fold_seed = 1;
  model::TrainOptions train;
  std::function<void(const SweepCell&)> on_cell;
};

// One cross-validated run per (size, stage). Sizes count clips per gesture
// over the whole dataset, so each must be a multiple of the participant count.
inline SweepReport size_sweep(const SweepOptions& opt) {
  SweepReport report;
  for (std::size_t size : opt.sizes) {
    if (opt.base.participants == 0 || size % opt.base.participants != 0 || size == 0) {
      throw ConfigError("sweep size " + std::to_string(size) + " is not a positive multiple of " +
                        std::to_string(opt.base.participants) + " participants");
    }
  }
  for (std::size_t size : opt.sizes) {
    SweepRow row{size, std::nullopt, std::nullopt};
    for (int stage : opt.stages) {
      dataset::GenerationSpec spec = opt.base;
      spec.stage = stage;
      spec.clips_per_class = size / spec.participants;
      const auto clips = dataset::generate(spec);

      dataset::Manifest m;
      for (const auto& c : clips) m.entries.push_back({"", c.class_id, c.participant_id, c.stage, -1});
      m = dataset::kfold(std::move(m), opt.folds, opt.fold_seed);

      std::vector<model::Sample> samples;
      std::vector<int> folds;
      for (std::size_t i = 0; i < clips.size(); ++i) {
        samples.push_back({clips[i].pixels, clips[i].class_id});
        folds.push_back(m.entries[i].fold);
      }
      model::ModelConfig cfg = opt.model;
      cfg.num_classes = spec.classes;
      model::CrossValidationOptions cv;
      cv.folds = opt.folds;
      cv.train = opt.train;
      const auto result = model::cross_validate(cfg, samples, folds, cv);

      SweepCell cell;
      cell.stage = stage;
      cell.size = size;
      cell.fold_accuracy = result.fold_accuracy;
      cell.accuracy = pooled_cv(result.fold_accuracy);
      cell.confusion = confusion(result.predictions, result.labels, spec.classes);
      if (opt.on_cell) opt.on_cell(cell);
      (stage == 1 ? row.stage1 : row.stage2) = std::move(cell);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace hiros::eval
