#include <malloc.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hiros/app/demo.hpp"
#include "hiros/app/injector.hpp"
#include "hiros/app/recognizer_service.hpp"
#include "hiros/app/robot_service.hpp"
#include "hiros/bus/broker.hpp"
#include "hiros/bus/ws_bridge.hpp"
#include "hiros/dataset/generator.hpp"
#include "hiros/dataset/manifest.hpp"
#include "hiros/eval/metrics.hpp"
#include "hiros/eval/sweep.hpp"
#include "hiros/model/checkpoint.hpp"
#include "hiros/model/training.hpp"
#include "hiros/protocol/state_machine.hpp"
#include "hiros/stream/recognizer.hpp"

using namespace hiros;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

void log_line(const std::string& msg) { std::cerr << "[hiros] " << msg << std::endl; }

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  out << text;
}

void wait_for_signal() {
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

struct Dataset {
  dataset::Manifest manifest;
  std::vector<dataset::Clip> clips;
  std::vector<model::Sample> samples;
};

Dataset load_dataset(const fs::path& manifest_path) {
  Dataset d;
  d.manifest = dataset::read_manifest(manifest_path);
  d.clips = dataset::read_clips(manifest_path, d.manifest);
  for (std::size_t i = 0; i < d.clips.size(); ++i) {
    d.samples.push_back({d.clips[i].pixels, d.manifest.entries[i].class_id});
  }
  if (d.samples.empty()) throw InputError(manifest_path.string() + " lists no clips");
  return d;
}

model::ModelConfig config_for(const Dataset& d) {
  model::ModelConfig cfg;
  const auto& c = d.clips.front();
  cfg.frames = c.frames;
  cfg.height = c.height;
  cfg.width = c.width;
  cfg.channels = c.channels;
  if (d.manifest.spec) {
    cfg.num_classes = d.manifest.spec->classes;
  } else {
    int hi = 0;
    for (const auto& s : d.samples) hi = std::max(hi, s.label);
    cfg.num_classes = static_cast<std::size_t>(hi) + 1;
  }
  return cfg;
}

std::vector<int> folds_of(Dataset& d, std::size_t folds, std::uint64_t seed) {
  const bool assigned = std::all_of(d.manifest.entries.begin(), d.manifest.entries.end(), [&](const auto& e) {
    return e.fold >= 0 && static_cast<std::size_t>(e.fold) < folds;
  });
  if (!assigned) d.manifest = dataset::kfold(std::move(d.manifest), folds, seed);
  std::vector<int> out;
  for (const auto& e : d.manifest.entries) out.push_back(e.fold);
  return out;
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  dataset::GenerationSpec spec;
  fs::path out;
  std::size_t folds = 5;
};

int run_gen_data(const GenArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto clips = dataset::generate(a.spec);
  const auto m = dataset::write_dataset(a.out, clips, a.spec, a.folds, a.spec.seed);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("wrote %zu clips (%zu participants x %zu classes x %zu) to %s in %.1fs\n", m.entries.size(),
              a.spec.participants, a.spec.classes, a.spec.clips_per_class, a.out.string().c_str(), s);
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  std::size_t folds = 5;
  bool no_cv = false;
  model::TrainOptions train;
  std::optional<fs::path> report;
  std::vector<int> exclude;
};

// Drops every clip of the given classes; the label space is unchanged.
void exclude_classes(Dataset& d, const std::vector<int>& classes) {
  if (classes.empty()) return;
  Dataset kept{d.manifest, {}, {}};
  kept.manifest.entries.clear();
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), d.samples[i].label) != classes.end()) continue;
    kept.manifest.entries.push_back(d.manifest.entries[i]);
    kept.clips.push_back(std::move(d.clips[i]));
    kept.samples.push_back(std::move(d.samples[i]));
  }
  if (kept.samples.empty()) throw InputError("--exclude removed every clip");
  d = std::move(kept);
}

int run_train(TrainArgs a) {
  Dataset d = load_dataset(a.manifest);
  model::ModelConfig cfg = config_for(d);
  exclude_classes(d, a.exclude);
  cfg.seed = a.train.seed;
  nlohmann::json report{{"config", cfg}, {"clips", d.samples.size()}};
  std::printf("%zu clips, %zu classes, %zux%zux%zu\n", d.samples.size(), cfg.num_classes, cfg.frames, cfg.height,
              cfg.width);

  if (!a.no_cv) {
    const auto folds = folds_of(d, a.folds, a.train.seed);
    model::CrossValidationOptions cv;
    cv.folds = a.folds;
    cv.train = a.train;
    cv.on_fold = [](std::size_t f, const model::TrainReport& r) {
      std::printf("fold %zu: final train loss %.4f\n", f + 1, r.train_loss.empty() ? 0.0 : r.train_loss.back());
      std::fflush(stdout);
    };
    const auto res = model::cross_validate(cfg, d.samples, folds, cv);
    for (std::size_t f = 0; f < res.fold_accuracy.size(); ++f) {
      std::printf("fold %zu accuracy %.1f%%\n", f + 1, 100.0 * res.fold_accuracy[f]);
    }
    const auto pooled = eval::pooled_cv(res.fold_accuracy);
    std::printf("pooled accuracy %s\n", pooled.str().c_str());
    report["fold_accuracy"] = res.fold_accuracy;
    report["pooled"] = {{"mean", pooled.mean}, {"std", pooled.stddev}, {"formatted", pooled.str()}};
    report["confusion"] = eval::to_json(eval::confusion(res.predictions, res.labels, cfg.num_classes));
  }

  model::GestureNet net(cfg);
  model::TrainOptions final_opts = a.train;
  final_opts.on_epoch = [&](std::size_t e, const model::TrainReport& r) {
    std::printf("epoch %zu/%zu loss %.4f train acc %.1f%%\n", e + 1, final_opts.epochs, r.train_loss.back(),
                100.0 * r.train_accuracy.back());
    std::fflush(stdout);
  };
  model::train_fold(net, d.samples, {}, final_opts);
  model::save_checkpoint(net, a.out);
  std::printf("saved %s\n", a.out.string().c_str());
  if (a.report) write_file(*a.report, report.dump(2) + "\n");
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::optional<fs::path> model;
  fs::path manifest;
  std::optional<double> prune_recall;
  std::vector<std::size_t> sweep;
  std::vector<int> stages{1, 2};
  model::TrainOptions train;
  std::size_t folds = 5;
  std::optional<fs::path> csv;
  std::optional<fs::path> json;
};

int run_eval(const EvalArgs& a) {
  nlohmann::json out;
  std::string csv;
  if (a.model) {
    model::GestureNet net = model::load_checkpoint(*a.model);
    Dataset d = load_dataset(a.manifest);
    const std::size_t k = net.config().num_classes;
    const auto preds = model::predict(net, d.samples);
    std::vector<int> labels;
    for (const auto& s : d.samples) labels.push_back(s.label);
    const auto cm = eval::confusion(preds, labels, k);
    const auto m = eval::metrics(cm);

    std::map<int, std::pair<std::size_t, std::size_t>> by_fold;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      auto& [hit, n] = by_fold[d.manifest.entries[i].fold];
      hit += preds[i] == labels[i];
      ++n;
    }
    std::vector<double> fold_acc;
    for (const auto& [f, hn] : by_fold) fold_acc.push_back(double(hn.first) / double(hn.second));
    const auto pooled = eval::pooled_cv(fold_acc);

    std::printf("%-26s %9s %9s\n", "class", "precision", "recall");
    for (std::size_t i = 0; i < k; ++i) {
      if (cm.row_sum(i) == 0 && cm.col_sum(i) == 0) continue;
      std::printf("%-26s %9.3f %9.3f\n", eval::class_label(i).c_str(), m.precision[i], m.recall[i]);
    }
    std::printf("accuracy %.1f%% (per manifest fold: %s)\n", 100.0 * eval::accuracy(cm), pooled.str().c_str());
    out["accuracy"] = eval::accuracy(cm);
    out["pooled"] = {{"mean", pooled.mean}, {"std", pooled.stddev}, {"formatted", pooled.str()}};
    out["confusion"] = eval::to_json(cm);
    out["metrics"] = eval::to_json(m);
    csv = eval::to_csv(cm);

    if (a.prune_recall) {
      const auto pr = eval::prune_by_recall(cm, dataset::kClassTable, *a.prune_recall);
      std::vector<double> restricted;
      std::map<int, std::pair<std::size_t, std::size_t>> rf;
      const std::set<int> kept(pr.retained.begin(), pr.retained.end());
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!kept.contains(labels[i])) continue;
        auto& [hit, n] = rf[d.manifest.entries[i].fold];
        hit += preds[i] == labels[i];
        ++n;
      }
      for (const auto& [f, hn] : rf) restricted.push_back(double(hn.first) / double(hn.second));
      const auto rp = eval::pooled_cv(restricted);
      std::printf("pruned at recall < %.2f:", *a.prune_recall);
      for (int c : pr.pruned) std::printf(" [%s]", eval::class_label(std::size_t(c)).c_str());
      std::printf("\nrestricted accuracy %.1f%% (%s over %zu retained classes)\n", 100.0 * pr.restricted_accuracy,
                  rp.str().c_str(), pr.retained.size());
      out["prune"] = {{"threshold", *a.prune_recall},
                      {"retained", pr.retained},
                      {"pruned", pr.pruned},
                      {"restricted_accuracy", pr.restricted_accuracy},
                      {"pooled", {{"mean", rp.mean}, {"std", rp.stddev}, {"formatted", rp.str()}}}};
    }
  }

  if (!a.sweep.empty()) {
    const auto m = dataset::read_manifest(a.manifest);
    if (!m.spec) throw InputError("sweep needs the generation spec next to " + a.manifest.string());
    eval::SweepOptions so;
    so.sizes = a.sweep;
    so.stages = a.stages;
    so.base = *m.spec;
    so.model.frames = so.base.frames;
    so.model.height = so.base.height;
    so.model.width = so.base.width;
    so.model.channels = so.base.channels;
    so.folds = a.folds;
    so.fold_seed = so.base.seed;
    so.train = a.train;
    so.on_cell = [](const eval::SweepCell& c) {
      std::printf("stage %d, %zu clips/gesture: %s\n", c.stage, c.size, c.accuracy.str().c_str());
      std::fflush(stdout);
    };
    const auto rep = eval::size_sweep(so);
    std::printf("%s", rep.table().c_str());
    out["sweep"] = rep.json();
    if (!a.model) csv = rep.csv();
  }

  if (a.csv) write_file(*a.csv, csv);
  if (a.json) write_file(*a.json, out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------- services

struct BusArgs {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::uint16_t resolved() const { return port ? port : bus::bus_port(); }
};

struct RecognizerArgs {
  fs::path model;
  double fps = 30.0;
  bool keep_deprecated = false;
  bool no_injector = false;
  bool no_probs = false;
  std::uint64_t seed = 1;
};

app::RecognizerServiceOptions recognizer_options(const RecognizerArgs& a, const std::string& host, std::uint16_t port) {
  app::RecognizerServiceOptions o;
  o.bus_host = host;
  o.bus_port = port;
  o.inject_fps = a.fps;
  o.injector = !a.no_injector;
  o.publish_probs = !a.no_probs;
  o.injection.seed = a.seed;
  if (!a.keep_deprecated) {
    for (auto c : protocol::kDeprecated) o.smoother.excluded.insert(static_cast<int>(c));
  }
  o.log = log_line;
  return o;
}

int run_serve_recognizer(const RecognizerArgs& a, const BusArgs& b) {
  app::RecognizerService svc(model::load_checkpoint(a.model), recognizer_options(a, b.host, b.resolved()));
  svc.start();
  log_line("recognizer on bus " + b.host + ":" + std::to_string(b.resolved()));
  wait_for_signal();
  svc.stop();
  return 0;
}

int run_serve_robot(double speed, const BusArgs& b) {
  app::RobotServiceOptions o;
  o.bus_host = b.host;
  o.bus_port = b.resolved();
  o.speed = speed;
  o.log = log_line;
  app::RobotService svc(o);
  svc.start();
  log_line("robot on bus " + b.host + ":" + std::to_string(b.resolved()));
  wait_for_signal();
  svc.stop();
  return 0;
}

int run_serve_bus(const std::string& host, std::optional<fs::path> console) {
  bus::BrokerOptions bo;
  bo.host = host;
  bo.port = bus::bus_port();
  bo.log = log_line;
  bus::Broker broker(bo);
  broker.start();
  bus::BridgeOptions wo;
  wo.host = host;
  wo.port = bus::ws_port();
  wo.bus_host = host;
  wo.bus_port = broker.port();
  wo.static_root = console;
  wo.log = log_line;
  bus::WsBridge bridge(wo);
  bridge.start();
  log_line("broker on " + host + ":" + std::to_string(broker.port()) + ", websocket bridge on " + host + ":" +
           std::to_string(bridge.port()) + (console ? ", serving " + console->string() : ""));
  wait_for_signal();
  bridge.stop();
  broker.stop();
  return 0;
}

// -------------------------------------------------------------------- demo

struct DemoArgs {
  fs::path script;
  std::optional<fs::path> model;
  bool connect = false;
  double speed = 1.0;
  std::optional<fs::path> json;
  RecognizerArgs recognizer;
};

int run_demo(DemoArgs a, const BusArgs& b) {
  const auto script = app::load_demo_script(a.script);
  std::unique_ptr<bus::Broker> broker;
  std::unique_ptr<app::RecognizerService> rec;
  std::unique_ptr<app::RobotService> robot;
  std::string host = b.host;
  std::uint16_t port = b.resolved();
  if (!a.connect) {
    if (!a.model) throw InputError("--model is required unless --connect is given");
    bus::BrokerOptions bo;
    bo.host = host;
    bo.port = b.port;  // ephemeral unless given
    broker = std::make_unique<bus::Broker>(bo);
    broker->start();
    port = broker->port();
    a.recognizer.model = *a.model;
    rec = std::make_unique<app::RecognizerService>(model::load_checkpoint(*a.model),
                                                   recognizer_options(a.recognizer, host, port));
    rec->start();
    app::RobotServiceOptions ro;
    ro.bus_host = host;
    ro.bus_port = port;
    ro.speed = a.speed;
    ro.log = log_line;
    robot = std::make_unique<app::RobotService>(ro);
    robot->start();
  }
  app::DemoRunner runner(host, port, log_line);
  const auto result = runner.run(script);
  if (robot) robot->stop();
  if (rec) rec->stop();
  if (broker) broker->stop();

  for (std::size_t i = 0; i < result.steps.size(); ++i) {
    const auto& s = result.steps[i];
    std::printf("%zu. %-22s -> %-22s %s\n", i + 1, std::string(dataset::gesture_class(s.requested).label).c_str(),
                s.predicted ? s.predicted->label.c_str() : "(none)",
                s.control.is_null() ? "" : (s.control.value("attention", "") + "/" + s.control.value("mode", "")).c_str());
  }
  const auto& f = result.final_snapshot;
  std::printf("final base (%.6f, %.6f), arm %s, attention %s\n", f.pose.x, f.pose.y,
              std::string(robotsim::to_string(f.arm.posture)).c_str(),
              result.control ? std::string(protocol::to_string(result.control->attention)).c_str() : "?");
  for (const auto& msg : result.failures) std::printf("FAILED: %s\n", msg.c_str());
  std::printf("demo %s in %.1fs\n", result.passed ? "passed" : "failed", result.seconds);
  if (a.json) write_file(*a.json, app::to_json(result).dump(2) + "\n");
  return result.passed ? 0 : 1;
}

// ------------------------------------------------------------------- bench

int run_bench(std::optional<fs::path> model_path, double seconds, std::optional<fs::path> json) {
  model::GestureNet net = model_path ? model::load_checkpoint(*model_path) : model::GestureNet(model::ModelConfig{});
  const auto cfg = net.config();
  stream::Recognizer rec(std::move(net), {});
  std::vector<dataset::Frame> frames;
  for (int c = 0; c < 4; ++c) {
    auto part = app::render_injection(cfg, c, {}, std::uint64_t(c));
    frames.insert(frames.end(), part.begin(), part.end());
  }
  const auto t0 = std::chrono::steady_clock::now();
  double elapsed = 0.0;
  std::uint64_t n = 0;
  while (elapsed < seconds) {
    rec.process(frames[n++ % frames.size()], 0);
    if (n % 64 == 0) elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double wps = double(rec.inferences()) / elapsed;
  std::printf("%zux%zux%zu, stride %zu: %llu frames, %llu windows in %.2fs -> %.1f windows/s (%.1f frames/s)\n",
              cfg.frames, cfg.height, cfg.width, stream::SmootherConfig{}.stride, static_cast<unsigned long long>(n),
              static_cast<unsigned long long>(rec.inferences()), elapsed, wps, double(n) / elapsed);
  if (json) {
    write_file(*json, nlohmann::json{{"windows_per_second", wps},
                                     {"frames_per_second", double(n) / elapsed},
                                     {"windows", rec.inferences()},
                                     {"seconds", elapsed}}
                          .dump(2) +
                          "\n");
  }
  return 0;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    const unsigned long v = std::stoul(item, &pos);
    if (pos != item.size() || v == 0) throw CLI::ValidationError("--sweep", "bad size '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees many large temporaries; keep them on the heap.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);

  CLI::App app{"hiros: gesture recognition for human-robot interaction"};
  app.require_subcommand(1);
  BusArgs bus_args;
  const auto add_bus = [&](CLI::App* sub) {
    sub->add_option("--bus-host", bus_args.host, "Broker host");
    sub->add_option("--bus-port", bus_args.port, "Broker port (default $HIROS_BUS_PORT or 7447)");
  };

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic gesture dataset");
  gen_cmd->add_option("--stage", gen.spec.stage, "1: per-participant motions, 2: instructed motions")
      ->check(CLI::IsMember({1, 2}));
  gen_cmd->add_option("--participants", gen.spec.participants)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--per-class", gen.spec.clips_per_class, "Clips per class per participant")
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--classes", gen.spec.classes, "Use class ids 0..N-1")->check(CLI::Range(1, 27));
  gen_cmd->add_option("--seed", gen.spec.seed);
  gen_cmd->add_option("--frames", gen.spec.frames)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--height", gen.spec.height)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--width", gen.spec.width)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--amplitude-jitter", gen.spec.noise.amplitude);
  gen_cmd->add_option("--phase-jitter", gen.spec.noise.phase, "Phase jitter in cycles");
  gen_cmd->add_option("--offset-px", gen.spec.noise.offset_px);
  gen_cmd->add_option("--noise", gen.spec.noise.noise_sigma, "Pixel noise sigma");
  gen_cmd->add_option("--folds", gen.folds, "Fold count written into the manifest (0: none)");
  gen_cmd->add_option("--out", gen.out)->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Cross-validate and train a model");
  train_cmd->add_option("--manifest", train.manifest)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--folds", train.folds)->check(CLI::Range(2, 100));
  train_cmd->add_option("--epochs", train.train.epochs);
  train_cmd->add_option("--lr", train.train.lr)->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", train.train.batch)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train.train.seed);
  train_cmd->add_flag("--no-cv", train.no_cv, "Skip cross-validation; only train the final model");
  train_cmd->add_option("--exclude", train.exclude, "Class ids left out of training, e.g. 11,15,16,19,20")
      ->delimiter(',')
      ->check(CLI::Range(0, 26));
  train_cmd->add_option("--report", train.report, "Write a JSON report");
  train_cmd->add_option("--out", train.out)->required();

  EvalArgs ev;
  std::string sweep_sizes;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model, prune classes, or run a size sweep");
  eval_cmd->add_option("--model", ev.model)->check(CLI::ExistingFile);
  eval_cmd->add_option("--manifest", ev.manifest)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--prune-recall", ev.prune_recall)->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--sweep", sweep_sizes, "Comma separated clips/gesture, e.g. 50,100,150");
  eval_cmd->add_option("--stages", ev.stages)->check(CLI::IsMember({1, 2}));
  eval_cmd->add_option("--epochs", ev.train.epochs, "Epochs per sweep fold");
  eval_cmd->add_option("--lr", ev.train.lr)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--folds", ev.folds)->check(CLI::Range(2, 100));
  eval_cmd->add_option("--csv", ev.csv, "Confusion matrix (or sweep table) as CSV");
  eval_cmd->add_option("--json", ev.json);

  RecognizerArgs rec;
  auto* rec_cmd = app.add_subcommand("serve-recognizer", "Run the streaming recognizer on the bus");
  rec_cmd->add_option("--model", rec.model)->required()->check(CLI::ExistingFile);
  rec_cmd->add_option("--fps", rec.fps, "Frame rate of injected clips")->check(CLI::PositiveNumber);
  rec_cmd->add_flag("--keep-deprecated", rec.keep_deprecated, "Also emit the five deprecated commands");
  rec_cmd->add_flag("--no-injector", rec.no_injector, "Ignore camera/inject requests");
  rec_cmd->add_flag("--no-probs", rec.no_probs, "Do not publish gesture/probs");
  add_bus(rec_cmd);

  double robot_speed = 1.0;
  auto* robot_cmd = app.add_subcommand("serve-robot", "Run the controller and simulated robot on the bus");
  robot_cmd->add_option("--speed", robot_speed, "Simulated seconds per second")->check(CLI::PositiveNumber);
  add_bus(robot_cmd);

  std::string bus_host = "127.0.0.1";
  std::optional<fs::path> console;
  auto* bus_cmd = app.add_subcommand("serve-bus", "Run the broker and websocket bridge");
  bus_cmd->add_option("--host", bus_host);
  bus_cmd->add_option("--with-console", console, "Serve the operator console from this directory")
      ->check(CLI::ExistingDirectory);

  DemoArgs demo;
  auto* demo_cmd = app.add_subcommand("demo", "Replay a gesture script and check the final robot state");
  demo_cmd->add_option("--script", demo.script)->required()->check(CLI::ExistingFile);
  demo_cmd->add_option("--model", demo.model, "Start broker and services in-process with this model")
      ->check(CLI::ExistingFile);
  demo_cmd->add_flag("--connect", demo.connect, "Use already running services");
  demo_cmd->add_option("--speed", demo.speed, "Robot simulation speed")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--fps", demo.recognizer.fps)->check(CLI::PositiveNumber);
  demo_cmd->add_option("--json", demo.json);
  add_bus(demo_cmd);

  std::optional<fs::path> bench_model, bench_json;
  double bench_seconds = 5.0;
  auto* bench_cmd = app.add_subcommand("bench", "Streaming inference throughput");
  bench_cmd->add_option("--model", bench_model)->check(CLI::ExistingFile);
  bench_cmd->add_option("--seconds", bench_seconds)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--json", bench_json);

  try {
    app.parse(argc, argv);
    if (!sweep_sizes.empty()) ev.sweep = parse_sizes(sweep_sizes);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) {
      if (!ev.model && ev.sweep.empty()) {
        std::cerr << "eval: give --model, --sweep, or both\n" << eval_cmd->help();
        return 2;
      }
      return run_eval(ev);
    }
    if (*rec_cmd) return run_serve_recognizer(rec, bus_args);
    if (*robot_cmd) return run_serve_robot(robot_speed, bus_args);
    if (*bus_cmd) return run_serve_bus(bus_host, console);
    if (*demo_cmd) return run_demo(demo, bus_args);
    if (*bench_cmd) return run_bench(bench_model, bench_seconds, bench_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
