#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ikr/csp.hpp"
#include "ikr/dataset.hpp"
#include "ikr/error.hpp"
#include "ikr/model.hpp"
#include "ikr/model_io.hpp"
#include "ikr/prune.hpp"
#include "ikr/prune_config.hpp"
#include "ikr/report.hpp"
#include "ikr/train.hpp"

namespace ikr {

struct DataOptions {
  std::size_t validation_count = 5000;
  std::size_t train_limit = 0;  // 0 = all training samples
  bool augment = false;         // duplicate with random contrast (and flips for CIFAR-10)
};

// Dataset ids: `mnist:<dir>`, `cifar10:<dir>`, `blobs:<seed>`.
struct DataSource {
  std::string kind;
  std::string arg;
};

inline DataSource parse_data_source(const std::string& id) {
  const auto colon = id.find(':');
  DataSource s{id.substr(0, colon), colon == std::string::npos ? "" : id.substr(colon + 1)};
  if (s.kind != "mnist" && s.kind != "cifar10" && s.kind != "blobs")
    throw UsageError("unknown dataset '" + id + "' (expected mnist:<dir>, cifar10:<dir> or blobs:<seed>)");
  if (s.kind != "blobs" && s.arg.empty()) throw UsageError("dataset '" + id + "' needs a directory");
  return s;
}

namespace detail {

inline std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(what + " must be a non-negative integer, got '" + s + "'");
  }
}

}  // namespace detail

// Loads train and validation splits shaped for a model with `input` images
// and `classes` outputs. Blobs are generated to match.
inline TrainValidation load_splits(const std::string& id, const Shape3& input, std::size_t classes,
                                   const DataOptions& opt, std::uint64_t seed = 0) {
  const auto src = parse_data_source(id);
  Dataset full;
  if (src.kind == "mnist") {
    full = load_mnist(src.arg, Split::Train);
  } else if (src.kind == "cifar10") {
    full = load_cifar10(src.arg, Split::Train);
  } else {
    BlobOptions b;
    b.shape = input;
    b.classes = classes;
    b.samples = 1024;
    full = make_blobs(b, src.arg.empty() ? 0 : detail::parse_u64(src.arg, "blob seed"));
  }
  std::size_t n_val = std::min(opt.validation_count, full.size() / 4);
  auto tv = split_train_validation(full, n_val);
  if (opt.train_limit && opt.train_limit < tv.train.size()) tv.train = subset(tv.train, 0, opt.train_limit, Split::Train);
  if (src.kind == "cifar10") {
    const auto st = channel_stats(tv.train);
    standardize(tv.train, st);
    standardize(tv.validation, st);
  }
  if (opt.augment) {
    AugmentOptions a;
    a.horizontal_flip = src.kind == "cifar10";
    tv.train = augment_duplicate(tv.train, a, seed ^ 0x9e3779b97f4a7c15ULL);
  }
  if (tv.train.image_shape != input)
    throw DimensionError("dataset images are " + to_string(tv.train.image_shape) + ", model expects " +
                         to_string(input));
  if (tv.train.num_classes != classes)
    throw DimensionError("dataset has " + std::to_string(tv.train.num_classes) + " classes, model outputs " +
                         std::to_string(classes));
  return tv;
}

// Model ids: `lenet5`, `cnn_small`, or `arch:<architecture>@CxHxW`.
inline NetworkModel resolve_model(const std::string& id) {
  if (id == "lenet5") return make_lenet5();
  if (id == "cnn_small") return make_cnn_small();
  if (id.rfind("arch:", 0) == 0) {
    const auto at = id.find('@');
    if (at == std::string::npos) throw UsageError("model '" + id + "' needs an input shape, e.g. @1x28x28");
    const std::string shape = id.substr(at + 1);
    std::size_t dims[3];
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
      const auto x = shape.find('x', pos);
      const auto part = shape.substr(pos, x == std::string::npos ? std::string::npos : x - pos);
      dims[i] = detail::parse_u64(part, "input shape");
      if ((i < 2) == (x == std::string::npos)) throw UsageError("input shape must be CxHxW, got '" + shape + "'");
      pos = x + 1;
    }
    return make_model("custom", id.substr(5, at - 5), Shape3{dims[0], dims[1], dims[2]});
  }
  throw UsageError("unknown model '" + id + "' (expected lenet5, cnn_small or arch:<string>@CxHxW)");
}

inline PruneConfig default_prune_config(const std::string& model_id) {
  if (model_id == "lenet5") return lenet5_prune_config();
  if (model_id == "cnn_small") return cnn_small_prune_config();
  throw UsageError("no built-in prune config for '" + model_id + "'; pass --config");
}

struct PipelineRun {
  std::uint64_t seed = 1;
  std::string dataset;
  std::string model_id = "lenet5";
  std::optional<std::filesystem::path> baseline_model;  // load instead of training
  std::optional<std::filesystem::path> prune_config;    // default: built-in config for model_id
  TrainHyper baseline;
  TrainHyper retrain;
  DataOptions data;
  std::filesystem::path out_dir;
  std::vector<std::size_t> sensitivity_layers;
  std::vector<double> sparsity_grid{0.0, 0.2, 0.4, 0.6, 0.8, 0.9};
  std::function<void(const std::string&)> log;
};

struct PipelineResult {
  DensityReport report;
  NetworkModel baseline;
  PruneResult pruned;  // model holds the retrained weights
  CSPModel csp;
  std::vector<std::filesystem::path> artifacts;
};

// train (or load) -> prune -> retrain -> evaluate -> write artifacts. On a
// stage failure `pipeline.status` records the stage and the files already
// written, and the error is rethrown with the stage name.
inline PipelineResult run_pipeline(const PipelineRun& run) {
  PipelineResult res;
  std::string stage = "setup";
  auto say = [&](const std::string& m) {
    if (run.log) run.log(m);
  };
  auto write_status = [&](const std::string& status) {
    if (run.out_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(run.out_dir, ec);
    std::ofstream os(run.out_dir / "pipeline.status");
    os << status << "\n";
    for (const auto& a : res.artifacts) os << "wrote " << a.string() << "\n";
  };
  auto write_text = [&](const std::string& name, const std::string& text) {
    const auto p = run.out_dir / name;
    std::ofstream os(p, std::ios::binary);
    if (!os || !(os << text)) throw DataError("cannot write " + p.string());
    res.artifacts.push_back(p);
  };

  try {
    if (run.out_dir.empty()) throw UsageError("output directory not set");
    std::filesystem::create_directories(run.out_dir);

    stage = "model";
    NetworkModel model = run.baseline_model ? load_model(*run.baseline_model) : resolve_model(run.model_id);
    const PruneConfig cfg =
        run.prune_config ? load_prune_config(*run.prune_config) : default_prune_config(run.model_id);
    validate_prune_config(cfg, model.layers);

    stage = "data";
    const auto tv = load_splits(run.dataset, model.input, model.num_classes(), run.data, run.seed);
    say("data: " + std::to_string(tv.train.size()) + " train, " + std::to_string(tv.validation.size()) +
        " validation");

    stage = "train";
    if (!run.baseline_model) {
      initialize(model, run.seed);
      model = train(std::move(model), tv.train, run.baseline, run.seed);
    }
    res.baseline = model;
    save_model(model, run.out_dir / "baseline.ikrm");
    res.artifacts.push_back(run.out_dir / "baseline.ikrm");

    stage = "evaluate-baseline";
    res.report.baseline_mcr = evaluate(model, tv.validation);
    say("baseline validation MCR " + std::to_string(*res.report.baseline_mcr) + "%");

    if (!run.sensitivity_layers.empty()) {
      stage = "sensitivity";
      std::vector<SensitivityReport> reps;
      for (auto l : run.sensitivity_layers) reps.push_back(sensitivity_sweep(model, l, run.sparsity_grid, tv.validation));
      write_text("sensitivity.csv", sensitivity_csv(reps));
    }

    stage = "prune";
    res.pruned = apply_pruning(model, cfg);

    stage = "retrain";
    res.pruned.model = retrain_masked(std::move(res.pruned.model), res.pruned.masks, tv.train, run.retrain, run.seed + 1);

    stage = "evaluate-final";
    res.report.final_mcr = evaluate(res.pruned.model, tv.validation);
    say("final validation MCR " + std::to_string(*res.report.final_mcr) + "%");

    stage = "export";
    res.csp = encode_model(res.pruned);
    save_model(res.pruned.model, run.out_dir / "pruned.ikrm");
    res.artifacts.push_back(run.out_dir / "pruned.ikrm");
    save_csp(res.csp, run.out_dir / "model.ikrc");
    res.artifacts.push_back(run.out_dir / "model.ikrc");

    res.report.network = run.baseline_model ? model.name : run.model_id;
    res.report.kept_weights = res.pruned.kept_weights();
    res.report.dense_weights = model.dense_weight_count();
    res.report.ops = count_ops(res.csp);

    nlohmann::json j = to_json(res.report);
    j["seed"] = run.seed;
    j["dataset"] = run.dataset;
    j["prune_config"] = format_prune_config(cfg);
    bool have_ref = false;
    for (const auto& r : reference_rows()) have_ref |= r.network == res.report.network;
    if (have_ref) {
      const auto cmp = report_compare(res.report);
      j["comparison"] = to_json(cmp);
      write_text("report.txt", format_table(cmp));
    }
    write_text("report.json", j.dump(2) + "\n");
    write_status("complete");
  } catch (const Error& e) {
    write_status("failed at stage " + stage + ": " + e.what());
    rethrow_with_context(e, "stage " + stage);
  } catch (const std::exception& e) {
    write_status("failed at stage " + stage + ": " + e.what());
    throw DataError("stage " + stage + ": " + e.what());
  }
  return res;
}

}  // namespace ikr
