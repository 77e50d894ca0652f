#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"

#include "ikr/csp.hpp"
#include "ikr/dataset.hpp"
#include "ikr/error.hpp"
#include "ikr/model_io.hpp"
#include "ikr/pipeline.hpp"
#include "ikr/prune.hpp"
#include "ikr/prune_config.hpp"
#include "ikr/report.hpp"
#include "ikr/sparse_engine.hpp"
#include "ikr/spe_model.hpp"
#include "ikr/train.hpp"

namespace {

using namespace ikr;

using AnyModel = std::variant<NetworkModel, CSPModel>;

AnyModel load_any(const std::string& path) {
  const auto bytes = read_binary_file(path);
  if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "IKRC") return deserialize_csp(bytes);
  return deserialize_model(bytes);
}

NetworkModel load_dense(const std::string& path) {
  auto m = load_any(path);
  if (auto* d = std::get_if<NetworkModel>(&m)) return *d;
  return decode_model(std::get<CSPModel>(m));
}

std::vector<std::pair<std::size_t, double>> parse_schedule(const std::string& s) {
  std::vector<std::pair<std::size_t, double>> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      out.emplace_back(std::stoul(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw UsageError("schedule entries look like EPOCHS:RATE, got '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty schedule");
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const std::string& what) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) out.push_back(static_cast<T>(std::stod(item, &used)));
      else out.push_back(static_cast<T>(std::stoull(item, &used)));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(what + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

struct HyperArgs {
  std::string schedule = "15:1e-3,10:1e-4";
  std::string optimizer = "adam";
  std::size_t batch = 128;
  float keep = 0.5f;
  bool quiet = false;

  void add(CLI::App* app, const std::string& default_schedule) {
    schedule = default_schedule;
    app->add_option("--schedule", schedule, "EPOCHS:RATE phases, comma separated")->capture_default_str();
    app->add_option("--optimizer", optimizer, "adam or sgd")->capture_default_str();
    app->add_option("--batch", batch, "mini-batch size")->capture_default_str();
    app->add_option("--dropout-keep", keep, "dropout keep probability")->capture_default_str();
    app->add_flag("--quiet", quiet, "no per-epoch log");
  }

  TrainHyper build() const {
    TrainHyper h;
    if (optimizer == "adam") h.optimizer = Optimizer::Adam;
    else if (optimizer == "sgd") h.optimizer = Optimizer::SGD;
    else throw UsageError("optimizer must be adam or sgd");
    h.schedule = parse_schedule(schedule);
    h.batch_size = batch;
    h.dropout_keep = keep;
    if (!quiet)
      h.on_epoch = [](const EpochStats& s) {
        std::cerr << "epoch " << s.epoch << " lr " << s.learning_rate << " loss " << s.mean_loss << "\n";
      };
    return h;
  }
};

struct DataArgs {
  std::string dataset;
  std::size_t validation = 5000;
  std::size_t train_limit = 0;
  bool augment = false;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "mnist:DIR, cifar10:DIR or blobs:SEED")->required();
    app->add_option("--validation", validation, "validation samples taken from the end of the training set")
        ->capture_default_str();
    app->add_option("--train-limit", train_limit, "use only the first N training samples (0 = all)");
    app->add_flag("--augment", augment, "duplicate training set with random contrast (flips for CIFAR-10)");
  }
  DataOptions options() const { return {validation, train_limit, augment}; }
};

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << text)) throw DataError("cannot write " + path);
}

int run(int argc, char** argv) {
  CLI::App app{"IKR kernel pruning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "random seed")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a dense baseline");
  std::string t_model = "lenet5", t_out;
  DataArgs t_data;
  HyperArgs t_hyper;
  train_cmd->add_option("--model", t_model, "lenet5, cnn_small or arch:<string>@CxHxW")->capture_default_str();
  train_cmd->add_option("--out", t_out, "output IKRM file")->required();
  t_data.add(train_cmd);
  t_hyper.add(train_cmd, "15:1e-3,10:1e-4");

  // sensitivity
  auto* sens_cmd = app.add_subcommand("sensitivity", "per-layer sparsity sweep without retraining");
  std::string s_model, s_out, s_layers = "0", s_grid = "0,0.2,0.4,0.6,0.8,0.9", s_npat;
  std::size_t s_nsets = 1, s_k = 0;
  DataArgs s_data;
  sens_cmd->add_option("--model", s_model, "trained IKRM file")->required();
  sens_cmd->add_option("--layers", s_layers, "weight-layer ordinals, comma separated")->capture_default_str();
  sens_cmd->add_option("--grid", s_grid, "sparsity values in [0, 1)")->capture_default_str();
  sens_cmd->add_option("--npat", s_npat, "sweep these N_pat values instead (comma separated)");
  sens_cmd->add_option("--nsets", s_nsets, "kernel sets per layer")->capture_default_str();
  sens_cmd->add_option("--K", s_k, "kernel size for FC layers (default: first of 5,4,3,2,1 that divides)");
  sens_cmd->add_option("--out", s_out, "CSV output (default stdout)");
  s_data.add(sens_cmd);

  // prune
  auto* prune_cmd = app.add_subcommand("prune", "apply IKR pruning");
  std::string p_model, p_config, p_out, p_csp;
  prune_cmd->add_option("--model", p_model, "input IKRM file")->required();
  prune_cmd->add_option("--config", p_config, "prune config file")->required();
  prune_cmd->add_option("--out", p_out, "pruned IKRM file")->required();
  prune_cmd->add_option("--csp", p_csp, "also write the pruning structure as IKRC");

  // retrain
  auto* retrain_cmd = app.add_subcommand("retrain", "masked retraining of a pruned model");
  std::string r_structure, r_model, r_out;
  DataArgs r_data;
  HyperArgs r_hyper;
  retrain_cmd->add_option("--structure", r_structure, "IKRC file with masks and patterns")->required();
  retrain_cmd->add_option("--model", r_model, "IKRM weights to start from (default: those in --structure)");
  retrain_cmd->add_option("--out", r_out, "output file (.ikrc writes CSP, anything else IKRM)")->required();
  r_data.add(retrain_cmd);
  r_hyper.add(retrain_cmd, "10:1e-3,5:1e-4");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "misclassification rate of an IKRM or IKRC model");
  std::string e_model, e_split = "validation";
  DataArgs e_data;
  eval_cmd->add_option("--model", e_model, "model file")->required();
  eval_cmd->add_option("--split", e_split, "validation or test")->capture_default_str();
  e_data.add(eval_cmd);

  // export-csp
  auto* export_cmd = app.add_subcommand("export-csp", "encode pruned weights into IKRC");
  std::string x_structure, x_model, x_out;
  std::size_t x_word = 32;
  export_cmd->add_option("--structure", x_structure, "IKRC file supplying patterns and assignments")->required();
  export_cmd->add_option("--model", x_model, "IKRM file supplying the weights")->required();
  export_cmd->add_option("--out", x_out, "output IKRC file")->required();
  export_cmd->add_option("--word-len", x_word, "word length for the storage summary (8, 16, 32)")
      ->capture_default_str();

  // cost-sweep
  auto* cost_cmd = app.add_subcommand("cost-sweep", "SPE resource estimates");
  std::string c_param = "n_pat", c_values = "1,2,4,8,16,32", c_out, c_config;
  SpeConfig c_base;
  c_base.n_keep = 4;
  c_base.n_pat = 8;
  c_base.kernel_dim = 3;
  cost_cmd->add_option("--param", c_param, "set_coverage, n_pat, word_len or n_keep")->capture_default_str();
  cost_cmd->add_option("--values", c_values, "values of the swept parameter")->capture_default_str();
  cost_cmd->add_option("--n-keep", c_base.n_keep)->capture_default_str();
  cost_cmd->add_option("--n-pat", c_base.n_pat)->capture_default_str();
  cost_cmd->add_option("--K", c_base.kernel_dim)->capture_default_str();
  cost_cmd->add_option("--word-len", c_base.word_len)->capture_default_str();
  cost_cmd->add_option("--coverage", c_base.set_coverage)->capture_default_str();
  cost_cmd->add_option("--fan-in", c_base.fan_in, "mux inputs per logic unit")->capture_default_str();
  cost_cmd->add_option("--config", c_config, "print per-layer SPE budgets for this prune config instead");
  cost_cmd->add_option("--out", c_out, "CSV output (default stdout)");

  // report
  auto* report_cmd = app.add_subcommand("report", "density, op-count and storage report");
  std::string rp_model = "lenet5", rp_config, rp_json, rp_ops, rp_csp, rp_ref;
  std::size_t rp_word = 32;
  report_cmd->add_option("--model", rp_model, "lenet5, cnn_small, arch:<string>@CxHxW or an IKRM file")
      ->capture_default_str();
  report_cmd->add_option("--config", rp_config, "prune config (default: built-in for the model)");
  report_cmd->add_option("--csp", rp_csp, "report an IKRC file instead (actual kept weights and storage)");
  report_cmd->add_option("--reference", rp_ref, "reference network id (lenet5 or cnn_small)");
  report_cmd->add_option("--word-len", rp_word, "weight word length for storage (8, 16, 32)")->capture_default_str();
  report_cmd->add_option("--json", rp_json, "write the report as JSON");
  report_cmd->add_option("--ops-csv", rp_ops, "write per-layer op counts as CSV");

  // pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "train, prune, retrain, evaluate and export in one go");
  PipelineRun pr;
  std::string pl_baseline, pl_config, pl_out, pl_sens;
  DataArgs pl_data;
  HyperArgs pl_hyper, pl_retrain;
  pipe_cmd->add_option("--model", pr.model_id, "lenet5, cnn_small or arch:<string>@CxHxW")->capture_default_str();
  pipe_cmd->add_option("--baseline", pl_baseline, "load this IKRM instead of training");
  pipe_cmd->add_option("--config", pl_config, "prune config (default: built-in)");
  pipe_cmd->add_option("--out", pl_out, "output directory")->required();
  pipe_cmd->add_option("--sensitivity", pl_sens, "also sweep these weight-layer ordinals");
  pl_data.add(pipe_cmd);
  pl_hyper.add(pipe_cmd, "15:1e-3,10:1e-4");
  std::string pl_retrain_schedule = "10:1e-3,5:1e-4";
  pipe_cmd->add_option("--retrain-schedule", pl_retrain_schedule, "retraining EPOCHS:RATE phases")
      ->capture_default_str();

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "check an IKRM or IKRC file and print a summary");
  std::string v_file;
  validate_cmd->add_option("file", v_file, "model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*train_cmd) {
    NetworkModel m = resolve_model(t_model);
    const auto tv = load_splits(t_data.dataset, m.input, m.num_classes(), t_data.options(), seed);
    initialize(m, seed);
    m = train(std::move(m), tv.train, t_hyper.build(), seed);
    save_model(m, t_out);
    std::cout << "validation_mcr_pct " << evaluate(m, tv.validation) << "\n";
  } else if (*sens_cmd) {
    const NetworkModel m = load_dense(s_model);
    const auto tv = load_splits(s_data.dataset, m.input, m.num_classes(), s_data.options(), seed);
    SweepOptions opt;
    opt.n_sets = s_nsets;
    if (s_k) opt.kernel_dim = s_k;
    const auto grid = parse_list<double>(s_grid, "--grid");
    if (!s_npat.empty()) {
      std::string csv;
      for (auto l : parse_list<std::size_t>(s_layers, "--layers")) {
        auto text = npat_csv(l, npat_sweep(m, l, parse_list<std::size_t>(s_npat, "--npat"), grid, tv.validation, opt));
        csv += csv.empty() ? text : text.substr(text.find('\n') + 1);
      }
      write_or_print(s_out, csv);
    } else {
      std::vector<SensitivityReport> reps;
      for (auto l : parse_list<std::size_t>(s_layers, "--layers"))
        reps.push_back(sensitivity_sweep(m, l, grid, tv.validation, opt));
      write_or_print(s_out, sensitivity_csv(reps));
    }
  } else if (*prune_cmd) {
    const NetworkModel m = load_dense(p_model);
    const auto res = apply_pruning(m, load_prune_config(p_config));
    save_model(res.model, p_out);
    if (!p_csp.empty()) save_csp(encode_model(res), p_csp);
    std::cout << "kept_weights " << res.kept_weights() << " of " << m.dense_weight_count() << "\n";
  } else if (*retrain_cmd) {
    const auto csp = load_csp(r_structure);
    auto st = structure_of(csp);
    if (!r_model.empty()) st = with_weights(std::move(st), load_dense(r_model));
    const auto tv = load_splits(r_data.dataset, st.model.input, st.model.num_classes(), r_data.options(), seed);
    st.model = retrain_masked(std::move(st.model), st.masks, tv.train, r_hyper.build(), seed);
    const bool to_csp = std::filesystem::path(r_out).extension() == ".ikrc";
    if (to_csp) save_csp(encode_model(st), r_out);
    else save_model(st.model, r_out);
    std::cout << "validation_mcr_pct " << evaluate(st.model, tv.validation) << "\n";
  } else if (*eval_cmd) {
    const auto any = load_any(e_model);
    const Shape3 input = std::visit([](const auto& m) { return m.input; }, any);
    const auto specs = std::visit(
        [](const auto& m) {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, CSPModel>) return m.specs();
          else return m.layers;
        },
        any);
    const std::size_t classes = specs.empty() ? 0 : specs.back().out_maps;
    Dataset eval_set;
    if (e_split == "validation") {
      eval_set = load_splits(e_data.dataset, input, classes, e_data.options(), seed).validation;
    } else if (e_split == "test") {
      const auto src = parse_data_source(e_data.dataset);
      if (src.kind == "mnist") eval_set = load_mnist(src.arg, Split::Test);
      else if (src.kind == "cifar10") {
        auto train_set = load_splits(e_data.dataset, input, classes, e_data.options(), seed).train;
        eval_set = load_cifar10(src.arg, Split::Test);
        standardize(eval_set, channel_stats(train_set));
      } else throw UsageError("blobs datasets have no test split");
    } else {
      throw UsageError("--split must be validation or test");
    }
    double mcr = 0.0;
    if (const auto* c = std::get_if<CSPModel>(&any)) mcr = SparseEngine(*c).evaluate(eval_set);
    else mcr = evaluate(std::get<NetworkModel>(any), eval_set);
    std::cout << e_split << "_mcr_pct " << mcr << "\n";
  } else if (*export_cmd) {
    const auto st = with_weights(structure_of(load_csp(x_structure)), load_dense(x_model));
    const auto csp = encode_model(st);
    save_csp(csp, x_out);
    const auto sr = storage_bits(csp, x_word);
    std::cout << "kept_weights " << st.kept_weights() << "\nstorage_bits " << sr.total() << "\ndense_bits "
              << sr.dense_weight_bits() << "\n";
  } else if (*cost_cmd) {
    if (!c_config.empty()) {
      const auto cfg = load_prune_config(c_config);
      std::ostringstream os;
      os << "layer,spe_count,multipliers,adder_count,adder_depth,mux_cost,flipflop_overhead\n";
      for (const auto& l : cfg.layers) {
        const auto b = layer_spe_budget(cfg, l.layer, c_base);
        os << l.layer << ',' << b.spe_count << ',' << b.total.multipliers << ',' << b.total.adder_count << ','
           << b.total.adder_depth << ',' << b.total.mux_cost << ',' << b.total.flipflop_overhead << '\n';
        std::cerr << "layer " << l.layer << ": " << bandwidth_advisory(b) << "\n";
      }
      write_or_print(c_out, os.str());
    } else {
      const auto pts = sweep_costs(c_base, parse_sweep_param(c_param), parse_list<std::size_t>(c_values, "--values"));
      write_or_print(c_out, cost_csv(pts));
    }
  } else if (*report_cmd) {
    DensityReport rep;
    std::optional<StorageReport> storage;
    if (!rp_csp.empty()) {
      const auto csp = load_csp(rp_csp);
      const auto st = structure_of(csp);
      rep.network = csp.name;
      rep.kept_weights = st.kept_weights();
      rep.dense_weights = st.model.dense_weight_count();
      rep.ops = count_ops(csp);
      storage = storage_bits(csp, rp_word);
    } else {
      const bool is_file = std::filesystem::exists(rp_model) && std::filesystem::is_regular_file(rp_model);
      NetworkModel m = is_file ? load_dense(rp_model) : resolve_model(rp_model);
      const PruneConfig cfg = rp_config.empty() ? default_prune_config(is_file ? m.name : rp_model)
                                                : load_prune_config(rp_config);
      rep = analytic_report(m, cfg);
    }
    const std::string ref = rp_ref.empty() ? rep.network : rp_ref;
    bool known = false;
    for (const auto& r : reference_rows()) known |= r.network == ref;
    nlohmann::json j = to_json(rep);
    std::cout << "network " << rep.network << "\nkept_weights " << rep.kept_weights << " / " << rep.dense_weights
              << "\nweight_density_pct " << rep.weight_density() << "\ncomputational_density_pct "
              << rep.computational_density() << "\n";
    if (storage) {
      std::cout << "storage_bits " << storage->total() << " (dense " << storage->dense_weight_bits() << ")\n";
      j["storage_bits"] = storage->total();
      j["dense_storage_bits"] = storage->dense_weight_bits();
    }
    if (known || !rp_ref.empty()) {
      const auto cmp = report_compare(rep, ref);
      std::cout << format_table(cmp);
      j["comparison"] = to_json(cmp);
    }
    if (!rp_json.empty()) write_or_print(rp_json, j.dump(2) + "\n");
    if (!rp_ops.empty()) write_or_print(rp_ops, ops_csv(rep.ops));
  } else if (*validate_cmd) {
    const auto any = load_any(v_file);
    if (const auto* d = std::get_if<NetworkModel>(&any)) {
      std::cout << "IKRM ok: " << d->name << ", " << d->layers.size() << " layers, " << d->dense_weight_count()
                << " weights\n";
    } else {
      const auto& c = std::get<CSPModel>(any);
      std::size_t csp_layers = 0;
      for (const auto& l : c.layers) csp_layers += l.csp.has_value();
      std::cout << "IKRC ok: " << c.name << ", " << c.layers.size() << " layers (" << csp_layers << " CSP), "
                << structure_of(c).kept_weights() << " kept weights\n";
    }
  } else if (*pipe_cmd) {
    pr.seed = seed;
    pr.dataset = pl_data.dataset;
    pr.data = pl_data.options();
    pr.baseline = pl_hyper.build();
    pl_retrain = pl_hyper;
    pl_retrain.schedule = pl_retrain_schedule;
    pr.retrain = pl_retrain.build();
    pr.out_dir = pl_out;
    if (!pl_baseline.empty()) pr.baseline_model = pl_baseline;
    if (!pl_config.empty()) pr.prune_config = pl_config;
    if (!pl_sens.empty()) pr.sensitivity_layers = parse_list<std::size_t>(pl_sens, "--sensitivity");
    pr.log = [](const std::string& m) { std::cerr << m << "\n"; };
    const auto res = run_pipeline(pr);
    std::cout << "baseline_mcr_pct " << *res.report.baseline_mcr << "\nfinal_mcr_pct " << *res.report.final_mcr
              << "\nkept_weights " << res.report.kept_weights << "\nweight_density_pct "
              << res.report.weight_density() << "\ncomputational_density_pct " << res.report.computational_density()
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ikr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
