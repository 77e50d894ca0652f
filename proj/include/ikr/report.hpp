#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ikr/error.hpp"
#include "ikr/model.hpp"
#include "ikr/prune.hpp"
#include "ikr/prune_config.hpp"
#include "ikr/sparse_engine.hpp"

namespace ikr {

struct DensityReport {
  std::string network;
  std::optional<double> baseline_mcr;  // percent
  std::optional<double> final_mcr;
  std::size_t kept_weights = 0;
  std::size_t dense_weights = 0;
  OpCountReport ops;

  double weight_density() const {
    return dense_weights ? 100.0 * static_cast<double>(kept_weights) / static_cast<double>(dense_weights) : 100.0;
  }
  double computational_density() const { return ops.density(); }
};

// Analytic report from the architecture and prune config alone.
inline DensityReport analytic_report(const NetworkModel& model, const PruneConfig& cfg) {
  DensityReport r;
  r.network = model.name;
  r.kept_weights = analytic_kept_weights(model.layers, cfg);
  r.dense_weights = model.dense_weight_count();
  r.ops = count_ops(model.layers, model.input, cfg);
  return r;
}

// Reference figures for one network.
struct ReferenceRow {
  std::string network;
  double baseline_mcr = 0.0;
  double final_mcr = 0.0;
  double weights = 0.0;
  double weight_density = 0.0;
  double computations = 0.0;
  double computational_density = 0.0;
};

inline const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows{
      {"lenet5", 0.6, 1.1, 42.7e3, 10.0, 63.4e3, 13.8},
      {"cnn_small", 14.3, 15.2, 390e3, 23.1, 145e6, 15.3},
  };
  return rows;
}

inline const ReferenceRow& reference_for(const std::string& network) {
  for (const auto& r : reference_rows())
    if (r.network == network) return r;
  throw UsageError("no reference values for network '" + network + "' (known: lenet5, cnn_small)");
}

struct ComparisonRow {
  std::string metric;
  std::optional<double> measured;
  double reference = 0.0;

  std::optional<double> deviation() const {
    if (!measured) return std::nullopt;
    return std::abs(*measured - reference);
  }
};

struct Comparison {
  std::string network;
  std::vector<ComparisonRow> rows;
  std::vector<std::string> notes;
};

inline Comparison report_compare(const DensityReport& r, const std::string& network) {
  const auto& ref = reference_for(network);
  Comparison c;
  c.network = network;
  c.rows = {
      {"baseline_mcr_pct", r.baseline_mcr, ref.baseline_mcr},
      {"final_mcr_pct", r.final_mcr, ref.final_mcr},
      {"kept_weights", static_cast<double>(r.kept_weights), ref.weights},
      {"weight_density_pct", r.weight_density(), ref.weight_density},
      {"computations", static_cast<double>(r.ops.sparse_total()), ref.computations},
      {"computational_density_pct", r.computational_density(), ref.computational_density},
  };
  if (network == "lenet5")
    c.notes.push_back("the built-in LeNet-5 config keeps 120 + 3000 + 32000 + 400 = 35520 weights (8.25%); "
                      "the reference 42.7K / 10% does not follow from it");
  c.notes.push_back("absolute computation counts use an unstated convention; compare densities only");
  return c;
}

inline Comparison report_compare(const DensityReport& r) { return report_compare(r, r.network); }

inline std::string format_table(const Comparison& c) {
  std::ostringstream os;
  os << "network: " << c.network << "\n";
  os << std::left << std::setw(28) << "metric" << std::right << std::setw(16) << "measured" << std::setw(16)
     << "reference" << std::setw(14) << "abs_dev" << "\n";
  auto num = [](double v) {
    std::ostringstream s;
    if (std::abs(v) >= 1000.0) s << std::fixed << std::setprecision(0) << v;
    else s << std::fixed << std::setprecision(3) << v;
    return s.str();
  };
  for (const auto& row : c.rows) {
    os << std::left << std::setw(28) << row.metric << std::right << std::setw(16)
       << (row.measured ? num(*row.measured) : "-") << std::setw(16) << num(row.reference) << std::setw(14)
       << (row.deviation() ? num(*row.deviation()) : "-") << "\n";
  }
  for (const auto& n : c.notes) os << "note: " << n << "\n";
  return os.str();
}

inline nlohmann::json to_json(const OpCountReport& ops) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : ops.layers)
    layers.push_back({{"layer", l.layer},
                      {"dense_mul", l.dense_mul},
                      {"dense_add", l.dense_add},
                      {"sparse_mul", l.sparse_mul},
                      {"sparse_add", l.sparse_add}});
  return {{"layers", layers},
          {"dense_mul", ops.dense_mul()},
          {"dense_add", ops.dense_add()},
          {"sparse_mul", ops.sparse_mul()},
          {"sparse_add", ops.sparse_add()},
          {"density_pct", ops.density()}};
}

inline nlohmann::json to_json(const DensityReport& r) {
  nlohmann::json j{{"network", r.network},
                   {"kept_weights", r.kept_weights},
                   {"dense_weights", r.dense_weights},
                   {"weight_density_pct", r.weight_density()},
                   {"computational_density_pct", r.computational_density()},
                   {"ops", to_json(r.ops)}};
  j["baseline_mcr_pct"] = r.baseline_mcr ? nlohmann::json(*r.baseline_mcr) : nlohmann::json(nullptr);
  j["final_mcr_pct"] = r.final_mcr ? nlohmann::json(*r.final_mcr) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const Comparison& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : c.rows) {
    nlohmann::json row{{"metric", r.metric}, {"reference", r.reference}};
    row["measured"] = r.measured ? nlohmann::json(*r.measured) : nlohmann::json(nullptr);
    row["abs_deviation"] = r.deviation() ? nlohmann::json(*r.deviation()) : nlohmann::json(nullptr);
    rows.push_back(row);
  }
  return {{"network", c.network}, {"rows", rows}, {"notes", c.notes}};
}

// CSV `layer,dense_mul,sparse_mul,density`; density in percent per layer.
inline std::string ops_csv(const OpCountReport& ops) {
  std::ostringstream os;
  os << "layer,dense_mul,sparse_mul,density\n";
  for (const auto& l : ops.layers) {
    const double d = l.dense_mul ? 100.0 * static_cast<double>(l.sparse_mul) / static_cast<double>(l.dense_mul) : 100.0;
    os << l.layer << ',' << l.dense_mul << ',' << l.sparse_mul << ',' << d << '\n';
  }
  return os.str();
}

inline std::string sensitivity_csv(const std::vector<SensitivityReport>& reps) {
  std::ostringstream os;
  os << "layer,sparsity,mcr\n";
  for (const auto& r : reps)
    for (const auto& p : r.points) os << r.layer_index << ',' << p.sparsity << ',' << p.mcr << '\n';
  return os.str();
}

inline std::string npat_csv(std::size_t layer, const std::vector<NpatRow>& rows) {
  std::ostringstream os;
  os << "layer,n_pat,sparsity,mcr\n";
  for (const auto& r : rows) os << layer << ',' << r.n_pat << ',' << r.sparsity << ',' << r.mcr << '\n';
  return os.str();
}

}  // namespace ikr
