// SPDX-License-Identifier: Apache-2.0
#include "plot/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace plot {

double interchange_accuracy(const NeuralModel &model, const TracedBank &bank, int var,
                            const PlanFactory &plan) {
  if (bank.size() == 0)
    throw std::invalid_argument("interchange_accuracy: empty bank");
  if (var < 0 || var >= bank.bank.num_vars())
    throw std::out_of_range("interchange_accuracy: unknown variable");
  const PatchPlan p = plan ? plan(bank.source) : PatchPlan{};
  const std::vector<int> pred = model.decode(model.resume(bank.base, bank.bank.base_x, p));
  const std::vector<int> &want = bank.bank.counterfactual[static_cast<std::size_t>(var)];
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    hits += pred[i] == want[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double interchange_accuracy(const NeuralModel &model, const TracedBank &bank, const Handle &handle) {
  return interchange_accuracy(model, bank, handle.variable,
                              [&handle](const ActivationTrace &src) { return handle_plan(handle, src); });
}

double interchange_accuracy(const NeuralModel &model, const TracedBank &bank, const DasRotation &rot,
                            int var) {
  return interchange_accuracy(model, bank, var,
                              [&rot](const ActivationTrace &src) { return das_plan(rot, src); });
}

CalibrationGrid CalibrationGrid::heq() {
  CalibrationGrid g;
  for (int k = 1; k <= 20; ++k)
    g.K.push_back(k);
  for (int l = 1; l <= 80; ++l)
    g.lambda.push_back(l);
  g.refine = true;
  return g;
}

CalibrationGrid CalibrationGrid::addition() {
  CalibrationGrid g;
  g.K = {1, 2, 4};
  g.lambda = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  return g;
}

void CalibrationGrid::validate() const {
  if (K.empty() || lambda.empty())
    throw std::invalid_argument("calibration grid: K and lambda lists must be nonempty");
  for (int k : K)
    if (k < 1)
      throw std::invalid_argument("calibration grid: K must be positive");
  for (double l : lambda)
    if (!(l > 0.0))
      throw std::invalid_argument("calibration grid: lambda must be positive");
  if (refine && (!(step > 0.0) || radius < 0.0))
    throw std::invalid_argument("calibration grid: bad refinement step");
}

bool better(const Calibrated &a, const Calibrated &b) {
  if (a.accuracy != b.accuracy)
    return a.accuracy > b.accuracy;
  if (a.K != b.K)
    return a.K < b.K;
  if (a.lambda != b.lambda)
    return a.lambda < b.lambda;
  return a.location < b.location;
}

namespace {

Calibrated evaluate(const NeuralModel &model, const HandleWeights &w, const std::vector<SiteSpec> &sites,
                    int variable, double lambda, const TracedBank &cal) {
  Calibrated c;
  c.K = static_cast<int>(w.sites.size());
  c.lambda = lambda;
  c.handle.variable = variable;
  c.handle.weights = w;
  c.handle.lambda = lambda;
  c.location = sites[static_cast<std::size_t>(w.sites.front())].location;
  for (int j : w.sites) {
    c.handle.sites.push_back(sites[static_cast<std::size_t>(j)]);
    c.location = std::min(c.location, sites[static_cast<std::size_t>(j)].location);
  }
  c.accuracy = interchange_accuracy(model, cal, c.handle);
  return c;
}

} // namespace

Calibrated calibrate_handle(const NeuralModel &model, const Coupling &coupling, int row, int variable,
                            const std::vector<SiteSpec> &sites, const TracedBank &cal,
                            const CalibrationGrid &grid) {
  grid.validate();
  if (static_cast<Index>(sites.size()) != coupling.pi.cols())
    throw std::invalid_argument("calibrate_handle: one site per coupling column required");
  Calibrated best;
  for (int k : grid.K) {
    if (k > static_cast<int>(sites.size()))
      continue;
    HandleWeights w = topk_renormalize(coupling, row, k);
    w.variable = variable;
    for (double lambda : grid.lambda) {
      Calibrated c = evaluate(model, w, sites, variable, lambda, cal);
      if (best.accuracy < 0.0 || better(c, best))
        best = std::move(c);
    }
  }
  if (best.accuracy < 0.0)
    throw std::invalid_argument("calibrate_handle: no K value fits the site family");
  if (grid.refine) {
    const HandleWeights w = best.handle.weights;
    const double centre = best.lambda;
    const int steps = static_cast<int>(std::floor(grid.radius / grid.step + 1e-9));
    for (int s = -steps; s <= steps; ++s) {
      const double lambda = std::round((centre + s * grid.step) * 1e6) / 1e6;
      if (!(lambda > 0.0) || s == 0)
        continue;
      Calibrated c = evaluate(model, w, sites, variable, lambda, cal);
      if (better(c, best))
        best = std::move(c);
    }
  }
  return best;
}

double ExperimentResult::average() const {
  if (variables.empty())
    return 0.0;
  double total = 0.0;
  for (const VariableScore &v : variables)
    total += v.sensitivity + v.invariance;
  return total / (2.0 * static_cast<double>(variables.size()));
}

VariableScore score_on_test(const NeuralModel &model, const TracedBank &test, const Partition &part,
                            const std::string &name, const PlanFactory &plan) {
  VariableScore s;
  s.variable = name;
  s.sensitivity = interchange_accuracy(model, test.subset(part.sensitive), part.variable, plan);
  s.invariance = interchange_accuracy(model, test.subset(part.invariant), part.variable, plan);
  return s;
}

nlohmann::json to_json(const ExperimentResult &r) {
  nlohmann::json vars = nlohmann::json::array();
  for (const VariableScore &v : r.variables)
    vars.push_back({{"variable", v.variable},
                    {"sensitivity", v.sensitivity},
                    {"invariance", v.invariance},
                    {"setting", v.setting}});
  return {{"experiment", r.experiment}, {"method", r.method},
          {"seed", r.seed},             {"variables", vars},
          {"average", r.average()},     {"runtime_seconds", r.runtime_seconds},
          {"details", r.details},       {"version", kVersion}};
}

std::string matrix_to_csv(const Matrix &m, const std::vector<std::string> &row_names,
                          const std::vector<std::string> &col_names) {
  std::ostringstream os;
  os << std::setprecision(17);
  const bool named_rows = static_cast<Index>(row_names.size()) == m.rows();
  if (static_cast<Index>(col_names.size()) == m.cols()) {
    if (named_rows)
      os << "row";
    for (Index j = 0; j < m.cols(); ++j)
      os << (j == 0 && !named_rows ? "" : ",") << col_names[static_cast<std::size_t>(j)];
    os << "\n";
  }
  for (Index i = 0; i < m.rows(); ++i) {
    if (named_rows)
      os << row_names[static_cast<std::size_t>(i)] << ",";
    for (Index j = 0; j < m.cols(); ++j)
      os << (j ? "," : "") << m(i, j);
    os << "\n";
  }
  return os.str();
}

namespace {

std::vector<std::string> score_columns(const ExperimentResult &r) {
  std::vector<std::string> cols;
  for (const VariableScore &v : r.variables) {
    cols.push_back(v.variable + "_sensitivity");
    cols.push_back(v.variable + "_invariance");
  }
  cols.push_back("average");
  cols.push_back("runtime_s");
  return cols;
}

std::vector<double> score_values(const ExperimentResult &r) {
  std::vector<double> vals;
  for (const VariableScore &v : r.variables) {
    vals.push_back(v.sensitivity);
    vals.push_back(v.invariance);
  }
  vals.push_back(r.average());
  vals.push_back(r.runtime_seconds);
  return vals;
}

} // namespace

std::string results_to_csv(const std::vector<ExperimentResult> &results) {
  std::ostringstream os;
  os << std::setprecision(10);
  if (results.empty())
    return "";
  os << "method,seed";
  for (const std::string &c : score_columns(results.front()))
    os << "," << c;
  os << "\n";
  for (const ExperimentResult &r : results) {
    os << r.method << "," << r.seed;
    for (double v : score_values(r))
      os << "," << v;
    os << "\n";
  }
  return os.str();
}

std::string summary_to_csv(const std::vector<ExperimentResult> &results) {
  std::ostringstream os;
  os << std::setprecision(10);
  if (results.empty())
    return "";
  std::vector<std::string> methods;
  std::map<std::string, std::vector<std::vector<double>>> rows;
  for (const ExperimentResult &r : results) {
    if (!rows.count(r.method))
      methods.push_back(r.method);
    rows[r.method].push_back(score_values(r));
  }
  os << "method,seeds";
  for (const std::string &c : score_columns(results.front()))
    os << "," << c << "_mean," << c << "_std";
  os << "\n";
  for (const std::string &m : methods) {
    const auto &vals = rows[m];
    os << m << "," << vals.size();
    for (std::size_t c = 0; c < vals.front().size(); ++c) {
      double mean = 0.0;
      for (const auto &v : vals)
        mean += v[c];
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (const auto &v : vals)
        var += (v[c] - mean) * (v[c] - mean);
      const double sd = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
      os << "," << mean << "," << sd;
    }
    os << "\n";
  }
  return os.str();
}

} // namespace plot
