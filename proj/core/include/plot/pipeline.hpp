// SPDX-License-Identifier: Apache-2.0
/**
 * @file   pipeline.hpp
 * @brief  Interchange accuracy, handle calibration and the experiment
 *         drivers for hierarchical equality and binary addition.
 *
 * Data flow in every driver: couplings and rotations are fit on the fit
 * bank, settings are chosen on the calibration bank, and accuracies are
 * reported on the test partitions only.
 */
#ifndef PLOT_PIPELINE_HPP
#define PLOT_PIPELINE_HPP

#include <chrono>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "plot/banks.hpp"
#include "plot/interventions.hpp"
#include "plot/signatures.hpp"
#include "plot/transport.hpp"

namespace plot {

inline constexpr const char *kVersion = "0.1.0";

/// Builds a patch plan from the clean source trace of the bank it runs on.
using PlanFactory = std::function<PatchPlan(const ActivationTrace &source)>;

/// Fraction of pairs whose intervened prediction equals the abstract
/// counterfactual for @p var. An empty plan scores the unintervened model.
double interchange_accuracy(const NeuralModel &model, const TracedBank &bank, int var,
                            const PlanFactory &plan);
double interchange_accuracy(const NeuralModel &model, const TracedBank &bank, const Handle &handle);
double interchange_accuracy(const NeuralModel &model, const TracedBank &bank, const DasRotation &rot,
                            int var);

struct CalibrationGrid {
  std::vector<int> K;
  std::vector<double> lambda;
  /// Second pass over lambda* +- radius in steps of `step` at the best K.
  bool refine = false;
  double step = 0.1;
  double radius = 1.0;

  /// K in 1..20, lambda in 1..80 with refinement.
  static CalibrationGrid heq();
  /// K in {1, 2, 4}, lambda in {0.25, 0.5, 1, 2, 4, 8}.
  static CalibrationGrid addition();
  void validate() const;
};

struct Calibrated {
  Handle handle;
  int K = 0;
  double lambda = 0.0;
  double accuracy = -1.0;
  int location = 0; ///< earliest location touched by the handle
};

/// Ordering used for every selection: accuracy, then smaller K, then smaller
/// lambda, then earlier location.
bool better(const Calibrated &a, const Calibrated &b);

/**
 * Sweeps the grid over row @p row of @p coupling (sites indexed by column)
 * and returns the best handle on @p cal. K values above the number of
 * sites are skipped.
 */
Calibrated calibrate_handle(const NeuralModel &model, const Coupling &coupling, int row, int variable,
                            const std::vector<SiteSpec> &sites, const TracedBank &cal,
                            const CalibrationGrid &grid);

struct VariableScore {
  std::string variable;
  double sensitivity = 0.0;
  double invariance = 0.0;
  nlohmann::json setting = nlohmann::json::object();
};

struct ExperimentResult {
  std::string experiment;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<VariableScore> variables;
  double runtime_seconds = 0.0;
  nlohmann::json details = nlohmann::json::object();
  /// Named matrices (couplings, handle maps) for CSV emission.
  std::vector<std::pair<std::string, Matrix>> matrices;

  /// Mean over the 2m sensitivity and invariance scores.
  double average() const;
};

nlohmann::json to_json(const ExperimentResult &r);
std::string matrix_to_csv(const Matrix &m, const std::vector<std::string> &row_names = {},
                          const std::vector<std::string> &col_names = {});

/// One row per result: method, seed, per-variable sensitivity/invariance,
/// average, runtime.
std::string results_to_csv(const std::vector<ExperimentResult> &results);
/// Mean and sample std per method over seeds, same column order.
std::string summary_to_csv(const std::vector<ExperimentResult> &results);

/// Wall-clock seconds around @p fn.
template <typename F> auto runtime_scope(F &&fn) {
  const auto start = std::chrono::steady_clock::now();
  auto result = fn();
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return std::pair{std::move(result), elapsed.count()};
}

/// Scores a plan factory on the sensitive and invariant test partitions of
/// @p var.
VariableScore score_on_test(const NeuralModel &model, const TracedBank &test, const Partition &part,
                            const std::string &name, const PlanFactory &plan);

// ---------------------------------------------------------------------------
// Hierarchical equality

struct HeqPlotConfig {
  double eps = 4.0;
  bool normalize = false;
  CalibrationGrid grid = CalibrationGrid::heq();
  SinkhornOptions sinkhorn;
};

/// Signatures over 48 neurons, EOT coupling, per-variable calibration on the
/// whole calibration bank, test on the four held-out banks.
ExperimentResult run_heq_plot(const HeqMlp &model, const HeqBanks &banks, const HeqPlotConfig &config = {});

struct HeqDasConfig {
  DasTrainConfig train;
  std::vector<int> layers{0, 1, 2};
  std::vector<int> dims{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
};

/// DAS over every (layer, k) cell per variable, selected on calibration.
ExperimentResult run_heq_das(const HeqMlp &model, const HeqBanks &banks, const HeqDasConfig &config = {});

// ---------------------------------------------------------------------------
// Binary addition

enum class AdditionMethod { Plot, Nat, Pca, PlotDas, FullDas };

std::string to_string(AdditionMethod m);
AdditionMethod addition_method_from_string(const std::string &name);

struct AdditionConfig {
  double eps = 0.05;
  bool normalize = false;
  /// Carries evaluated (C1, C2, C3).
  std::vector<int> vars{0, 1, 2};
  CalibrationGrid grid = CalibrationGrid::addition();
  std::vector<int> resolutions{1, 2};
  DasTrainConfig das;
  SinkhornOptions sinkhorn;
};

struct StageA {
  ExperimentResult result;
  /// Selected timestep per entry of AdditionConfig::vars.
  std::vector<int> timesteps;
  Coupling coupling;
};

/// Carries x timesteps coupling over full-vector sites, row argmax, and
/// full-vector patching on the test partitions.
StageA run_addition_plot(const GruAdder &model, const AdderBanks &banks, const AdditionConfig &config = {});

/// One of the Stage B variants (Plot returns Stage A alone). Runtime of nat,
/// pca and plot-das includes their own Stage A run.
ExperimentResult run_addition_variant(const GruAdder &model, const AdderBanks &banks, AdditionMethod method,
                                      const AdditionConfig &config = {});

} // namespace plot

#endif // PLOT_PIPELINE_HPP
