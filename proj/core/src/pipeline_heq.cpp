// SPDX-License-Identifier: Apache-2.0
#include "plot/pipeline.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace plot {

namespace {

std::vector<std::string> heq_var_names() {
  return {std::string(HeqCausal::var_name(HeqCausal::kWX)), std::string(HeqCausal::var_name(HeqCausal::kYZ))};
}

nlohmann::json handle_setting(const Calibrated &c) {
  std::vector<std::string> labels;
  std::vector<int> layers;
  for (const SiteSpec &s : c.handle.sites) {
    labels.push_back(s.label);
    layers.push_back(s.location + 1);
  }
  return {{"K", c.K},
          {"lambda", c.lambda},
          {"cal_accuracy", c.accuracy},
          {"sites", labels},
          {"layers", layers},
          {"weights", c.handle.weights.weights}};
}

} // namespace

ExperimentResult run_heq_plot(const HeqMlp &model, const HeqBanks &banks, const HeqPlotConfig &config) {
  auto [result, seconds] = runtime_scope([&] {
    ExperimentResult r;
    r.experiment = "heq";
    r.method = "plot";
    r.seed = banks.seed;
    const std::vector<std::string> names = heq_var_names();

    const TracedBank fit = TracedBank::make(model, encode_bank(model, banks.fit));
    const std::vector<SiteSpec> sites = canonical_sites(model);
    const SignatureSet set = build_signature_set(model, fit, {HeqCausal::kWX, HeqCausal::kYZ}, names, sites,
                                                 Featurizer::for_model(model), config.normalize);
    const auto [mu, nu] = build_measures(set);
    const Coupling pi = sinkhorn_eot(mu, nu, config.eps, config.sinkhorn);

    const TracedBank cal = TracedBank::make(model, encode_bank(model, banks.cal));
    const TracedBank test = TracedBank::make(model, encode_bank(model, banks.test));

    Matrix handle_map = Matrix::Zero(2, static_cast<Index>(sites.size()));
    double handle_size = 0.0;
    for (int var = 0; var < HeqCausal::kNumVars; ++var) {
      const auto v = static_cast<std::size_t>(var);
      const Calibrated c = calibrate_handle(model, pi, var, var, sites, cal, config.grid);
      const Handle handle = c.handle;
      VariableScore score = score_on_test(model, test, banks.test_partitions[v], names[v],
                                          [&handle](const ActivationTrace &src) { return handle_plan(handle, src); });
      score.setting = handle_setting(c);
      r.variables.push_back(std::move(score));
      for (std::size_t j = 0; j < c.handle.weights.sites.size(); ++j)
        handle_map(var, c.handle.weights.sites[j]) = c.handle.weights.weights[j];
      handle_size += c.K;
    }

    r.details = {{"eps", config.eps},
                 {"normalized", config.normalize},
                 {"featurizer", to_string(set.featurizer.kind)},
                 {"sinkhorn_iterations", pi.iterations},
                 {"sinkhorn_converged", pi.converged},
                 {"mean_handle_size", handle_size / 2.0},
                 {"coupling", to_json(pi)}};
    r.matrices.emplace_back("coupling", pi.pi);
    r.matrices.emplace_back("handles", handle_map);
    return r;
  });
  result.runtime_seconds = seconds;
  return result;
}

namespace {

struct DasChoice {
  DasRotation rotation;
  double accuracy = -1.0;
  int k = 0;
  int location = 0;
};

bool das_better(const DasChoice &a, const DasChoice &b) {
  if (a.accuracy != b.accuracy)
    return a.accuracy > b.accuracy;
  if (a.k != b.k)
    return a.k < b.k;
  return a.location < b.location;
}

} // namespace

ExperimentResult run_heq_das(const HeqMlp &model, const HeqBanks &banks, const HeqDasConfig &config) {
  auto [result, seconds] = runtime_scope([&] {
    ExperimentResult r;
    r.experiment = "heq";
    r.method = "das";
    r.seed = banks.seed;
    const std::vector<std::string> names = heq_var_names();
    const Rng root = Rng(banks.seed).split("heq/das");

    const TracedBank fit = TracedBank::make(model, encode_bank(model, banks.fit));
    const TracedBank cal = TracedBank::make(model, encode_bank(model, banks.cal));
    const TracedBank test = TracedBank::make(model, encode_bank(model, banks.test));

    double max_orth = 0.0;
    nlohmann::json failures = nlohmann::json::array();
    double dims_total = 0.0;
    for (int var = 0; var < HeqCausal::kNumVars; ++var) {
      const auto v = static_cast<std::size_t>(var);
      Matrix grid = Matrix::Constant(static_cast<Index>(config.layers.size()),
                                     static_cast<Index>(config.dims.size()), -1.0);
      DasChoice best;
      for (std::size_t li = 0; li < config.layers.size(); ++li) {
        for (std::size_t ki = 0; ki < config.dims.size(); ++ki) {
          const int layer = config.layers[li];
          const int k = config.dims[ki];
          const std::string cell = names[v] + "/L" + std::to_string(layer) + "/k" + std::to_string(k);
          DasTrainResult trained;
          try {
            trained = das_train(model, layer, k, fit.bank.base_x, fit.base, fit.source,
                                fit.bank.counterfactual[v], root.split(cell), config.train);
          } catch (const std::runtime_error &e) {
            failures.push_back({{"cell", cell}, {"error", e.what()}});
            continue;
          }
          for (double o : trained.orthogonality)
            max_orth = std::max(max_orth, o);
          DasChoice c{trained.rotation, interchange_accuracy(model, cal, trained.rotation, var), k, layer};
          grid(static_cast<Index>(li), static_cast<Index>(ki)) = c.accuracy;
          if (best.accuracy < 0.0 || das_better(c, best))
            best = std::move(c);
        }
      }
      if (best.accuracy < 0.0)
        throw std::runtime_error("run_heq_das: every DAS cell failed for " + names[v]);
      const DasRotation rot = best.rotation;
      VariableScore score = score_on_test(model, test, banks.test_partitions[v], names[v],
                                          [&rot](const ActivationTrace &src) { return das_plan(rot, src); });
      score.setting = {{"layer", best.location + 1}, {"k", best.k}, {"cal_accuracy", best.accuracy},
                       {"rotation", to_json(rot)}};
      r.variables.push_back(std::move(score));
      r.matrices.emplace_back("cal_grid_" + names[v], grid);
      dims_total += best.k;
    }
    r.details = {{"lr", config.train.lr},
                 {"max_epochs", config.train.max_epochs},
                 {"patience", config.train.patience},
                 {"batch", config.train.batch},
                 {"max_orthogonality_error", max_orth},
                 {"mean_subspace_dim", dims_total / 2.0},
                 {"failed_cells", failures}};
    return r;
  });
  result.runtime_seconds = seconds;
  return result;
}

} // namespace plot
