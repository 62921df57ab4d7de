// SPDX-License-Identifier: Apache-2.0
#include "plot/pipeline.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

namespace plot {

std::string to_string(AdditionMethod m) {
  switch (m) {
  case AdditionMethod::Plot:
    return "plot";
  case AdditionMethod::Nat:
    return "plot-nat";
  case AdditionMethod::Pca:
    return "plot-pca";
  case AdditionMethod::PlotDas:
    return "plot-das";
  case AdditionMethod::FullDas:
    return "full-das";
  }
  throw std::invalid_argument("unknown addition method");
}

AdditionMethod addition_method_from_string(const std::string &name) {
  if (name == "plot")
    return AdditionMethod::Plot;
  if (name == "nat" || name == "plot-nat")
    return AdditionMethod::Nat;
  if (name == "pca" || name == "plot-pca")
    return AdditionMethod::Pca;
  if (name == "plot-das")
    return AdditionMethod::PlotDas;
  if (name == "full-das" || name == "das")
    return AdditionMethod::FullDas;
  throw std::invalid_argument("unknown addition method: " + name);
}

namespace {

struct Prepared {
  TracedBank fit;
  TracedBank cal;
  TracedBank test;
};

Prepared prepare(const GruAdder &model, const AdderBanks &banks) {
  return {TracedBank::make(model, encode_bank(banks.fit)), TracedBank::make(model, encode_bank(banks.cal)),
          TracedBank::make(model, encode_bank(banks.test))};
}

std::vector<std::string> carry_names(const std::vector<int> &vars) {
  std::vector<std::string> out;
  for (int v : vars)
    out.emplace_back(AdderCausal::var_name(v));
  return out;
}

PlanFactory handle_factory(Handle handle) {
  return [handle = std::move(handle)](const ActivationTrace &src) { return handle_plan(handle, src); };
}

Handle full_vector_handle(int var, int location, Index d) {
  Handle h;
  h.variable = var;
  h.sites = {full_vector_site(location, d)};
  h.weights.variable = var;
  h.weights.sites = {location};
  h.weights.weights = {1.0};
  h.lambda = 1.0;
  return h;
}

StageA stage_a(const GruAdder &model, const AdderBanks &banks, const Prepared &data, const AdditionConfig &config) {
  StageA out;
  ExperimentResult &r = out.result;
  r.experiment = "addition";
  r.method = to_string(AdditionMethod::Plot);
  r.seed = banks.seed;
  const Index d = model.hidden();
  const std::vector<std::string> names = carry_names(config.vars);

  std::vector<SiteSpec> sites;
  for (int l = 0; l < model.num_locations(); ++l)
    sites.push_back(full_vector_site(l, d));
  const SignatureSet set = build_signature_set(model, data.fit, config.vars, names, sites,
                                               Featurizer::for_model(model), config.normalize);
  const auto [mu, nu] = build_measures(set);
  out.coupling = sinkhorn_eot(mu, nu, config.eps, config.sinkhorn);

  for (std::size_t i = 0; i < config.vars.size(); ++i) {
    const int var = config.vars[i];
    const HandleWeights top = topk_renormalize(out.coupling, static_cast<int>(i), 1);
    const int step = top.sites.front();
    out.timesteps.push_back(step);
    VariableScore score = score_on_test(model, data.test, banks.test_partitions[static_cast<std::size_t>(var)],
                                        names[i], handle_factory(full_vector_handle(var, step, d)));
    score.setting = {{"timestep", step}};
    r.variables.push_back(std::move(score));
  }
  r.details = {{"eps", config.eps},
               {"normalized", config.normalize},
               {"timesteps", out.timesteps},
               {"coupling", to_json(out.coupling)}};
  r.matrices.emplace_back("stage_a_coupling", out.coupling.pi);
  return out;
}

nlohmann::json handle_setting(const Calibrated &c, const std::string &family) {
  std::vector<std::string> labels;
  for (const SiteSpec &s : c.handle.sites)
    labels.push_back(s.label);
  return {{"family", family},   {"timestep", c.location},       {"K", c.K},
          {"lambda", c.lambda}, {"cal_accuracy", c.accuracy}, {"sites", labels},
          {"weights", c.handle.weights.weights}};
}

/// Stage B over OT site families inside the Stage A timesteps.
ExperimentResult stage_b_transport(const GruAdder &model, const AdderBanks &banks, const Prepared &data,
                                   const StageA &a, AdditionMethod method, const AdditionConfig &config) {
  ExperimentResult r;
  r.experiment = "addition";
  r.method = to_string(method);
  r.seed = banks.seed;
  const Index d = model.hidden();
  const std::vector<std::string> names = carry_names(config.vars);
  const Featurizer phi = Featurizer::for_model(model);

  std::vector<Calibrated> best(config.vars.size());
  std::vector<std::string> best_family(config.vars.size());
  const std::set<int> steps(a.timesteps.begin(), a.timesteps.end());
  for (int step : steps) {
    std::vector<std::pair<std::string, std::vector<SiteSpec>>> families;
    if (method == AdditionMethod::Nat) {
      for (int res : config.resolutions)
        families.emplace_back("r=" + std::to_string(res), group_sites(step, d, res));
    } else {
      const PcaResult pca = pca_fit(data.fit.base.states[static_cast<std::size_t>(step)]);
      families.emplace_back("pca", prefix_sites(step, pca.rotation, pca.mean, doubling_sizes(d)));
      r.matrices.emplace_back("pca_rotation_h" + std::to_string(step), pca.rotation);
    }
    for (const auto &[family, sites] : families) {
      const SignatureSet set = build_signature_set(model, data.fit, config.vars, names, sites, phi, config.normalize);
      const auto [mu, nu] = build_measures(set);
      const Coupling pi = sinkhorn_eot(mu, nu, config.eps, config.sinkhorn);
      r.matrices.emplace_back("coupling_h" + std::to_string(step) + "_" + family, pi.pi);
      for (std::size_t i = 0; i < config.vars.size(); ++i) {
        if (a.timesteps[i] != step)
          continue;
        Calibrated c = calibrate_handle(model, pi, static_cast<int>(i), config.vars[i], sites, data.cal, config.grid);
        if (best[i].accuracy < 0.0 || better(c, best[i])) {
          best[i] = std::move(c);
          best_family[i] = family;
        }
      }
    }
  }

  for (std::size_t i = 0; i < config.vars.size(); ++i) {
    const int var = config.vars[i];
    VariableScore score = score_on_test(model, data.test, banks.test_partitions[static_cast<std::size_t>(var)],
                                        names[i], handle_factory(best[i].handle));
    score.setting = handle_setting(best[i], best_family[i]);
    r.variables.push_back(std::move(score));
  }
  r.details = {{"eps", config.eps}, {"normalized", config.normalize}, {"stage_a_timesteps", a.timesteps}};
  return r;
}

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

/// DAS per carry over the given candidate timesteps.
ExperimentResult das_sweep(const GruAdder &model, const AdderBanks &banks, const Prepared &data,
                           const std::vector<std::vector<int>> &steps_per_var, AdditionMethod method,
                           const AdditionConfig &config) {
  ExperimentResult r;
  r.experiment = "addition";
  r.method = to_string(method);
  r.seed = banks.seed;
  const std::vector<std::string> names = carry_names(config.vars);
  const std::vector<Index> dims = doubling_sizes(model.hidden());
  const Rng root = Rng(banks.seed).split("adder/das");
  double max_orth = 0.0;
  nlohmann::json failures = nlohmann::json::array();

  for (std::size_t i = 0; i < config.vars.size(); ++i) {
    const int var = config.vars[i];
    const auto v = static_cast<std::size_t>(var);
    DasChoice best;
    Matrix grid = Matrix::Constant(model.num_locations(), static_cast<Index>(dims.size()), -1.0);
    for (int step : steps_per_var[i]) {
      for (std::size_t ki = 0; ki < dims.size(); ++ki) {
        const int k = static_cast<int>(dims[ki]);
        const std::string cell = names[i] + "/h" + std::to_string(step) + "/k" + std::to_string(k);
        DasTrainResult trained;
        try {
          trained = das_train(model, step, k, data.fit.bank.base_x, data.fit.base, data.fit.source,
                              data.fit.bank.counterfactual[v], root.split(cell), config.das);
        } catch (const std::runtime_error &e) {
          failures.push_back({{"cell", cell}, {"error", e.what()}});
          continue;
        }
        for (double o : trained.orthogonality)
          max_orth = std::max(max_orth, o);
        DasChoice c{trained.rotation, interchange_accuracy(model, data.cal, trained.rotation, var), k, step};
        grid(step, static_cast<Index>(ki)) = c.accuracy;
        if (best.accuracy < 0.0 || das_better(c, best))
          best = std::move(c);
      }
    }
    if (best.accuracy < 0.0)
      throw std::runtime_error("addition DAS: every cell failed for " + names[i]);
    const DasRotation rot = best.rotation;
    VariableScore score = score_on_test(model, data.test, banks.test_partitions[v], names[i],
                                        [&rot](const ActivationTrace &src) { return das_plan(rot, src); });
    score.setting = {{"timestep", best.location}, {"k", best.k}, {"cal_accuracy", best.accuracy},
                     {"rotation", to_json(rot)}};
    r.variables.push_back(std::move(score));
    r.matrices.emplace_back("cal_grid_" + names[i], grid);
  }
  r.details = {{"lr", config.das.lr},
               {"max_epochs", config.das.max_epochs},
               {"patience", config.das.patience},
               {"batch", config.das.batch},
               {"max_orthogonality_error", max_orth},
               {"failed_cells", failures}};
  return r;
}

} // namespace

StageA run_addition_plot(const GruAdder &model, const AdderBanks &banks, const AdditionConfig &config) {
  auto [a, seconds] = runtime_scope([&] { return stage_a(model, banks, prepare(model, banks), config); });
  a.result.runtime_seconds = seconds;
  return a;
}

ExperimentResult run_addition_variant(const GruAdder &model, const AdderBanks &banks, AdditionMethod method,
                                      const AdditionConfig &config) {
  if (method == AdditionMethod::Plot)
    return run_addition_plot(model, banks, config).result;

  auto [result, seconds] = runtime_scope([&] {
    const Prepared data = prepare(model, banks);
    if (method == AdditionMethod::FullDas) {
      std::vector<int> all(static_cast<std::size_t>(model.num_locations()));
      for (int l = 0; l < model.num_locations(); ++l)
        all[static_cast<std::size_t>(l)] = l;
      return das_sweep(model, banks, data, std::vector<std::vector<int>>(config.vars.size(), all), method, config);
    }
    const StageA a = stage_a(model, banks, data, config);
    ExperimentResult r;
    if (method == AdditionMethod::PlotDas) {
      std::vector<std::vector<int>> steps;
      for (int s : a.timesteps)
        steps.push_back({s});
      r = das_sweep(model, banks, data, steps, method, config);
    } else {
      r = stage_b_transport(model, banks, data, a, method, config);
    }
    r.details["stage_a_timesteps"] = a.timesteps;
    r.matrices.insert(r.matrices.begin(), a.result.matrices.begin(), a.result.matrices.end());
    return r;
  });
  result.runtime_seconds = seconds;
  return result;
}

} // namespace plot
