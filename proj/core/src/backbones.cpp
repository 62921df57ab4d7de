// SPDX-License-Identifier: Apache-2.0
#include "plot/backbones.hpp"

#include <stdexcept>

namespace plot {

ActivationTrace ActivationTrace::rows(const std::vector<Index> &idx) const {
  ActivationTrace out;
  out.logits = logits(idx, Eigen::all);
  out.states.reserve(states.size());
  for (const Matrix &s : states)
    out.states.push_back(s(idx, Eigen::all));
  return out;
}

std::vector<Parameter *> NeuralModel::parameters() {
  std::vector<Parameter *> out;
  for (Parameter &p : weights())
    out.push_back(&p);
  return out;
}

std::size_t NeuralModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter &p : weights())
    n += static_cast<std::size_t>(p.value.size());
  return n;
}

void NeuralModel::validate_plan(const PatchPlan &plan) const {
  int previous = -1;
  for (const Patch &p : plan) {
    if (p.location < 0 || p.location >= num_locations())
      throw std::out_of_range("patch plan: invalid location " + std::to_string(p.location));
    if (p.location <= previous)
      throw std::invalid_argument("patch plan: locations must be strictly increasing");
    if (!p.rule)
      throw std::invalid_argument("patch plan: empty rule");
    previous = p.location;
  }
}

Matrix NeuralModel::forward_with_patches(const Matrix &x, const PatchPlan &plan) const {
  if (plan.empty())
    return forward(x);
  return resume(trace(x), x, plan);
}

std::vector<int> NeuralModel::decode(const Matrix &logits) const {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    int label = 0;
    if (output_kind() == OutputKind::Categorical) {
      Index best = 0;
      logits.row(i).maxCoeff(&best);
      label = static_cast<int>(best);
    } else {
      // Logit 0 is the most significant bit.
      for (Index j = 0; j < logits.cols(); ++j)
        label = (label << 1) | (logits(i, j) >= 0.0 ? 1 : 0);
    }
    out[static_cast<std::size_t>(i)] = label;
  }
  return out;
}

nlohmann::json parameters_to_json(const std::vector<Parameter> &params) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Parameter &p : params) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(p.value.size()));
    for (Index i = 0; i < p.value.rows(); ++i)
      for (Index j = 0; j < p.value.cols(); ++j)
        data.push_back(p.value(i, j));
    arr.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"data", data}});
  }
  return arr;
}

void parameters_from_json(const nlohmann::json &j, std::vector<Parameter> &params) {
  if (!j.is_array() || j.size() != params.size())
    throw std::invalid_argument("checkpoint: parameter list does not match model");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto &e = j[k];
    Parameter &p = params[k];
    if (e.at("name").get<std::string>() != p.name || e.at("rows").get<Index>() != p.value.rows() ||
        e.at("cols").get<Index>() != p.value.cols())
      throw std::invalid_argument("checkpoint: shape mismatch for " + p.name);
    const auto data = e.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != p.value.size())
      throw std::invalid_argument("checkpoint: data length mismatch for " + p.name);
    std::size_t n = 0;
    for (Index r = 0; r < p.value.rows(); ++r)
      for (Index c = 0; c < p.value.cols(); ++c)
        p.value(r, c) = data[n++];
    p.zero_grad();
  }
}

std::unique_ptr<NeuralModel> model_from_json(const nlohmann::json &j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "heq_mlp")
    return std::make_unique<HeqMlp>(HeqMlp::from_json(j));
  if (kind == "gru_adder")
    return std::make_unique<GruAdder>(GruAdder::from_json(j));
  throw std::invalid_argument("checkpoint: unknown model kind " + kind);
}

} // namespace plot
