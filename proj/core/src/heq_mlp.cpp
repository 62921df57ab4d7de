// SPDX-License-Identifier: Apache-2.0
#include "plot/backbones.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace plot {

namespace {

Matrix dense(const Matrix &x, const Parameter &w, const Parameter &b) {
  return (x * w.value).rowwise() + b.value.row(0);
}

void apply_rules_at(int location, const PatchPlan &plan, std::size_t &cursor, Matrix &live) {
  while (cursor < plan.size() && plan[cursor].location == location) {
    plan[cursor].rule(live);
    ++cursor;
  }
}

} // namespace

HeqMlp::HeqMlp(std::uint64_t seed) : seed_(seed) {
  Rng root(seed);
  Rng emb = root.split("heq/embedding");
  embedding_ = gaussian_matrix(kVocab, kEmbed, emb);

  Rng init = root.split("heq/init");
  const double bound = 1.0 / std::sqrt(static_cast<double>(kHidden));
  for (int l = 0; l < kLayers; ++l) {
    const std::string tag = std::to_string(l + 1);
    weights_.emplace_back("W" + tag, uniform_matrix(kHidden, kHidden, -bound, bound, init));
    weights_.emplace_back("b" + tag, uniform_matrix(1, kHidden, -bound, bound, init));
  }
  weights_.emplace_back("Wout", uniform_matrix(kHidden, 2, -bound, bound, init));
  weights_.emplace_back("bout", uniform_matrix(1, 2, -bound, bound, init));
}

Matrix HeqMlp::encode(std::span<const HeqInput> inputs) const {
  Matrix x(static_cast<Index>(inputs.size()), 4 * kEmbed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const HeqInput &in = inputs[i];
    HeqCausal::validate(in);
    const int values[4] = {in.w, in.x, in.y, in.z};
    for (int slot = 0; slot < 4; ++slot)
      x.block(static_cast<Index>(i), slot * kEmbed, 1, kEmbed) = embedding_.row(values[slot] - 1);
  }
  return x;
}

Index HeqMlp::width(int location) const {
  if (location < 0 || location >= kLayers)
    throw std::out_of_range("HeqMlp: invalid location");
  return kHidden;
}

std::string HeqMlp::location_name(int location) const {
  width(location);
  return "layer" + std::to_string(location + 1);
}

ActivationTrace HeqMlp::trace(const Matrix &x) const {
  if (x.cols() != input_dim())
    throw std::invalid_argument("HeqMlp: input dimension mismatch");
  ActivationTrace t;
  Matrix h = x;
  for (int l = 0; l < kLayers; ++l) {
    h = dense(h, weights_[2 * l], weights_[2 * l + 1]).cwiseMax(0.0);
    t.states.push_back(h);
  }
  t.logits = dense(h, weights_[6], weights_[7]);
  return t;
}

Matrix HeqMlp::resume(const ActivationTrace &base, const Matrix &x, const PatchPlan &plan) const {
  (void)x;
  validate_plan(plan);
  if (plan.empty())
    return base.logits;
  const int start = plan.front().location;
  std::size_t cursor = 0;
  Matrix h = base.states[static_cast<std::size_t>(start)];
  apply_rules_at(start, plan, cursor, h);
  for (int l = start + 1; l < kLayers; ++l) {
    h = dense(h, weights_[2 * l], weights_[2 * l + 1]).cwiseMax(0.0);
    apply_rules_at(l, plan, cursor, h);
  }
  return dense(h, weights_[6], weights_[7]);
}

Tape::Var HeqMlp::resume_tape(Tape &tape, const ActivationTrace &base, const Matrix &x,
                              int location, Tape::Var state) const {
  (void)base;
  (void)x;
  width(location);
  Tape::Var h = state;
  for (int l = location + 1; l < kLayers; ++l) {
    Tape::Var w = tape.constant(weights_[2 * l].value);
    Tape::Var b = tape.constant(weights_[2 * l + 1].value);
    h = tape.relu(tape.add_row(tape.matmul(h, w), b));
  }
  Tape::Var w = tape.constant(weights_[6].value);
  Tape::Var b = tape.constant(weights_[7].value);
  return tape.add_row(tape.matmul(h, w), b);
}

Tape::Var HeqMlp::forward_tape(Tape &tape, const Matrix &x) {
  Tape::Var h = tape.constant(x);
  for (int l = 0; l < kLayers; ++l) {
    Tape::Var w = tape.parameter(weights_[2 * l]);
    Tape::Var b = tape.parameter(weights_[2 * l + 1]);
    h = tape.relu(tape.add_row(tape.matmul(h, w), b));
  }
  Tape::Var w = tape.parameter(weights_[6]);
  Tape::Var b = tape.parameter(weights_[7]);
  return tape.add_row(tape.matmul(h, w), b);
}

nlohmann::json HeqMlp::to_json() const {
  std::vector<double> emb;
  for (Index i = 0; i < embedding_.rows(); ++i)
    for (Index j = 0; j < embedding_.cols(); ++j)
      emb.push_back(embedding_(i, j));
  return {{"kind", kind()},
          {"seed", seed_},
          {"embedding", {{"rows", embedding_.rows()}, {"cols", embedding_.cols()}, {"data", emb}}},
          {"parameters", parameters_to_json(weights_)},
          {"metadata", metadata.is_null() ? nlohmann::json::object() : metadata}};
}

HeqMlp HeqMlp::from_json(const nlohmann::json &j) {
  if (j.at("kind").get<std::string>() != "heq_mlp")
    throw std::invalid_argument("checkpoint is not a heq_mlp");
  HeqMlp m(j.at("seed").get<std::uint64_t>());
  const auto emb = j.at("embedding").at("data").get<std::vector<double>>();
  if (static_cast<Index>(emb.size()) != m.embedding_.size())
    throw std::invalid_argument("checkpoint: embedding size mismatch");
  std::size_t n = 0;
  for (Index r = 0; r < m.embedding_.rows(); ++r)
    for (Index c = 0; c < m.embedding_.cols(); ++c)
      m.embedding_(r, c) = emb[n++];
  parameters_from_json(j.at("parameters"), m.weights_);
  if (j.contains("metadata"))
    m.metadata = j.at("metadata");
  return m;
}

HeqTrainResult train_heq_mlp(std::uint64_t seed, const HeqTrainConfig &config) {
  HeqMlp model(seed);
  Rng root(seed);
  Rng data_rng = root.split("heq/factual");
  Rng order_rng = root.split("heq/order");
  Rng val_rng = root.split("heq/validation");

  std::vector<HeqInput> data(static_cast<std::size_t>(config.examples));
  for (HeqInput &in : data)
    in = sample_heq_input(data_rng);

  Adam adam(AdamConfig{.lr = config.lr});
  std::vector<Parameter *> params = model.parameters();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<HeqInput> batch;
  std::vector<int> labels;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      batch.clear();
      labels.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(data[order[k]]);
        labels.push_back(HeqCausal::output(data[order[k]]));
      }
      for (Parameter *p : params)
        p->zero_grad();
      Tape tape;
      Tape::Var logits = model.forward_tape(tape, model.encode(batch));
      const double loss = tape.backward(tape.softmax_cross_entropy(logits, labels));
      if (!std::isfinite(loss))
        throw TrainingFailure("train_heq_mlp: non-finite loss", 0.0);
      adam.step(params);
    }
  }

  std::vector<HeqInput> val(static_cast<std::size_t>(config.validation));
  std::vector<int> val_labels;
  for (HeqInput &in : val) {
    in = sample_heq_input(val_rng);
    val_labels.push_back(HeqCausal::output(in));
  }
  const std::vector<int> pred = model.decode(model.forward(model.encode(val)));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    correct += pred[i] == val_labels[i] ? 1 : 0;
  const double acc = val.empty() ? 1.0 : static_cast<double>(correct) / static_cast<double>(val.size());

  model.metadata = {{"task", "heq"},
                    {"examples", config.examples},
                    {"epochs", config.epochs},
                    {"batch", config.batch},
                    {"lr", config.lr},
                    {"validation_size", config.validation},
                    {"validation_accuracy", acc}};
  if (acc < 1.0)
    throw TrainingFailure("train_heq_mlp: validation accuracy " + std::to_string(acc) + " < 1.0", acc);
  return {std::move(model), acc};
}

} // namespace plot
