// SPDX-License-Identifier: Apache-2.0
#include "plot/backbones.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace plot {

namespace {

enum Slot { kWih = 0, kWhh, kBih, kBhh, kWs, kBs, kWc, kBc };

Matrix readout(const Matrix &h, const Parameter &w, const Parameter &b) {
  return ((h * w.value).array() + b.value(0, 0)).matrix();
}

} // namespace

GruAdder::GruAdder(int hidden, std::uint64_t seed) : hidden_(hidden), seed_(seed) {
  if (hidden < 1)
    throw std::invalid_argument("GruAdder: hidden size must be positive");
  Rng init = Rng(seed).split("adder/init");
  const Index d = hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  weights_.emplace_back("w_ih", uniform_matrix(2, 3 * d, -bound, bound, init));
  weights_.emplace_back("w_hh", uniform_matrix(d, 3 * d, -bound, bound, init));
  weights_.emplace_back("b_ih", uniform_matrix(1, 3 * d, -bound, bound, init));
  weights_.emplace_back("b_hh", uniform_matrix(1, 3 * d, -bound, bound, init));
  weights_.emplace_back("w_s", uniform_matrix(d, 1, -bound, bound, init));
  weights_.emplace_back("b_s", uniform_matrix(1, 1, -bound, bound, init));
  weights_.emplace_back("w_c", uniform_matrix(d, 1, -bound, bound, init));
  weights_.emplace_back("b_c", uniform_matrix(1, 1, -bound, bound, init));
}

std::size_t GruAdder::expected_parameter_count(int hidden) {
  const auto d = static_cast<std::size_t>(hidden);
  return 3 * (2 * d + d * d + 2 * d) + (d + 1) + (d + 1);
}

Matrix GruAdder::encode(std::span<const AdderInput> inputs) {
  Matrix x(static_cast<Index>(inputs.size()), 2 * kSteps);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    AdderCausal::validate(inputs[i]);
    for (int t = 0; t < kSteps; ++t) {
      x(static_cast<Index>(i), 2 * t) = inputs[i].a[static_cast<std::size_t>(t)];
      x(static_cast<Index>(i), 2 * t + 1) = inputs[i].b[static_cast<std::size_t>(t)];
    }
  }
  return x;
}

Index GruAdder::width(int location) const {
  if (location < 0 || location >= kSteps)
    throw std::out_of_range("GruAdder: invalid location");
  return hidden_;
}

std::string GruAdder::location_name(int location) const {
  width(location);
  return "h" + std::to_string(location);
}

Matrix GruAdder::cell(const Matrix &x_t, const Matrix &h) const {
  const Index d = hidden_;
  const Matrix gi = (x_t * weights_[kWih].value).rowwise() + weights_[kBih].value.row(0);
  const Matrix gh = (h * weights_[kWhh].value).rowwise() + weights_[kBhh].value.row(0);
  const Matrix r = sigmoid(Matrix(gi.leftCols(d) + gh.leftCols(d)));
  const Matrix z = sigmoid(Matrix(gi.middleCols(d, d) + gh.middleCols(d, d)));
  const Matrix n =
      (gi.rightCols(d).array() + r.array() * gh.rightCols(d).array()).tanh().matrix();
  return ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
}

ActivationTrace GruAdder::trace(const Matrix &x) const {
  if (x.cols() != input_dim())
    throw std::invalid_argument("GruAdder: input dimension mismatch");
  ActivationTrace t;
  Matrix h = Matrix::Zero(x.rows(), hidden_);
  for (int step = 0; step < kSteps; ++step) {
    h = cell(x.middleCols(2 * step, 2), h);
    t.states.push_back(h);
  }
  t.logits.resize(x.rows(), 5);
  t.logits.col(0) = readout(h, weights_[kWc], weights_[kBc]);
  for (int step = 0; step < kSteps; ++step)
    t.logits.col(4 - step) = readout(t.states[static_cast<std::size_t>(step)], weights_[kWs], weights_[kBs]);
  return t;
}

Matrix GruAdder::resume(const ActivationTrace &base, const Matrix &x, const PatchPlan &plan) const {
  validate_plan(plan);
  if (plan.empty())
    return base.logits;
  Matrix logits = base.logits;
  std::size_t cursor = 0;
  const int start = plan.front().location;
  Matrix h = base.states[static_cast<std::size_t>(start)];
  for (int step = start; step < kSteps; ++step) {
    if (step > start)
      h = cell(x.middleCols(2 * step, 2), h);
    while (cursor < plan.size() && plan[cursor].location == step)
      plan[cursor++].rule(h);
    logits.col(4 - step) = readout(h, weights_[kWs], weights_[kBs]);
  }
  logits.col(0) = readout(h, weights_[kWc], weights_[kBc]);
  return logits;
}

Tape::Var GruAdder::cell_tape(Tape &tape, Tape::Var x_t, Tape::Var h, const Tape::Var *w) const {
  const Index d = hidden_;
  Tape::Var gi = tape.add_row(tape.matmul(x_t, w[kWih]), w[kBih]);
  Tape::Var gh = tape.add_row(tape.matmul(h, w[kWhh]), w[kBhh]);
  Tape::Var r = tape.sigmoid(tape.add(tape.cols(gi, 0, d), tape.cols(gh, 0, d)));
  Tape::Var z = tape.sigmoid(tape.add(tape.cols(gi, d, d), tape.cols(gh, d, d)));
  Tape::Var n = tape.tanh(tape.add(tape.cols(gi, 2 * d, d), tape.hadamard(r, tape.cols(gh, 2 * d, d))));
  return tape.add(tape.hadamard(tape.one_minus(z), n), tape.hadamard(z, h));
}

namespace {

Tape::Var head(Tape &tape, Tape::Var h, const Tape::Var *w, int weight, int bias) {
  return tape.add_row(tape.matmul(h, w[weight]), w[bias]);
}

// Columns (C4, S3, S2, S1, S0) from the carry logit and per-step sum logits.
Tape::Var assemble(Tape &tape, Tape::Var carry, const std::array<Tape::Var, 4> &sums) {
  Tape::Var out = carry;
  for (int step = 3; step >= 0; --step)
    out = tape.concat_cols(out, sums[static_cast<std::size_t>(step)]);
  return out;
}

} // namespace

Tape::Var GruAdder::resume_tape(Tape &tape, const ActivationTrace &base, const Matrix &x,
                                int location, Tape::Var state) const {
  width(location);
  Tape::Var w[8];
  for (int k = 0; k < 8; ++k)
    w[k] = tape.constant(weights_[static_cast<std::size_t>(k)].value);
  std::array<Tape::Var, 4> sums{};
  for (int step = 0; step < location; ++step)
    sums[static_cast<std::size_t>(step)] = tape.constant(base.logits.col(4 - step));
  Tape::Var h = state;
  for (int step = location; step < kSteps; ++step) {
    if (step > location)
      h = cell_tape(tape, tape.constant(x.middleCols(2 * step, 2)), h, w);
    sums[static_cast<std::size_t>(step)] = head(tape, h, w, kWs, kBs);
  }
  return assemble(tape, head(tape, h, w, kWc, kBc), sums);
}

Tape::Var GruAdder::forward_tape(Tape &tape, const Matrix &x) {
  Tape::Var w[8];
  for (int k = 0; k < 8; ++k)
    w[k] = tape.parameter(weights_[static_cast<std::size_t>(k)]);
  Tape::Var h = tape.constant(Matrix::Zero(x.rows(), hidden_));
  std::array<Tape::Var, 4> sums{};
  for (int step = 0; step < kSteps; ++step) {
    h = cell_tape(tape, tape.constant(x.middleCols(2 * step, 2)), h, w);
    sums[static_cast<std::size_t>(step)] = head(tape, h, w, kWs, kBs);
  }
  return assemble(tape, head(tape, h, w, kWc, kBc), sums);
}

nlohmann::json GruAdder::to_json() const {
  return {{"kind", kind()},
          {"seed", seed_},
          {"hidden", hidden_},
          {"parameters", parameters_to_json(weights_)},
          {"metadata", metadata.is_null() ? nlohmann::json::object() : metadata}};
}

GruAdder GruAdder::from_json(const nlohmann::json &j) {
  if (j.at("kind").get<std::string>() != "gru_adder")
    throw std::invalid_argument("checkpoint is not a gru_adder");
  GruAdder m(j.at("hidden").get<int>(), j.at("seed").get<std::uint64_t>());
  parameters_from_json(j.at("parameters"), m.weights_);
  if (j.contains("metadata"))
    m.metadata = j.at("metadata");
  return m;
}

std::vector<AdderInput> all_adder_inputs() {
  std::vector<AdderInput> out;
  out.reserve(256);
  for (int a = 0; a < 16; ++a)
    for (int b = 0; b < 16; ++b)
      out.push_back(AdderInput::from_ints(a, b));
  return out;
}

namespace {

Matrix label_targets(std::span<const AdderInput> inputs) {
  Matrix y(static_cast<Index>(inputs.size()), 5);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto bits = adder_label_bits(AdderCausal::output(inputs[i]));
    for (int c = 0; c < 5; ++c)
      y(static_cast<Index>(i), c) = bits[static_cast<std::size_t>(c)];
  }
  return y;
}

} // namespace

double adder_table_accuracy(const GruAdder &model) {
  const std::vector<AdderInput> inputs = all_adder_inputs();
  const std::vector<int> pred = model.decode(model.forward(GruAdder::encode(inputs)));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    correct += pred[i] == AdderCausal::output(inputs[i]) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

GruTrainResult train_gru_adder(int hidden, std::uint64_t seed, const GruTrainConfig &config) {
  GruAdder model(hidden, seed);
  Rng order_rng = Rng(seed).split("adder/order");
  const std::vector<AdderInput> inputs = all_adder_inputs();
  const Matrix x_all = GruAdder::encode(inputs);
  const Matrix y_all = label_targets(inputs);

  Adam adam(AdamConfig{.lr = config.lr});
  std::vector<Parameter *> params = model.parameters();
  std::vector<Index> order(inputs.size());
  std::iota(order.begin(), order.end(), Index{0});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      const std::vector<Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      for (Parameter *p : params)
        p->zero_grad();
      Tape tape;
      Tape::Var logits = model.forward_tape(tape, x_all(idx, Eigen::all));
      const double loss = tape.backward(tape.bce_with_logits(logits, y_all(idx, Eigen::all)));
      if (!std::isfinite(loss))
        throw TrainingFailure("train_gru_adder: non-finite loss", 0.0);
      adam.step(params);
    }
  }

  GruTrainResult result{model, 0.0, {}};
  const Matrix logits = model.forward(x_all);
  for (int c = 0; c < 5; ++c) {
    std::size_t hits = 0;
    for (Index i = 0; i < logits.rows(); ++i)
      hits += ((logits(i, c) >= 0.0 ? 1.0 : 0.0) == y_all(i, c)) ? 1 : 0;
    result.bit_accuracy[static_cast<std::size_t>(c)] = static_cast<double>(hits) / 256.0;
  }
  result.table_accuracy = adder_table_accuracy(model);
  model.metadata = {{"task", "addition"},
                    {"hidden", hidden},
                    {"epochs", config.epochs},
                    {"batch", config.batch},
                    {"lr", config.lr},
                    {"table_accuracy", result.table_accuracy},
                    {"bit_accuracy", result.bit_accuracy}};
  result.model = model;
  if (result.table_accuracy < 1.0) {
    std::string bits;
    for (double b : result.bit_accuracy)
      bits += " " + std::to_string(b);
    throw TrainingFailure("train_gru_adder: table accuracy " + std::to_string(result.table_accuracy) +
                              ", per-bit" + bits,
                          result.table_accuracy);
  }
  return result;
}

} // namespace plot
