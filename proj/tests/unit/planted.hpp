// SPDX-License-Identifier: Apache-2.0
// A tiny linear model with a known variable-carrying neuron.
//
// Input: three bits (p, q, r). One location of width 4:
//   h = (p, q, r, q + r)
// Output: two classes, logit_1 = 8 p - 4, so the prediction is p. Neuron 3
// is never read.
#ifndef PLOT_TESTS_PLANTED_HPP
#define PLOT_TESTS_PLANTED_HPP

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "plot/backbones.hpp"
#include "plot/banks.hpp"

namespace plot::testgen {

class PlantedModel final : public NeuralModel {
public:
  PlantedModel() {
    embed_ = Matrix::Zero(3, 4);
    embed_(0, 0) = 1.0;
    embed_(1, 1) = 1.0;
    embed_(2, 2) = 1.0;
    embed_(1, 3) = 1.0;
    embed_(2, 3) = 1.0;
    Matrix w = Matrix::Zero(4, 2);
    w(0, 1) = 8.0;
    Matrix b(1, 2);
    b << 0.0, -4.0;
    weights_.emplace_back("w_out", w);
    weights_.emplace_back("b_out", b);
  }

  static Matrix encode(const std::vector<std::array<int, 3>> &bits) {
    Matrix x(static_cast<Index>(bits.size()), 3);
    for (std::size_t i = 0; i < bits.size(); ++i)
      for (int c = 0; c < 3; ++c)
        x(static_cast<Index>(i), c) = bits[i][static_cast<std::size_t>(c)];
    return x;
  }

  std::string kind() const override { return "planted"; }
  int num_locations() const override { return 1; }
  Index width(int) const override { return 4; }
  Index input_dim() const override { return 3; }
  Index output_dim() const override { return 2; }
  OutputKind output_kind() const override { return OutputKind::Categorical; }
  std::string location_name(int) const override { return "h"; }

  ActivationTrace trace(const Matrix &x) const override {
    ActivationTrace t;
    t.states.push_back(x * embed_);
    t.logits = readout(t.states[0]);
    return t;
  }

  Matrix resume(const ActivationTrace &base, const Matrix &, const PatchPlan &plan) const override {
    validate_plan(plan);
    Matrix h = base.states[0];
    for (const Patch &p : plan)
      p.rule(h);
    return readout(h);
  }

  Tape::Var resume_tape(Tape &tape, const ActivationTrace &, const Matrix &, int,
                        Tape::Var state) const override {
    return tape.add_row(tape.matmul(state, tape.constant(weights_[0].value)), tape.constant(weights_[1].value));
  }

  Tape::Var forward_tape(Tape &tape, const Matrix &x) override {
    Tape::Var h = tape.constant(x * embed_);
    return tape.add_row(tape.matmul(h, tape.parameter(weights_[0])), tape.parameter(weights_[1]));
  }

  std::vector<Parameter> &weights() override { return weights_; }
  const std::vector<Parameter> &weights() const override { return weights_; }
  nlohmann::json to_json() const override { return {{"kind", kind()}}; }

private:
  Matrix readout(const Matrix &h) const {
    return (h * weights_[0].value).rowwise() + weights_[1].value.row(0);
  }

  Matrix embed_;
  std::vector<Parameter> weights_;
};

/// Every ordered pair of the 8 planted inputs, with p as the variable.
struct PlantedBank {
  Matrix base_x;
  Matrix source_x;
  std::vector<int> factual;
  std::vector<int> counterfactual;
};

/// Every ordered pair of the 8 planted inputs as (bases, sources).
inline std::pair<std::vector<std::array<int, 3>>, std::vector<std::array<int, 3>>> planted_bank_inputs() {
  std::vector<std::array<int, 3>> inputs, base, source;
  for (int v = 0; v < 8; ++v)
    inputs.push_back({v & 1, (v >> 1) & 1, (v >> 2) & 1});
  for (const auto &b : inputs)
    for (const auto &s : inputs) {
      base.push_back(b);
      source.push_back(s);
    }
  return {base, source};
}

inline PlantedBank planted_bank() {
  std::vector<std::array<int, 3>> inputs;
  for (int v = 0; v < 8; ++v)
    inputs.push_back({v & 1, (v >> 1) & 1, (v >> 2) & 1});
  std::vector<std::array<int, 3>> base, source;
  PlantedBank out;
  for (const auto &b : inputs) {
    for (const auto &s : inputs) {
      base.push_back(b);
      source.push_back(s);
      out.factual.push_back(b[0]);
      out.counterfactual.push_back(s[0]);
    }
  }
  out.base_x = PlantedModel::encode(base);
  out.source_x = PlantedModel::encode(source);
  return out;
}

/// Encoded bank over explicit planted pairs; the single variable is p.
inline EncodedBank planted_encoded_bank(const std::vector<std::array<int, 3>> &base,
                                        const std::vector<std::array<int, 3>> &source) {
  EncodedBank b;
  b.base_x = PlantedModel::encode(base);
  b.source_x = PlantedModel::encode(source);
  b.counterfactual.resize(1);
  b.changes.resize(1);
  for (std::size_t i = 0; i < base.size(); ++i) {
    b.factual.push_back(base[i][0]);
    b.counterfactual[0].push_back(source[i][0]);
    b.changes[0].push_back(base[i][0] != source[i][0]);
  }
  return b;
}

} // namespace plot::testgen

#endif // PLOT_TESTS_PLANTED_HPP
