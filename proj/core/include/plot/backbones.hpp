// SPDX-License-Identifier: Apache-2.0
/**
 * @file   backbones.hpp
 * @brief  Trainable task models with activation capture and in-place
 *         activation patching.
 *
 * A model exposes an ordered list of locations (hidden layers for the MLP,
 * recurrent states for the GRU). All entry points are batched: inputs are
 * B x in matrices and every recorded state is B x width(location).
 */
#ifndef PLOT_BACKBONES_HPP
#define PLOT_BACKBONES_HPP

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plot/causal.hpp"
#include "plot/numerics.hpp"
#include "plot/tape.hpp"

namespace plot {

struct ActivationTrace {
  Matrix logits;
  /// One B x width matrix per location, in forward order.
  std::vector<Matrix> states;

  ActivationTrace rows(const std::vector<Index> &idx) const;
};

/// Rewrites the live B x width state at one location.
using PatchRule = std::function<void(Matrix &live)>;

struct Patch {
  int location = 0;
  PatchRule rule;
};

/// Patches in strictly increasing location order.
using PatchPlan = std::vector<Patch>;

enum class OutputKind {
  Categorical, ///< argmax over logits
  Bits,        ///< each logit thresholded at sigmoid >= 0.5
};

class NeuralModel {
public:
  virtual ~NeuralModel() = default;

  virtual std::string kind() const = 0;
  virtual int num_locations() const = 0;
  virtual Index width(int location) const = 0;
  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;
  virtual OutputKind output_kind() const = 0;
  virtual std::string location_name(int location) const = 0;

  /// Plain forward pass recording every location.
  virtual ActivationTrace trace(const Matrix &x) const = 0;

  /**
   * Continues the forward pass of @p x from @p base's recorded state at the
   * first planned location. Locations before it keep their base values; at
   * each planned location the rule sees the live, already-patched state.
   */
  virtual Matrix resume(const ActivationTrace &base, const Matrix &x,
                        const PatchPlan &plan) const = 0;

  /// Differentiable counterpart of resume() that replaces the state at
  /// @p location with @p state and returns the logits node.
  virtual Tape::Var resume_tape(Tape &tape, const ActivationTrace &base, const Matrix &x,
                                int location, Tape::Var state) const = 0;

  /// Differentiable full forward pass with parameters registered on @p tape.
  virtual Tape::Var forward_tape(Tape &tape, const Matrix &x) = 0;

  virtual std::vector<Parameter> &weights() = 0;
  virtual const std::vector<Parameter> &weights() const = 0;
  virtual nlohmann::json to_json() const = 0;

  std::vector<Parameter *> parameters();
  std::size_t parameter_count() const;
  Matrix forward(const Matrix &x) const { return trace(x).logits; }
  /// Empty plan: identical to forward().
  Matrix forward_with_patches(const Matrix &x, const PatchPlan &plan) const;
  /// Predicted label per row (class index, or 5-bit number for Bits).
  std::vector<int> decode(const Matrix &logits) const;

  /// Throws std::out_of_range / std::invalid_argument for malformed plans.
  void validate_plan(const PatchPlan &plan) const;
};

/// Thrown when training ends without an exact fit.
class TrainingFailure : public std::runtime_error {
public:
  TrainingFailure(const std::string &what, double accuracy)
      : std::runtime_error(what), accuracy_(accuracy) {}
  double accuracy() const { return accuracy_; }

private:
  double accuracy_;
};

// ---------------------------------------------------------------------------

/**
 * @brief ReLU MLP 16 -> 16 -> 16 -> 16 -> 2 over four frozen 4-d embeddings.
 *
 * Trainable: three hidden layers (16x16 weights + 16 biases each) and the
 * output layer (16x2 + 2), 850 values in total. The embedding table is drawn
 * from N(0, 1) with the model seed and never updated.
 */
class HeqMlp final : public NeuralModel {
public:
  static constexpr int kHidden = 16;
  static constexpr int kLayers = 3;
  static constexpr int kEmbed = 4;
  static constexpr int kVocab = 100;

  explicit HeqMlp(std::uint64_t seed);

  Matrix encode(std::span<const HeqInput> inputs) const;
  const Matrix &embedding() const { return embedding_; }
  std::uint64_t seed() const { return seed_; }

  std::string kind() const override { return "heq_mlp"; }
  int num_locations() const override { return kLayers; }
  Index width(int location) const override;
  Index input_dim() const override { return 4 * kEmbed; }
  Index output_dim() const override { return 2; }
  OutputKind output_kind() const override { return OutputKind::Categorical; }
  std::string location_name(int location) const override;

  ActivationTrace trace(const Matrix &x) const override;
  Matrix resume(const ActivationTrace &base, const Matrix &x,
                const PatchPlan &plan) const override;
  Tape::Var resume_tape(Tape &tape, const ActivationTrace &base, const Matrix &x,
                        int location, Tape::Var state) const override;
  Tape::Var forward_tape(Tape &tape, const Matrix &x) override;
  std::vector<Parameter> &weights() override { return weights_; }
  const std::vector<Parameter> &weights() const override { return weights_; }
  nlohmann::json to_json() const override;

  static HeqMlp from_json(const nlohmann::json &j);
  nlohmann::json metadata;

private:
  std::uint64_t seed_;
  Matrix embedding_;
  std::vector<Parameter> weights_; // W1 b1 W2 b2 W3 b3 Wout bout
};

struct HeqTrainConfig {
  long examples = 1L << 20;
  int epochs = 3;
  int batch = 1024;
  double lr = 1e-3;
  int validation = 10000;
};

struct HeqTrainResult {
  HeqMlp model;
  double validation_accuracy = 0.0;
};

/// Throws TrainingFailure when validation accuracy is below 1.0.
HeqTrainResult train_heq_mlp(std::uint64_t seed, const HeqTrainConfig &config = {});

// ---------------------------------------------------------------------------

/**
 * @brief Single GRU cell unrolled over the four bit pairs (a_l, b_l),
 *        least significant first, with h_{-1} = 0.
 *
 * Sum logits use one readout shared by all timesteps; the final carry is read
 * from h_3. Logits are ordered (C_4, S_3, S_2, S_1, S_0).
 */
class GruAdder final : public NeuralModel {
public:
  static constexpr int kSteps = 4;

  GruAdder(int hidden, std::uint64_t seed);

  static Matrix encode(std::span<const AdderInput> inputs);
  int hidden() const { return hidden_; }
  std::uint64_t seed() const { return seed_; }
  /// 3(2d + d^2 + 2d) + (d + 1) + (d + 1).
  static std::size_t expected_parameter_count(int hidden);

  std::string kind() const override { return "gru_adder"; }
  int num_locations() const override { return kSteps; }
  Index width(int location) const override;
  Index input_dim() const override { return 2 * kSteps; }
  Index output_dim() const override { return 5; }
  OutputKind output_kind() const override { return OutputKind::Bits; }
  std::string location_name(int location) const override;

  ActivationTrace trace(const Matrix &x) const override;
  Matrix resume(const ActivationTrace &base, const Matrix &x,
                const PatchPlan &plan) const override;
  Tape::Var resume_tape(Tape &tape, const ActivationTrace &base, const Matrix &x,
                        int location, Tape::Var state) const override;
  Tape::Var forward_tape(Tape &tape, const Matrix &x) override;
  std::vector<Parameter> &weights() override { return weights_; }
  const std::vector<Parameter> &weights() const override { return weights_; }
  nlohmann::json to_json() const override;

  static GruAdder from_json(const nlohmann::json &j);
  nlohmann::json metadata;

private:
  Matrix cell(const Matrix &x_t, const Matrix &h) const;
  Tape::Var cell_tape(Tape &tape, Tape::Var x_t, Tape::Var h, const Tape::Var *w) const;

  int hidden_;
  std::uint64_t seed_;
  // w_ih (2 x 3d), w_hh (d x 3d), b_ih, b_hh (1 x 3d), w_s (d x 1), b_s,
  // w_c (d x 1), b_c; gate blocks ordered reset, update, new.
  std::vector<Parameter> weights_;
};

struct GruTrainConfig {
  int epochs = 250;
  int batch = 64;
  double lr = 1e-2;
};

struct GruTrainResult {
  GruAdder model;
  double table_accuracy = 0.0;
  /// Per output bit, in logit order.
  std::array<double, 5> bit_accuracy{};
};

/// Throws TrainingFailure unless all 256 pairs are predicted exactly.
GruTrainResult train_gru_adder(int hidden, std::uint64_t seed, const GruTrainConfig &config = {});

/// All 256 adder inputs ordered by AdderInput::index().
std::vector<AdderInput> all_adder_inputs();

/// Exact-match accuracy of @p model over the full truth table.
double adder_table_accuracy(const GruAdder &model);

std::unique_ptr<NeuralModel> model_from_json(const nlohmann::json &j);

nlohmann::json parameters_to_json(const std::vector<Parameter> &params);
void parameters_from_json(const nlohmann::json &j, std::vector<Parameter> &params);

} // namespace plot

#endif // PLOT_BACKBONES_HPP
