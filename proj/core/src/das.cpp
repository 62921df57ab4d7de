// SPDX-License-Identifier: Apache-2.0
#include "plot/interventions.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace plot {

namespace {

double plan_accuracy(const NeuralModel &model, const Matrix &base_x, const ActivationTrace &base,
                     const PatchPlan &plan, const std::vector<int> &targets) {
  const std::vector<int> pred = model.decode(model.resume(base, base_x, plan));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    hits += pred[i] == targets[i] ? 1 : 0;
  return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

Matrix bit_targets(const std::vector<int> &labels, Index width) {
  Matrix y(static_cast<Index>(labels.size()), width);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (Index c = 0; c < width; ++c)
      y(static_cast<Index>(i), c) = (labels[i] >> (width - 1 - c)) & 1;
  return y;
}

} // namespace

DasTrainResult das_train(const NeuralModel &model, int location, int k, const Matrix &base_x,
                         const ActivationTrace &base, const ActivationTrace &source,
                         const std::vector<int> &targets, Rng rng, const DasTrainConfig &config) {
  const Index d = model.width(location);
  const auto loc = static_cast<std::size_t>(location);
  const auto n = static_cast<Index>(targets.size());
  if (n == 0)
    throw std::invalid_argument("das_train: empty bank");
  if (base.states.size() <= loc || source.states.size() <= loc || base.states[loc].rows() != n ||
      source.states[loc].rows() != n || base_x.rows() != n)
    throw std::invalid_argument("das_train: bank, traces and targets are not aligned");
  if (config.batch < 1)
    throw std::invalid_argument("das_train: batch must be positive");

  Rng init = rng.split("das/init");
  Rng order_rng = rng.split("das/order");
  DasTrainResult result;
  DasRotation rot(location, d, k, init);

  const bool bits = model.output_kind() == OutputKind::Bits;
  const Matrix y_bits = bits ? bit_targets(targets, model.output_dim()) : Matrix();
  const Matrix delta = source.states[loc] - base.states[loc];

  result.fit_accuracy = plan_accuracy(model, base_x, base, das_plan(rot, source), targets);
  result.rotation = rot;

  Adam adam(AdamConfig{.lr = config.lr});
  Parameter *params[] = {&rot.S};
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  int stale = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    for (Index start = 0; start < n; start += config.batch) {
      const Index end = std::min<Index>(n, start + config.batch);
      const std::vector<Index> idx(order.begin() + start, order.begin() + end);
      const ActivationTrace base_rows = base.rows(idx);

      Tape tape;
      Tape::Var r = tape.matmul(tape.constant(rot.R0), tape.cayley(tape.skew(tape.parameter(rot.S))));
      if (rot.pre)
        r = tape.matmul(tape.constant(*rot.pre), r);
      Tape::Var rk = tape.cols(r, 0, k);
      Tape::Var shift = tape.matmul(tape.matmul(tape.constant(delta(idx, Eigen::all)), rk), tape.transpose(rk));
      Tape::Var patched = tape.add(tape.constant(base_rows.states[loc]), shift);
      Tape::Var logits = model.resume_tape(tape, base_rows, base_x(idx, Eigen::all), location, patched);

      Tape::Var loss;
      if (bits) {
        loss = tape.bce_with_logits(logits, y_bits(idx, Eigen::all));
      } else {
        std::vector<int> labels;
        labels.reserve(idx.size());
        for (Index i : idx)
          labels.push_back(targets[static_cast<std::size_t>(i)]);
        loss = tape.softmax_cross_entropy(logits, labels);
      }
      rot.S.zero_grad();
      if (!std::isfinite(tape.backward(loss)))
        throw std::runtime_error("das_train: non-finite loss");
      adam.step(params);
    }
    ++result.epochs;
    result.orthogonality.push_back(orthogonality_error(rot.rotation()));

    const double acc = plan_accuracy(model, base_x, base, das_plan(rot, source), targets);
    if (acc > result.fit_accuracy) {
      result.fit_accuracy = acc;
      result.rotation = rot;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return result;
}

} // namespace plot
