// SPDX-License-Identifier: Apache-2.0
#include "plot/signatures.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace plot {

Featurizer Featurizer::for_model(const NeuralModel &model) {
  if (model.output_kind() == OutputKind::Categorical)
    return {FeaturizerKind::Softmax, model.output_dim()};
  return {FeaturizerKind::SigmoidBits, model.output_dim()};
}

Matrix Featurizer::of_logits(const Matrix &logits) const {
  if (logits.cols() != dim)
    throw std::invalid_argument("featurizer: logit width does not match");
  return kind == FeaturizerKind::Softmax ? softmax_rows(logits) : sigmoid(logits);
}

RowVector Featurizer::of_label(int label) const {
  RowVector out = RowVector::Zero(dim);
  if (kind == FeaturizerKind::Softmax) {
    if (label < 0 || label >= dim)
      throw std::out_of_range("featurizer: class label out of range");
    out(label) = 1.0;
  } else {
    if (label < 0 || label >= (1 << dim))
      throw std::out_of_range("featurizer: bit label out of range");
    for (Index c = 0; c < dim; ++c)
      out(c) = (label >> (dim - 1 - c)) & 1;
  }
  return out;
}

Matrix Featurizer::of_labels(const std::vector<int> &labels) const {
  Matrix out(static_cast<Index>(labels.size()), dim);
  for (std::size_t i = 0; i < labels.size(); ++i)
    out.row(static_cast<Index>(i)) = of_label(labels[i]);
  return out;
}

std::string to_string(FeaturizerKind kind) {
  return kind == FeaturizerKind::Softmax ? "softmax" : "sigmoid-bits";
}

RowVector stack_rows(const Matrix &per_pair) {
  RowVector out(per_pair.size());
  Index n = 0;
  for (Index i = 0; i < per_pair.rows(); ++i)
    for (Index j = 0; j < per_pair.cols(); ++j)
      out(n++) = per_pair(i, j);
  return out;
}

RowVector abstract_signature(const EncodedBank &bank, int var, const Featurizer &phi) {
  if (bank.size() == 0)
    throw std::invalid_argument("abstract_signature: empty bank");
  if (var < 0 || var >= bank.num_vars())
    throw std::out_of_range("abstract_signature: unknown variable");
  return stack_rows(phi.of_labels(bank.counterfactual[static_cast<std::size_t>(var)]) -
                    phi.of_labels(bank.factual));
}

RowVector neural_signature(const NeuralModel &model, const SiteSpec &site, const TracedBank &bank,
                           const Featurizer &phi) {
  if (bank.size() == 0)
    throw std::invalid_argument("neural_signature: empty bank");
  if (site.location < 0 || site.location >= model.num_locations())
    throw std::out_of_range("neural_signature: invalid site location");
  const Matrix *src = &bank.source.states[static_cast<std::size_t>(site.location)];
  PatchPlan plan{{site.location, [&site, src](Matrix &live) { live = neural_swap(site, live, *src); }}};
  const Matrix swapped = model.resume(bank.base, bank.bank.base_x, plan);
  return stack_rows(phi.of_logits(swapped) - phi.of_logits(bank.base.logits));
}

void normalize_rows(Matrix &rows) {
  for (Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (norm > 0.0)
      rows.row(i) /= norm;
  }
}

SignatureSet build_signature_set(const NeuralModel &model, const TracedBank &fit,
                                 const std::vector<int> &vars, const std::vector<std::string> &var_names,
                                 const std::vector<SiteSpec> &sites, const Featurizer &phi, bool normalize) {
  if (vars.empty() || sites.empty())
    throw std::invalid_argument("build_signature_set: need at least one variable and one site");
  if (var_names.size() != vars.size())
    throw std::invalid_argument("build_signature_set: one name per variable");
  SignatureSet set;
  set.featurizer = phi;
  set.normalized = normalize;
  const Index width = static_cast<Index>(fit.size()) * phi.dim;
  set.abstract.resize(static_cast<Index>(vars.size()), width);
  set.neural.resize(static_cast<Index>(sites.size()), width);
  for (std::size_t i = 0; i < vars.size(); ++i) {
    set.abstract.row(static_cast<Index>(i)) = abstract_signature(fit.bank, vars[i], phi);
    set.abstract_owners.push_back(var_names[i]);
  }
  for (std::size_t j = 0; j < sites.size(); ++j) {
    set.neural.row(static_cast<Index>(j)) = neural_signature(model, sites[j], fit, phi);
    set.neural_owners.push_back(sites[j].label);
  }
  if (normalize) {
    normalize_rows(set.abstract);
    normalize_rows(set.neural);
  }
  return set;
}

std::pair<DiscreteMeasure, DiscreteMeasure> build_measures(const SignatureSet &set) {
  if (set.abstract.rows() == 0 || set.neural.rows() == 0)
    throw std::invalid_argument("build_measures: empty signature set");
  return {DiscreteMeasure::uniform(set.abstract), DiscreteMeasure::uniform(set.neural)};
}

nlohmann::json to_json(const SignatureSet &set) {
  auto rows = [](const Matrix &m, const std::vector<std::string> &owners) {
    nlohmann::json arr = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
      std::vector<double> v;
      v.reserve(static_cast<std::size_t>(m.cols()));
      for (Index j = 0; j < m.cols(); ++j)
        v.push_back(m(i, j));
      arr.push_back({{"owner", owners[static_cast<std::size_t>(i)]}, {"values", v}});
    }
    return arr;
  };
  return {{"featurizer", to_string(set.featurizer.kind)},
          {"p", set.featurizer.dim},
          {"normalized", set.normalized},
          {"abstract", rows(set.abstract, set.abstract_owners)},
          {"neural", rows(set.neural, set.neural_owners)}};
}

std::string signatures_to_csv(const SignatureSet &set) {
  std::ostringstream os;
  os << std::setprecision(17) << "side,owner";
  for (Index j = 0; j < set.abstract.cols(); ++j)
    os << ",v" << j;
  os << "\n";
  auto emit = [&os](const char *side, const Matrix &m, const std::vector<std::string> &owners) {
    for (Index i = 0; i < m.rows(); ++i) {
      os << side << "," << owners[static_cast<std::size_t>(i)];
      for (Index j = 0; j < m.cols(); ++j)
        os << "," << m(i, j);
      os << "\n";
    }
  };
  emit("abstract", set.abstract, set.abstract_owners);
  emit("neural", set.neural, set.neural_owners);
  return os.str();
}

} // namespace plot
