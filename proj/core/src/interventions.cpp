// SPDX-License-Identifier: Apache-2.0
#include "plot/interventions.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace plot {

void SiteSpec::validate(double tol) const {
  if (W.rows() == 0 || W.cols() == 0 || W.cols() > W.rows())
    throw std::invalid_argument("site " + label + ": W must be d x r with 1 <= r <= d");
  if (mean.size() != W.rows())
    throw std::invalid_argument("site " + label + ": mean length does not match W");
  if (orthogonality_error(W) > tol)
    throw std::invalid_argument("site " + label + ": W columns are not orthonormal");
}

namespace {

void check_rows(const SiteSpec &site, const Matrix &a) {
  if (a.cols() != site.dim())
    throw std::invalid_argument("site " + site.label + ": activation dimension mismatch");
}

} // namespace

Matrix site_project(const SiteSpec &site, const Matrix &a) {
  check_rows(site, a);
  return (a.rowwise() - site.mean) * site.W;
}

Matrix neural_swap(const SiteSpec &site, const Matrix &a_base, const Matrix &a_source) {
  check_rows(site, a_base);
  check_rows(site, a_source);
  if (a_base.rows() != a_source.rows())
    throw std::invalid_argument("neural_swap: batch size mismatch");
  // The centring mean cancels in h(source) - h(base). Written as
  // a (I - P) + s P so coordinate and full-vector sites copy values exactly.
  const Matrix p = site.W * site.W.transpose();
  return a_base - a_base * p + a_source * p;
}

SiteSpec canonical_site(int location, Index d, Index index, std::string label) {
  if (index < 0 || index >= d)
    throw std::out_of_range("canonical_site: index out of range");
  SiteSpec s;
  s.location = location;
  s.W = Matrix::Zero(d, 1);
  s.W(index, 0) = 1.0;
  s.mean = RowVector::Zero(d);
  s.label = label.empty() ? "L" + std::to_string(location) + "[" + std::to_string(index) + "]" : label;
  return s;
}

std::vector<SiteSpec> canonical_sites(const NeuralModel &model) {
  std::vector<SiteSpec> out;
  for (int loc = 0; loc < model.num_locations(); ++loc) {
    const Index d = model.width(loc);
    for (Index j = 0; j < d; ++j)
      out.push_back(canonical_site(loc, d, j, model.location_name(loc) + "[" + std::to_string(j) + "]"));
  }
  return out;
}

std::vector<SiteSpec> group_sites(int location, Index d, Index r) {
  if (r < 1 || r > d)
    throw std::invalid_argument("group_sites: resolution out of range");
  std::vector<SiteSpec> out;
  for (Index start = 0; start < d; start += r) {
    const Index width = std::min(r, d - start);
    SiteSpec s;
    s.location = location;
    s.W = Matrix::Zero(d, width);
    for (Index c = 0; c < width; ++c)
      s.W(start + c, c) = 1.0;
    s.mean = RowVector::Zero(d);
    s.label = "L" + std::to_string(location) + "[" + std::to_string(start) + ":" +
              std::to_string(start + width) + "]";
    out.push_back(std::move(s));
  }
  return out;
}

SiteSpec full_vector_site(int location, Index d) {
  SiteSpec s;
  s.location = location;
  s.W = Matrix::Identity(d, d);
  s.mean = RowVector::Zero(d);
  s.label = "L" + std::to_string(location) + "[all]";
  return s;
}

std::vector<SiteSpec> prefix_sites(int location, const Matrix &basis, const RowVector &mean,
                                   const std::vector<Index> &prefixes) {
  std::vector<SiteSpec> out;
  for (Index p : prefixes) {
    if (p < 1 || p > basis.cols())
      throw std::invalid_argument("prefix_sites: prefix size out of range");
    SiteSpec s;
    s.location = location;
    s.W = basis.leftCols(p);
    s.mean = mean;
    s.label = "L" + std::to_string(location) + "[pc:" + std::to_string(p) + "]";
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Index> doubling_sizes(Index d) {
  std::vector<Index> out;
  for (Index k = 1; k < d; k *= 2)
    out.push_back(k);
  out.push_back(d);
  return out;
}

void Handle::validate() const {
  if (sites.empty() || sites.size() != weights.weights.size())
    throw std::invalid_argument("handle: sites and weights must be nonempty and aligned");
  if (!(lambda > 0.0))
    throw std::invalid_argument("handle: lambda must be positive");
  double total = 0.0;
  for (double w : weights.weights) {
    if (w < 0.0)
      throw std::invalid_argument("handle: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("handle: weights do not sum to 1");
  for (const SiteSpec &s : sites)
    s.validate();
}

PatchPlan handle_plan(const Handle &handle, const ActivationTrace &source) {
  handle.validate();
  // Per location, the combined operator lambda * sum_j w_j W_j W_j^T.
  std::map<int, Matrix> mix;
  for (std::size_t j = 0; j < handle.sites.size(); ++j) {
    const SiteSpec &s = handle.sites[j];
    if (s.location < 0 || static_cast<std::size_t>(s.location) >= source.states.size())
      throw std::out_of_range("handle: site location " + std::to_string(s.location) + " not in trace");
    auto it = mix.find(s.location);
    if (it == mix.end())
      it = mix.emplace(s.location, Matrix::Zero(s.dim(), s.dim())).first;
    it->second.noalias() += (handle.lambda * handle.weights.weights[j]) * (s.W * s.W.transpose());
  }
  PatchPlan plan;
  for (auto &[loc, m] : mix) {
    const Matrix *src = &source.states[static_cast<std::size_t>(loc)];
    plan.push_back({loc, [src, m = std::move(m)](Matrix &live) {
                      if (live.rows() != src->rows() || live.cols() != m.rows())
                        throw std::invalid_argument("handle: live state does not match source trace");
                      live = live - live * m + *src * m;
                    }});
  }
  return plan;
}

Matrix apply_handle(const NeuralModel &model, const Handle &handle, const ActivationTrace &base,
                    const Matrix &base_x, const ActivationTrace &source) {
  return model.resume(base, base_x, handle_plan(handle, source));
}

DasRotation::DasRotation(int location_, Index d, int k_, Rng &rng)
    : location(location_), k(k_), R0(random_orthogonal(d, rng)), S("S", Matrix::Zero(d, d)) {
  validate();
}

Matrix DasRotation::rotation() const {
  const Matrix a = S.value - S.value.transpose();
  const Index d = a.rows();
  const Matrix eye = Matrix::Identity(d, d);
  const Matrix q = (eye - a).partialPivLu().solve(eye + a);
  Matrix r = R0 * q;
  if (pre)
    r = (*pre) * r;
  return r;
}

void DasRotation::validate() const {
  const Index d = R0.rows();
  if (d == 0 || R0.cols() != d || S.value.rows() != d || S.value.cols() != d)
    throw std::invalid_argument("DAS rotation: inconsistent shapes");
  if (k < 1 || k > d)
    throw std::invalid_argument("DAS rotation: k out of range");
  if (pre && (pre->rows() != d || pre->cols() != d))
    throw std::invalid_argument("DAS rotation: pre-rotation shape mismatch");
}

Matrix das_intervene(const DasRotation &rot, const Matrix &a_base, const Matrix &a_source) {
  rot.validate();
  if (a_base.cols() != rot.dim() || a_source.cols() != rot.dim() || a_base.rows() != a_source.rows())
    throw std::invalid_argument("das_intervene: dimension mismatch");
  const Matrix rk = rot.rotation().leftCols(rot.k);
  return a_base + ((a_source - a_base) * rk) * rk.transpose();
}

PatchPlan das_plan(const DasRotation &rot, const ActivationTrace &source) {
  rot.validate();
  if (rot.location < 0 || static_cast<std::size_t>(rot.location) >= source.states.size())
    throw std::out_of_range("DAS rotation: location not in trace");
  const Matrix rk = rot.rotation().leftCols(rot.k);
  const Matrix *src = &source.states[static_cast<std::size_t>(rot.location)];
  return {{rot.location, [src, proj = Matrix(rk * rk.transpose())](Matrix &live) {
             live += (*src - live) * proj;
           }}};
}

nlohmann::json matrix_to_json(const Matrix &m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json &j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols)
    throw std::invalid_argument("matrix json: size mismatch");
  Matrix m(rows, cols);
  std::size_t n = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c)
      m(i, c) = data[n++];
  return m;
}

nlohmann::json to_json(const SiteSpec &site) {
  return {{"location", site.location},
          {"label", site.label},
          {"W", matrix_to_json(site.W)},
          {"mean", matrix_to_json(site.mean)}};
}

SiteSpec site_from_json(const nlohmann::json &j) {
  SiteSpec s;
  s.location = j.at("location").get<int>();
  s.label = j.at("label").get<std::string>();
  s.W = matrix_from_json(j.at("W"));
  const Matrix mean = matrix_from_json(j.at("mean"));
  if (mean.rows() != 1)
    throw std::invalid_argument("site json: mean must be a row");
  s.mean = mean.row(0);
  s.validate();
  return s;
}

nlohmann::json to_json(const Handle &handle) {
  nlohmann::json sites = nlohmann::json::array();
  for (const SiteSpec &s : handle.sites)
    sites.push_back(to_json(s));
  return {{"variable", handle.variable},
          {"lambda", handle.lambda},
          {"weights", to_json(handle.weights)},
          {"sites", sites}};
}

Handle handle_from_json(const nlohmann::json &j) {
  Handle h;
  h.variable = j.at("variable").get<int>();
  h.lambda = j.at("lambda").get<double>();
  const auto &w = j.at("weights");
  h.weights.variable = w.at("variable").get<int>();
  h.weights.sites = w.at("sites").get<std::vector<int>>();
  h.weights.weights = w.at("weights").get<std::vector<double>>();
  for (const auto &s : j.at("sites"))
    h.sites.push_back(site_from_json(s));
  h.validate();
  return h;
}

nlohmann::json to_json(const DasRotation &rot) {
  nlohmann::json j = {{"location", rot.location},
                      {"k", rot.k},
                      {"R0", matrix_to_json(rot.R0)},
                      {"S", matrix_to_json(rot.S.value)},
                      {"R", matrix_to_json(rot.rotation())}};
  if (rot.pre)
    j["pre"] = matrix_to_json(*rot.pre);
  return j;
}

DasRotation rotation_from_json(const nlohmann::json &j) {
  DasRotation r;
  r.location = j.at("location").get<int>();
  r.k = j.at("k").get<int>();
  r.R0 = matrix_from_json(j.at("R0"));
  r.S = Parameter("S", matrix_from_json(j.at("S")));
  if (j.contains("pre"))
    r.pre = matrix_from_json(j.at("pre"));
  r.validate();
  return r;
}

} // namespace plot
