// SPDX-License-Identifier: Apache-2.0
/**
 * @file   transport.hpp
 * @brief  Entropic and one-sided unbalanced optimal transport between
 *         discrete measures, and top-K extraction from coupling rows.
 */
#ifndef PLOT_TRANSPORT_HPP
#define PLOT_TRANSPORT_HPP

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plot/numerics.hpp"

namespace plot {

/// Weighted point cloud; support rows are the atoms.
struct DiscreteMeasure {
  Vector weights;
  Matrix support;

  /// Uniform weights over the rows of @p support.
  static DiscreteMeasure uniform(Matrix support);
  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

/// Squared Euclidean cost between every pair of support rows.
Matrix squared_euclidean_cost(const Matrix &u, const Matrix &v);

enum class CouplingMode { Balanced, OneSidedUnbalanced };

struct Coupling {
  Matrix pi;
  double eps = 0.0;
  CouplingMode mode = CouplingMode::Balanced;
  /// Column-marginal penalty; only meaningful for OneSidedUnbalanced.
  double beta = 0.0;
  int iterations = 0;
  bool converged = false;
  /// L1 row-marginal violation at exit.
  double marginal_error = 0.0;

  double transport_cost(const Matrix &cost) const { return (pi.array() * cost.array()).sum(); }
};

struct SinkhornOptions {
  int max_iters = 10000;
  double tol = 1e-9;
};

/**
 * @brief Balanced entropic OT, min <C,P> + eps KL(P || mu x nu), solved with
 *        log-domain Sinkhorn updates.
 *
 * eps is approached by halving from the largest cost entry with warm-started
 * potentials; iterations of every stage count toward options.max_iters.
 * Iteration stops once the L1 row-marginal violation after a column update
 * at the requested eps drops below @p options.tol. Columns are then exact
 * and rows are within tol.
 */
Coupling sinkhorn_eot(const DiscreteMeasure &mu, const DiscreteMeasure &nu,
                      double eps, SinkhornOptions options = {});

/**
 * @brief One-sided unbalanced OT. The row marginal is held at mu; the column
 *        marginal is penalised by beta * KL(P_2 || nu), which turns the column
 *        potential update into a damped one with exponent beta / (beta + eps).
 */
Coupling sinkhorn_uot_one_sided(const DiscreteMeasure &mu, const DiscreteMeasure &nu,
                                double eps, double beta, SinkhornOptions options = {});

/// Normalised top-K slice of one coupling row.
struct HandleWeights {
  int variable = 0;
  std::vector<int> sites;
  std::vector<double> weights;
};

/**
 * Keeps the K largest entries of row @p row (ties broken toward the lower
 * site index) and renormalises them to sum to one. Sites are returned in
 * descending-mass order.
 */
HandleWeights topk_renormalize(const Coupling &coupling, int row, int k);
HandleWeights topk_renormalize(const RowVector &row_mass, int row, int k);

std::string to_string(CouplingMode mode);
std::string coupling_to_csv(const Coupling &coupling);
nlohmann::json to_json(const Coupling &coupling);
nlohmann::json to_json(const HandleWeights &weights);

} // namespace plot

#endif // PLOT_TRANSPORT_HPP
