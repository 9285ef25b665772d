#pragma once

#include "mepois/dataset.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace mepois {

using IndexSet = std::vector<Index>;

inline constexpr double kRankTol = 1e-10;

/// Linear hypothesis C beta_M = t. Indices in M are 0-based, strictly increasing,
/// and C has one column per entry of M.
struct HypothesisSpec {
  MatrixXd C;
  VectorXd t;
  IndexSet M;

  Index r() const { return C.rows(); }
  Index m() const { return static_cast<Index>(M.size()); }

  void validate(Index p) const {
    if (C.cols() != m()) throw DimensionMismatch("C must have one column per tested index");
    if (t.size() != C.rows()) throw DimensionMismatch("t must have one entry per row of C");
    for (std::size_t k = 0; k < M.size(); ++k) {
      if (M[k] < 0 || M[k] >= p) throw InvalidArgument("tested index out of range");
      if (k > 0 && M[k] <= M[k - 1]) throw InvalidArgument("tested indices must be strictly increasing");
    }
    if (!C.allFinite() || !t.allFinite()) throw InvalidArgument("hypothesis has non-finite entries");
    if (r() > 0) {
      Eigen::ColPivHouseholderQR<MatrixXd> qr(C);
      qr.setThreshold(kRankTol);
      if (qr.rank() != r()) throw InvalidArgument("C must have full row rank");
    }
  }

  /// Single-coefficient hypothesis beta_j = value.
  static HypothesisSpec single(Index j, double value) {
    HypothesisSpec h;
    h.C = MatrixXd::Ones(1, 1);
    h.t = VectorXd::Constant(1, value);
    h.M = {j};
    return h;
  }

  /// sum_{j in M} beta_j = value.
  static HypothesisSpec sum_of(IndexSet idx, double value) {
    std::sort(idx.begin(), idx.end());
    HypothesisSpec h;
    h.C = MatrixXd::Ones(1, static_cast<Index>(idx.size()));
    h.t = VectorXd::Constant(1, value);
    h.M = std::move(idx);
    return h;
  }

  /// No tested block: the penalized program over all coordinates.
  static HypothesisSpec none() {
    HypothesisSpec h;
    h.C.resize(0, 0);
    h.t.resize(0);
    return h;
  }
};

/// Complement of M in {0, ..., p-1}.
inline IndexSet complement(const IndexSet& M, Index p) {
  IndexSet out;
  out.reserve(static_cast<std::size_t>(p) - M.size());
  std::size_t k = 0;
  for (Index j = 0; j < p; ++j) {
    if (k < M.size() && M[k] == j) {
      ++k;
    } else {
      out.push_back(j);
    }
  }
  return out;
}

inline VectorXd gather(const VectorXd& v, const IndexSet& idx) {
  VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Index>(k)] = v[idx[k]];
  return out;
}

inline MatrixXd gather(const MatrixXd& a, const IndexSet& rows, const IndexSet& cols) {
  MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = a(rows[i], cols[j]);
  return out;
}

inline void scatter(VectorXd& v, const IndexSet& idx, const VectorXd& values) {
  for (std::size_t k = 0; k < idx.size(); ++k) v[idx[k]] = values[static_cast<Index>(k)];
}

/// The feasible region {b : |b|_1 <= R1, |b|_2 <= R2}.
struct FeasibleSet {
  double R1 = 0.0;
  double R2 = 0.0;

  void validate() const {
    if (!(R1 > 0.0) || !(R2 > 0.0)) throw InvalidArgument("feasible-set radii must be positive");
  }
};

/// Euclidean projection onto the L1 ball of radius `radius` (sort-and-threshold).
inline VectorXd project_l1(const VectorXd& v, double radius) {
  if (!(radius > 0.0)) throw InvalidArgument("L1 radius must be positive");
  const double norm1 = v.lpNorm<1>();
  if (norm1 <= radius) return v;
  std::vector<double> u(static_cast<std::size_t>(v.size()));
  for (Index j = 0; j < v.size(); ++j) u[static_cast<std::size_t>(j)] = std::abs(v[j]);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double candidate = (cumsum - radius) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) tau = candidate;
  }
  VectorXd w(v.size());
  for (Index j = 0; j < v.size(); ++j) {
    const double mag = std::max(std::abs(v[j]) - tau, 0.0);
    w[j] = v[j] < 0.0 ? -mag : mag;
  }
  return w;
}

/// Radial shrink onto the L2 ball of radius `radius`.
inline VectorXd shrink_l2(const VectorXd& v, double radius) {
  if (!(radius > 0.0)) throw InvalidArgument("L2 radius must be positive");
  const double norm = v.norm();
  if (norm <= radius) return v;
  return v * (radius / norm);
}

/// Step 2 of the solver: L1 projection followed by L2 shrinkage.
inline VectorXd project_feasible(const VectorXd& v, const FeasibleSet& set) {
  return shrink_l2(project_l1(v, set.R1), set.R2);
}

/// |C beta_M - t|_inf
inline double constraint_residual(const HypothesisSpec& spec, const VectorXd& beta) {
  if (spec.C.cols() != spec.m() || spec.t.size() != spec.r()) {
    throw DimensionMismatch("hypothesis is malformed");
  }
  for (Index j : spec.M) {
    if (j < 0 || j >= beta.size()) throw DimensionMismatch("tested index outside coefficient vector");
  }
  if (spec.r() == 0) return 0.0;
  return (spec.C * gather(beta, spec.M) - spec.t).lpNorm<Eigen::Infinity>();
}

}  // namespace mepois
