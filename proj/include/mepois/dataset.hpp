#pragma once

#include "mepois/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace mepois {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kPsdTol = 1e-10;

inline bool all_finite(const Eigen::Ref<const MatrixXd>& m) { return m.allFinite(); }

/// Throws unless `omega` is square, symmetric and positive semidefinite within 1e-10.
inline void check_covariance(const Eigen::Ref<const MatrixXd>& omega, const std::string& what) {
  if (omega.rows() != omega.cols()) {
    throw DimensionMismatch(what + " must be square");
  }
  if (!omega.allFinite()) throw InvalidArgument(what + " has non-finite entries");
  if ((omega - omega.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol) {
    throw InvalidArgument(what + " is not symmetric");
  }
  if (omega.rows() == 0) return;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(omega, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -kPsdTol) {
    throw InvalidArgument(what + " has a negative eigenvalue");
  }
}

/// Observed covariates W (n x p), counts Y (n), and the measurement-error covariance Omega (p x p).
struct Dataset {
  MatrixXd W;
  VectorXd Y;
  MatrixXd Omega;

  Dataset() = default;
  Dataset(MatrixXd w, VectorXd y, MatrixXd omega)
      : W(std::move(w)), Y(std::move(y)), Omega(std::move(omega)) {
    validate();
  }

  Index n() const { return W.rows(); }
  Index p() const { return W.cols(); }

  void validate() const {
    if (W.rows() < 1 || W.cols() < 1) throw InvalidArgument("dataset needs n >= 1 and p >= 1");
    if (Y.size() != W.rows()) throw DimensionMismatch("Y length does not match rows of W");
    if (Omega.rows() != W.cols()) throw DimensionMismatch("Omega dimension does not match columns of W");
    if (!W.allFinite()) throw InvalidArgument("W has non-finite entries");
    for (Index i = 0; i < Y.size(); ++i) {
      const double y = Y[i];
      if (!(y >= 0.0) || std::floor(y) != y) {
        throw InvalidArgument("Y must contain nonnegative integers");
      }
    }
    check_covariance(Omega, "Omega");
  }

  /// Same data with the error covariance set to zero (the naive, error-free model).
  Dataset without_error() const {
    Dataset d;
    d.W = W;
    d.Y = Y;
    d.Omega = MatrixXd::Zero(p(), p());
    return d;
  }
};

inline void check_coefficients(const Dataset& data, const Eigen::Ref<const VectorXd>& beta) {
  if (beta.size() != data.p()) throw DimensionMismatch("coefficient length does not match p");
  if (!beta.allFinite()) throw InvalidArgument("coefficients must be finite");
}

}  // namespace mepois
