#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace cbdr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Which covariate set nuisance models are built on: the confounders X, or
/// the augmented set [X | imputed W | missingness indicators R].
enum class DesignKind { X, XDagger };

inline std::string to_string(DesignKind k) {
  return k == DesignKind::X ? "X" : "Xdagger";
}

/// Estimator recipes: propensity fit x outcome-parameter choice.
///   UDR      = (MLE,  OLS)
///   IDR      = (MLE,  variance-stationary coefficients)
///   CBDR     = (CBPS, variance-minimizing coefficients)
///   CBDRstar = (CBPS, OLS)
enum class EstimatorKind { UDR, IDR, CBDR, CBDRstar };

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::UDR: return "UDR";
    case EstimatorKind::IDR: return "IDR";
    case EstimatorKind::CBDR: return "CBDR";
    case EstimatorKind::CBDRstar: return "CBDR*";
  }
  return "?";
}

/// Probability clamp for inverse-weighting ratios.
inline constexpr double kPropensityClamp = 1e-6;

}  // namespace cbdr
