#pragma once

#include "cbdr/dataset.hpp"
#include "cbdr/types.hpp"

namespace cbdr {

/// Linear outcome working model with treatment interactions. Feature layout
/// is fixed per design:
///   X:       (1, a, x, a*x)                      -> 2(1+p) coefficients
///   Xdagger: (1, a, x, a*x, r, a*r, w~, a*w~)    -> 2(1+p+2q) coefficients
struct OutcomeModel {
  Vector coef;
  DesignKind design_id = DesignKind::X;
  Index p = 0;
  Index q = 0;

  double predict(Eigen::Ref<const Vector> cov_row, double a) const;
};

Index outcome_feature_count(DesignKind kind, Index p, Index q);

/// m(x, a); the model value is coef . m. Also the exact coefficient gradient
/// of the prediction, since the model is linear.
Vector outcome_features(DesignKind kind, Index p, Index q,
                        Eigen::Ref<const Vector> cov_row, double a);

/// Row i holds outcome_features(cov_i, treat[i]).
Matrix outcome_feature_matrix(const DesignData& dd, const Vector& treat);

/// OLS over the interaction layout at the observed treatments. Errors on
/// rank deficiency, reporting the offending feature columns.
OutcomeModel fit_ols(const DesignData& dd);

inline Vector dq_dbeta(DesignKind kind, Index p, Index q,
                       Eigen::Ref<const Vector> cov_row, double d) {
  return outcome_features(kind, p, q, cov_row, d);
}

}  // namespace cbdr
