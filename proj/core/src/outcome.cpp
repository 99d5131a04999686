#include "cbdr/outcome.hpp"

#include <sstream>
#include <stdexcept>

#include "cbdr/numerics.hpp"

namespace cbdr {

Index outcome_feature_count(DesignKind kind, Index p, Index q) {
  return kind == DesignKind::X ? 2 * (1 + p) : 2 * (1 + p + 2 * q);
}

Vector outcome_features(DesignKind kind, Index p, Index q,
                        Eigen::Ref<const Vector> cov_row, double a) {
  const Index expected = kind == DesignKind::X ? p : p + 2 * q;
  if (cov_row.size() != expected) {
    throw std::invalid_argument("outcome_features: covariate length mismatch");
  }
  Vector m(outcome_feature_count(kind, p, q));
  m[0] = 1.0;
  m[1] = a;
  m.segment(2, p) = cov_row.head(p);
  m.segment(2 + p, p) = a * cov_row.head(p);
  if (kind == DesignKind::XDagger) {
    const auto w = cov_row.segment(p, q);
    const auto r = cov_row.segment(p + q, q);
    Index at = 2 + 2 * p;
    m.segment(at, q) = r;
    m.segment(at + q, q) = a * r;
    m.segment(at + 2 * q, q) = w;
    m.segment(at + 3 * q, q) = a * w;
  }
  return m;
}

Matrix outcome_feature_matrix(const DesignData& dd, const Vector& treat) {
  if (treat.size() != dd.n()) {
    throw std::invalid_argument("outcome_feature_matrix: length mismatch");
  }
  Matrix m(dd.n(), outcome_feature_count(dd.kind, dd.p, dd.q));
  for (Index i = 0; i < dd.n(); ++i) {
    m.row(i) =
        outcome_features(dd.kind, dd.p, dd.q, dd.cov.row(i), treat[i]);
  }
  return m;
}

OutcomeModel fit_ols(const DesignData& dd) {
  const Matrix m = outcome_feature_matrix(dd, dd.a);

  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  qr.setThreshold(1e-8);
  if (qr.rank() < m.cols()) {
    const auto perm = qr.colsPermutation().indices();
    std::ostringstream msg;
    msg << "fit_ols: rank-deficient feature matrix; offending columns:";
    for (Index i = qr.rank(); i < m.cols(); ++i) msg << ' ' << perm[i];
    throw std::runtime_error(msg.str());
  }

  const double n = static_cast<double>(dd.n());
  const Matrix gram = m.transpose() * m / n;
  const Vector rhs = m.transpose() * dd.y / n;
  OutcomeModel model;
  model.coef = solve_spd(gram + 1e-10 * Matrix::Identity(m.cols(), m.cols()),
                         rhs, 1e-10);
  model.design_id = dd.kind;
  model.p = dd.p;
  model.q = dd.q;
  return model;
}

double OutcomeModel::predict(Eigen::Ref<const Vector> cov_row,
                             double a) const {
  return coef.dot(outcome_features(design_id, p, q, cov_row, a));
}

}  // namespace cbdr
