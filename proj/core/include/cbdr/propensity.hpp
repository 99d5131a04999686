#pragma once

#include "cbdr/dataset.hpp"
#include "cbdr/outcome.hpp"
#include "cbdr/types.hpp"

namespace cbdr {

enum class FitMethod { MLE, CBPS };

/// Logistic treatment model pr(A=1 | c) = expit(alpha . (1, c)) over the
/// covariates of a design. Probabilities returned by pi/pi_rule are clamped
/// into [1e-6, 1-1e-6] so downstream inverse weights stay finite.
struct PropensityModel {
  Vector alpha;  // intercept first
  DesignKind design_id = DesignKind::X;
  FitMethod fit_method = FitMethod::MLE;
};

double pi(const PropensityModel& model, Eigen::Ref<const Vector> cov_row,
          double a);

/// pi(x, d) for a rule assignment d in {-1,+1}; identical to pi with a = d.
double pi_rule(const PropensityModel& model, Eigen::Ref<const Vector> cov_row,
               double d);

/// Clamped pr(A=1 | c_i) for every row.
Vector pi1_all(const PropensityModel& model, const Matrix& cov);

/// Logistic score {I(a=1) - pi(1,x)} (1, x).
Vector score_alpha(const PropensityModel& model,
                   Eigen::Ref<const Vector> cov_row, double a);

/// d pi(x, d; alpha) / d alpha = sign(d) pi1 (1 - pi1) (1, x).
Vector dpi_dalpha(const PropensityModel& model,
                  Eigen::Ref<const Vector> cov_row, double d);

struct GmmSettings {
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;
  enum class Weighting { Identity, TwoStep };
  Weighting weighting = Weighting::TwoStep;
  double ridge = 1e-8;
};

/// Newton/IRLS maximum likelihood fit of the logistic treatment model.
PropensityModel fit_mle(const DesignData& dd, const GmmSettings& settings = {});

/// Balancing function for the CBPS estimating equation.
///   Moments(k): per-row (1, c, c^2, ..., c^k) with elementwise powers.
///   FullH:      the four-block function coupling the outcome model gradient
///               with the propensity derivative; needs a fitted OutcomeModel.
struct BalanceFunction {
  enum class Kind { FullH, Moments };
  Kind kind = Kind::Moments;
  int order = 1;

  static BalanceFunction full() { return {Kind::FullH, 0}; }
  static BalanceFunction moments(int order) { return {Kind::Moments, order}; }
};

/// Row i holds h(c_i; alpha, outcome_model) evaluated at assignment d[i].
Matrix build_h(const DesignData& dd, const Vector& d, const Vector& alpha,
               const OutcomeModel* outcome_model, BalanceFunction balance);

struct CbpsDiagnostics {
  double moment_norm = 0.0;  // infinity norm of the mean moment
  double objective = 0.0;    // final GMM quadratic form
  int iterations = 0;
};

/// Covariate-balancing fit: solves (just-identified) or two-step GMM
/// minimizes (over-identified) the balance moment conditions, initialized at
/// the MLE. Deterministic; throws on non-convergence.
PropensityModel fit_cbps(const DesignData& dd, const Vector& d,
                         BalanceFunction balance,
                         const OutcomeModel* outcome_model,
                         const GmmSettings& settings = {},
                         CbpsDiagnostics* diagnostics = nullptr);

}  // namespace cbdr
