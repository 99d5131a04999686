#pragma once

#include <functional>

#include "cbdr/types.hpp"

namespace cbdr {

inline double expit(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct LogisticFit {
  Vector coef;
  double log_lik = 0.0;
  int iterations = 0;
  double score_norm = 0.0;  // infinity norm of the mean score at the solution
};

/// Newton/IRLS fit of pr(t=1 | z) = expit(z . coef). `design` must already
/// contain any intercept column. Throws std::runtime_error on separation
/// (|coef_j| > 30) or non-convergence.
LogisticFit logistic_fit(const Matrix& design, const Vector& target01,
                         int max_iterations = 200, double tol = 1e-8);

double logistic_log_lik(const Matrix& design, const Vector& target01,
                        const Vector& coef);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Upper tail of the chi-squared distribution with `dof` degrees of freedom.
double chi2_sf(double x, double dof);

/// Solve m v = rhs for symmetric positive semidefinite m. Retries with
/// m + ridge I when the plain factorization is unusable; throws
/// std::runtime_error if still singular.
Matrix solve_spd(const Matrix& m, const Matrix& rhs, double ridge);

struct NelderMeadResult {
  Vector x;
  double value = 0.0;
  int evals = 0;
  bool converged = false;
};

/// Derivative-free simplex minimizer. `step` sets the initial simplex edge
/// length around x0.
NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f,
                             const Vector& x0, double step, int max_evals,
                             double f_tol = 1e-12);

/// Central-difference gradient, used by finite-difference oracles and as the
/// Jacobian fallback for balance functions without analytic derivatives.
Vector central_gradient(const std::function<double(const Vector&)>& f,
                        const Vector& x, double h = 1e-5);

/// Runs fn(0..n-1) on up to n_threads workers; results must be written to
/// index-addressed slots so the reduction is order-independent.
void parallel_for(Index n, const std::function<void(Index)>& fn,
                  int n_threads);

/// CBDR_THREADS env var if set, otherwise hardware concurrency (at least 1).
int default_thread_count();

}  // namespace cbdr
