#include "cbdr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

namespace cbdr {

namespace {

// Mean log-likelihood would hide the n scaling used in the score test below,
// so everything here works with sample means of the score.
Vector mean_score(const Matrix& design, const Vector& target01,
                  const Vector& coef) {
  const Vector z = design * coef;
  Vector resid(z.size());
  for (Index i = 0; i < z.size(); ++i) resid[i] = target01[i] - expit(z[i]);
  return design.transpose() * resid / static_cast<double>(design.rows());
}

}  // namespace

double logistic_log_lik(const Matrix& design, const Vector& target01,
                        const Vector& coef) {
  const Vector z = design * coef;
  double ll = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    // log expit(z) = -log1p(exp(-z)), stable on both tails
    const double zi = z[i];
    const double log_p = zi >= 0.0 ? -std::log1p(std::exp(-zi))
                                   : zi - std::log1p(std::exp(zi));
    const double log_q = zi >= 0.0 ? -zi - std::log1p(std::exp(-zi))
                                   : -std::log1p(std::exp(zi));
    ll += target01[i] > 0.5 ? log_p : log_q;
  }
  return ll;
}

LogisticFit logistic_fit(const Matrix& design, const Vector& target01,
                         int max_iterations, double tol) {
  const Index n = design.rows();
  const Index m = design.cols();
  if (target01.size() != n) {
    throw std::invalid_argument("logistic_fit: design/target size mismatch");
  }
  const double t_mean = target01.mean();
  if (t_mean <= 0.0 || t_mean >= 1.0) {
    throw std::runtime_error("logistic_fit: target is constant");
  }

  Vector coef = Vector::Zero(m);
  double ll = logistic_log_lik(design, target01, coef);

  for (int iter = 1; iter <= max_iterations; ++iter) {
    const Vector z = design * coef;
    Vector p(n), wgt(n);
    for (Index i = 0; i < n; ++i) {
      p[i] = expit(z[i]);
      wgt[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
    }
    const Vector score = design.transpose() * (target01 - p);
    const Matrix hess =
        design.transpose() * wgt.asDiagonal() * design;

    Vector step = solve_spd(hess, score, 1e-10);

    // Backtracking keeps Newton from overshooting on poorly scaled designs.
    double scale = 1.0;
    Vector candidate = coef + step;
    double ll_new = logistic_log_lik(design, target01, candidate);
    while (ll_new < ll - 1e-12 && scale > 1e-8) {
      scale *= 0.5;
      candidate = coef + scale * step;
      ll_new = logistic_log_lik(design, target01, candidate);
    }
    coef = candidate;
    ll = ll_new;

    if (coef.cwiseAbs().maxCoeff() > 30.0) {
      throw std::runtime_error(
          "logistic_fit: perfect separation suspected (|coef| > 30); "
          "consider a ridge-penalized design");
    }

    const double g_norm = mean_score(design, target01, coef)
                              .cwiseAbs()
                              .maxCoeff();
    if (g_norm < tol) {
      return LogisticFit{coef, ll, iter, g_norm};
    }
  }

  const double g_norm =
      mean_score(design, target01, coef).cwiseAbs().maxCoeff();
  std::ostringstream msg;
  msg << "logistic_fit: no convergence after " << max_iterations
      << " iterations (mean-score norm " << g_norm << ")";
  throw std::runtime_error(msg.str());
}

namespace {

// Regularized incomplete gamma by series (x < a+1) or continued fraction.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) {
    throw std::invalid_argument("gamma_p: requires x >= 0, a > 0");
  }
  if (x == 0.0) return 0.0;
  return x < a + 1.0 ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double chi2_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return 1.0 - gamma_p(0.5 * dof, 0.5 * x);
}

Matrix solve_spd(const Matrix& m, const Matrix& rhs, double ridge) {
  const auto usable = [&](const Matrix& sol, const Matrix& lhs) {
    if (!sol.allFinite()) return false;
    const double scale = lhs.cwiseAbs().maxCoeff() * sol.cwiseAbs().maxCoeff() +
                         rhs.cwiseAbs().maxCoeff() + 1.0;
    return (lhs * sol - rhs).cwiseAbs().maxCoeff() <= 1e-8 * scale;
  };

  Eigen::LDLT<Matrix> ldlt(m);
  if (ldlt.info() == Eigen::Success) {
    Matrix sol = ldlt.solve(rhs);
    if (usable(sol, m)) return sol;
  }
  const Matrix ridged =
      m + ridge * Matrix::Identity(m.rows(), m.cols());
  Eigen::LDLT<Matrix> ldlt2(ridged);
  if (ldlt2.info() == Eigen::Success) {
    Matrix sol = ldlt2.solve(rhs);
    if (usable(sol, ridged)) return sol;
  }
  throw std::runtime_error("solve_spd: matrix singular even after ridge");
}

NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f,
                             const Vector& x0, double step, int max_evals,
                             double f_tol) {
  const Index dim = x0.size();
  const Index np = dim + 1;

  std::vector<Vector> pts(np, x0);
  std::vector<double> val(np);
  for (Index i = 0; i < dim; ++i) pts[i + 1][i] += step;

  int evals = 0;
  for (Index i = 0; i < np; ++i) {
    val[i] = f(pts[i]);
    ++evals;
  }

  std::vector<Index> order(np);
  NelderMeadResult res;
  while (evals < max_evals) {
    for (Index i = 0; i < np; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return val[a] < val[b]; });
    const Index best = order[0], worst = order[np - 1], second = order[np - 2];

    if (std::abs(val[worst] - val[best]) <=
        f_tol * (1.0 + std::abs(val[best]))) {
      res.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(dim);
    for (Index i = 0; i < np; ++i) {
      if (i != worst) centroid += pts[i];
    }
    centroid /= static_cast<double>(dim);

    const Vector refl = centroid + (centroid - pts[worst]);
    const double f_refl = f(refl);
    ++evals;

    if (f_refl < val[order[0]]) {
      const Vector expd = centroid + 2.0 * (centroid - pts[worst]);
      const double f_expd = f(expd);
      ++evals;
      if (f_expd < f_refl) {
        pts[worst] = expd;
        val[worst] = f_expd;
      } else {
        pts[worst] = refl;
        val[worst] = f_refl;
      }
    } else if (f_refl < val[second]) {
      pts[worst] = refl;
      val[worst] = f_refl;
    } else {
      const Vector contr =
          centroid + 0.5 * ((f_refl < val[worst] ? refl : pts[worst]) -
                            centroid);
      const double f_contr = f(contr);
      ++evals;
      if (f_contr < std::min(f_refl, val[worst])) {
        pts[worst] = contr;
        val[worst] = f_contr;
      } else {
        // shrink toward best
        for (Index i = 0; i < np; ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          val[i] = f(pts[i]);
          ++evals;
        }
      }
    }
  }

  Index best = 0;
  for (Index i = 1; i < np; ++i) {
    if (val[i] < val[best]) best = i;
  }
  res.x = pts[best];
  res.value = val[best];
  res.evals = evals;
  return res;
}

Vector central_gradient(const std::function<double(const Vector&)>& f,
                        const Vector& x, double h) {
  Vector g(x.size());
  Vector xp = x;
  for (Index j = 0; j < x.size(); ++j) {
    const double step = h * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + step;
    const double fp = f(xp);
    xp[j] = x[j] - step;
    const double fm = f(xp);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * step);
  }
  return g;
}

void parallel_for(Index n, const std::function<void(Index)>& fn,
                  int n_threads) {
  if (n <= 0) return;
  const int workers =
      std::max(1, std::min<int>(n_threads, static_cast<int>(n)));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (Index i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

int default_thread_count() {
  if (const char* env = std::getenv("CBDR_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed >= 1) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace cbdr
