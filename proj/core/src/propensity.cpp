#include "cbdr/propensity.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cbdr/numerics.hpp"

namespace cbdr {

namespace {

double clamp_prob(double p) {
  return std::min(std::max(p, kPropensityClamp), 1.0 - kPropensityClamp);
}

Matrix with_intercept(const Matrix& cov) {
  Matrix xt(cov.rows(), cov.cols() + 1);
  xt.col(0).setOnes();
  xt.rightCols(cov.cols()) = cov;
  return xt;
}

void check_row(const PropensityModel& model, Eigen::Ref<const Vector> row) {
  if (row.size() + 1 != model.alpha.size()) {
    throw std::invalid_argument("propensity: covariate length mismatch");
  }
}

double linear_predictor(const PropensityModel& model,
                        Eigen::Ref<const Vector> row) {
  return model.alpha[0] + model.alpha.tail(row.size()).dot(row);
}

// Balance moment for one unit: w(alpha) h(x). The weight collapses to
// I_d/pi_d - (1 - I_d)/(1 - pi_d) with pi_d evaluated at the assignment.
struct MomentProblem {
  const DesignData& dd;
  Matrix xt;        // (1, cov)
  Vector d;         // assignments
  Vector indicator; // I(a == d)
  BalanceFunction balance;
  const OutcomeModel* outcome_model;
  Index k = 0;
  Matrix h_cache;   // moment-type balance rows are alpha-independent

  Matrix balance_rows(const Vector& alpha) const {
    if (balance.kind == BalanceFunction::Kind::Moments) return h_cache;
    return build_h(dd, d, alpha, outcome_model, balance);
  }

  void weights(const Vector& alpha, Vector& w, Vector* dw_dz) const {
    const Vector z = xt * alpha;
    w.resize(z.size());
    if (dw_dz != nullptr) dw_dz->resize(z.size());
    for (Index i = 0; i < z.size(); ++i) {
      const double pi1 = clamp_prob(expit(z[i]));
      const double pid = d[i] > 0.0 ? pi1 : 1.0 - pi1;
      const double id = indicator[i];
      w[i] = id / pid - (1.0 - id) / (1.0 - pid);
      if (dw_dz != nullptr) {
        const double dpid_dz = (d[i] > 0.0 ? 1.0 : -1.0) * pi1 * (1.0 - pi1);
        (*dw_dz)[i] =
            (-id / (pid * pid) - (1.0 - id) / ((1.0 - pid) * (1.0 - pid))) *
            dpid_dz;
      }
    }
  }

  Vector gbar(const Vector& alpha) const {
    const Matrix h = build_h(dd, d, alpha, outcome_model, balance);
    Vector w;
    weights(alpha, w, nullptr);
    return h.transpose() * w / static_cast<double>(dd.n());
  }

  // Moment rows per unit, used for the two-step weight matrix.
  Matrix g_rows(const Vector& alpha) const {
    const Matrix h = build_h(dd, d, alpha, outcome_model, balance);
    Vector w;
    weights(alpha, w, nullptr);
    return w.asDiagonal() * h;
  }

  Matrix jacobian(const Vector& alpha) const {
    if (balance.kind == BalanceFunction::Kind::Moments) {
      // h does not depend on alpha, so dg/dalpha = h' diag(dw/dz) xt / n.
      const Matrix h = build_h(dd, d, alpha, outcome_model, balance);
      Vector w, dw;
      weights(alpha, w, &dw);
      return h.transpose() * dw.asDiagonal() * xt /
             static_cast<double>(dd.n());
    }
    Matrix jac(k, alpha.size());
    Vector shifted = alpha;
    for (Index j = 0; j < alpha.size(); ++j) {
      const double step = 1e-6 * std::max(1.0, std::abs(alpha[j]));
      shifted[j] = alpha[j] + step;
      const Vector gp = gbar(shifted);
      shifted[j] = alpha[j] - step;
      const Vector gm = gbar(shifted);
      shifted[j] = alpha[j];
      jac.col(j) = (gp - gm) / (2.0 * step);
    }
    return jac;
  }
};

struct GmmStage {
  Vector alpha;
  double moment_norm = 0.0;
  double objective = 0.0;
  int iterations = 0;
};

GmmStage gmm_minimize(const MomentProblem& prob, const Matrix& weight,
                      const Vector& alpha0, const GmmSettings& settings,
                      bool just_identified) {
  Vector alpha = alpha0;
  Vector g = prob.gbar(alpha);
  double objective = g.dot(weight * g);
  double lambda = 1e-8;

  const Index dim = alpha.size();
  int iter = 0;
  for (; iter < settings.max_iterations; ++iter) {
    if (just_identified && g.cwiseAbs().maxCoeff() < 1e-6) break;

    const Matrix jac = prob.jacobian(alpha);
    const Vector grad = 2.0 * jac.transpose() * (weight * g);
    if (!just_identified &&
        grad.cwiseAbs().maxCoeff() < settings.gradient_tolerance) {
      break;
    }

    const Matrix gn = jac.transpose() * weight * jac;
    bool accepted = false;
    for (int trial = 0; trial < 40 && !accepted; ++trial) {
      Vector step;
      try {
        step = solve_spd(gn + lambda * Matrix::Identity(dim, dim),
                         (-0.5 * grad).eval(), settings.ridge);
      } catch (const std::runtime_error&) {
        lambda = std::max(lambda * 10.0, 1e-6);
        continue;
      }
      const Vector candidate = alpha + step;
      const Vector g_new = prob.gbar(candidate);
      const double obj_new = g_new.dot(weight * g_new);
      if (obj_new < objective) {
        alpha = candidate;
        g = g_new;
        objective = obj_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) {
      // Damping exhausted: either we are at a numerical minimum or stuck.
      const double g_norm = g.cwiseAbs().maxCoeff();
      const Vector grad_now = 2.0 * jac.transpose() * (weight * g);
      if ((just_identified && g_norm < 1e-6) ||
          (!just_identified && grad_now.cwiseAbs().maxCoeff() < 1e-4)) {
        break;
      }
      std::ostringstream msg;
      msg << "fit_cbps: no descent step found (|moment| " << g_norm
          << ", objective " << objective << ")";
      throw std::runtime_error(msg.str());
    }
  }

  const double g_norm = g.cwiseAbs().maxCoeff();
  if (iter >= settings.max_iterations) {
    const bool ok =
        just_identified
            ? g_norm < 1e-6
            : (2.0 * prob.jacobian(alpha).transpose() * (weight * g))
                      .cwiseAbs()
                      .maxCoeff() < settings.gradient_tolerance;
    if (!ok) {
      std::ostringstream msg;
      msg << "fit_cbps: no convergence after " << settings.max_iterations
          << " iterations (|moment| " << g_norm << ", objective " << objective
          << ")";
      throw std::runtime_error(msg.str());
    }
  }
  return GmmStage{alpha, g_norm, objective, iter};
}

}  // namespace

double pi(const PropensityModel& model, Eigen::Ref<const Vector> cov_row,
          double a) {
  check_row(model, cov_row);
  if (a != 1.0 && a != -1.0) {
    throw std::invalid_argument("propensity: treatment must be -1 or +1");
  }
  const double p1 = clamp_prob(expit(linear_predictor(model, cov_row)));
  return a > 0.0 ? p1 : 1.0 - p1;
}

double pi_rule(const PropensityModel& model, Eigen::Ref<const Vector> cov_row,
               double d) {
  return pi(model, cov_row, d);
}

Vector pi1_all(const PropensityModel& model, const Matrix& cov) {
  if (cov.cols() + 1 != model.alpha.size()) {
    throw std::invalid_argument("propensity: covariate length mismatch");
  }
  const Vector z =
      (cov * model.alpha.tail(cov.cols())).array() + model.alpha[0];
  Vector out(z.size());
  for (Index i = 0; i < z.size(); ++i) out[i] = clamp_prob(expit(z[i]));
  return out;
}

Vector score_alpha(const PropensityModel& model,
                   Eigen::Ref<const Vector> cov_row, double a) {
  check_row(model, cov_row);
  const double p1 = expit(linear_predictor(model, cov_row));
  const double resid = (a > 0.0 ? 1.0 : 0.0) - p1;
  Vector s(model.alpha.size());
  s[0] = resid;
  s.tail(cov_row.size()) = resid * cov_row;
  return s;
}

Vector dpi_dalpha(const PropensityModel& model,
                  Eigen::Ref<const Vector> cov_row, double d) {
  check_row(model, cov_row);
  const double p1 = expit(linear_predictor(model, cov_row));
  const double scale = (d > 0.0 ? 1.0 : -1.0) * p1 * (1.0 - p1);
  Vector g(model.alpha.size());
  g[0] = scale;
  g.tail(cov_row.size()) = scale * cov_row;
  return g;
}

PropensityModel fit_mle(const DesignData& dd, const GmmSettings& settings) {
  Vector target(dd.n());
  for (Index i = 0; i < dd.n(); ++i) target[i] = dd.a[i] > 0.0 ? 1.0 : 0.0;
  const LogisticFit fit =
      logistic_fit(with_intercept(dd.cov), target, settings.max_iterations,
                   settings.gradient_tolerance);
  return PropensityModel{fit.coef, dd.kind, FitMethod::MLE};
}

Matrix build_h(const DesignData& dd, const Vector& d, const Vector& alpha,
               const OutcomeModel* outcome_model, BalanceFunction balance) {
  const Index n = dd.n();
  const Index m = dd.cov.cols();
  if (d.size() != n) {
    throw std::invalid_argument("build_h: assignment length mismatch");
  }

  if (balance.kind == BalanceFunction::Kind::Moments) {
    if (balance.order < 1) {
      throw std::invalid_argument("build_h: moment order must be >= 1");
    }
    Matrix h(n, 1 + m * balance.order);
    h.col(0).setOnes();
    Matrix power = dd.cov;
    for (int ord = 0; ord < balance.order; ++ord) {
      h.middleCols(1 + ord * m, m) = power;
      if (ord + 1 < balance.order) power = power.cwiseProduct(dd.cov);
    }
    return h;
  }

  if (outcome_model == nullptr) {
    throw std::invalid_argument("build_h: FullH requires a fitted outcome model");
  }
  PropensityModel tmp{alpha, dd.kind, FitMethod::CBPS};
  const Index n_beta = outcome_model->coef.size();
  const Index n_alpha = alpha.size();
  Matrix h(n, 2 * n_beta + 2 * n_alpha);
  for (Index i = 0; i < n; ++i) {
    const Vector row = dd.cov.row(i);
    const double pid = pi_rule(tmp, row, d[i]);
    const Vector m_beta =
        outcome_features(dd.kind, dd.p, dd.q, row, d[i]);
    const double q_val = outcome_model->coef.dot(m_beta);
    const Vector dpi = dpi_dalpha(tmp, row, d[i]);
    h.row(i).segment(0, n_beta) = (1.0 - pid) * m_beta;
    h.row(i).segment(n_beta, n_beta) = (1.0 - pid) * q_val * m_beta;
    h.row(i).segment(2 * n_beta, n_alpha) = dpi;
    h.row(i).segment(2 * n_beta + n_alpha, n_alpha) = q_val * dpi;
  }
  return h;
}

PropensityModel fit_cbps(const DesignData& dd, const Vector& d,
                         BalanceFunction balance,
                         const OutcomeModel* outcome_model,
                         const GmmSettings& settings,
                         CbpsDiagnostics* diagnostics) {
  MomentProblem prob{dd,
                     with_intercept(dd.cov),
                     d,
                     Vector(dd.n()),
                     balance,
                     outcome_model,
                     0};
  for (Index i = 0; i < dd.n(); ++i) {
    prob.indicator[i] = dd.a[i] == d[i] ? 1.0 : 0.0;
  }
  prob.k = build_h(dd, d, Vector::Zero(prob.xt.cols()), outcome_model, balance)
               .cols();

  const Index dim = prob.xt.cols();
  if (prob.k < dim) {
    throw std::invalid_argument(
        "fit_cbps: balance function supplies fewer moments than parameters");
  }
  const bool just_identified = prob.k == dim;

  const Vector alpha0 = fit_mle(dd, settings).alpha;
  GmmStage stage = gmm_minimize(prob, Matrix::Identity(prob.k, prob.k), alpha0,
                                settings, just_identified);

  if (!just_identified &&
      settings.weighting == GmmSettings::Weighting::TwoStep) {
    const Matrix g_rows = prob.g_rows(stage.alpha);
    const Vector g_mean = g_rows.colwise().mean();
    const Matrix centered = g_rows.rowwise() - g_mean.transpose();
    const Matrix cov = centered.transpose() * centered /
                           static_cast<double>(dd.n()) +
                       settings.ridge * Matrix::Identity(prob.k, prob.k);
    Matrix weight;
    try {
      weight = solve_spd(cov, Matrix::Identity(prob.k, prob.k), settings.ridge);
    } catch (const std::runtime_error&) {
      throw std::runtime_error(
          "fit_cbps: singular moment covariance; increase GmmSettings.ridge");
    }
    // Symmetrize: the solve can leave asymmetry of rounding size.
    weight = ((weight + weight.transpose()) / 2.0).eval();
    stage = gmm_minimize(prob, weight, stage.alpha, settings, false);
  }

  if (diagnostics != nullptr) {
    diagnostics->moment_norm = stage.moment_norm;
    diagnostics->objective = stage.objective;
    diagnostics->iterations = stage.iterations;
  }
  return PropensityModel{stage.alpha, dd.kind, FitMethod::CBPS};
}

}  // namespace cbdr
