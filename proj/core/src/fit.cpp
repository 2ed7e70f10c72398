#include "qcomb/fit.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <limits>

namespace qcomb::fit {

namespace {

Eigen::VectorXd eval_residuals(const FitProblem& p, const Eigen::VectorXd& params,
                               const Eigen::VectorXd& sqrt_w) {
    std::vector<double> pv(params.data(), params.data() + params.size());
    std::vector<double> m = p.model(pv, p.x);
    if (m.size() != p.y.size())
        throw NonFiniteModel("model returned wrong number of values");
    Eigen::VectorXd r(static_cast<Eigen::Index>(m.size()));
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        double v = m[static_cast<std::size_t>(i)];
        if (!std::isfinite(v))
            throw NonFiniteModel("model value is not finite");
        r[i] = sqrt_w[i] * (p.y[static_cast<std::size_t>(i)] - v);
    }
    return r;
}

// Central differences, step relative to parameter magnitude with an
// absolute floor so zero-valued parameters still move.
Eigen::MatrixXd numeric_jacobian(const FitProblem& p, const Eigen::VectorXd& params,
                                 const Eigen::VectorXd& sqrt_w, double rel_step) {
    const Eigen::Index n = params.size();
    const Eigen::Index m = static_cast<Eigen::Index>(p.y.size());
    Eigen::MatrixXd jac(m, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double step = rel_step * std::max(std::abs(params[j]), 1e-8);
        Eigen::VectorXd lo = params, hi = params;
        hi[j] += step;
        lo[j] -= step;
        Eigen::VectorXd rh = eval_residuals(p, hi, sqrt_w);
        Eigen::VectorXd rl = eval_residuals(p, lo, sqrt_w);
        // residual = sqrt_w (y - f), so d(residual)/dp = -sqrt_w df/dp;
        // the LM normal equations below use this signed convention directly.
        jac.col(j) = (rh - rl) / (2.0 * step);
    }
    return jac;
}

}  // namespace

FitResult fit_nlls(const FitProblem& problem, const FitOptions& options) {
    const std::size_t n_params = problem.initial_params.size();
    const std::size_t n_points = problem.x.size();
    if (n_params == 0)
        throw std::invalid_argument("fit_nlls: no parameters");
    if (n_points != problem.y.size())
        throw std::invalid_argument("fit_nlls: x and y size mismatch");
    if (!problem.weights.empty() && problem.weights.size() != n_points)
        throw std::invalid_argument("fit_nlls: weights size mismatch");
    if (n_points < n_params)
        throw std::invalid_argument("fit_nlls: fewer points than parameters");

    Eigen::VectorXd sqrt_w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_points));
    if (!problem.weights.empty()) {
        for (std::size_t i = 0; i < n_points; ++i) {
            double w = problem.weights[i];
            if (!(w >= 0.0) || !std::isfinite(w))
                throw std::invalid_argument("fit_nlls: weights must be finite and non-negative");
            sqrt_w[static_cast<Eigen::Index>(i)] = std::sqrt(w);
        }
    }

    Eigen::VectorXd params = Eigen::Map<const Eigen::VectorXd>(
        problem.initial_params.data(), static_cast<Eigen::Index>(n_params));

    Eigen::VectorXd r = eval_residuals(problem, params, sqrt_w);
    double chi2 = r.squaredNorm();
    double lambda = options.lambda0;

    FitResult result;
    result.converged = false;

    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        Eigen::MatrixXd jac = numeric_jacobian(problem, params, sqrt_w, options.rel_step);
        Eigen::MatrixXd jtj = jac.transpose() * jac;
        Eigen::VectorXd jtr = jac.transpose() * r;

        // Column scaling: precondition by the diagonal so parameters of
        // wildly different magnitude share one damping parameter.
        Eigen::VectorXd scale = jtj.diagonal().cwiseMax(0.0).cwiseSqrt();
        for (Eigen::Index j = 0; j < scale.size(); ++j)
            if (scale[j] <= 0.0) scale[j] = 1.0;

        bool accepted = false;
        for (int tries = 0; tries < 40 && !accepted; ++tries) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index j = 0; j < a.rows(); ++j)
                a(j, j) += lambda * scale[j] * scale[j];
            Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
            if (ldlt.info() != Eigen::Success) {
                lambda *= options.lambda_up;
                continue;
            }
            // residual = sqrt_w (y - f) and jac = d(residual)/dp, so the
            // Gauss-Newton step solves (J^T J) dp = -J^T r.
            Eigen::VectorXd dp = ldlt.solve(-jtr);
            if (!dp.allFinite()) {
                lambda *= options.lambda_up;
                continue;
            }
            Eigen::VectorXd trial = params + dp;
            double trial_chi2;
            try {
                Eigen::VectorXd tr = eval_residuals(problem, trial, sqrt_w);
                trial_chi2 = tr.squaredNorm();
                if (!std::isfinite(trial_chi2))
                    throw NonFiniteModel("chi2 not finite");
                if (trial_chi2 <= chi2) {
                    double rel_red = (chi2 - trial_chi2) / std::max(chi2, 1e-300);
                    double rel_step_norm =
                        dp.norm() / std::max(params.norm(), 1e-300);
                    params = trial;
                    r = tr;
                    chi2 = trial_chi2;
                    lambda = std::max(lambda / options.lambda_down, 1e-14);
                    accepted = true;
                    if (rel_red < options.tol_rel_reduction || rel_step_norm < options.tol_step)
                        result.converged = true;
                } else {
                    lambda *= options.lambda_up;
                }
            } catch (const NonFiniteModel&) {
                lambda *= options.lambda_up;
            }
        }
        if (!accepted) {
            // Damping exhausted without any acceptable step: parameters are
            // at a (possibly local) minimum to within numeric noise.
            result.converged = true;
            break;
        }
        if (result.converged) break;
    }

    result.params.assign(params.data(), params.data() + params.size());
    result.chi2 = chi2;
    int dof = static_cast<int>(n_points) - static_cast<int>(n_params);
    result.chi2_reduced = dof > 0 ? chi2 / dof : chi2;
    result.n_iterations = iter + 1;

    // Covariance from the undamped normal matrix at the solution. An
    // iteration-capped fit has no solution to certify, so leave the matrix
    // zeroed (param_error then reports 0) instead of judging conditioning
    // at an arbitrary point.
    result.covariance = Matrix(n_params);
    if (result.converged) {
        Eigen::MatrixXd jac = numeric_jacobian(problem, params, sqrt_w, options.rel_step);
        Eigen::MatrixXd jtj = jac.transpose() * jac;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
        if (!lu.isInvertible())
            throw SingularJacobian("J^T W J is singular at the solution");
        double rcond = lu.rcond();
        if (rcond < std::numeric_limits<double>::epsilon() * 10.0)
            throw IllConditioned("normal matrix condition number beyond 1/(10 eps)");
        Eigen::MatrixXd cov = lu.inverse() * (dof > 0 ? result.chi2_reduced : 1.0);
        for (std::size_t i = 0; i < n_params; ++i)
            for (std::size_t j = 0; j < n_params; ++j)
                result.covariance(i, j) = cov(static_cast<Eigen::Index>(i),
                                              static_cast<Eigen::Index>(j));
    }
    return result;
}

FitResult fit_power_basis(std::span<const double> x, std::span<const double> y,
                          std::span<const double> weights, std::span<const int> powers) {
    const std::size_t n = x.size();
    const std::size_t m = powers.size();
    if (m == 0)
        throw std::invalid_argument("fit_power_basis: no basis powers");
    for (int p : powers)
        if (p < 0)
            throw std::invalid_argument("fit_power_basis: negative power");
    if (n != y.size())
        throw std::invalid_argument("fit_polynomial: x and y size mismatch");
    if (!weights.empty() && weights.size() != n)
        throw std::invalid_argument("fit_polynomial: weights size mismatch");
    if (n < m)
        throw std::invalid_argument("fit_polynomial: fewer points than coefficients");

    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double sw = weights.empty() ? 1.0 : std::sqrt(weights[i]);
        for (std::size_t j = 0; j < m; ++j)
            design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                sw * std::pow(x[i], powers[j]);
        rhs[static_cast<Eigen::Index>(i)] = sw * y[i];
    }

    // Column scaling keeps the normal matrix sane when x spans decades
    // (powers of x differ by many orders of magnitude).
    Eigen::VectorXd col_scale(static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j) {
        double norm = design.col(static_cast<Eigen::Index>(j)).norm();
        col_scale[static_cast<Eigen::Index>(j)] = norm > 0.0 ? norm : 1.0;
    }
    Eigen::MatrixXd scaled = design * col_scale.cwiseInverse().asDiagonal();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    if (qr.rank() < static_cast<Eigen::Index>(m))
        throw SingularJacobian("fit_polynomial: design matrix is rank deficient");
    Eigen::VectorXd coeff_scaled = qr.solve(rhs);
    Eigen::VectorXd coeff = coeff_scaled.cwiseQuotient(col_scale);

    FitResult result;
    result.params.assign(coeff.data(), coeff.data() + coeff.size());
    Eigen::VectorXd resid = rhs - design * coeff;
    result.chi2 = resid.squaredNorm();
    int dof = static_cast<int>(n) - static_cast<int>(m);
    result.chi2_reduced = dof > 0 ? result.chi2 / dof : result.chi2;
    result.n_iterations = 1;
    result.converged = true;

    // Invert the normal matrix in the scaled basis where every column has
    // unit norm, then undo the scaling: Cov(c) = D^{-1} Cov(c_s) D^{-1}.
    Eigen::MatrixXd jtj = scaled.transpose() * scaled;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (!lu.isInvertible())
        throw SingularJacobian("fit_polynomial: normal matrix is singular");
    Eigen::MatrixXd cov = col_scale.cwiseInverse().asDiagonal() * lu.inverse() *
                          col_scale.cwiseInverse().asDiagonal() *
                          (dof > 0 ? result.chi2_reduced : 1.0);
    result.covariance = Matrix(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            result.covariance(i, j) =
                cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return result;
}

FitResult fit_polynomial(std::span<const double> x, std::span<const double> y,
                         std::span<const double> weights, int degree) {
    if (degree < 0)
        throw std::invalid_argument("fit_polynomial: negative degree");
    std::vector<int> powers(static_cast<std::size_t>(degree) + 1);
    for (std::size_t j = 0; j < powers.size(); ++j)
        powers[j] = static_cast<int>(j);
    return fit_power_basis(x, y, weights, powers);
}

}  // namespace qcomb::fit
