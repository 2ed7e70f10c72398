#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

// Weighted nonlinear least squares (Levenberg-Marquardt with numeric
// Jacobians) and weighted polynomial least squares. Everything downstream
// that fits a curve goes through these two entry points.

namespace qcomb::fit {

// Evaluates the model at every x for the given parameter vector.
// Must return exactly x.size() values.
using Model = std::function<std::vector<double>(std::span<const double> params,
                                                std::span<const double> x)>;

struct FitProblem {
    Model model;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> weights;  // 1/sigma^2 per point; empty means all 1
    std::vector<double> initial_params;
};

struct FitOptions {
    int max_iterations = 200;
    double lambda0 = 1e-3;          // initial damping
    double lambda_up = 10.0;        // factor on rejected step
    double lambda_down = 10.0;      // divisor on accepted step
    double rel_step = 1e-6;         // central-difference relative step
    double tol_rel_reduction = 1e-12;  // convergence: relative chi2 decrease
    double tol_step = 1e-12;           // convergence: relative parameter step
};

// Row-major dense matrix, just big enough for covariance output.
struct Matrix {
    std::size_t n = 0;
    std::vector<double> a;  // n*n entries

    Matrix() = default;
    explicit Matrix(std::size_t n_) : n(n_), a(n_ * n_, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

struct FitResult {
    std::vector<double> params;
    Matrix covariance;      // chi2_reduced * (J^T W J)^-1
    double chi2 = 0.0;
    double chi2_reduced = 0.0;
    int n_iterations = 0;
    bool converged = false;

    double param_error(std::size_t i) const {
        double v = covariance(i, i);
        return v > 0.0 ? std::sqrt(v) : 0.0;
    }
};

class SingularJacobian : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NonFiniteModel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class IllConditioned : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

FitResult fit_nlls(const FitProblem& problem, const FitOptions& options = {});

// Weighted polynomial least squares. Returned params are coefficient
// order lowest first: y = p[0] + p[1] x + ... + p[degree] x^degree.
FitResult fit_polynomial(std::span<const double> x, std::span<const double> y,
                         std::span<const double> weights, int degree);

// Weighted least squares on selected powers of x, e.g. {0, 2} fits
// y = p[0] + p[1] x^2 with no linear term. params follow `powers`.
FitResult fit_power_basis(std::span<const double> x, std::span<const double> y,
                          std::span<const double> weights, std::span<const int> powers);

}  // namespace qcomb::fit
