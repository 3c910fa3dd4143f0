#pragma once

#include <Eigen/Sparse>

#include <limits>
#include <vector>

namespace flexcoord::qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Convex QP with separable quadratic term, sparse equalities and box bounds:
///
///   minimize    sum_i 0.5 * hessian[i] * x_i^2 + linear[i] * x_i
///   subject to  A x = b,  lower <= x <= upper
///
/// Bounds may be infinite. Each variable needs hessian[i] > 0 or at least one
/// finite bound. Variables with lower == upper are treated as constants.
struct BoxQp {
    std::vector<double> hessian;
    std::vector<double> linear;
    std::vector<double> lower;
    std::vector<double> upper;
    Eigen::SparseMatrix<double> eq_matrix;
    std::vector<double> eq_rhs;

    std::size_t n_vars() const { return hessian.size(); }
    std::size_t n_eq() const { return eq_rhs.size(); }
};

struct Settings {
    double primal_tol = 1e-10;
    double dual_tol = 1e-10;
    double gap_tol = 1e-11;  // relative to max(1, |objective|)
    int max_iterations = 200;
};

/// First-order optimality residuals of the returned point. The point is
/// accepted as optimal when all three are below the tolerances in Settings
/// (primal/dual scaled by 1 + the norm of the corresponding data).
struct Certificate {
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double complementarity = 0.0;  // mean s_i * z_i over finite bounds
    double duality_gap = 0.0;
};

struct Result {
    std::vector<double> x;
    std::vector<double> eq_dual;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    Certificate certificate;
};

Result solve(const BoxQp& problem, const Settings& settings = {});

double objective(const BoxQp& problem, const std::vector<double>& x);

}  // namespace flexcoord::qp
