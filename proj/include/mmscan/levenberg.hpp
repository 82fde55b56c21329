#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mmscan/common.hpp"

namespace mmscan {

/// Dense Levenberg-Marquardt over a plain parameter vector, with an optional
/// retraction (`plus`) so rotation blocks can be updated by composing small
/// axis-angle increments instead of adding coordinates.
struct LmProblem {
    /// Residual vector at the given state.
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residuals;

    /// Jacobian of residuals with respect to the *increment* (tangent)
    /// coordinates. Leave empty to use central differences through `plus`.
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;

    /// State update x' = plus(x, dx). Defaults to x + dx. The tangent
    /// dimension must equal the state dimension.
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> plus;
};

struct LmOptions {
    int max_iterations = 200;
    double relative_cost_tol = 1e-12;
    double step_tol = 1e-10;
    double initial_lambda = 1e-4;
    double max_lambda = 1e14;  // above this the solve is declared diverged
    double numeric_step = 1e-6;
};

struct LmReport {
    Eigen::VectorXd x;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    bool converged = false;
    bool cost_monotone = true;            // over accepted steps
    std::vector<double> accepted_costs;   // cost after each accepted step
};

/// Runs LM; returns the report. Throws NonConvergence only on damping
/// overflow (search direction unusable); hitting max_iterations is reported
/// via `converged = false` and left to the caller's policy.
LmReport solve_lm(const LmProblem& problem, const Eigen::VectorXd& x0, const LmOptions& options);

/// Central-difference Jacobian through the problem's plus operator.
Eigen::MatrixXd numeric_jacobian(const LmProblem& problem, const Eigen::VectorXd& x, double step);

}  // namespace mmscan
