#include "mmscan/levenberg.hpp"

namespace mmscan {

Eigen::MatrixXd numeric_jacobian(const LmProblem& problem, const Eigen::VectorXd& x, double step) {
    const auto plus = problem.plus
                          ? problem.plus
                          : [](const Eigen::VectorXd& a, const Eigen::VectorXd& d) -> Eigen::VectorXd {
                                return a + d;
                            };
    const Eigen::Index n = x.size();
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd j;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = problem.plus ? step : step * (1.0 + std::abs(x(i)));
        d(i) = h;
        const Eigen::VectorXd rp = problem.residuals(plus(x, d));
        d(i) = -h;
        const Eigen::VectorXd rm = problem.residuals(plus(x, d));
        d(i) = 0.0;
        if (j.size() == 0) j.resize(rp.size(), n);
        j.col(i) = (rp - rm) / (2.0 * h);
    }
    return j;
}

LmReport solve_lm(const LmProblem& problem, const Eigen::VectorXd& x0, const LmOptions& options) {
    const auto plus = problem.plus
                          ? problem.plus
                          : [](const Eigen::VectorXd& a, const Eigen::VectorXd& d) -> Eigen::VectorXd {
                                return a + d;
                            };

    LmReport report;
    report.x = x0;
    Eigen::VectorXd r = problem.residuals(report.x);
    double cost = r.squaredNorm();
    report.initial_cost = cost;
    report.accepted_costs.push_back(cost);

    double lambda = options.initial_lambda;
    const Eigen::Index n = x0.size();

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        report.iterations = iter + 1;
        const Eigen::MatrixXd j = problem.jacobian ? problem.jacobian(report.x)
                                                   : numeric_jacobian(problem, report.x, options.numeric_step);
        const Eigen::MatrixXd jtj = j.transpose() * j;
        const Eigen::VectorXd g = j.transpose() * r;

        if (g.lpNorm<Eigen::Infinity>() < 1e-16) {
            report.converged = true;
            break;
        }

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd h = jtj;
            // Marquardt scaling with an absolute floor for flat directions
            for (Eigen::Index i = 0; i < n; ++i) h(i, i) += lambda * std::max(jtj(i, i), 1e-12);
            const Eigen::VectorXd step = h.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                if (lambda > options.max_lambda) throw NonConvergence("LM damping overflow");
                continue;
            }
            const Eigen::VectorXd x_try = plus(report.x, step);
            const Eigen::VectorXd r_try = problem.residuals(x_try);
            const double cost_try = r_try.squaredNorm();
            if (cost_try < cost) {
                const double rel_drop = (cost - cost_try) / std::max(cost, 1e-300);
                report.x = x_try;
                r = r_try;
                cost = cost_try;
                report.accepted_costs.push_back(cost);
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                if (rel_drop < options.relative_cost_tol || step.norm() < options.step_tol) {
                    report.converged = true;
                }
            } else {
                lambda *= 10.0;
                if (lambda > options.max_lambda) {
                    // no downhill step exists at any sane damping; with a
                    // monotone accept rule this is a numerical optimum
                    report.converged = true;
                    accepted = true;
                }
            }
        }
        if (report.converged) break;
    }

    report.final_cost = cost;
    return report;
}

}  // namespace mmscan
